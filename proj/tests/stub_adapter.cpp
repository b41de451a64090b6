// Scripted wire-protocol adapter used by the remote predictor tests.
//
//   stub_adapter <mode> <wordpiece-units-file>
//
// modes: echo, badhash, malformed, drop, slow, wrongid, short, garbage-hello

#include <chrono>
#include <cmath>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

#include "wordeval/tokenizer.hpp"

using json = nlohmann::json;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: stub_adapter <mode> <units>\n";
    return 64;
  }
  const std::string mode = argv[1];
  const auto vocab = wordeval::load_vocab({argv[2], {}}, wordeval::Scheme::WordPiece);

  if (mode == "garbage-hello") {
    std::cout << "hello there" << std::endl;
    return 0;
  }
  json hello = {{"type", "hello"},
                {"scheme", "wordpiece"},
                {"vocab_sha256", mode == "badhash" ? std::string(64, '0') : vocab.sha256()},
                {"vocab_size", vocab.size()}};
  std::cout << hello.dump() << std::endl;

  std::string line;
  int answered = 0;
  while (std::getline(std::cin, line)) {
    const json req = json::parse(line);
    const auto id = req.at("id").get<std::uint64_t>();
    if (mode == "slow") {
      std::this_thread::sleep_for(std::chrono::seconds(1));
      return 0;
    }
    if (mode == "drop" && answered == 1) return 0;
    if (mode == "malformed") {
      std::cout << "{\"type\":\"dist\",\"id\":" << id << ",\"top\":[[0,\"oops\"]]}" << std::endl;
      continue;
    }
    json resp;
    if (req.at("type") == "embed") {
      json vectors = json::array();
      for (const auto& tok : req.at("tokens")) {
        const auto t = tok.get<std::string>();
        if (t == "zzz") {
          vectors.push_back(json::array());
        } else {
          vectors.push_back({static_cast<double>(t.size()), 1.0, t[0] == 'a' ? 1.0 : 0.0});
        }
      }
      resp = {{"type", "vectors"}, {"id", id}, {"vectors", vectors}};
    } else {
      // unit 2 holds half the mass, the rest is shared evenly; entries are
      // listed in descending id order and the client trims them to k
      const auto v = vocab.size();
      json top = json::array();
      for (std::size_t u = v; u-- > 0;) {
        top.push_back(json::array({u, std::log(u == 2 ? 0.5 : 0.5 / static_cast<double>(v - 1))}));
      }
      if (mode == "short") top = json::array({json::array({2, std::log(0.5)})});
      resp = {{"type", "dist"}, {"id", mode == "wrongid" ? id + 1 : id}, {"top", top}};
    }
    std::cout << resp.dump() << std::endl;
    ++answered;
  }
  return 0;
}
