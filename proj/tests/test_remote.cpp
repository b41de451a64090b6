#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <thread>

#include <json.hpp>

#include "support.hpp"
#include "wordeval/error.hpp"
#include "wordeval/remote.hpp"

using namespace wordeval;
using testing::TempDir;

namespace {

const char* kUnits = "[UNK]\n[EOS]\na\nb\n##a\n##b\n";

struct StubSession {
  TempDir dir;
  SubwordVocab vocab;

  StubSession() : vocab(([this] {
                   testing::write_file(dir / "units.txt", kUnits);
                   return load_vocab({dir / "units.txt", {}}, Scheme::WordPiece);
                 })()) {}

  std::string command(const std::string& mode) const {
    return std::string(STUB_ADAPTER_PATH) + " " + mode + " " + (dir / "units.txt").string();
  }

  RemotePredictor open(const std::string& mode, std::chrono::milliseconds timeout = std::chrono::seconds(10)) const {
    return RemotePredictor(spawn_channel(command(mode)), vocab, RemoteOptions{timeout});
  }
};

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("handshake and sorted, truncated distributions") {
  StubSession s;
  auto remote = s.open("echo");
  CHECK(remote.handshake().scheme == Scheme::WordPiece);
  CHECK(remote.handshake().vocab_sha256 == s.vocab.sha256());
  CHECK(remote.vocab_size() == 6);

  const auto d = remote.predict(std::vector<UnitId>{2, 4}, 3);
  REQUIRE(d.top.size() == 3);
  CHECK(d.top[0].unit == 2);
  CHECK(d.top[0].logprob == doctest::Approx(std::log(0.5)));
  CHECK(d.top[1].unit == 0);  // ties by ascending id
  CHECK(d.top[2].unit == 1);
  CHECK(d.total_mass_accounted == doctest::Approx(0.7));

  const auto wide = remote.predict(std::vector<UnitId>{}, 50);
  CHECK(wide.clamped);
  CHECK(wide.top.size() == 6);
  CHECK(wide.total_mass_accounted == doctest::Approx(1.0));
  CHECK(remote.logprob(std::vector<UnitId>{3}, 5) == doctest::Approx(std::log(0.1)));
  CHECK(remote.alive());
}

TEST_CASE("embed extension marks unknown tokens with empty vectors") {
  StubSession s;
  auto remote = s.open("echo");
  const auto v = remote.embed({"abc", "zzz", "b"});
  REQUIRE(v.size() == 3);
  CHECK(v[0] == std::vector<float>{3.0f, 1.0f, 1.0f});
  CHECK(v[1].empty());
  CHECK(v[2] == std::vector<float>{1.0f, 1.0f, 0.0f});
  // the session keeps working after an embed round trip
  CHECK(remote.predict(std::vector<UnitId>{}, 1).top.front().unit == 2);
}

TEST_CASE("vocabulary hash mismatch is a configuration error") {
  StubSession s;
  CHECK(kind_of([&] { s.open("badhash"); }) == ErrorKind::Configuration);
  CHECK(kind_of([&] { s.open("garbage-hello"); }) == ErrorKind::Protocol);
}

TEST_CASE("malformed responses are protocol errors") {
  StubSession s;
  {
    auto remote = s.open("malformed");
    CHECK(kind_of([&] { remote.predict(std::vector<UnitId>{}, 2); }) == ErrorKind::Protocol);
  }
  {
    auto remote = s.open("wrongid");
    CHECK(kind_of([&] { remote.predict(std::vector<UnitId>{}, 2); }) == ErrorKind::Protocol);
  }
  {
    auto remote = s.open("short");
    CHECK(kind_of([&] { remote.predict(std::vector<UnitId>{}, 3); }) == ErrorKind::Protocol);
  }
}

TEST_CASE("a dropped adapter kills the session") {
  StubSession s;
  auto remote = s.open("drop");
  CHECK(remote.predict(std::vector<UnitId>{}, 2).top.size() == 2);
  CHECK(kind_of([&] { remote.predict(std::vector<UnitId>{}, 2); }) == ErrorKind::Transport);
  CHECK_FALSE(remote.alive());
  CHECK(kind_of([&] { remote.predict(std::vector<UnitId>{}, 2); }) == ErrorKind::Transport);
}

TEST_CASE("a slow adapter times out") {
  StubSession s;
  auto remote = s.open("slow", std::chrono::milliseconds(200));
  const auto start = std::chrono::steady_clock::now();
  CHECK(kind_of([&] { remote.predict(std::vector<UnitId>{}, 2); }) == ErrorKind::Transport);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(3));
  CHECK_FALSE(remote.alive());
}

TEST_CASE("a missing adapter command fails on the handshake") {
  StubSession s;
  const auto k = kind_of([&] {
    RemotePredictor(spawn_channel("/nonexistent/adapter"), s.vocab, RemoteOptions{std::chrono::seconds(5)});
  });
  CHECK(k == ErrorKind::Transport);
}

TEST_CASE("handshake and distribution parsing") {
  CHECK(kind_of([] { parse_handshake(R"({"type":"hello","scheme":"xyz","vocab_sha256":"a","vocab_size":3})"); }) ==
        ErrorKind::Protocol);
  CHECK(kind_of([] { parse_handshake(R"({"type":"hello","scheme":"bpe","vocab_sha256":"a","vocab_size":0})"); }) ==
        ErrorKind::Protocol);
  const auto h = parse_handshake(R"({"type":"hello","scheme":"bpe","vocab_sha256":"ab","vocab_size":3})");
  CHECK(h.scheme == Scheme::Bpe);
  CHECK(h.vocab_size == 3);

  const auto d = parse_distribution(R"({"type":"dist","id":4,"top":[[1,-2.0],[0,-0.5]]})", 4, 3);
  REQUIRE(d.top.size() == 2);
  CHECK(d.top[0].unit == 0);
  CHECK(kind_of([] { parse_distribution(R"({"type":"dist","id":4,"top":[[7,-1.0]]})", 4, 3); }) ==
        ErrorKind::Protocol);
  CHECK(kind_of([] { parse_distribution(R"({"type":"dist","id":4,"top":[[1,-1.0],[1,-2.0]]})", 4, 3); }) ==
        ErrorKind::Protocol);
  CHECK(kind_of([] { parse_distribution(R"({"type":"dist","id":5,"top":[]})", 4, 3); }) == ErrorKind::Protocol);
  CHECK(kind_of([] { parse_distribution("not json", 4, 3); }) == ErrorKind::Protocol);
}

TEST_CASE("tcp transport") {
  StubSession s;
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(listener >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  REQUIRE(::listen(listener, 1) == 0);
  socklen_t len = sizeof addr;
  REQUIRE(::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
  const int port = ntohs(addr.sin_port);

  const std::string sha = s.vocab.sha256();
  std::thread server([&] {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) return;
    auto send = [&](const std::string& line) {
      const std::string data = line + "\n";
      (void)!::write(fd, data.data(), data.size());
    };
    send(nlohmann::json{{"type", "hello"}, {"scheme", "wordpiece"}, {"vocab_sha256", sha}, {"vocab_size", 6}}.dump());
    std::string buffer;
    char c;
    while (::read(fd, &c, 1) == 1 && c != '\n') buffer += c;
    const auto req = nlohmann::json::parse(buffer);
    send(nlohmann::json{{"type", "dist"}, {"id", req["id"]}, {"top", {{3, -0.1}, {5, -2.5}}}}.dump());
    ::close(fd);
  });

  {
    RemotePredictor remote(tcp_channel("127.0.0.1:" + std::to_string(port)), s.vocab);
    const auto d = remote.predict(std::vector<UnitId>{1}, 2);
    REQUIRE(d.top.size() == 2);
    CHECK(d.top[0].unit == 3);
    CHECK(d.top[1].unit == 5);
    CHECK(kind_of([&] { remote.predict(std::vector<UnitId>{}, 1); }) == ErrorKind::Transport);
  }
  server.join();
  ::close(listener);
  CHECK(kind_of([] { tcp_channel("no-port"); }) == ErrorKind::Configuration);
}
