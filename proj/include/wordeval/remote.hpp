#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wordeval/predictor.hpp"
#include "wordeval/tokenizer.hpp"

namespace wordeval {

/// A bidirectional line channel to an adapter process or socket.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  // Throws Transport on timeout or end of stream.
  virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
};

// Runs `command` through /bin/sh with its stdin/stdout connected to the channel.
std::unique_ptr<LineChannel> spawn_channel(const std::string& command);
// Connects to host:port.
std::unique_ptr<LineChannel> tcp_channel(const std::string& address);
// Wraps already-open descriptors (takes ownership).
std::unique_ptr<LineChannel> fd_channel(int read_fd, int write_fd);

struct Handshake {
  Scheme scheme = Scheme::Bpe;
  std::string vocab_sha256;
  std::size_t vocab_size = 0;
};

struct RemoteOptions {
  std::chrono::milliseconds timeout{30000};
};

/// Client for wire protocol v1.
///
///   hello    {"type":"hello","scheme":"bpe|wordpiece","vocab_sha256":"...","vocab_size":N}
///   request  {"type":"predict","id":i,"context":[ids],"k":K}
///   response {"type":"dist","id":i,"top":[[id,logprob],...]}
///
/// Embedding extension:
///   request  {"type":"embed","id":i,"tokens":["w",...]}
///   response {"type":"vectors","id":i,"vectors":[[...],...]}   ([] for an unknown token)
///
/// One request is in flight at a time; ids increase monotonically from 1 and
/// every response must echo the id of the pending request. After any
/// transport failure the session is dead and every later call throws
/// Transport.
class RemotePredictor final : public Predictor {
 public:
  // Reads the hello line and checks it against `vocab` (scheme, size, hash).
  RemotePredictor(std::unique_ptr<LineChannel> channel, const SubwordVocab& vocab, RemoteOptions options = {});

  const Handshake& handshake() const { return handshake_; }

  std::size_t vocab_size() const override { return handshake_.vocab_size; }
  UnitDistribution predict(std::span<const UnitId> context, std::size_t k) override;

  std::vector<std::vector<float>> embed(const std::vector<std::string>& tokens);

  bool alive() const { return alive_; }

 private:
  std::string round_trip(const std::string& request, std::uint64_t id);

  std::unique_ptr<LineChannel> channel_;
  RemoteOptions options_;
  Handshake handshake_;
  std::uint64_t next_id_ = 1;
  bool alive_ = true;
};

// Parses and validates a hello line; throws Protocol on malformed input.
Handshake parse_handshake(const std::string& line);
// Parses a dist response for request `id` against a vocabulary of `vocab_size`.
UnitDistribution parse_distribution(const std::string& line, std::uint64_t id, std::size_t vocab_size);

}  // namespace wordeval
