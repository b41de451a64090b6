#include "wordeval/remote.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <json.hpp>

#include "wordeval/error.hpp"

namespace wordeval {

namespace {

using json = nlohmann::json;

void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, pid_t child = -1) : read_fd_(read_fd), write_fd_(write_fd), child_(child) {}

  ~FdChannel() override {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (child_ > 0) reap();
  }

  void write_line(const std::string& line) override {
    std::string data = line;
    data.push_back('\n');
    std::size_t sent = 0;
    while (sent < data.size()) {
      ssize_t n = ::write(write_fd_, data.data() + sent, data.size() - sent);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::Transport, std::string("write failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (eof_) throw Error(ErrorKind::Transport, "connection closed by peer");
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) throw Error(ErrorKind::Transport, "timed out waiting for response");
      pollfd pfd{read_fd_, POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::Transport, std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) throw Error(ErrorKind::Transport, "timed out waiting for response");
      char chunk[4096];
      ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw Error(ErrorKind::Transport, std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) eof_ = true;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  void reap() {
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(child_, nullptr, WNOHANG) != 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(child_, SIGKILL);
    ::waitpid(child_, nullptr, 0);
  }

  int read_fd_;
  int write_fd_;
  pid_t child_;
  std::string buffer_;
  bool eof_ = false;
};

[[noreturn]] void protocol_error(const std::string& what, const std::string& line) {
  throw Error(ErrorKind::Protocol, what + ": '" + line + "'");
}

json parse_line(const std::string& line) {
  try {
    auto j = json::parse(line);
    if (!j.is_object()) protocol_error("response is not a JSON object", line);
    return j;
  } catch (const json::exception&) {
    protocol_error("malformed response line", line);
  }
}

void expect_type_and_id(const json& j, const std::string& type, std::uint64_t id, const std::string& line) {
  if (!j.contains("type") || j["type"] != type) protocol_error("expected message type '" + type + "'", line);
  if (!j.contains("id") || !j["id"].is_number_unsigned() || j["id"].get<std::uint64_t>() != id) {
    protocol_error("response id does not match request id " + std::to_string(id), line);
  }
}

}  // namespace

std::unique_ptr<LineChannel> fd_channel(int read_fd, int write_fd) {
  ignore_sigpipe();
  return std::make_unique<FdChannel>(read_fd, write_fd);
}

std::unique_ptr<LineChannel> spawn_channel(const std::string& command) {
  ignore_sigpipe();
  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw Error(ErrorKind::Transport, "pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorKind::Transport, "pipe failed");
  }
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::Transport, "fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<FdChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> tcp_channel(const std::string& address) {
  ignore_sigpipe();
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw Error(ErrorKind::Configuration, "address must be host:port, got '" + address + "'");
  }
  const std::string host = address.substr(0, colon);
  const std::string port = address.substr(colon + 1);

  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &result); rc != 0) {
    throw Error(ErrorKind::Transport, "cannot resolve " + address + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(result);
  if (fd < 0) throw Error(ErrorKind::Transport, "cannot connect to " + address);
  return std::make_unique<FdChannel>(fd, fd);
}

Handshake parse_handshake(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    protocol_error("malformed hello line", line);
  }
  if (!j.is_object() || j.value("type", "") != "hello") protocol_error("expected hello message", line);
  Handshake h;
  try {
    h.scheme = parse_scheme(j.at("scheme").get<std::string>());
    h.vocab_sha256 = j.at("vocab_sha256").get<std::string>();
    h.vocab_size = j.at("vocab_size").get<std::size_t>();
  } catch (const json::exception&) {
    protocol_error("hello message missing scheme/vocab_sha256/vocab_size", line);
  } catch (const Error&) {
    protocol_error("hello message names an unknown scheme", line);
  }
  if (h.vocab_size == 0) protocol_error("hello message declares an empty vocabulary", line);
  return h;
}

UnitDistribution parse_distribution(const std::string& line, std::uint64_t id, std::size_t vocab_size) {
  const json j = parse_line(line);
  expect_type_and_id(j, "dist", id, line);
  if (!j.contains("top") || !j["top"].is_array()) protocol_error("dist response missing 'top' array", line);

  UnitDistribution out;
  for (const auto& entry : j["top"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_unsigned() || !entry[1].is_number()) {
      protocol_error("dist entries must be [unit_id, logprob]", line);
    }
    const auto unit = entry[0].get<std::uint64_t>();
    const double lp = entry[1].get<double>();
    if (unit >= vocab_size) protocol_error("unit id out of range", line);
    if (!std::isfinite(lp) || lp > 1e-9) protocol_error("log-probability must be finite and <= 0", line);
    out.top.push_back({static_cast<UnitId>(unit), std::min(lp, 0.0)});
  }
  // Enforce the tie-break convention regardless of adapter ordering.
  std::stable_sort(out.top.begin(), out.top.end(), [](const ScoredUnit& a, const ScoredUnit& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.unit < b.unit;
  });
  for (std::size_t i = 1; i < out.top.size(); ++i) {
    if (out.top[i].unit == out.top[i - 1].unit) protocol_error("duplicate unit id in dist response", line);
  }
  for (const auto& e : out.top) out.total_mass_accounted += std::exp(e.logprob);
  out.total_mass_accounted = std::min(out.total_mass_accounted, 1.0);
  return out;
}

RemotePredictor::RemotePredictor(std::unique_ptr<LineChannel> channel, const SubwordVocab& vocab,
                                 RemoteOptions options)
    : channel_(std::move(channel)), options_(options) {
  const std::string line = channel_->read_line(options_.timeout);
  handshake_ = parse_handshake(line);
  if (handshake_.scheme != vocab.scheme()) {
    throw Error(ErrorKind::Configuration, std::string("adapter scheme ") + to_string(handshake_.scheme) +
                                              " does not match local vocabulary scheme " + to_string(vocab.scheme()));
  }
  if (handshake_.vocab_size != vocab.size() || handshake_.vocab_sha256 != vocab.sha256()) {
    throw Error(ErrorKind::Configuration, "vocabulary handshake mismatch: adapter serves " +
                                              std::to_string(handshake_.vocab_size) + " units (sha256 " +
                                              handshake_.vocab_sha256 + "), local vocabulary has " +
                                              std::to_string(vocab.size()) + " units (sha256 " + vocab.sha256() + ")");
  }
}

std::string RemotePredictor::round_trip(const std::string& request, std::uint64_t id) {
  if (!alive_) throw Error(ErrorKind::Transport, "session is closed after an earlier transport failure");
  try {
    channel_->write_line(request);
    return channel_->read_line(options_.timeout);
  } catch (const Error& e) {
    alive_ = false;
    if (e.kind() == ErrorKind::Transport) throw;
    throw Error(ErrorKind::Transport, std::string("request ") + std::to_string(id) + ": " + e.what());
  }
}

UnitDistribution RemotePredictor::predict(std::span<const UnitId> context, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::Domain, "k must be positive");
  bool clamped = false;
  if (k > handshake_.vocab_size) {
    k = handshake_.vocab_size;
    clamped = true;
  }
  const std::uint64_t id = next_id_++;
  json request = {{"type", "predict"}, {"id", id}, {"context", std::vector<UnitId>(context.begin(), context.end())},
                  {"k", k}};
  const std::string line = round_trip(request.dump(), id);
  UnitDistribution dist = parse_distribution(line, id, handshake_.vocab_size);
  if (dist.top.size() < k) {
    protocol_error("dist response has " + std::to_string(dist.top.size()) + " entries, expected " + std::to_string(k),
                   line);
  }
  if (dist.top.size() > k) {
    dist.top.resize(k);
    dist.total_mass_accounted = 0.0;
    for (const auto& e : dist.top) dist.total_mass_accounted += std::exp(e.logprob);
  }
  dist.clamped = clamped;
  return dist;
}

std::vector<std::vector<float>> RemotePredictor::embed(const std::vector<std::string>& tokens) {
  const std::uint64_t id = next_id_++;
  json request = {{"type", "embed"}, {"id", id}, {"tokens", tokens}};
  const std::string line = round_trip(request.dump(), id);
  const json j = parse_line(line);
  expect_type_and_id(j, "vectors", id, line);
  std::vector<std::vector<float>> out;
  try {
    out = j.at("vectors").get<std::vector<std::vector<float>>>();
  } catch (const json::exception&) {
    protocol_error("vectors response must hold an array of numeric arrays", line);
  }
  if (out.size() != tokens.size()) protocol_error("vectors response has wrong token count", line);
  // an empty vector marks an out-of-vocabulary token
  std::size_t dim = 0;
  for (const auto& v : out) {
    if (v.empty()) continue;
    if (dim == 0) dim = v.size();
    if (v.size() != dim) protocol_error("non-empty vectors must share one dimension", line);
  }
  return out;
}

}  // namespace wordeval
