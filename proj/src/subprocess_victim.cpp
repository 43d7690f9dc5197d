#include "viba/subprocess_victim.hpp"

#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "viba/errors.hpp"

namespace viba {

using nlohmann::json;

namespace {

constexpr int kProtocolVersion = 1;

std::uint64_t now_ms() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

json parse_message(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed adapter message: ") + e.what() +
                        " in line: " + line.substr(0, 200));
  }
}

}  // namespace

SubprocessVictim::SubprocessVictim(const std::string& command,
                                   std::uint64_t timeout_ms)
    : command_(command), timeout_ms_(timeout_ms) {
  // Broken pipes surface as EPIPE from write() instead of killing the parent.
  ::signal(SIGPIPE, SIG_IGN);

  int to_pipe[2];
  int from_pipe[2];
  if (::pipe(to_pipe) != 0) throw VictimError("pipe() failed");
  if (::pipe(from_pipe) != 0) {
    ::close(to_pipe[0]);
    ::close(to_pipe[1]);
    throw VictimError("pipe() failed");
  }

  const int pid = ::fork();
  if (pid < 0) {
    for (int fd : {to_pipe[0], to_pipe[1], from_pipe[0], from_pipe[1]})
      ::close(fd);
    throw VictimError("fork() failed");
  }
  if (pid == 0) {
    ::dup2(to_pipe[0], STDIN_FILENO);
    ::dup2(from_pipe[1], STDOUT_FILENO);
    for (int fd : {to_pipe[0], to_pipe[1], from_pipe[0], from_pipe[1]})
      ::close(fd);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), nullptr);
    ::_exit(127);
  }

  child_pid_ = pid;
  to_child_ = to_pipe[1];
  from_child_ = from_pipe[0];
  ::close(to_pipe[0]);
  ::close(from_pipe[1]);

  try {
    json hello{{"op", "hello"}, {"version", kProtocolVersion}};
    send_line(hello.dump());
    const json reply = parse_message(read_line());
    if (reply.value("op", "") != "hello")
      throw ProtocolError("handshake: expected op 'hello', got: " +
                          reply.dump().substr(0, 200));
    if (reply.value("version", -1) != kProtocolVersion)
      throw ProtocolError("handshake: unsupported protocol version");
    const json& caps = reply.at("capabilities");
    caps_.has_marginals = caps.at("marginals").get<bool>();
    caps_.has_representations = caps.at("representations").get<bool>();
    caps_.mask_token = caps.at("mask_token").get<std::string>();
    if (caps_.mask_token.empty())
      throw ProtocolError("handshake: empty mask_token");
    labels_ = reply.at("labels").get<std::vector<std::string>>();
    if (labels_.empty()) throw ProtocolError("handshake: empty label inventory");
  } catch (const json::exception& e) {
    shutdown();
    throw ProtocolError(std::string("handshake: ") + e.what());
  } catch (...) {
    shutdown();
    throw;
  }
}

SubprocessVictim::~SubprocessVictim() { shutdown(); }

void SubprocessVictim::shutdown() noexcept {
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
  if (child_pid_ > 0) {
    int status = 0;
    // Give the child a moment to exit on EOF, then escalate.
    for (int i = 0; i < 50; ++i) {
      const int r = ::waitpid(child_pid_, &status, WNOHANG);
      if (r == child_pid_ || r < 0) {
        child_pid_ = -1;
        return;
      }
      ::usleep(10000);
    }
    ::kill(child_pid_, SIGKILL);
    ::waitpid(child_pid_, &status, 0);
    child_pid_ = -1;
  }
}

void SubprocessVictim::send_line(const std::string& line) {
  std::string payload = line;
  payload += '\n';
  std::size_t written = 0;
  while (written < payload.size()) {
    const ssize_t n = ::write(to_child_, payload.data() + written,
                              payload.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw VictimError(std::string("adapter write failed: ") +
                        std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

std::string SubprocessVictim::read_line() {
  const std::uint64_t deadline = now_ms() + timeout_ms_;
  for (;;) {
    const std::size_t nl = read_buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = read_buffer_.substr(0, nl);
      read_buffer_.erase(0, nl + 1);
      return line;
    }
    const std::uint64_t now = now_ms();
    if (now >= deadline)
      throw VictimError("adapter timed out after " +
                        std::to_string(timeout_ms_) + " ms");
    struct pollfd pfd{from_child_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, static_cast<int>(deadline - now));
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw VictimError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (pr == 0)
      throw VictimError("adapter timed out after " +
                        std::to_string(timeout_ms_) + " ms");
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof(buf));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw VictimError(std::string("adapter read failed: ") +
                        std::strerror(errno));
    }
    if (n == 0)
      throw ProtocolError("adapter closed its output stream unexpectedly");
    read_buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

PredictionRecord SubprocessVictim::predict_impl(
    const std::vector<std::string>& tokens) {
  const std::uint64_t id = next_id_++;
  json request{{"op", "predict"}, {"id", id}, {"tokens", tokens}};
  send_line(request.dump());

  const json reply = parse_message(read_line());
  const std::string op = reply.value("op", "");
  if (op == "error") {
    throw VictimError("adapter error for request " + std::to_string(id) + ": " +
                      reply.value("message", "(no message)"));
  }
  if (op != "result")
    throw ProtocolError("expected op 'result', got: " +
                        reply.dump().substr(0, 200));
  std::uint64_t reply_id = 0;
  try {
    reply_id = reply.at("id").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw ProtocolError("result message without valid id");
  }
  if (reply_id != id)
    throw ProtocolError("out-of-order response: expected id " +
                        std::to_string(id) + ", got " +
                        std::to_string(reply_id));

  PredictionRecord rec;
  try {
    rec.tags = reply.at("tags").get<TagSequence>();
    if (reply.contains("marginals") && !reply.at("marginals").is_null())
      rec.marginals =
          reply.at("marginals").get<std::vector<std::vector<double>>>();
    if (reply.contains("representations") &&
        !reply.at("representations").is_null())
      rec.representations =
          reply.at("representations").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed result payload: ") + e.what());
  }

  if (rec.marginals) {
    for (const auto& row : *rec.marginals) {
      if (row.size() != labels_.size())
        throw ProtocolError("marginal row size does not match label inventory");
      double sum = 0.0;
      for (double v : row) sum += v;
      if (std::abs(sum - 1.0) > 1e-6)
        throw ProtocolError("marginal row does not sum to 1 (got " +
                            std::to_string(sum) + ")");
    }
  }
  if (rec.representations && !rec.representations->empty()) {
    const std::size_t d = rec.representations->front().size();
    for (const auto& row : *rec.representations)
      if (row.size() != d)
        throw ProtocolError("ragged representation rows");
    if (representation_dim_ == 0)
      representation_dim_ = d;
    else if (d != representation_dim_)
      throw ProtocolError("representation dimension changed across calls");
  }
  return rec;
}

}  // namespace viba
