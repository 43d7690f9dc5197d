#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "viba/victim.hpp"

namespace viba {

/// External tagger driven over a newline-delimited JSON protocol on the
/// child's stdin/stdout. The parent sends {"op":"hello","version":1}, the
/// child answers with its capabilities and label inventory, then each
/// predict request/response pair carries a strictly increasing id.
class SubprocessVictim final : public Victim {
 public:
  /// Spawns `command` via /bin/sh -c and performs the handshake.
  /// timeout_ms bounds each request (and the handshake).
  explicit SubprocessVictim(const std::string& command,
                            std::uint64_t timeout_ms = 30000);
  ~SubprocessVictim() override;

  SubprocessVictim(const SubprocessVictim&) = delete;
  SubprocessVictim& operator=(const SubprocessVictim&) = delete;

  const VictimCapabilities& capabilities() const override { return caps_; }
  const std::vector<std::string>& labels() const override { return labels_; }
  bool concurrency_safe() const override { return false; }

 private:
  PredictionRecord predict_impl(const std::vector<std::string>& tokens) override;

  void send_line(const std::string& line);
  std::string read_line();
  void shutdown() noexcept;

  std::string command_;
  std::uint64_t timeout_ms_;
  VictimCapabilities caps_;
  std::vector<std::string> labels_;
  std::uint64_t next_id_ = 0;
  std::size_t representation_dim_ = 0;  // 0 until first observed

  int child_pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string read_buffer_;
};

}  // namespace viba
