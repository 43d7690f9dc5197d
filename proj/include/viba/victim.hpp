#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "viba/corpus.hpp"

namespace viba {

struct VictimCapabilities {
  bool has_marginals = false;
  bool has_representations = false;
  std::string mask_token = "[MASK]";
};

struct PredictionRecord {
  TagSequence tags;
  /// Per-token distribution over the victim's label inventory, rows sum to 1.
  std::optional<std::vector<std::vector<double>>> marginals;
  /// Per-token real vector of fixed dimension.
  std::optional<std::vector<std::vector<double>>> representations;
};

/// Capability-typed victim interface. predict() must be deterministic for a
/// fixed model state: the attack re-checks stored successes and flags
/// victims that fail to reproduce them.
class Victim {
 public:
  virtual ~Victim() = default;

  /// Counted entry point; validates the input and the record shape.
  PredictionRecord predict(const std::vector<std::string>& tokens);

  virtual const VictimCapabilities& capabilities() const = 0;
  /// Tag inventory; marginal columns are keyed by this order.
  virtual const std::vector<std::string>& labels() const = 0;
  /// Whether concurrent predict() calls are allowed.
  virtual bool concurrency_safe() const { return false; }

  std::uint64_t call_count() const noexcept {
    return calls_.load(std::memory_order_relaxed);
  }
  void reset_call_count() noexcept {
    calls_.store(0, std::memory_order_relaxed);
  }

 private:
  virtual PredictionRecord predict_impl(
      const std::vector<std::string>& tokens) = 0;

  std::atomic<std::uint64_t> calls_{0};
};

/// Index of the highest-probability tag; ties break toward the lowest index.
std::size_t argmax_tag(const std::vector<double>& row);

}  // namespace viba
