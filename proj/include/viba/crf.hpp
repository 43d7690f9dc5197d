#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "viba/corpus.hpp"
#include "viba/victim.hpp"

namespace viba {

inline constexpr double kNegInf = -1e30;
inline constexpr const char* kDefaultMaskToken = "[MASK]";

/// Hand-crafted feature templates for one position: current token, lowercase,
/// shape, prefixes/suffixes (1-3 codepoints), previous/next tokens and
/// begin/end sentinels. A position holding the mask token keeps only the
/// single mask feature plus the positional sentinels.
std::vector<std::string> featurize(std::span<const std::string> tokens,
                                   std::size_t position,
                                   const std::string& mask_token = kDefaultMaskToken);

struct TrainConfig {
  std::size_t epochs = 12;
  double learning_rate = 0.2;
  double lr_decay = 0.08;  // lr_epoch = learning_rate / (1 + lr_decay * epoch)
  double l2 = 2e-4;
  std::uint64_t seed = 0;
  double boundary_mask_p = 0.0;     // train-time boundary token masking
  double boundary_dropout_p = 0.0;  // train-time boundary feature dropout
  bool bio_hard_constraints = true;
  std::string mask_token = kDefaultMaskToken;
};

/// Linear-chain CRF weights: per-(feature, tag) emission weights plus a tag
/// transition matrix with start/stop vectors. Treated as frozen once trained.
class CrfModel {
 public:
  CrfModel() = default;
  explicit CrfModel(std::vector<std::string> tags, bool bio_hard_constraints = false);

  const std::vector<std::string>& tags() const noexcept { return tags_; }
  std::size_t tag_count() const noexcept { return tags_.size(); }
  std::optional<std::size_t> tag_id(const std::string& tag) const;

  std::size_t feature_count() const noexcept { return feature_names_.size(); }
  const std::vector<std::string>& feature_names() const noexcept {
    return feature_names_;
  }
  std::optional<std::size_t> feature_id(const std::string& name) const;
  std::size_t intern_feature(const std::string& name);

  double emission(std::size_t feature, std::size_t tag) const {
    return emission_[feature * tags_.size() + tag];
  }
  void set_emission(std::size_t feature, std::size_t tag, double w) {
    emission_[feature * tags_.size() + tag] = w;
  }
  double transition(std::size_t from, std::size_t to) const {
    return transition_[from * tags_.size() + to];
  }
  void set_transition(std::size_t from, std::size_t to, double w) {
    transition_[from * tags_.size() + to] = w;
  }
  double start(std::size_t tag) const { return start_[tag]; }
  void set_start(std::size_t tag, double w) { start_[tag] = w; }
  double stop(std::size_t tag) const { return stop_[tag]; }
  void set_stop(std::size_t tag, double w) { stop_[tag] = w; }

  /// Structurally forbidden transitions (BIO hard constraints) are pinned at
  /// kNegInf and excluded from training updates and regularization.
  bool transition_forbidden(std::size_t from, std::size_t to) const {
    return forbidden_trans_[from * tags_.size() + to] != 0;
  }
  bool start_forbidden(std::size_t tag) const { return forbidden_start_[tag] != 0; }

  /// Feature ids active at each position; unknown features are dropped.
  std::vector<std::vector<std::size_t>> active_features(
      std::span<const std::string> tokens, const std::string& mask_token) const;

  /// Emission score matrix (n x L); the per-position row doubles as the
  /// model's hidden-state analogue.
  std::vector<std::vector<double>> emission_scores(
      std::span<const std::string> tokens, const std::string& mask_token) const;

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::size_t> tag_ids_;
  std::vector<std::string> feature_names_;
  std::unordered_map<std::string, std::size_t> feature_ids_;
  std::vector<double> emission_;    // feature-major, tag-minor
  std::vector<double> transition_;  // from-major
  std::vector<double> start_;
  std::vector<double> stop_;
  std::vector<std::uint8_t> forbidden_trans_;
  std::vector<std::uint8_t> forbidden_start_;
};

double score_sequence(const CrfModel& model,
                      std::span<const std::string> tokens,
                      const TagSequence& tags,
                      const std::string& mask_token = kDefaultMaskToken);

/// Exact argmax tag path; score ties resolve toward the lexicographically
/// smallest tag index vector.
TagSequence viterbi(const CrfModel& model, std::span<const std::string> tokens,
                    const std::string& mask_token = kDefaultMaskToken);

struct ForwardBackwardResult {
  double log_partition = 0.0;
  std::vector<std::vector<double>> marginals;  // n x L, rows sum to 1
};

ForwardBackwardResult forward_backward(
    const CrfModel& model, std::span<const std::string> tokens,
    const std::string& mask_token = kDefaultMaskToken);

/// Per-position emission score vectors (dimension L).
std::vector<std::vector<double>> representations(
    const CrfModel& model, std::span<const std::string> tokens,
    const std::string& mask_token = kDefaultMaskToken);

/// Gradient in the same shape as the model weights.
struct CrfGradient {
  std::vector<double> emission;
  std::vector<double> transition;
  std::vector<double> start;
  std::vector<double> stop;
};

struct TrainExample {
  std::vector<std::string> tokens;
  TagSequence tags;
};

/// Full-batch negative log-likelihood with L2 and its analytic gradient.
/// loss = sum_i (log Z_i - score(gold_i)) + (l2 / 2) * ||w||^2.
std::pair<double, CrfGradient> nll_and_gradient(
    const CrfModel& model, std::span<const TrainExample> batch, double l2,
    const std::string& mask_token = kDefaultMaskToken);

/// Deterministic SGD training. When dev is given, the epoch checkpoint with
/// the best dev entity F1 is returned; dev_f1_history (when non-null)
/// receives one dev F1 value per epoch.
CrfModel train(const Dataset& data, const TrainConfig& config,
               const Dataset* dev = nullptr,
               std::vector<double>* dev_f1_history = nullptr);

/// Versioned text format; weights round-trip bit-exactly.
void save_model(const CrfModel& model, const std::string& path);
CrfModel load_model(const std::string& path);

/// Victim adapter over a frozen model: Viterbi tags, forward-backward
/// marginals and emission-vector representations on every call.
class CrfVictim final : public Victim {
 public:
  explicit CrfVictim(CrfModel model, std::string mask_token = kDefaultMaskToken);

  const VictimCapabilities& capabilities() const override { return caps_; }
  const std::vector<std::string>& labels() const override {
    return model_.tags();
  }
  bool concurrency_safe() const override { return true; }
  const CrfModel& model() const noexcept { return model_; }

 private:
  PredictionRecord predict_impl(const std::vector<std::string>& tokens) override;

  CrfModel model_;
  VictimCapabilities caps_;
};

}  // namespace viba
