#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viba/attack.hpp"
#include "viba/corpus.hpp"

namespace viba {

/// Token-level Levenshtein distance with unit costs.
std::size_t edit_distance(std::span<const std::string> a,
                          std::span<const std::string> b);

/// Pluggable sentence similarity in [0, 1]; symmetric, 1 on identical input.
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  virtual double score(std::span<const std::string> a,
                       std::span<const std::string> b) const = 0;
  virtual std::string name() const = 0;
};

/// Fallback scorer: longest-common-subsequence length over max length.
class LcsScorer final : public SimilarityScorer {
 public:
  double score(std::span<const std::string> a,
               std::span<const std::string> b) const override;
  std::string name() const override { return "lcs"; }
};

/// Cosine similarity of mean per-token embeddings from a user-supplied
/// table; tokens absent from the table get a deterministic hash-seeded unit
/// vector. Negative cosines clamp to 0 to keep the metric in [0, 1].
class EmbeddingScorer final : public SimilarityScorer {
 public:
  explicit EmbeddingScorer(std::map<std::string, std::vector<double>> table);
  static EmbeddingScorer from_file(const std::string& path);

  double score(std::span<const std::string> a,
               std::span<const std::string> b) const override;
  std::string name() const override { return "embed"; }
  std::size_t dimension() const noexcept { return dim_; }

 private:
  std::vector<double> token_vector(const std::string& token) const;

  std::map<std::string, std::vector<double>> table_;
  std::size_t dim_ = 0;
};

double semantic_similarity(std::span<const std::string> a,
                           std::span<const std::string> b,
                           const SimilarityScorer& scorer);

struct AsrResult {
  std::optional<double> asr;  // absent when no sentence was attackable
  std::size_t attempted = 0;  // sentences with >= 1 predicted entity
  std::size_t skipped = 0;    // sentences with no predicted entities
  std::size_t succeeded = 0;
};

AsrResult compute_asr(std::span<const SentenceAttackResult> outcomes);

struct EasrResult {
  std::optional<double> easr1;
  std::optional<double> easr2;
  std::size_t entities_total = 0;
  std::size_t entities_s1 = 0;
  std::size_t entities_s2 = 0;
};

/// Requires exhaustive-mode records; zero predicted entities yields absent
/// values. An entity triggering both criteria counts in both numerators.
EasrResult compute_easr(std::span<const SentenceAttackResult> outcomes);

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

/// Entity-level exact-span exact-type micro-averaged scores. Absent
/// precision or recall (empty denominator) is treated as 0.
F1Result evaluate_f1(const Dataset& gold,
                     std::span<const TagSequence> predicted);

struct AttackReport {
  std::optional<double> asr;
  std::optional<double> easr1;
  std::optional<double> easr2;
  std::optional<double> mean_ss;
  std::optional<double> mean_ed;
  double mean_victim_calls = 0.0;
  std::size_t sentences = 0;
  std::size_t attempted = 0;
  std::size_t skipped = 0;
  std::size_t succeeded = 0;
  std::size_t s1_successes = 0;
  std::size_t s2_successes = 0;
  std::size_t entities_total = 0;
  std::size_t entities_s1 = 0;
  std::size_t entities_s2 = 0;
  std::string scorer;
  bool exhaustive = false;
};

AttackReport build_report(std::span<const SentenceAttackResult> outcomes,
                          const SimilarityScorer& scorer, bool exhaustive);

/// Structured document with every report field plus a config echo.
std::string report_to_json(const AttackReport& report,
                           const std::string& config_echo_json);
/// Flat one-row export mirroring the ASR/SS and EASR1/EASR2 table columns.
std::string report_to_csv(const AttackReport& report);

}  // namespace viba
