#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viba/attack.hpp"
#include "viba/corpus.hpp"
#include "viba/victim.hpp"

namespace viba {

struct ProbeConfig {
  /// Single-token entities have no distinct boundaries; skipped by default.
  bool include_single_token_entities = false;
};

struct DropDetail {
  std::string sentence_id;
  Entity entity;
  double p_t = 0.0;
  std::optional<double> boundary_drop;
  std::optional<double> inner_drop;
};

struct ProbeReport {
  // Masking probe. Drops may be negative: probabilities can rise.
  std::optional<double> mean_boundary_drop;
  std::optional<double> mean_inner_drop;
  std::size_t probed_entities = 0;
  std::size_t boundary_contributors = 0;
  std::size_t inner_contributors = 0;
  // Representation-stability probe, cosines in [-1, 1].
  std::optional<double> mean_cosine_inserted;
  std::optional<double> mean_cosine_other;
  std::size_t cosine_successes = 0;
  std::size_t skipped_zero_vectors = 0;
};

/// Mean marginal probability of the victim's own predicted tags over the
/// entity span. Requires the marginals capability.
double entity_probability(Victim& victim, const std::vector<std::string>& tokens,
                          const Entity& entity);

struct DropProbeResult {
  std::optional<double> mean_boundary_drop;
  std::optional<double> mean_inner_drop;
  std::size_t probed_entities = 0;
  std::size_t boundary_contributors = 0;
  std::size_t inner_contributors = 0;
  std::vector<DropDetail> details;
};

/// For each predicted entity, masks boundary tokens and inner tokens
/// separately and measures the probability drop of the original judgment.
/// The predicted span and type are held fixed when re-scoring.
DropProbeResult boundary_inner_drop_probe(Victim& victim, const Dataset& dataset,
                                          const ProbeConfig& config = {});

struct CosineProbeResult {
  std::optional<double> mean_cosine_inserted;
  std::optional<double> mean_cosine_other;
  std::size_t successes_used = 0;
  std::size_t skipped_zero_vectors = 0;
};

/// Compares victim representations of X' against X' with the source entity
/// masked: cosine at the inserted/replaced boundary position versus all
/// other shared positions. Requires the representations capability.
CosineProbeResult representation_similarity_probe(
    Victim& victim, std::span<const SentenceAttackResult> outcomes);

ProbeReport run_probes(Victim& victim, const Dataset& dataset,
                       std::span<const SentenceAttackResult> outcomes,
                       const ProbeConfig& config = {});

std::string probe_report_to_json(const ProbeReport& report,
                                 const std::string& config_echo_json);
std::string drop_details_to_csv(std::span<const DropDetail> details);

}  // namespace viba
