#include "viba/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "viba/errors.hpp"

namespace viba {

using nlohmann::json;

namespace {

void require_marginals(const Victim& victim) {
  if (!victim.capabilities().has_marginals) throw CapabilityError("marginals");
}

std::vector<std::size_t> tag_ids_for(const Victim& victim,
                                     const TagSequence& tags,
                                     std::size_t start, std::size_t end) {
  const auto& labels = victim.labels();
  std::vector<std::size_t> ids;
  ids.reserve(end - start);
  for (std::size_t i = start; i < end; ++i) {
    auto it = std::find(labels.begin(), labels.end(), tags[i]);
    if (it == labels.end())
      throw VictimError("predicted tag '" + tags[i] +
                        "' missing from victim label inventory");
    ids.push_back(static_cast<std::size_t>(it - labels.begin()));
  }
  return ids;
}

/// Mean marginal of fixed (position, tag) pairs on a given input.
double span_probability(Victim& victim, const std::vector<std::string>& tokens,
                        std::size_t start,
                        const std::vector<std::size_t>& span_tag_ids) {
  auto rec = victim.predict(tokens);
  if (!rec.marginals) throw CapabilityError("marginals");
  double sum = 0.0;
  for (std::size_t k = 0; k < span_tag_ids.size(); ++k)
    sum += rec.marginals->at(start + k).at(span_tag_ids[k]);
  return sum / static_cast<double>(span_tag_ids.size());
}

}  // namespace

double entity_probability(Victim& victim, const std::vector<std::string>& tokens,
                          const Entity& entity) {
  require_marginals(victim);
  if (entity.end > tokens.size() || entity.start >= entity.end)
    throw ValidationError("entity span out of range");
  auto rec = victim.predict(tokens);
  if (!rec.marginals) throw CapabilityError("marginals");
  const auto ids = tag_ids_for(victim, rec.tags, entity.start, entity.end);
  double sum = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k)
    sum += rec.marginals->at(entity.start + k).at(ids[k]);
  return sum / static_cast<double>(ids.size());
}

DropProbeResult boundary_inner_drop_probe(Victim& victim, const Dataset& dataset,
                                          const ProbeConfig& config) {
  require_marginals(victim);
  const std::string& mask = victim.capabilities().mask_token;

  DropProbeResult result;
  double boundary_sum = 0.0, inner_sum = 0.0;

  for (const auto& sentence : dataset.sentences) {
    auto rec = victim.predict(sentence.tokens);
    if (!rec.marginals) throw CapabilityError("marginals");
    const auto entities =
        decode_entities(sentence.tokens, repair_bio(rec.tags));

    for (const auto& entity : entities) {
      const std::size_t len = entity.size();
      if (len == 1 && !config.include_single_token_entities) continue;

      // The original predicted span and tags are held fixed while the
      // masked variants are re-scored.
      const auto span_ids =
          tag_ids_for(victim, rec.tags, entity.start, entity.end);
      double p_t = 0.0;
      for (std::size_t k = 0; k < span_ids.size(); ++k)
        p_t += rec.marginals->at(entity.start + k).at(span_ids[k]);
      p_t /= static_cast<double>(span_ids.size());

      DropDetail detail;
      detail.sentence_id = sentence.id;
      detail.entity = entity;
      detail.p_t = p_t;
      ++result.probed_entities;

      if (len == 1) {
        auto masked = mask_span(sentence.tokens, entity.start, entity.end, mask);
        const double drop =
            p_t - span_probability(victim, masked, entity.start, span_ids);
        detail.boundary_drop = drop;
        boundary_sum += drop;
        ++result.boundary_contributors;
      } else {
        auto left = mask_span(sentence.tokens, entity.start, entity.start + 1,
                              mask);
        auto right = mask_span(sentence.tokens, entity.end - 1, entity.end,
                               mask);
        const double drop_left =
            p_t - span_probability(victim, left, entity.start, span_ids);
        const double drop_right =
            p_t - span_probability(victim, right, entity.start, span_ids);
        const double drop = 0.5 * (drop_left + drop_right);
        detail.boundary_drop = drop;
        boundary_sum += drop;
        ++result.boundary_contributors;

        if (len >= 3) {
          double inner = 0.0;
          for (std::size_t k = entity.start + 1; k + 1 < entity.end; ++k) {
            auto masked = mask_span(sentence.tokens, k, k + 1, mask);
            inner += p_t - span_probability(victim, masked, entity.start,
                                            span_ids);
          }
          inner /= static_cast<double>(len - 2);
          detail.inner_drop = inner;
          inner_sum += inner;
          ++result.inner_contributors;
        }
      }
      result.details.push_back(std::move(detail));
    }
  }

  if (result.boundary_contributors > 0)
    result.mean_boundary_drop =
        boundary_sum / static_cast<double>(result.boundary_contributors);
  if (result.inner_contributors > 0)
    result.mean_inner_drop =
        inner_sum / static_cast<double>(result.inner_contributors);
  return result;
}

namespace {

std::optional<double> cosine(const std::vector<double>& a,
                             const std::vector<double>& b) {
  if (a.size() != b.size()) throw VictimError("representation dimension drift");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;  // skipped, counted
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

CosineProbeResult representation_similarity_probe(
    Victim& victim, std::span<const SentenceAttackResult> outcomes) {
  if (!victim.capabilities().has_representations)
    throw CapabilityError("representations");
  const std::string& mask = victim.capabilities().mask_token;

  CosineProbeResult result;
  double inserted_sum = 0.0, other_sum = 0.0;
  std::size_t inserted_count = 0, other_count = 0;

  for (const auto& s : outcomes) {
    if (!s.outcome.success) continue;
    const auto& d = *s.outcome.detail;
    const Entity shifted = shifted_entity(d.candidate);
    const auto masked = mask_span(d.x_prime, shifted.start, shifted.end, mask);

    auto rec = victim.predict(d.x_prime);
    auto rec_masked = victim.predict(masked);
    if (!rec.representations || !rec_masked.representations)
      throw CapabilityError("representations");
    ++result.successes_used;

    const std::size_t j = d.candidate.position;
    for (std::size_t p = 0; p < d.x_prime.size(); ++p) {
      auto c = cosine(rec.representations->at(p),
                      rec_masked.representations->at(p));
      if (!c) {
        ++result.skipped_zero_vectors;
        continue;
      }
      if (p == j) {
        inserted_sum += *c;
        ++inserted_count;
      } else {
        other_sum += *c;
        ++other_count;
      }
    }
  }

  if (inserted_count > 0)
    result.mean_cosine_inserted =
        inserted_sum / static_cast<double>(inserted_count);
  if (other_count > 0)
    result.mean_cosine_other = other_sum / static_cast<double>(other_count);
  return result;
}

ProbeReport run_probes(Victim& victim, const Dataset& dataset,
                       std::span<const SentenceAttackResult> outcomes,
                       const ProbeConfig& config) {
  ProbeReport report;
  auto drops = boundary_inner_drop_probe(victim, dataset, config);
  report.mean_boundary_drop = drops.mean_boundary_drop;
  report.mean_inner_drop = drops.mean_inner_drop;
  report.probed_entities = drops.probed_entities;
  report.boundary_contributors = drops.boundary_contributors;
  report.inner_contributors = drops.inner_contributors;

  auto cosines = representation_similarity_probe(victim, outcomes);
  report.mean_cosine_inserted = cosines.mean_cosine_inserted;
  report.mean_cosine_other = cosines.mean_cosine_other;
  report.cosine_successes = cosines.successes_used;
  report.skipped_zero_vectors = cosines.skipped_zero_vectors;
  return report;
}

namespace {

json opt_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

}  // namespace

std::string probe_report_to_json(const ProbeReport& report,
                                 const std::string& config_echo_json) {
  json j{{"mean_boundary_drop", opt_json(report.mean_boundary_drop)},
         {"mean_inner_drop", opt_json(report.mean_inner_drop)},
         {"probed_entities", report.probed_entities},
         {"boundary_contributors", report.boundary_contributors},
         {"inner_contributors", report.inner_contributors},
         {"mean_cosine_inserted", opt_json(report.mean_cosine_inserted)},
         {"mean_cosine_other", opt_json(report.mean_cosine_other)},
         {"cosine_successes", report.cosine_successes},
         {"skipped_zero_vectors", report.skipped_zero_vectors}};
  if (!config_echo_json.empty()) j["config"] = json::parse(config_echo_json);
  return j.dump(2) + "\n";
}

std::string drop_details_to_csv(std::span<const DropDetail> details) {
  std::string out = "sentence,type,start,end,p_t,boundary_drop,inner_drop\n";
  char buf[64];
  for (const auto& d : details) {
    out += d.sentence_id + "," + d.entity.type + "," +
           std::to_string(d.entity.start) + "," + std::to_string(d.entity.end);
    std::snprintf(buf, sizeof(buf), ",%.6f", d.p_t);
    out += buf;
    if (d.boundary_drop) {
      std::snprintf(buf, sizeof(buf), ",%.6f", *d.boundary_drop);
      out += buf;
    } else {
      out += ",";
    }
    if (d.inner_drop) {
      std::snprintf(buf, sizeof(buf), ",%.6f", *d.inner_drop);
      out += buf;
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

}  // namespace viba
