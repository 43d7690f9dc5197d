#pragma once

// Independent brute-force oracles. These re-derive every quantity by
// explicit enumeration or naive summation and must not share inference code
// with the implementation they check.

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "viba/corpus.hpp"
#include "viba/crf.hpp"
#include "viba/rng.hpp"

namespace viba::testing {

/// Path score by direct term summation: emission weights of every active
/// feature plus start/transition/stop terms.
inline double oracle_path_score(const CrfModel& model,
                                const std::vector<std::string>& tokens,
                                const std::vector<std::size_t>& path,
                                const std::string& mask = "[MASK]") {
  double score = model.start(path.front());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& f : featurize(tokens, i, mask))
      if (auto id = model.feature_id(f)) score += model.emission(*id, path[i]);
    if (i > 0) score += model.transition(path[i - 1], path[i]);
  }
  return score + model.stop(path.back());
}

struct OracleInference {
  std::vector<std::size_t> argmax_path;  // lexicographically smallest argmax
  double max_score = 0.0;
  double log_partition = 0.0;
  std::vector<std::vector<double>> marginals;
};

/// Enumerates all L^n paths in lexicographic order.
inline OracleInference oracle_enumerate(const CrfModel& model,
                                        const std::vector<std::string>& tokens,
                                        const std::string& mask = "[MASK]") {
  const std::size_t n = tokens.size();
  const std::size_t L = model.tag_count();
  OracleInference out;
  out.marginals.assign(n, std::vector<double>(L, 0.0));

  std::vector<std::size_t> path(n, 0);
  std::vector<double> scores;
  std::vector<std::vector<std::size_t>> paths;
  for (;;) {
    scores.push_back(oracle_path_score(model, tokens, path, mask));
    paths.push_back(path);
    std::size_t k = n;
    while (k > 0) {
      if (++path[k - 1] < L) break;
      path[k - 1] = 0;
      --k;
    }
    if (k == 0) break;
  }

  double best = scores[0];
  std::size_t best_idx = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > best) {
      best = scores[i];
      best_idx = i;
    }
  out.max_score = best;
  out.argmax_path = paths[best_idx];

  double z = 0.0;
  for (double s : scores) z += std::exp(s - best);
  out.log_partition = best + std::log(z);

  for (std::size_t i = 0; i < paths.size(); ++i) {
    const double w = std::exp(scores[i] - out.log_partition);
    for (std::size_t pos = 0; pos < n; ++pos)
      out.marginals[pos][paths[i][pos]] += w;
  }
  return out;
}

/// Independent safety-area recomputation: position p is unsafe iff some
/// entity [s, e) has p >= s - w and p < e + w.
inline std::set<std::size_t> oracle_safety_area(
    const std::vector<Entity>& entities, std::size_t n, std::size_t w) {
  std::set<std::size_t> unsafe;
  for (std::size_t p = 0; p < n; ++p)
    for (const auto& en : entities) {
      const bool below = p + w < en.start;  // p < start - w
      const bool above = p >= en.end + w;
      if (!below && !above) {
        unsafe.insert(p);
        break;
      }
    }
  return unsafe;
}

/// Random small CRF instance for oracle comparisons.
struct RandomInstance {
  CrfModel model;
  std::vector<std::string> tokens;
  TagSequence gold;
};

inline RandomInstance random_instance(Rng& rng, std::size_t max_n = 6,
                                      std::size_t max_l = 4) {
  static const std::vector<std::string> pool = {"alpha", "Beta", "gamma-7",
                                                "DELTA", "e",     "Zeta9"};
  const std::size_t n = 1 + rng.uniform_index(max_n);
  const std::size_t L = 2 + rng.uniform_index(max_l - 1);
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < L; ++i)
    tags.push_back(std::string(1, static_cast<char>('A' + i)));

  RandomInstance inst;
  inst.model = CrfModel(tags, /*bio_hard_constraints=*/false);
  for (std::size_t i = 0; i < n; ++i)
    inst.tokens.push_back(pool[rng.uniform_index(pool.size())]);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& f : featurize(inst.tokens, i))
      inst.model.intern_feature(f);

  for (std::size_t f = 0; f < inst.model.feature_count(); ++f)
    for (std::size_t y = 0; y < L; ++y)
      inst.model.set_emission(f, y, rng.uniform_real(-1.0, 1.0));
  for (std::size_t a = 0; a < L; ++a) {
    inst.model.set_start(a, rng.uniform_real(-1.0, 1.0));
    inst.model.set_stop(a, rng.uniform_real(-1.0, 1.0));
    for (std::size_t b = 0; b < L; ++b)
      inst.model.set_transition(a, b, rng.uniform_real(-1.0, 1.0));
  }
  for (std::size_t i = 0; i < n; ++i)
    inst.gold.push_back(tags[rng.uniform_index(L)]);
  return inst;
}

}  // namespace viba::testing
