#include "viba/crf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "viba/errors.hpp"
#include "viba/metrics.hpp"
#include "viba/rng.hpp"

namespace viba {

namespace {

// --- UTF-8 helpers (tokens may be multi-byte, e.g. Chinese characters) ---

bool is_continuation(unsigned char b) { return (b & 0xC0u) == 0x80u; }

std::vector<std::size_t> codepoint_starts(const std::string& s) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!is_continuation(static_cast<unsigned char>(s[i]))) starts.push_back(i);
  return starts;
}

std::string shape_of(const std::string& token) {
  std::string shape;
  for (std::size_t i = 0; i < token.size();) {
    unsigned char b = static_cast<unsigned char>(token[i]);
    if (b < 0x80u) {
      if (std::isupper(b))
        shape += 'X';
      else if (std::islower(b))
        shape += 'x';
      else if (std::isdigit(b))
        shape += 'd';
      else
        shape += '-';
      ++i;
    } else {
      shape += 'u';
      ++i;
      while (i < token.size() &&
             is_continuation(static_cast<unsigned char>(token[i])))
        ++i;
    }
  }
  return shape;
}

std::string ascii_lower(std::string s) {
  for (char& c : s)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::vector<std::string> featurize(std::span<const std::string> tokens,
                                   std::size_t position,
                                   const std::string& mask_token) {
  if (position >= tokens.size())
    throw ValidationError("featurize position out of range");
  const std::string& tok = tokens[position];
  std::vector<std::string> out;

  if (tok == mask_token) {
    out.push_back("w=" + tok);
    if (position == 0) out.emplace_back("BOS");
    if (position + 1 == tokens.size()) out.emplace_back("EOS");
    return out;
  }

  out.push_back("w=" + tok);
  out.push_back("lower=" + ascii_lower(tok));
  out.push_back("shape=" + shape_of(tok));
  const auto starts = codepoint_starts(tok);
  const std::size_t len = starts.size();
  for (std::size_t k = 1; k <= 3 && k <= len; ++k) {
    std::size_t cut = k < len ? starts[k] : tok.size();
    out.push_back("pre" + std::to_string(k) + "=" + tok.substr(0, cut));
    std::size_t from = starts[len - k];
    out.push_back("suf" + std::to_string(k) + "=" + tok.substr(from));
  }
  if (position == 0)
    out.emplace_back("BOS");
  else
    out.push_back("prev=" + tokens[position - 1]);
  if (position + 1 == tokens.size())
    out.emplace_back("EOS");
  else
    out.push_back("next=" + tokens[position + 1]);
  return out;
}

CrfModel::CrfModel(std::vector<std::string> tags, bool bio_hard_constraints)
    : tags_(std::move(tags)) {
  std::sort(tags_.begin(), tags_.end());
  tags_.erase(std::unique(tags_.begin(), tags_.end()), tags_.end());
  if (tags_.empty()) throw ValidationError("empty tag set");
  const std::size_t L = tags_.size();
  for (std::size_t i = 0; i < L; ++i) tag_ids_[tags_[i]] = i;
  transition_.assign(L * L, 0.0);
  start_.assign(L, 0.0);
  stop_.assign(L, 0.0);
  forbidden_trans_.assign(L * L, 0);
  forbidden_start_.assign(L, 0);

  if (bio_hard_constraints) {
    auto inside_type = [](const std::string& t) -> std::optional<std::string> {
      if (t.size() > 2 && t[0] == 'I' && t[1] == '-') return t.substr(2);
      return std::nullopt;
    };
    for (std::size_t to = 0; to < L; ++to) {
      auto type = inside_type(tags_[to]);
      if (!type) continue;
      forbidden_start_[to] = 1;
      start_[to] = kNegInf;
      for (std::size_t from = 0; from < L; ++from) {
        const std::string& f = tags_[from];
        const bool compatible =
            (f == "B-" + *type) || (f == "I-" + *type);
        if (!compatible) {
          forbidden_trans_[from * L + to] = 1;
          transition_[from * L + to] = kNegInf;
        }
      }
    }
  }
}

std::optional<std::size_t> CrfModel::tag_id(const std::string& tag) const {
  auto it = tag_ids_.find(tag);
  if (it == tag_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> CrfModel::feature_id(const std::string& name) const {
  auto it = feature_ids_.find(name);
  if (it == feature_ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t CrfModel::intern_feature(const std::string& name) {
  auto it = feature_ids_.find(name);
  if (it != feature_ids_.end()) return it->second;
  const std::size_t id = feature_names_.size();
  feature_names_.push_back(name);
  feature_ids_.emplace(name, id);
  emission_.resize(feature_names_.size() * tags_.size(), 0.0);
  return id;
}

std::vector<std::vector<std::size_t>> CrfModel::active_features(
    std::span<const std::string> tokens, const std::string& mask_token) const {
  std::vector<std::vector<std::size_t>> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& f : featurize(tokens, i, mask_token))
      if (auto id = feature_id(f)) out[i].push_back(*id);
  }
  return out;
}

std::vector<std::vector<double>> CrfModel::emission_scores(
    std::span<const std::string> tokens, const std::string& mask_token) const {
  const std::size_t L = tags_.size();
  auto feats = active_features(tokens, mask_token);
  std::vector<std::vector<double>> em(tokens.size(), std::vector<double>(L, 0.0));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t f : feats[i])
      for (std::size_t y = 0; y < L; ++y) em[i][y] += emission_[f * L + y];
  return em;
}

namespace {

double log_sum_exp(const double* v, std::size_t n) {
  double m = v[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, v[i]);
  if (m <= kNegInf / 2) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// Effective lattice scores for one sentence.
struct Lattice {
  std::size_t n = 0;
  std::size_t L = 0;
  std::vector<double> em;  // n*L
  std::vector<double> trans;
  std::vector<double> start;
  std::vector<double> stop;
};

Lattice build_lattice(const CrfModel& model,
                      const std::vector<std::vector<std::size_t>>& feats) {
  Lattice lat;
  lat.n = feats.size();
  lat.L = model.tag_count();
  lat.em.assign(lat.n * lat.L, 0.0);
  for (std::size_t i = 0; i < lat.n; ++i)
    for (std::size_t f : feats[i])
      for (std::size_t y = 0; y < lat.L; ++y)
        lat.em[i * lat.L + y] += model.emission(f, y);
  lat.trans.resize(lat.L * lat.L);
  lat.start.resize(lat.L);
  lat.stop.resize(lat.L);
  for (std::size_t a = 0; a < lat.L; ++a) {
    lat.start[a] = model.start(a);
    lat.stop[a] = model.stop(a);
    for (std::size_t b = 0; b < lat.L; ++b)
      lat.trans[a * lat.L + b] = model.transition(a, b);
  }
  return lat;
}

std::vector<std::size_t> lattice_viterbi(const Lattice& lat) {
  const std::size_t n = lat.n, L = lat.L;
  // Backward max-messages: best[i][y] = em(i,y) + best completion from i.
  std::vector<double> best(n * L);
  for (std::size_t y = 0; y < L; ++y)
    best[(n - 1) * L + y] = lat.em[(n - 1) * L + y] + lat.stop[y];
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t y = 0; y < L; ++y) {
      double m = kNegInf * 2;
      for (std::size_t z = 0; z < L; ++z)
        m = std::max(m, lat.trans[y * L + z] + best[(i + 1) * L + z]);
      best[i * L + y] = lat.em[i * L + y] + m;
    }
  }
  // Forward selection keeps the lexicographically smallest argmax path.
  std::vector<std::size_t> path(n);
  double m0 = kNegInf * 2;
  for (std::size_t y = 0; y < L; ++y)
    m0 = std::max(m0, lat.start[y] + best[y]);
  for (std::size_t y = 0; y < L; ++y)
    if (lat.start[y] + best[y] == m0) {
      path[0] = y;
      break;
    }
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t p = path[i - 1];
    double m = kNegInf * 2;
    for (std::size_t z = 0; z < L; ++z)
      m = std::max(m, lat.trans[p * L + z] + best[i * L + z]);
    for (std::size_t z = 0; z < L; ++z)
      if (lat.trans[p * L + z] + best[i * L + z] == m) {
        path[i] = z;
        break;
      }
  }
  return path;
}

struct Posteriors {
  double log_z = 0.0;
  std::vector<double> log_alpha;  // includes em at i
  std::vector<double> log_beta;   // suffix from i+1 on, excludes em at i
};

Posteriors lattice_posteriors(const Lattice& lat) {
  const std::size_t n = lat.n, L = lat.L;
  Posteriors p;
  p.log_alpha.assign(n * L, 0.0);
  p.log_beta.assign(n * L, 0.0);
  std::vector<double> tmp(L);
  for (std::size_t y = 0; y < L; ++y)
    p.log_alpha[y] = lat.start[y] + lat.em[y];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t z = 0; z < L; ++z)
        tmp[z] = p.log_alpha[(i - 1) * L + z] + lat.trans[z * L + y];
      p.log_alpha[i * L + y] = lat.em[i * L + y] + log_sum_exp(tmp.data(), L);
    }
  }
  for (std::size_t y = 0; y < L; ++y)
    p.log_beta[(n - 1) * L + y] = lat.stop[y];
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t z = 0; z < L; ++z)
        tmp[z] = lat.trans[y * L + z] + lat.em[(i + 1) * L + z] +
                 p.log_beta[(i + 1) * L + z];
      p.log_beta[i * L + y] = log_sum_exp(tmp.data(), L);
    }
  }
  for (std::size_t y = 0; y < L; ++y)
    tmp[y] = p.log_alpha[(n - 1) * L + y] + lat.stop[y];
  p.log_z = log_sum_exp(tmp.data(), L);
  return p;
}

std::vector<std::vector<double>> posterior_marginals(const Lattice& lat,
                                                     const Posteriors& p) {
  const std::size_t n = lat.n, L = lat.L;
  std::vector<std::vector<double>> marg(n, std::vector<double>(L, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t y = 0; y < L; ++y) {
      double v =
          std::exp(p.log_alpha[i * L + y] + p.log_beta[i * L + y] - p.log_z);
      marg[i][y] = v;
      row_sum += v;
    }
    for (std::size_t y = 0; y < L; ++y) marg[i][y] /= row_sum;
  }
  return marg;
}

std::vector<std::size_t> gold_tag_ids(const CrfModel& model,
                                      const TagSequence& tags) {
  std::vector<std::size_t> ids;
  ids.reserve(tags.size());
  for (const auto& t : tags) {
    auto id = model.tag_id(t);
    if (!id) throw ValidationError("unknown tag '" + t + "'");
    ids.push_back(*id);
  }
  return ids;
}

double path_score(const Lattice& lat, const std::vector<std::size_t>& ids) {
  const std::size_t n = lat.n, L = lat.L;
  double s = lat.start[ids[0]] + lat.em[ids[0]];
  for (std::size_t i = 1; i < n; ++i)
    s += lat.trans[ids[i - 1] * L + ids[i]] + lat.em[i * L + ids[i]];
  return s + lat.stop[ids[n - 1]];
}

}  // namespace

double score_sequence(const CrfModel& model,
                      std::span<const std::string> tokens,
                      const TagSequence& tags, const std::string& mask_token) {
  if (tokens.empty()) throw ValidationError("empty token sequence");
  if (tokens.size() != tags.size())
    throw ValidationError("tokens/tags length mismatch");
  auto ids = gold_tag_ids(model, tags);
  Lattice lat = build_lattice(model, model.active_features(tokens, mask_token));
  return path_score(lat, ids);
}

TagSequence viterbi(const CrfModel& model, std::span<const std::string> tokens,
                    const std::string& mask_token) {
  if (tokens.empty()) throw ValidationError("empty token sequence");
  Lattice lat = build_lattice(model, model.active_features(tokens, mask_token));
  auto path = lattice_viterbi(lat);
  TagSequence tags;
  tags.reserve(path.size());
  for (std::size_t y : path) tags.push_back(model.tags()[y]);
  return tags;
}

ForwardBackwardResult forward_backward(const CrfModel& model,
                                       std::span<const std::string> tokens,
                                       const std::string& mask_token) {
  if (tokens.empty()) throw ValidationError("empty token sequence");
  Lattice lat = build_lattice(model, model.active_features(tokens, mask_token));
  Posteriors p = lattice_posteriors(lat);
  return ForwardBackwardResult{p.log_z, posterior_marginals(lat, p)};
}

std::vector<std::vector<double>> representations(
    const CrfModel& model, std::span<const std::string> tokens,
    const std::string& mask_token) {
  if (tokens.empty()) throw ValidationError("empty token sequence");
  return model.emission_scores(tokens, mask_token);
}

std::pair<double, CrfGradient> nll_and_gradient(
    const CrfModel& model, std::span<const TrainExample> batch, double l2,
    const std::string& mask_token) {
  const std::size_t L = model.tag_count();
  CrfGradient g;
  g.emission.assign(model.feature_count() * L, 0.0);
  g.transition.assign(L * L, 0.0);
  g.start.assign(L, 0.0);
  g.stop.assign(L, 0.0);
  double loss = 0.0;

  for (const auto& ex : batch) {
    if (ex.tokens.empty())
      throw ValidationError("empty example in training batch");
    auto ids = gold_tag_ids(model, ex.tags);
    if (ids.size() != ex.tokens.size())
      throw ValidationError("tokens/tags length mismatch");
    auto feats = model.active_features(ex.tokens, mask_token);
    Lattice lat = build_lattice(model, feats);
    Posteriors p = lattice_posteriors(lat);
    auto marg = posterior_marginals(lat, p);
    const std::size_t n = lat.n;

    loss += p.log_z - path_score(lat, ids);

    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f : feats[i])
        for (std::size_t y = 0; y < L; ++y)
          g.emission[f * L + y] += marg[i][y] - (ids[i] == y ? 1.0 : 0.0);

    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t a = 0; a < L; ++a) {
        if (p.log_alpha[i * L + a] <= kNegInf / 2) continue;
        for (std::size_t b = 0; b < L; ++b) {
          if (model.transition_forbidden(a, b)) continue;
          double lv = p.log_alpha[i * L + a] + lat.trans[a * L + b] +
                      lat.em[(i + 1) * L + b] + p.log_beta[(i + 1) * L + b] -
                      p.log_z;
          g.transition[a * L + b] += std::exp(lv);
        }
      }
      g.transition[ids[i] * L + ids[i + 1]] -= 1.0;
    }
    for (std::size_t y = 0; y < L; ++y) {
      if (!model.start_forbidden(y)) g.start[y] += marg[0][y];
      g.stop[y] += marg[n - 1][y];
    }
    g.start[ids[0]] -= 1.0;
    g.stop[ids[n - 1]] -= 1.0;
  }

  // L2 over trainable weights; structurally pinned entries are excluded.
  double sq = 0.0;
  for (std::size_t c = 0; c < g.emission.size(); ++c) {
    const double w = model.emission(c / L, c % L);
    sq += w * w;
    g.emission[c] += l2 * w;
  }
  for (std::size_t a = 0; a < L; ++a) {
    if (!model.start_forbidden(a)) {
      sq += model.start(a) * model.start(a);
      g.start[a] += l2 * model.start(a);
    }
    sq += model.stop(a) * model.stop(a);
    g.stop[a] += l2 * model.stop(a);
    for (std::size_t b = 0; b < L; ++b) {
      if (model.transition_forbidden(a, b)) continue;
      const double w = model.transition(a, b);
      sq += w * w;
      g.transition[a * L + b] += l2 * w;
    }
  }
  loss += 0.5 * l2 * sq;
  return {loss, std::move(g)};
}

namespace {

// Token positions of gold entity boundaries; single-token entities
// contribute one position.
std::vector<std::vector<std::size_t>> gold_boundary_positions(
    const Dataset& data) {
  std::vector<std::vector<std::size_t>> out(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    for (const auto& e : decode_entities((*data.gold)[s])) {
      out[s].push_back(e.start);
      if (e.end - 1 != e.start) out[s].push_back(e.end - 1);
    }
  }
  return out;
}

double dev_entity_f1(const CrfModel& model, const Dataset& dev,
                     const std::string& mask_token) {
  std::vector<TagSequence> predicted;
  predicted.reserve(dev.size());
  for (const auto& s : dev.sentences)
    predicted.push_back(viterbi(model, s.tokens, mask_token));
  return evaluate_f1(dev, predicted).f1;
}

}  // namespace

CrfModel train(const Dataset& data, const TrainConfig& config,
               const Dataset* dev, std::vector<double>* dev_f1_history) {
  if (data.size() == 0) throw ValidationError("empty training dataset");
  if (!data.has_gold()) throw ValidationError("training dataset has no gold tags");
  if (config.epochs < 1) throw ValidationError("epochs must be >= 1");
  for (double p : {config.boundary_mask_p, config.boundary_dropout_p})
    if (p < 0.0 || p > 1.0)
      throw ValidationError("defense probability must be in [0, 1]");
  if (dev && !dev->has_gold())
    throw ValidationError("dev dataset has no gold tags");

  std::set<std::string> type_set;
  for (const auto& seq : *data.gold)
    for (const auto& e : decode_entities(seq)) type_set.insert(e.type);
  std::vector<std::string> tags{"O"};
  for (const auto& t : type_set) {
    tags.push_back("B-" + t);
    tags.push_back("I-" + t);
  }
  CrfModel model(std::move(tags), config.bio_hard_constraints);
  const std::size_t L = model.tag_count();

  for (const auto& s : data.sentences)
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      for (const auto& f : featurize(s.tokens, i, config.mask_token))
        model.intern_feature(f);
  model.intern_feature("w=" + config.mask_token);
  model.intern_feature("prev=" + config.mask_token);
  model.intern_feature("next=" + config.mask_token);

  std::vector<std::vector<std::size_t>> gold_ids(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    gold_ids[s] = gold_tag_ids(model, (*data.gold)[s]);
    if (gold_ids[s].size() != data.sentences[s].tokens.size())
      throw ValidationError("gold tags misaligned in sentence " +
                            data.sentences[s].id);
  }
  const auto boundaries = gold_boundary_positions(data);

  Rng root(config.seed);
  Rng shuffle_rng = root.fork(10);
  Rng mask_rng = root.fork(11);
  Rng drop_rng = root.fork(12);

  // SGD with multiplicative L2 via a global scale on the trainable weights
  // (effective weight = scale * stored). Pinned transitions stay literal.
  double scale = 1.0;
  const double step_decay_rate = config.l2 / static_cast<double>(data.size());

  auto materialize = [&](CrfModel m) {
    if (scale == 1.0) return m;
    for (std::size_t f = 0; f < m.feature_count(); ++f)
      for (std::size_t y = 0; y < L; ++y)
        m.set_emission(f, y, m.emission(f, y) * scale);
    for (std::size_t a = 0; a < L; ++a) {
      if (!m.start_forbidden(a)) m.set_start(a, m.start(a) * scale);
      m.set_stop(a, m.stop(a) * scale);
      for (std::size_t b = 0; b < L; ++b)
        if (!m.transition_forbidden(a, b))
          m.set_transition(a, b, m.transition(a, b) * scale);
    }
    return m;
  };

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  CrfModel best;
  double best_f1 = -1.0;

  std::vector<std::string> masked_tokens;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr =
        config.learning_rate / (1.0 + config.lr_decay * static_cast<double>(epoch));
    shuffle_rng.shuffle(order);

    for (std::size_t idx : order) {
      const auto& sentence = data.sentences[idx];
      const std::vector<std::string>* tokens = &sentence.tokens;
      if (config.boundary_mask_p > 0.0) {
        masked_tokens = sentence.tokens;
        for (std::size_t pos : boundaries[idx])
          if (mask_rng.bernoulli(config.boundary_mask_p))
            masked_tokens[pos] = config.mask_token;
        tokens = &masked_tokens;
      }
      auto feats = model.active_features(*tokens, config.mask_token);
      if (config.boundary_dropout_p > 0.0) {
        for (std::size_t pos : boundaries[idx])
          if (drop_rng.bernoulli(config.boundary_dropout_p)) feats[pos].clear();
      }

      Lattice lat = build_lattice(model, feats);
      const std::size_t n = lat.n;
      // Apply the scale to reach effective scores.
      for (double& v : lat.em) v *= scale;
      for (std::size_t a = 0; a < L; ++a) {
        if (!model.start_forbidden(a)) lat.start[a] *= scale;
        lat.stop[a] *= scale;
        for (std::size_t b = 0; b < L; ++b)
          if (!model.transition_forbidden(a, b)) lat.trans[a * L + b] *= scale;
      }

      Posteriors p = lattice_posteriors(lat);
      auto marg = posterior_marginals(lat, p);
      const auto& ids = gold_ids[idx];

      scale *= 1.0 - lr * step_decay_rate;
      const double step = lr / scale;

      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f : feats[i])
          for (std::size_t y = 0; y < L; ++y) {
            const double grad = marg[i][y] - (ids[i] == y ? 1.0 : 0.0);
            model.set_emission(f, y, model.emission(f, y) - step * grad);
          }
      for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t a = 0; a < L; ++a) {
          if (p.log_alpha[i * L + a] <= kNegInf / 2) continue;
          for (std::size_t b = 0; b < L; ++b) {
            if (model.transition_forbidden(a, b)) continue;
            const double xi =
                std::exp(p.log_alpha[i * L + a] + lat.trans[a * L + b] +
                         lat.em[(i + 1) * L + b] + p.log_beta[(i + 1) * L + b] -
                         p.log_z);
            model.set_transition(a, b, model.transition(a, b) - step * xi);
          }
        }
        if (!model.transition_forbidden(ids[i], ids[i + 1]))
          model.set_transition(ids[i], ids[i + 1],
                               model.transition(ids[i], ids[i + 1]) + step);
      }
      for (std::size_t y = 0; y < L; ++y) {
        if (!model.start_forbidden(y))
          model.set_start(y, model.start(y) -
                                 step * (marg[0][y] - (ids[0] == y ? 1.0 : 0.0)));
        model.set_stop(y, model.stop(y) -
                              step * (marg[n - 1][y] -
                                      (ids[n - 1] == y ? 1.0 : 0.0)));
      }

      if (scale < 1e-6) {
        CrfModel m = materialize(model);
        model = std::move(m);
        scale = 1.0;
      }
    }

    if (dev) {
      CrfModel snapshot = materialize(model);
      const double f1 = dev_entity_f1(snapshot, *dev, config.mask_token);
      if (dev_f1_history) dev_f1_history->push_back(f1);
      if (f1 > best_f1) {
        best_f1 = f1;
        best = std::move(snapshot);
      }
    }
  }

  if (dev) return best;
  return materialize(std::move(model));
}

// --- serialization ---

namespace {

constexpr const char* kModelHeader = "crf-model v1";
constexpr const char* kStartSentinel = "<s>";
constexpr const char* kStopSentinel = "</s>";

std::string format_weight(double w) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", w);
  return buf;
}

double parse_weight(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty() || errno == ERANGE)
    throw LoadError("line " + std::to_string(line_no) +
                    ": malformed weight '" + s + "'");
  return v;
}

}  // namespace

void save_model(const CrfModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file: " + path);
  out << kModelHeader << '\n';
  out << "tags " << model.tag_count();
  for (const auto& t : model.tags()) out << ' ' << t;
  out << '\n';
  const std::size_t L = model.tag_count();
  for (std::size_t f = 0; f < model.feature_count(); ++f)
    for (std::size_t y = 0; y < L; ++y)
      if (model.emission(f, y) != 0.0)
        out << "E " << model.feature_names()[f] << ' ' << model.tags()[y] << ' '
            << format_weight(model.emission(f, y)) << '\n';
  for (std::size_t y = 0; y < L; ++y)
    if (model.start(y) != 0.0)
      out << "T " << kStartSentinel << ' ' << model.tags()[y] << ' '
          << format_weight(model.start(y)) << '\n';
  for (std::size_t y = 0; y < L; ++y)
    if (model.stop(y) != 0.0)
      out << "T " << model.tags()[y] << ' ' << kStopSentinel << ' '
          << format_weight(model.stop(y)) << '\n';
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = 0; b < L; ++b)
      if (model.transition(a, b) != 0.0)
        out << "T " << model.tags()[a] << ' ' << model.tags()[b] << ' '
            << format_weight(model.transition(a, b)) << '\n';
  if (!out) throw Error("failed writing model file: " + path);
}

CrfModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kModelHeader)
    throw LoadError("unsupported model file (expected header '" +
                    std::string(kModelHeader) + "')");

  std::size_t line_no = 1;
  if (!std::getline(in, line))
    throw LoadError("truncated model file: missing tag inventory");
  ++line_no;
  std::istringstream tag_line(line);
  std::string word;
  std::size_t count = 0;
  if (!(tag_line >> word) || word != "tags" || !(tag_line >> count) || count == 0)
    throw LoadError("malformed tag inventory line");
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(tag_line >> word))
      throw LoadError("truncated tag inventory: expected " +
                      std::to_string(count) + " tags");
    tags.push_back(word);
  }
  if (tag_line >> word) throw LoadError("trailing data on tag inventory line");

  CrfModel model(tags, /*bio_hard_constraints=*/false);
  auto need_tag = [&](const std::string& t) {
    auto id = model.tag_id(t);
    if (!id)
      throw LoadError("line " + std::to_string(line_no) + ": unknown tag '" +
                      t + "'");
    return *id;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw LoadError("line " + std::to_string(line_no) +
                                      ": unexpected blank line");
    std::istringstream rec(line);
    std::string kind, a, b, w;
    if (!(rec >> kind >> a >> b >> w) || (rec >> word))
      throw LoadError("line " + std::to_string(line_no) +
                      ": malformed record '" + line + "'");
    const double weight = parse_weight(w, line_no);
    if (kind == "E") {
      const std::size_t f = model.intern_feature(a);
      model.set_emission(f, need_tag(b), weight);
    } else if (kind == "T") {
      if (a == kStartSentinel)
        model.set_start(need_tag(b), weight);
      else if (b == kStopSentinel)
        model.set_stop(need_tag(a), weight);
      else
        model.set_transition(need_tag(a), need_tag(b), weight);
    } else {
      throw LoadError("line " + std::to_string(line_no) +
                      ": unrecognized record kind '" + kind + "'");
    }
  }
  return model;
}

CrfVictim::CrfVictim(CrfModel model, std::string mask_token)
    : model_(std::move(model)) {
  caps_.has_marginals = true;
  caps_.has_representations = true;
  caps_.mask_token = std::move(mask_token);
}

PredictionRecord CrfVictim::predict_impl(const std::vector<std::string>& tokens) {
  Lattice lat =
      build_lattice(model_, model_.active_features(tokens, caps_.mask_token));
  PredictionRecord rec;
  auto path = lattice_viterbi(lat);
  rec.tags.reserve(path.size());
  for (std::size_t y : path) rec.tags.push_back(model_.tags()[y]);
  Posteriors p = lattice_posteriors(lat);
  rec.marginals = posterior_marginals(lat, p);
  const std::size_t L = lat.L;
  std::vector<std::vector<double>> reps(lat.n, std::vector<double>(L));
  for (std::size_t i = 0; i < lat.n; ++i)
    for (std::size_t y = 0; y < L; ++y) reps[i][y] = lat.em[i * L + y];
  rec.representations = std::move(reps);
  return rec;
}

}  // namespace viba
