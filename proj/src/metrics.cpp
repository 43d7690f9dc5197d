#include "viba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "viba/errors.hpp"
#include "viba/rng.hpp"

namespace viba {

using nlohmann::json;

std::size_t edit_distance(std::span<const std::string> a,
                          std::span<const std::string> b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

std::size_t lcs_length(std::span<const std::string> a,
                       std::span<const std::string> b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

double LcsScorer::score(std::span<const std::string> a,
                        std::span<const std::string> b) const {
  if (a.empty() && b.empty()) return 1.0;
  const std::size_t longest = std::max(a.size(), b.size());
  return static_cast<double>(lcs_length(a, b)) / static_cast<double>(longest);
}

EmbeddingScorer::EmbeddingScorer(std::map<std::string, std::vector<double>> table)
    : table_(std::move(table)) {
  for (const auto& [token, vec] : table_) {
    if (vec.empty()) throw ValidationError("empty embedding for '" + token + "'");
    if (dim_ == 0)
      dim_ = vec.size();
    else if (vec.size() != dim_)
      throw ValidationError("inconsistent embedding dimension for '" + token +
                            "'");
  }
  if (dim_ == 0) dim_ = 16;  // hash-seeded vectors only
}

EmbeddingScorer EmbeddingScorer::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding table: " + path);
  std::map<std::string, std::vector<double>> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    std::vector<double> vec;
    double v;
    while (row >> v) vec.push_back(v);
    if (token.empty() || vec.empty())
      throw ParseError("malformed embedding row", line_no);
    table[token] = std::move(vec);
  }
  return EmbeddingScorer(std::move(table));
}

std::vector<double> EmbeddingScorer::token_vector(const std::string& token) const {
  auto it = table_.find(token);
  if (it != table_.end()) return it->second;
  Rng rng(fnv1a(token));
  std::vector<double> v(dim_);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.uniform_real(-1.0, 1.0);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

double EmbeddingScorer::score(std::span<const std::string> a,
                              std::span<const std::string> b) const {
  if (a.empty() || b.empty()) return a.empty() == b.empty() ? 1.0 : 0.0;
  std::vector<double> ma(dim_, 0.0), mb(dim_, 0.0);
  for (const auto& t : a) {
    auto v = token_vector(t);
    for (std::size_t i = 0; i < dim_; ++i) ma[i] += v[i];
  }
  for (const auto& t : b) {
    auto v = token_vector(t);
    for (std::size_t i = 0; i < dim_; ++i) mb[i] += v[i];
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    ma[i] /= static_cast<double>(a.size());
    mb[i] /= static_cast<double>(b.size());
    dot += ma[i] * mb[i];
    na += ma[i] * ma[i];
    nb += mb[i] * mb[i];
  }
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
  const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(cosine, 0.0, 1.0);
}

double semantic_similarity(std::span<const std::string> a,
                           std::span<const std::string> b,
                           const SimilarityScorer& scorer) {
  return scorer.score(a, b);
}

AsrResult compute_asr(std::span<const SentenceAttackResult> outcomes) {
  AsrResult r;
  for (const auto& s : outcomes) {
    if (s.outcome.skipped()) {
      ++r.skipped;
      continue;
    }
    ++r.attempted;
    if (s.outcome.success) ++r.succeeded;
  }
  if (r.attempted > 0)
    r.asr = static_cast<double>(r.succeeded) / static_cast<double>(r.attempted);
  return r;
}

EasrResult compute_easr(std::span<const SentenceAttackResult> outcomes) {
  EasrResult r;
  for (const auto& s : outcomes) {
    for (const auto& rec : s.records) {
      ++r.entities_total;
      if (rec.s1_triggered) ++r.entities_s1;
      if (rec.s2_triggered) ++r.entities_s2;
    }
  }
  if (r.entities_total > 0) {
    r.easr1 = static_cast<double>(r.entities_s1) /
              static_cast<double>(r.entities_total);
    r.easr2 = static_cast<double>(r.entities_s2) /
              static_cast<double>(r.entities_total);
  }
  return r;
}

F1Result evaluate_f1(const Dataset& gold,
                     std::span<const TagSequence> predicted) {
  if (!gold.has_gold()) throw ValidationError("dataset has no gold tags");
  if (predicted.size() != gold.size())
    throw ValidationError("predictions not aligned with dataset");
  F1Result r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (predicted[s].size() != gold.sentences[s].tokens.size())
      throw ValidationError("prediction length mismatch in sentence " +
                            gold.sentences[s].id);
    const auto ge = decode_entities((*gold.gold)[s]);
    const auto pe = decode_entities(repair_bio(predicted[s]));
    r.gold += ge.size();
    r.predicted += pe.size();
    for (const auto& p : pe)
      for (const auto& g : ge)
        if (p.start == g.start && p.end == g.end && p.type == g.type) {
          ++r.matched;
          break;
        }
  }
  r.precision = r.predicted ? static_cast<double>(r.matched) / r.predicted : 0.0;
  r.recall = r.gold ? static_cast<double>(r.matched) / r.gold : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

AttackReport build_report(std::span<const SentenceAttackResult> outcomes,
                          const SimilarityScorer& scorer, bool exhaustive) {
  AttackReport rep;
  rep.scorer = scorer.name();
  rep.exhaustive = exhaustive;
  rep.sentences = outcomes.size();

  const AsrResult asr = compute_asr(outcomes);
  rep.asr = asr.asr;
  rep.attempted = asr.attempted;
  rep.skipped = asr.skipped;
  rep.succeeded = asr.succeeded;

  double ss_sum = 0.0, ed_sum = 0.0, calls_sum = 0.0;
  for (const auto& s : outcomes) {
    calls_sum += static_cast<double>(s.outcome.victim_calls);
    if (!s.outcome.success) continue;
    const auto& d = *s.outcome.detail;
    ss_sum += scorer.score(s.outcome.x, d.x_prime);
    ed_sum += static_cast<double>(edit_distance(s.outcome.x, d.x_prime));
    if (d.criterion == Criterion::s1)
      ++rep.s1_successes;
    else
      ++rep.s2_successes;
  }
  if (rep.succeeded > 0) {
    rep.mean_ss = ss_sum / static_cast<double>(rep.succeeded);
    rep.mean_ed = ed_sum / static_cast<double>(rep.succeeded);
  }
  if (rep.sentences > 0)
    rep.mean_victim_calls = calls_sum / static_cast<double>(rep.sentences);

  if (exhaustive) {
    const EasrResult easr = compute_easr(outcomes);
    rep.easr1 = easr.easr1;
    rep.easr2 = easr.easr2;
    rep.entities_total = easr.entities_total;
    rep.entities_s1 = easr.entities_s1;
    rep.entities_s2 = easr.entities_s2;
  }
  return rep;
}

namespace {

json optional_to_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

std::string csv_cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

std::string report_to_json(const AttackReport& report,
                           const std::string& config_echo_json) {
  json j{{"asr", optional_to_json(report.asr)},
         {"mean_ss", optional_to_json(report.mean_ss)},
         {"mean_ed", optional_to_json(report.mean_ed)},
         {"mean_victim_calls", report.mean_victim_calls},
         {"scorer", report.scorer},
         {"exhaustive", report.exhaustive},
         {"counts",
          {{"sentences", report.sentences},
           {"attempted", report.attempted},
           {"skipped", report.skipped},
           {"succeeded", report.succeeded},
           {"s1_successes", report.s1_successes},
           {"s2_successes", report.s2_successes}}}};
  if (report.exhaustive) {
    j["easr1"] = optional_to_json(report.easr1);
    j["easr2"] = optional_to_json(report.easr2);
    j["counts"]["entities_total"] = report.entities_total;
    j["counts"]["entities_s1"] = report.entities_s1;
    j["counts"]["entities_s2"] = report.entities_s2;
  }
  if (!config_echo_json.empty()) j["config"] = json::parse(config_echo_json);
  return j.dump(2) + "\n";
}

std::string report_to_csv(const AttackReport& report) {
  std::string out = "asr,mean_ss,mean_ed,easr1,easr2,mean_victim_calls\n";
  char calls[32];
  std::snprintf(calls, sizeof(calls), "%.3f", report.mean_victim_calls);
  out += csv_cell(report.asr) + "," + csv_cell(report.mean_ss) + "," +
         csv_cell(report.mean_ed) + "," + csv_cell(report.easr1) + "," +
         csv_cell(report.easr2) + "," + calls + "\n";
  return out;
}

}  // namespace viba
