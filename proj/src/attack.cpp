#include "viba/attack.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "viba/errors.hpp"

namespace viba {

using nlohmann::json;

const char* to_string(AttackMode mode) {
  return mode == AttackMode::insert ? "insert" : "replace";
}

AttackMode attack_mode_from_string(const std::string& s) {
  if (s == "insert") return AttackMode::insert;
  if (s == "replace") return AttackMode::replace;
  throw ValidationError("unknown attack mode '" + s + "'");
}

std::vector<std::size_t> SafetyArea::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < member_.size(); ++i)
    if (member_[i]) out.push_back(i);
  return out;
}

SafetyArea compute_safety_area(std::span<const Entity> entities, std::size_t n,
                               std::size_t w) {
  std::vector<bool> member(n, false);
  for (const auto& e : entities) {
    const std::size_t lo = e.start >= w ? e.start - w : 0;
    const std::size_t hi = std::min(n, e.end + w);
    for (std::size_t i = lo; i < hi; ++i) member[i] = true;
  }
  return SafetyArea(std::move(member));
}

std::vector<std::string> apply_candidate(std::span<const std::string> x,
                                         const Candidate& candidate) {
  std::vector<std::string> out(x.begin(), x.end());
  if (candidate.mode == AttackMode::insert) {
    if (candidate.position > out.size())
      throw ValidationError("insertion slot out of range");
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(candidate.position),
               candidate.boundary);
  } else {
    if (candidate.position >= out.size())
      throw ValidationError("replacement index out of range");
    out[candidate.position] = candidate.boundary;
  }
  return out;
}

Entity shifted_entity(const Candidate& candidate) {
  Entity e = candidate.entity;
  if (candidate.mode == AttackMode::insert && e.start >= candidate.position) {
    ++e.start;
    ++e.end;
  }
  return e;
}

std::vector<std::string> mask_span(std::vector<std::string> tokens,
                                   std::size_t start, std::size_t end,
                                   const std::string& mask_token) {
  if (start >= end || end > tokens.size())
    throw ValidationError("mask span out of range");
  for (std::size_t i = start; i < end; ++i) tokens[i] = mask_token;
  return tokens;
}

bool check_criterion1(const TagSequence& y, const TagSequence& y_prime,
                      std::size_t j, std::size_t w, AttackMode mode) {
  if (mode == AttackMode::insert) {
    if (y_prime.size() != y.size() + 1)
      throw Error("criterion 1: insert mode expects |Y'| == |Y| + 1");
  } else if (y_prime.size() != y.size()) {
    throw Error("criterion 1: replace mode expects |Y'| == |Y|");
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t aligned =
        (mode == AttackMode::insert && i >= j) ? i + 1 : i;
    const std::size_t dist = aligned > j ? aligned - j : j - aligned;
    if (dist <= w) continue;
    if (y[i] != y_prime[aligned]) return true;
  }
  return false;
}

Criterion2Result check_criterion2(Victim& victim,
                                  const std::vector<std::string>& x_prime,
                                  const TagSequence& y_prime,
                                  const Entity& entity_in_x_prime,
                                  std::size_t j_prime) {
  Criterion2Result res;
  res.x_masked = mask_span(x_prime, entity_in_x_prime.start,
                           entity_in_x_prime.end,
                           victim.capabilities().mask_token);
  res.y_masked = victim.predict(res.x_masked).tags;
  res.fired = y_prime.at(j_prime) != res.y_masked.at(j_prime);
  return res;
}

namespace {

std::vector<std::size_t> candidate_positions(const SafetyArea& area,
                                             std::size_t n, AttackMode mode) {
  std::vector<std::size_t> out;
  if (mode == AttackMode::insert) {
    // Slot j is excluded if position j or j-1 lies in the safety area, so
    // the inserted token always stays clear of every entity window.
    for (std::size_t j = 0; j <= n; ++j) {
      if (area.contains(j)) continue;
      if (j > 0 && area.contains(j - 1)) continue;
      out.push_back(j);
    }
  } else {
    for (std::size_t j = 0; j < n; ++j)
      if (!area.contains(j)) out.push_back(j);
  }
  return out;
}

SentenceAttackResult run_attack(Victim& victim, const Sentence& sentence,
                                const AttackConfig& config, bool exhaustive) {
  SentenceAttackResult result;
  AttackOutcome& out = result.outcome;
  out.sentence_id = sentence.id;
  out.x = sentence.tokens;
  out.w = config.w;

  std::uint64_t calls = 0;
  auto predict = [&](const std::vector<std::string>& tokens) {
    ++calls;
    return victim.predict(tokens);
  };

  out.y = predict(sentence.tokens).tags;
  const auto entities = decode_entities(sentence.tokens, repair_bio(out.y));
  out.entities_predicted = entities.size();
  const std::size_t n = sentence.tokens.size();
  const SafetyArea area = compute_safety_area(entities, n, config.w);
  const auto positions = candidate_positions(area, n, config.mode);

  bool stop = false;
  for (const auto& entity : entities) {
    if (stop) break;
    EntityAttackRecord record;
    record.entity = entity;

    std::vector<std::string> boundaries{entity.left_boundary};
    if (entity.right_boundary != entity.left_boundary)
      boundaries.push_back(entity.right_boundary);

    for (std::size_t j : positions) {
      if (stop) break;
      for (const auto& b : boundaries) {
        Candidate cand{entity, b, j, config.mode};
        auto x_prime = apply_candidate(sentence.tokens, cand);
        auto y_prime = predict(x_prime).tags;
        const bool s1 = check_criterion1(out.y, y_prime, j, config.w, config.mode);

        bool s2 = false;
        Criterion2Result c2;
        if (exhaustive || !s1) {
          c2 = check_criterion2(victim, x_prime, y_prime, shifted_entity(cand), j);
          ++calls;  // check_criterion2 issues one predict
          s2 = c2.fired;
        }

        if ((s1 || s2) && !out.success) {
          out.success = true;
          AttackSuccess success;
          success.criterion = s1 ? Criterion::s1 : Criterion::s2;
          success.candidate = cand;
          success.x_prime = std::move(x_prime);
          success.y_prime = std::move(y_prime);
          if (!s1) {
            success.x_prime_masked = std::move(c2.x_masked);
            success.y_prime_masked = std::move(c2.y_masked);
          }
          out.detail = std::move(success);
          if (!exhaustive) {
            stop = true;
            break;
          }
        }
        if (exhaustive && (s1 || s2)) {
          record.s1_triggered |= s1;
          record.s2_triggered |= s2;
          record.hits.push_back(CandidateHit{b, j, s1, s2});
        }
      }
    }
    if (exhaustive) result.records.push_back(std::move(record));
  }

  // Determinism recheck of the returned success; a victim that fails to
  // reproduce it is flagged in the outcome.
  if (out.success) {
    const auto& d = *out.detail;
    auto y2 = predict(d.x_prime).tags;
    bool reproduced = y2 == d.y_prime;
    if (d.criterion == Criterion::s2) {
      auto ym2 = predict(d.x_prime_masked).tags;
      reproduced = reproduced && ym2 == d.y_prime_masked;
    }
    out.nondeterministic_victim = !reproduced;
  }
  out.victim_calls = calls;
  return result;
}

}  // namespace

AttackOutcome attack_sentence(Victim& victim, const Sentence& sentence,
                              const AttackConfig& config) {
  return run_attack(victim, sentence, config, false).outcome;
}

SentenceAttackResult attack_exhaustive(Victim& victim, const Sentence& sentence,
                                       const AttackConfig& config) {
  return run_attack(victim, sentence, config, true);
}

DatasetAttackResult attack_dataset(Victim& victim, const Dataset& dataset,
                                   const AttackConfig& config,
                                   std::size_t threads) {
  DatasetAttackResult result;
  result.sentences.resize(dataset.size());

  auto attack_one = [&](std::size_t i) {
    try {
      result.sentences[i] = config.exhaustive
                                ? attack_exhaustive(victim, dataset.sentences[i],
                                                    config)
                                : SentenceAttackResult{
                                      attack_sentence(victim,
                                                      dataset.sentences[i],
                                                      config),
                                      {}};
    } catch (const Error& e) {
      throw VictimError("sentence " + dataset.sentences[i].id + ": " + e.what());
    }
  };

  if (threads > 1 && victim.concurrency_safe() && dataset.size() > 1) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= dataset.size()) return;
        try {
          attack_one(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    const std::size_t count = std::min(threads, dataset.size());
    pool.reserve(count);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (std::size_t i = 0; i < dataset.size(); ++i) attack_one(i);
  }
  return result;
}

// --- serialization ---

namespace {

json entity_to_json(const Entity& e) {
  return json{{"type", e.type},
              {"start", e.start},
              {"end", e.end},
              {"left", e.left_boundary},
              {"right", e.right_boundary}};
}

Entity entity_from_json(const json& j) {
  Entity e;
  e.type = j.at("type").get<std::string>();
  e.start = j.at("start").get<std::size_t>();
  e.end = j.at("end").get<std::size_t>();
  e.left_boundary = j.at("left").get<std::string>();
  e.right_boundary = j.at("right").get<std::string>();
  return e;
}

json candidate_to_json(const Candidate& c) {
  return json{{"entity", entity_to_json(c.entity)},
              {"boundary", c.boundary},
              {"position", c.position},
              {"mode", to_string(c.mode)}};
}

Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.entity = entity_from_json(j.at("entity"));
  c.boundary = j.at("boundary").get<std::string>();
  c.position = j.at("position").get<std::size_t>();
  c.mode = attack_mode_from_string(j.at("mode").get<std::string>());
  return c;
}

}  // namespace

std::string result_to_json_line(const SentenceAttackResult& result) {
  const AttackOutcome& o = result.outcome;
  json j{{"id", o.sentence_id},
         {"x", o.x},
         {"y", o.y},
         {"entities_predicted", o.entities_predicted},
         {"victim_calls", o.victim_calls},
         {"w", o.w},
         {"status", o.success ? "success" : "failure"},
         {"nondeterministic", o.nondeterministic_victim}};
  if (o.detail) {
    const AttackSuccess& d = *o.detail;
    json s{{"criterion", d.criterion == Criterion::s1 ? "S1" : "S2"},
           {"candidate", candidate_to_json(d.candidate)},
           {"x_prime", d.x_prime},
           {"y_prime", d.y_prime}};
    if (d.criterion == Criterion::s2) {
      s["x_prime_masked"] = d.x_prime_masked;
      s["y_prime_masked"] = d.y_prime_masked;
    }
    j["success"] = std::move(s);
  }
  if (!result.records.empty()) {
    json records = json::array();
    for (const auto& r : result.records) {
      json hits = json::array();
      for (const auto& h : r.hits)
        hits.push_back(json{{"boundary", h.boundary},
                            {"position", h.position},
                            {"s1", h.s1},
                            {"s2", h.s2}});
      records.push_back(json{{"entity", entity_to_json(r.entity)},
                             {"s1", r.s1_triggered},
                             {"s2", r.s2_triggered},
                             {"hits", std::move(hits)}});
    }
    j["entity_records"] = std::move(records);
  }
  return j.dump();
}

SentenceAttackResult result_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid outcome record: ") + e.what());
  }
  SentenceAttackResult result;
  AttackOutcome& o = result.outcome;
  try {
    o.sentence_id = j.at("id").get<std::string>();
    o.x = j.at("x").get<std::vector<std::string>>();
    o.y = j.at("y").get<TagSequence>();
    o.entities_predicted = j.at("entities_predicted").get<std::size_t>();
    o.victim_calls = j.at("victim_calls").get<std::uint64_t>();
    o.w = j.at("w").get<std::size_t>();
    o.success = j.at("status").get<std::string>() == "success";
    o.nondeterministic_victim = j.value("nondeterministic", false);
    if (o.success) {
      const json& s = j.at("success");
      AttackSuccess d;
      d.criterion =
          s.at("criterion").get<std::string>() == "S1" ? Criterion::s1
                                                       : Criterion::s2;
      d.candidate = candidate_from_json(s.at("candidate"));
      d.x_prime = s.at("x_prime").get<std::vector<std::string>>();
      d.y_prime = s.at("y_prime").get<TagSequence>();
      if (d.criterion == Criterion::s2) {
        d.x_prime_masked = s.at("x_prime_masked").get<std::vector<std::string>>();
        d.y_prime_masked = s.at("y_prime_masked").get<TagSequence>();
      }
      o.detail = std::move(d);
    }
    if (j.contains("entity_records")) {
      for (const json& r : j.at("entity_records")) {
        EntityAttackRecord rec;
        rec.entity = entity_from_json(r.at("entity"));
        rec.s1_triggered = r.at("s1").get<bool>();
        rec.s2_triggered = r.at("s2").get<bool>();
        for (const json& h : r.at("hits"))
          rec.hits.push_back(CandidateHit{h.at("boundary").get<std::string>(),
                                          h.at("position").get<std::size_t>(),
                                          h.at("s1").get<bool>(),
                                          h.at("s2").get<bool>()});
        result.records.push_back(std::move(rec));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid outcome record: ") + e.what());
  }
  return result;
}

void save_outcomes(const DatasetAttackResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write outcomes file: " + path);
  for (const auto& r : result.sentences) out << result_to_json_line(r) << '\n';
  if (!out) throw Error("failed writing outcomes file: " + path);
}

DatasetAttackResult load_outcomes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open outcomes file: " + path);
  DatasetAttackResult result;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    result.sentences.push_back(result_from_json_line(line));
  }
  return result;
}

}  // namespace viba
