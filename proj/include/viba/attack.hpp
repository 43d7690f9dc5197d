#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viba/corpus.hpp"
#include "viba/victim.hpp"

namespace viba {

enum class AttackMode { insert, replace };

const char* to_string(AttackMode mode);
AttackMode attack_mode_from_string(const std::string& s);

struct AttackConfig {
  std::size_t w = 2;  // safety distance in tokens
  AttackMode mode = AttackMode::insert;
  bool exhaustive = false;
};

/// Token positions within distance w of any predicted entity (including the
/// entity itself); excluded from modification to prevent label shift.
class SafetyArea {
 public:
  SafetyArea() = default;
  explicit SafetyArea(std::vector<bool> member) : member_(std::move(member)) {}

  bool contains(std::size_t i) const {
    return i < member_.size() && member_[i];
  }
  std::size_t sentence_length() const noexcept { return member_.size(); }
  std::vector<std::size_t> indices() const;

 private:
  std::vector<bool> member_;
};

SafetyArea compute_safety_area(std::span<const Entity> entities, std::size_t n,
                               std::size_t w);

/// One proposed single-token edit: boundary b of a source entity placed at
/// position j (an insertion slot in [0, n] or a replacement index in [0, n)).
struct Candidate {
  Entity entity;  // span in the original sentence
  std::string boundary;
  std::size_t position = 0;
  AttackMode mode = AttackMode::insert;
};

std::vector<std::string> apply_candidate(std::span<const std::string> x,
                                         const Candidate& candidate);

/// The source entity's span within the modified sentence X'.
Entity shifted_entity(const Candidate& candidate);

std::vector<std::string> mask_span(std::vector<std::string> tokens,
                                   std::size_t start, std::size_t end,
                                   const std::string& mask_token);

/// S1 test: does any prediction change outside the edit window? Insert mode
/// aligns original position i to i (i < j) or i+1 (i >= j) and compares the
/// pairs with |aligned(i) - j| > w; replace mode compares |i - j| > w.
bool check_criterion1(const TagSequence& y, const TagSequence& y_prime,
                      std::size_t j, std::size_t w, AttackMode mode);

struct Criterion2Result {
  bool fired = false;
  std::vector<std::string> x_masked;
  TagSequence y_masked;
};

/// S2 test: mask every token of the source entity in X' and check whether
/// the predicted tag at the edited position flips. y_prime is the already
/// obtained prediction for x_prime, so the test costs one victim call.
Criterion2Result check_criterion2(Victim& victim,
                                  const std::vector<std::string>& x_prime,
                                  const TagSequence& y_prime,
                                  const Entity& entity_in_x_prime,
                                  std::size_t j_prime);

enum class Criterion { s1, s2 };

struct AttackSuccess {
  Criterion criterion = Criterion::s1;
  Candidate candidate;
  std::vector<std::string> x_prime;
  TagSequence y_prime;
  std::vector<std::string> x_prime_masked;  // S2 only
  TagSequence y_prime_masked;               // S2 only
};

struct AttackOutcome {
  std::string sentence_id;
  std::vector<std::string> x;
  TagSequence y;  // victim's original prediction, as returned
  std::size_t entities_predicted = 0;
  bool success = false;
  std::optional<AttackSuccess> detail;
  std::uint64_t victim_calls = 0;
  bool nondeterministic_victim = false;
  std::size_t w = 2;  // config echo, keeps records self-describing

  bool skipped() const noexcept { return entities_predicted == 0; }
};

/// One candidate that fired at least one criterion during exhaustive search.
struct CandidateHit {
  std::string boundary;
  std::size_t position = 0;
  bool s1 = false;
  bool s2 = false;
};

struct EntityAttackRecord {
  Entity entity;
  bool s1_triggered = false;
  bool s2_triggered = false;
  std::vector<CandidateHit> hits;
};

struct SentenceAttackResult {
  AttackOutcome outcome;
  std::vector<EntityAttackRecord> records;  // exhaustive mode only
};

/// Algorithm: predict, decode entities, compute safety areas, then try
/// candidates entity by entity, position left-to-right, boundary left then
/// right, returning on the first criterion hit (criterion 1 checked first).
AttackOutcome attack_sentence(Victim& victim, const Sentence& sentence,
                              const AttackConfig& config);

/// Same enumeration without early return; feeds EASR1/EASR2.
SentenceAttackResult attack_exhaustive(Victim& victim, const Sentence& sentence,
                                       const AttackConfig& config);

struct DatasetAttackResult {
  std::vector<SentenceAttackResult> sentences;
};

/// threads > 1 parallelizes across sentences only when the victim declares
/// concurrency safety.
DatasetAttackResult attack_dataset(Victim& victim, const Dataset& dataset,
                                   const AttackConfig& config,
                                   std::size_t threads = 0);

std::string result_to_json_line(const SentenceAttackResult& result);
SentenceAttackResult result_from_json_line(const std::string& line);
void save_outcomes(const DatasetAttackResult& result, const std::string& path);
DatasetAttackResult load_outcomes(const std::string& path);

}  // namespace viba
