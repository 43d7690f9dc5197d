#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace viba {

/// Per-token tags under the BIO scheme, aligned with the owning sentence.
using TagSequence = std::vector<std::string>;

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// A typed span with half-open token range [start, end).
struct Entity {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string left_boundary;   // token at start
  std::string right_boundary;  // token at end - 1

  std::size_t size() const noexcept { return end - start; }
  bool single_token() const noexcept { return end - start == 1; }

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct Dataset {
  std::vector<Sentence> sentences;
  std::optional<std::vector<TagSequence>> gold;
  std::vector<std::string> entity_types;  // observed type inventory, sorted

  bool has_gold() const noexcept { return gold.has_value(); }
  std::size_t size() const noexcept { return sentences.size(); }
};

bool is_valid_bio(const TagSequence& tags);

/// Canonicalizes a tag sequence: BIOES marks are converted to BIO
/// (S-T -> B-T, E-T -> I-T) and an I-T with no compatible predecessor is
/// rewritten to B-T. External victims may emit illegal sequences; every
/// decode in the toolkit goes through this rule first.
TagSequence repair_bio(TagSequence tags);

/// Extracts maximal entity spans from a valid BIO sequence. Output is
/// sorted by start and pairwise disjoint. Boundary surface forms are left
/// empty; use the overload with tokens when they are needed.
std::vector<Entity> decode_entities(const TagSequence& tags);
std::vector<Entity> decode_entities(std::span<const std::string> tokens,
                                    const TagSequence& tags);

/// Inverse of decode_entities. Entities must be non-overlapping and lie
/// within [0, n); throws ValidationError otherwise.
TagSequence encode_entities(std::span<const Entity> entities, std::size_t n);

/// Two-column token/tag format (tag column optional). Tags are repaired on
/// ingestion. Throws ParseError with a line number for malformed lines.
Dataset parse_conll(std::string_view text);
std::string write_conll(const Dataset& dataset);

Dataset load_conll_file(const std::string& path);
void save_conll_file(const Dataset& dataset, const std::string& path);

/// Shape of a generated desk-scale corpus. Boundary words are drawn from
/// disjoint per-type lexicons; inner tokens mix type words with the shared
/// filler vocabulary so that boundaries carry most of the type signal.
struct SyntheticSpec {
  std::size_t sentences = 1000;
  std::size_t min_tokens = 12;
  std::size_t max_tokens = 36;
  double entities_per_sentence = 2.45;
  std::vector<std::string> entity_types = {"GPE", "ORG", "PER"};
  std::size_t min_entity_tokens = 1;
  std::size_t max_entity_tokens = 4;
  std::size_t type_lexicon_size = 28;
  std::size_t filler_lexicon_size = 160;
  /// Probability that an inner entity token is a shared filler word.
  double inner_filler_rate = 0.55;
  std::string id_prefix = "syn";
  /// Lexicons depend only on this seed, so corpora generated with different
  /// sentence seeds (train/dev/test splits) share one vocabulary and task.
  std::uint64_t vocabulary_seed = 0x5eed;
};

/// Deterministic for a fixed seed. Throws ValidationError for infeasible
/// shapes (e.g. entities that cannot fit in the length range).
Dataset generate_synthetic_corpus(std::uint64_t seed, const SyntheticSpec& spec);

}  // namespace viba
