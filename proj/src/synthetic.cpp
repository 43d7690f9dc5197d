#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "viba/corpus.hpp"
#include "viba/errors.hpp"
#include "viba/rng.hpp"

namespace viba {

namespace {

const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n",
                         "p", "r", "s", "t", "v", "z", "ch", "st"};
const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
const char* kCodas[] = {"", "n", "r", "s", "l", "k", "m"};

std::string make_word(Rng& rng, std::size_t syllables, bool capitalized) {
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.uniform_index(std::size(kOnsets))];
    w += kVowels[rng.uniform_index(std::size(kVowels))];
    if (s + 1 == syllables) w += kCodas[rng.uniform_index(std::size(kCodas))];
  }
  if (capitalized && !w.empty()) w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

std::vector<std::string> make_lexicon(Rng& rng, std::size_t count,
                                      bool capitalized,
                                      std::set<std::string>& taken) {
  std::vector<std::string> words;
  words.reserve(count);
  while (words.size() < count) {
    std::string w = make_word(rng, 2 + rng.uniform_index(2), capitalized);
    if (taken.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

void validate(const SyntheticSpec& spec) {
  if (spec.min_tokens == 0 || spec.max_tokens < spec.min_tokens)
    throw ValidationError("invalid sentence length range");
  if (spec.min_entity_tokens == 0 ||
      spec.max_entity_tokens < spec.min_entity_tokens)
    throw ValidationError("invalid entity length range");
  if (spec.entities_per_sentence < 0.0)
    throw ValidationError("entities_per_sentence must be >= 0");
  if (spec.entities_per_sentence > 0.0 && spec.entity_types.empty())
    throw ValidationError("entity type inventory is empty");
  if (spec.entities_per_sentence > 0.0 &&
      spec.min_entity_tokens > spec.max_tokens)
    throw ValidationError("entities cannot fit in the sentence length range");
  if (spec.inner_filler_rate < 0.0 || spec.inner_filler_rate > 1.0)
    throw ValidationError("inner_filler_rate must be in [0, 1]");
}

}  // namespace

Dataset generate_synthetic_corpus(std::uint64_t seed, const SyntheticSpec& spec) {
  validate(spec);
  Rng lex_rng = Rng(spec.vocabulary_seed).fork(1);
  Rng sent_rng = Rng(seed).fork(2);

  std::vector<std::string> types = spec.entity_types;
  std::sort(types.begin(), types.end());

  // Disjoint per-type lexicons (capitalized) and a shared lowercase filler
  // vocabulary. Inner entity tokens mix type words with fillers so the
  // boundaries carry most of the type evidence.
  std::set<std::string> taken;
  std::vector<std::vector<std::string>> type_words;
  for (std::size_t t = 0; t < types.size(); ++t)
    type_words.push_back(
        make_lexicon(lex_rng, spec.type_lexicon_size, true, taken));
  std::vector<std::string> fillers =
      make_lexicon(lex_rng, spec.filler_lexicon_size, false, taken);

  Dataset ds;
  ds.gold.emplace();
  ds.entity_types = types;

  for (std::size_t s = 0; s < spec.sentences; ++s) {
    const std::size_t n = static_cast<std::size_t>(sent_rng.uniform_int(
        static_cast<std::int64_t>(spec.min_tokens),
        static_cast<std::int64_t>(spec.max_tokens)));

    // Draw the entity count, then entity lengths, shrinking until the
    // sentence can hold them with one separating filler between neighbors.
    std::size_t want = sent_rng.poisson(spec.entities_per_sentence);
    std::vector<std::size_t> lengths;
    for (std::size_t k = 0; k < want; ++k)
      lengths.push_back(static_cast<std::size_t>(sent_rng.uniform_int(
          static_cast<std::int64_t>(spec.min_entity_tokens),
          static_cast<std::int64_t>(spec.max_entity_tokens))));
    auto total = [&] {
      std::size_t sum = lengths.empty() ? 0 : lengths.size() - 1;
      for (std::size_t l : lengths) sum += l;
      return sum;
    };
    while (!lengths.empty() && total() > n) lengths.pop_back();

    // Distribute the remaining filler tokens over the gaps around entities.
    const std::size_t k = lengths.size();
    std::size_t free_fill = n - total();
    std::vector<std::size_t> gaps(k + 1, 0);
    for (std::size_t f = 0; f < free_fill; ++f)
      ++gaps[sent_rng.uniform_index(k + 1)];

    Sentence sent;
    sent.id = spec.id_prefix + "-" + std::to_string(s + 1);
    sent.tokens.reserve(n);
    std::vector<Entity> entities;

    auto push_fillers = [&](std::size_t count) {
      for (std::size_t f = 0; f < count; ++f)
        sent.tokens.push_back(fillers[sent_rng.uniform_index(fillers.size())]);
    };

    for (std::size_t e = 0; e < k; ++e) {
      push_fillers(gaps[e] + (e > 0 ? 1 : 0));
      const std::size_t type_idx = sent_rng.uniform_index(types.size());
      const auto& lex = type_words[type_idx];
      Entity ent;
      ent.type = types[type_idx];
      ent.start = sent.tokens.size();
      for (std::size_t i = 0; i < lengths[e]; ++i) {
        const bool boundary = i == 0 || i + 1 == lengths[e];
        if (!boundary && sent_rng.bernoulli(spec.inner_filler_rate))
          sent.tokens.push_back(fillers[sent_rng.uniform_index(fillers.size())]);
        else
          sent.tokens.push_back(lex[sent_rng.uniform_index(lex.size())]);
      }
      ent.end = sent.tokens.size();
      ent.left_boundary = sent.tokens[ent.start];
      ent.right_boundary = sent.tokens[ent.end - 1];
      entities.push_back(std::move(ent));
    }
    push_fillers(gaps[k]);

    ds.gold->push_back(encode_entities(entities, sent.tokens.size()));
    ds.sentences.push_back(std::move(sent));
  }
  return ds;
}

}  // namespace viba
