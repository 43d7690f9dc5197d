#include <doctest.h>

#include <set>

#include "viba/corpus.hpp"
#include "viba/errors.hpp"
#include "viba/rng.hpp"

using namespace viba;

TEST_SUITE("corpus") {

TEST_CASE("parse_conll basic two-column input") {
  auto ds = parse_conll("EU\tB-ORG\nrejects\tO\n\n");
  REQUIRE(ds.size() == 1);
  CHECK(ds.sentences[0].tokens == std::vector<std::string>{"EU", "rejects"});
  REQUIRE(ds.has_gold());
  CHECK((*ds.gold)[0] == TagSequence{"B-ORG", "O"});
  CHECK(ds.entity_types == std::vector<std::string>{"ORG"});
}

TEST_CASE("parse_conll accepts space separated columns") {
  auto ds = parse_conll("EU B-ORG\nrejects O\n\n");
  REQUIRE(ds.size() == 1);
  CHECK((*ds.gold)[0] == TagSequence{"B-ORG", "O"});
}

TEST_CASE("parse_conll empty input yields empty dataset") {
  auto ds = parse_conll("");
  CHECK(ds.size() == 0);
  CHECK_FALSE(ds.has_gold());
}

TEST_CASE("parse_conll repairs stray I- continuation") {
  auto ds = parse_conll("a\tI-PER\n\n");
  REQUIRE(ds.size() == 1);
  CHECK((*ds.gold)[0] == TagSequence{"B-PER"});
}

TEST_CASE("parse_conll converts BIOES on ingestion") {
  auto ds = parse_conll("a\tS-LOC\nb\tB-PER\nc\tE-PER\n\n");
  CHECK((*ds.gold)[0] == TagSequence{"B-LOC", "B-PER", "I-PER"});
}

TEST_CASE("parse_conll rejects malformed lines with line numbers") {
  CHECK_THROWS_AS(parse_conll("a\tB-PER\textra\n"), ParseError);
  try {
    parse_conll("ok\tO\nbad\tO\tX\n");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_conll("a\tO\nb\n"), ParseError);   // missing tag
  CHECK_THROWS_AS(parse_conll("a\nb\tO\n"), ParseError);   // unexpected tag
  CHECK_THROWS_AS(parse_conll("a\tX-PER\n"), ParseError);  // bad tag mark
}

TEST_CASE("parse_conll one-column mode yields unlabeled data") {
  auto ds = parse_conll("hello\nworld\n\nagain\n");
  CHECK(ds.size() == 2);
  CHECK_FALSE(ds.has_gold());
}

TEST_CASE("decode_entities forced by BIO scheme") {
  auto es = decode_entities({"B-PER", "I-PER", "O", "B-GPE"});
  REQUIRE(es.size() == 2);
  CHECK(es[0].type == "PER");
  CHECK(es[0].start == 0);
  CHECK(es[0].end == 2);
  CHECK(es[1].type == "GPE");
  CHECK(es[1].start == 3);
  CHECK(es[1].end == 4);
}

TEST_CASE("decode_entities no entities") {
  CHECK(decode_entities({"O", "O"}).empty());
}

TEST_CASE("decode_entities adjacent B- spans") {
  auto es = decode_entities({"B-PER", "B-PER"});
  REQUIRE(es.size() == 2);
  CHECK(es[0].end == 1);
  CHECK(es[1].start == 1);
}

TEST_CASE("decode_entities fills boundary surface forms") {
  std::vector<std::string> tokens{"Paul", "Fischer", "plays"};
  auto es = decode_entities(tokens, {"B-PER", "I-PER", "O"});
  REQUIRE(es.size() == 1);
  CHECK(es[0].left_boundary == "Paul");
  CHECK(es[0].right_boundary == "Fischer");
}

TEST_CASE("encode_entities examples") {
  CHECK(encode_entities(std::vector<Entity>{{"PER", 0, 2}}, 3) ==
        TagSequence{"B-PER", "I-PER", "O"});
  CHECK(encode_entities(std::vector<Entity>{}, 2) == TagSequence{"O", "O"});
  CHECK(encode_entities(std::vector<Entity>{{"GPE", 1, 2}, {"PER", 2, 4}}, 4) ==
        TagSequence{"O", "B-GPE", "B-PER", "I-PER"});
}

TEST_CASE("encode_entities rejects overlap and bad spans") {
  CHECK_THROWS_AS(
      encode_entities(std::vector<Entity>{{"PER", 0, 2}, {"GPE", 1, 3}}, 4),
      ValidationError);
  CHECK_THROWS_AS(encode_entities(std::vector<Entity>{{"PER", 2, 2}}, 4),
                  ValidationError);
  CHECK_THROWS_AS(encode_entities(std::vector<Entity>{{"PER", 2, 9}}, 4),
                  ValidationError);
}

TEST_CASE("round trip: decode then encode reproduces repaired tags") {
  Rng rng(7);
  const std::vector<std::string> types{"PER", "GPE", "ORG"};
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = 1 + rng.uniform_index(12);
    TagSequence raw;
    for (std::size_t i = 0; i < n; ++i) {
      switch (rng.uniform_index(3)) {
        case 0:
          raw.push_back("O");
          break;
        case 1:
          raw.push_back("B-" + types[rng.uniform_index(3)]);
          break;
        default:
          raw.push_back("I-" + types[rng.uniform_index(3)]);
          break;
      }
    }
    const TagSequence repaired = repair_bio(raw);
    CHECK(is_valid_bio(repaired));
    const auto entities = decode_entities(repaired);
    CHECK(encode_entities(entities, n) == repaired);
    // spans sorted and pairwise disjoint
    for (std::size_t i = 1; i < entities.size(); ++i)
      CHECK(entities[i - 1].end <= entities[i].start);
  }
}

TEST_CASE("write_conll then parse_conll is identity") {
  SyntheticSpec spec;
  spec.sentences = 25;
  auto ds = generate_synthetic_corpus(3, spec);
  auto round = parse_conll(write_conll(ds));
  REQUIRE(round.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(round.sentences[i].tokens == ds.sentences[i].tokens);
    CHECK((*round.gold)[i] == (*ds.gold)[i]);
  }
  CHECK(round.entity_types == ds.entity_types);
}

TEST_CASE("synthetic corpus is deterministic per seed") {
  SyntheticSpec spec;
  spec.sentences = 40;
  auto a = generate_synthetic_corpus(1, spec);
  auto b = generate_synthetic_corpus(1, spec);
  CHECK(write_conll(a) == write_conll(b));
  auto c = generate_synthetic_corpus(2, spec);
  CHECK(write_conll(a) != write_conll(c));
}

TEST_CASE("synthetic corpus with zero entities is all O") {
  SyntheticSpec spec;
  spec.sentences = 10;
  spec.entities_per_sentence = 0.0;
  auto ds = generate_synthetic_corpus(5, spec);
  for (const auto& tags : *ds.gold)
    for (const auto& t : tags) CHECK(t == "O");
}

TEST_CASE("synthetic corpus matches a target shape within 10 percent") {
  SyntheticSpec spec;
  spec.sentences = 4561;
  spec.min_tokens = 12;
  spec.max_tokens = 36;          // mean 24 ~ target 24.08
  spec.entities_per_sentence = 2.45;
  auto ds = generate_synthetic_corpus(11, spec);
  double tokens = 0.0, entities = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    tokens += static_cast<double>(ds.sentences[i].tokens.size());
    entities += static_cast<double>(decode_entities((*ds.gold)[i]).size());
  }
  tokens /= static_cast<double>(ds.size());
  entities /= static_cast<double>(ds.size());
  CHECK(tokens > 24.08 * 0.9);
  CHECK(tokens < 24.08 * 1.1);
  CHECK(entities > 2.45 * 0.9);
  CHECK(entities < 2.45 * 1.1);
}

TEST_CASE("synthetic corpus rejects infeasible spec") {
  SyntheticSpec spec;
  spec.max_tokens = 4;
  spec.min_tokens = 2;
  spec.min_entity_tokens = 5;
  spec.max_entity_tokens = 6;
  CHECK_THROWS_AS(generate_synthetic_corpus(1, spec), ValidationError);
}

TEST_CASE("synthetic gold is valid BIO with learnable structure") {
  SyntheticSpec spec;
  spec.sentences = 50;
  auto ds = generate_synthetic_corpus(9, spec);
  std::set<std::string> type_set;
  for (const auto& tags : *ds.gold) {
    CHECK(is_valid_bio(tags));
    for (const auto& e : decode_entities(tags)) type_set.insert(e.type);
  }
  CHECK(type_set == std::set<std::string>{"GPE", "ORG", "PER"});
}

}  // TEST_SUITE
