#include "viba/defense.hpp"

#include <cstdio>

#include "viba/errors.hpp"
#include "viba/rng.hpp"

namespace viba {

const char* to_string(DefenseStrategy strategy) {
  switch (strategy) {
    case DefenseStrategy::boundary_mask:
      return "boundary_mask";
    case DefenseStrategy::boundary_dropout:
      return "boundary_dropout";
    case DefenseStrategy::mixed:
      return "mixed";
  }
  return "?";
}

DefenseStrategy defense_strategy_from_string(const std::string& s) {
  if (s == "boundary_mask") return DefenseStrategy::boundary_mask;
  if (s == "boundary_dropout") return DefenseStrategy::boundary_dropout;
  if (s == "mixed") return DefenseStrategy::mixed;
  throw ValidationError("unknown defense strategy '" + s + "'");
}

Dataset boundary_mask_augment(const Dataset& dataset, double p,
                              std::uint64_t seed,
                              const std::string& mask_token) {
  if (!dataset.has_gold())
    throw ValidationError("boundary_mask_augment requires gold tags");
  if (p < 0.0 || p > 1.0) throw ValidationError("p must be in [0, 1]");
  Dataset out = dataset;
  if (p == 0.0) return out;
  Rng rng(seed);
  for (std::size_t s = 0; s < out.size(); ++s) {
    auto& tokens = out.sentences[s].tokens;
    for (const auto& e : decode_entities((*out.gold)[s])) {
      if (rng.bernoulli(p)) tokens[e.start] = mask_token;
      if (e.end - 1 != e.start && rng.bernoulli(p))
        tokens[e.end - 1] = mask_token;
    }
  }
  return out;
}

Dataset mixed_adversarial_augment(const Dataset& dataset, Victim& victim,
                                  const AttackConfig& attack_config,
                                  MixedAugmentStats* stats) {
  if (!dataset.has_gold())
    throw ValidationError("mixed_adversarial_augment requires gold tags");
  MixedAugmentStats local;
  Dataset out = dataset;

  for (std::size_t s = 0; s < dataset.size(); ++s) {
    AttackOutcome outcome;
    try {
      outcome = attack_sentence(victim, dataset.sentences[s], attack_config);
    } catch (const VictimError&) {
      ++local.victim_errors;
      continue;
    }
    if (!outcome.success) continue;
    ++local.successes;

    const auto& d = *outcome.detail;
    const std::size_t j = d.candidate.position;
    const TagSequence& gold = (*dataset.gold)[s];
    TagSequence adv_gold;

    if (d.candidate.mode == AttackMode::insert) {
      // An insertion strictly inside a gold span would split the entity and
      // invalidate the original labels; such successes are not usable.
      bool splits = false;
      for (const auto& e : decode_entities(gold))
        if (j > e.start && j < e.end) {
          splits = true;
          break;
        }
      if (splits) {
        ++local.skipped_label_conflict;
        continue;
      }
      adv_gold = gold;
      adv_gold.insert(adv_gold.begin() + static_cast<std::ptrdiff_t>(j), "O");
    } else {
      if (gold[j] != "O") {
        ++local.skipped_label_conflict;
        continue;
      }
      adv_gold = gold;  // replaced token keeps its "O" label
    }

    Sentence adv;
    adv.id = dataset.sentences[s].id + "#adv";
    adv.tokens = d.x_prime;
    ++local.contributed;
    out.sentences.push_back(std::move(adv));
    out.gold->push_back(std::move(adv_gold));
  }

  if (stats) *stats = local;
  return out;
}

std::vector<DefenseRow> run_defense_experiment(
    const Dataset& train_split, const Dataset* dev_split,
    const Dataset& test_split, const DefenseGrid& grid,
    const AttackConfig& attack_config, const TrainConfig& train_config,
    const std::function<void(const DefenseRow&)>& on_row) {
  if (!test_split.has_gold())
    throw ValidationError("test split requires gold tags");

  std::vector<DefenseRow> rows;
  for (const auto strategy : grid.strategies) {
    for (const double p : grid.p_values) {
      TrainConfig cell = train_config;
      cell.boundary_mask_p = 0.0;
      cell.boundary_dropout_p = 0.0;
      if (strategy == DefenseStrategy::boundary_mask)
        cell.boundary_mask_p = p;
      else if (strategy == DefenseStrategy::boundary_dropout)
        cell.boundary_dropout_p = p;

      CrfModel model;
      try {
        model = train(train_split, cell, dev_split);
        if (strategy == DefenseStrategy::mixed && p > 0.0) {
          CrfVictim base(std::move(model), cell.mask_token);
          Dataset augmented =
              mixed_adversarial_augment(train_split, base, attack_config);
          model = train(augmented, cell, dev_split);
        }
      } catch (const Error& e) {
        throw Error(std::string("defense cell (") + to_string(strategy) +
                    ", p=" + std::to_string(p) + "): " + e.what());
      }

      CrfVictim victim(std::move(model), cell.mask_token);

      DefenseRow row;
      row.strategy = strategy;
      row.p = p;
      std::vector<TagSequence> predicted;
      predicted.reserve(test_split.size());
      for (const auto& s : test_split.sentences)
        predicted.push_back(victim.predict(s.tokens).tags);
      row.clean_f1 = evaluate_f1(test_split, predicted).f1;

      AttackConfig atk = attack_config;
      atk.exhaustive = false;
      try {
        const auto result = attack_dataset(victim, test_split, atk);
        const auto asr = compute_asr(result.sentences);
        row.asr = asr.asr;
        row.attack_successes = asr.succeeded;
        row.attack_attempted = asr.attempted;
      } catch (const Error& e) {
        throw Error(std::string("defense cell (") + to_string(strategy) +
                    ", p=" + std::to_string(p) + ") attack: " + e.what());
      }

      if (on_row) on_row(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string defense_table_to_csv(std::span<const DefenseRow> rows) {
  std::string out = "strategy,p,asr,f1\n";
  char buf[96];
  for (const auto& r : rows) {
    if (r.asr)
      std::snprintf(buf, sizeof(buf), "%s,%.2f,%.6f,%.6f\n",
                    to_string(r.strategy), r.p, *r.asr, r.clean_f1);
    else
      std::snprintf(buf, sizeof(buf), "%s,%.2f,,%.6f\n", to_string(r.strategy),
                    r.p, r.clean_f1);
    out += buf;
  }
  return out;
}

}  // namespace viba
