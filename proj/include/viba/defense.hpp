#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "viba/attack.hpp"
#include "viba/corpus.hpp"
#include "viba/crf.hpp"
#include "viba/metrics.hpp"

namespace viba {

enum class DefenseStrategy { boundary_mask, boundary_dropout, mixed };

const char* to_string(DefenseStrategy strategy);
DefenseStrategy defense_strategy_from_string(const std::string& s);

struct DefenseConfig {
  DefenseStrategy strategy = DefenseStrategy::boundary_mask;
  double p = 0.0;
  std::uint64_t seed = 0;
};

/// One-shot augmentation: each gold entity boundary token is independently
/// replaced by mask_token with probability p. Tags are unchanged.
/// Single-token entities expose one boundary and flip one coin.
Dataset boundary_mask_augment(const Dataset& dataset, double p,
                              std::uint64_t seed,
                              const std::string& mask_token = kDefaultMaskToken);

struct MixedAugmentStats {
  std::size_t successes = 0;
  std::size_t contributed = 0;
  std::size_t skipped_label_conflict = 0;  // edit landed inside a gold span
  std::size_t victim_errors = 0;
};

/// Runs the attack over the training set and appends each usable success as
/// (X', gold tags with "O" at the modified position). Successes whose edit
/// would corrupt a gold entity span are skipped so the augmented gold stays
/// consistent with the original labels.
Dataset mixed_adversarial_augment(const Dataset& dataset, Victim& victim,
                                  const AttackConfig& attack_config,
                                  MixedAugmentStats* stats = nullptr);

struct DefenseRow {
  DefenseStrategy strategy = DefenseStrategy::boundary_mask;
  double p = 0.0;
  double clean_f1 = 0.0;
  std::optional<double> asr;
  std::size_t attack_successes = 0;
  std::size_t attack_attempted = 0;
};

struct DefenseGrid {
  std::vector<DefenseStrategy> strategies = {DefenseStrategy::boundary_mask,
                                             DefenseStrategy::boundary_dropout};
  std::vector<double> p_values = {0.0, 0.3, 0.5, 0.8};
};

/// Trains one defended model per grid cell (same base seed everywhere, so
/// the p=0 cells reproduce the undefended pipeline exactly), evaluates clean
/// F1 on the test split and runs the attack against each model.
std::vector<DefenseRow> run_defense_experiment(
    const Dataset& train_split, const Dataset* dev_split,
    const Dataset& test_split, const DefenseGrid& grid,
    const AttackConfig& attack_config, const TrainConfig& train_config,
    const std::function<void(const DefenseRow&)>& on_row = nullptr);

std::string defense_table_to_csv(std::span<const DefenseRow> rows);

}  // namespace viba
