// viba: attack, measure, probe and defend NER sequence taggers from the
// command line. See README.md for the file formats and the adapter protocol.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "viba/attack.hpp"
#include "viba/corpus.hpp"
#include "viba/crf.hpp"
#include "viba/defense.hpp"
#include "viba/errors.hpp"
#include "viba/metrics.hpp"
#include "viba/probes.hpp"
#include "viba/subprocess_victim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace viba;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;
constexpr int kExitCapability = 3;

struct VictimSpec {
  std::string model_path;
  std::string adapter_cmd;
  std::string mask_token = kDefaultMaskToken;
  std::uint64_t timeout_ms = 30000;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--model", model_path, "native CRF model file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--adapter-cmd", adapter_cmd,
                    "external victim command line (JSON-lines protocol)");
    cmd->add_option("--mask-token", mask_token,
                    "mask sentinel for the native victim");
    cmd->add_option("--timeout-ms", timeout_ms, "adapter per-request timeout");
  }

  std::unique_ptr<Victim> resolve() const {
    if (model_path.empty() == adapter_cmd.empty())
      throw ValidationError(
          "exactly one of --model and --adapter-cmd is required");
    if (!model_path.empty())
      return std::make_unique<CrfVictim>(load_model(model_path), mask_token);
    return std::make_unique<SubprocessVictim>(adapter_cmd, timeout_ms);
  }

  json echo() const {
    return json{{"model", model_path},
                {"adapter_cmd", adapter_cmd},
                {"mask_token", mask_token},
                {"timeout_ms", timeout_ms}};
  }
};

std::unique_ptr<SimilarityScorer> make_scorer(const std::string& spec) {
  if (spec == "lcs") return std::make_unique<LcsScorer>();
  if (spec.rfind("embed:", 0) == 0) {
    const std::string path = spec.substr(6);
    if (path.empty()) throw ValidationError("--scorer embed: requires a path");
    return std::make_unique<EmbeddingScorer>(EmbeddingScorer::from_file(path));
  }
  throw ValidationError("unknown scorer '" + spec +
                        "' (expected lcs or embed:<table-path>)");
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("failed writing " + path.string());
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_config_echo(const fs::path& out_dir, const json& echo) {
  write_file(out_dir / "config.json", echo.dump(2) + "\n");
}

// --- train ---

struct TrainArgs {
  std::string train_path, dev_path, test_path, out_dir;
  TrainConfig cfg;
  std::string defense = "none";
  double p = 0.0;
  AttackConfig attack;  // for --defense mixed
  std::string mode = "insert";
};

int cmd_train(const TrainArgs& a) {
  auto out_dir = prepare_out_dir(a.out_dir);
  Dataset train_ds = load_conll_file(a.train_path);
  std::optional<Dataset> dev_ds;
  if (!a.dev_path.empty()) dev_ds = load_conll_file(a.dev_path);

  TrainConfig cfg = a.cfg;
  if (a.defense == "boundary_mask")
    cfg.boundary_mask_p = a.p;
  else if (a.defense == "boundary_dropout")
    cfg.boundary_dropout_p = a.p;
  else if (a.defense != "none" && a.defense != "mixed")
    throw ValidationError("unknown defense '" + a.defense + "'");

  json echo{{"command", "train"},
            {"train", a.train_path},
            {"dev", a.dev_path},
            {"test", a.test_path},
            {"epochs", cfg.epochs},
            {"learning_rate", cfg.learning_rate},
            {"lr_decay", cfg.lr_decay},
            {"l2", cfg.l2},
            {"seed", cfg.seed},
            {"defense", a.defense},
            {"p", a.p},
            {"w", a.attack.w},
            {"mode", a.mode},
            {"mask_token", cfg.mask_token},
            {"out_dir", a.out_dir}};
  write_config_echo(out_dir, echo);

  std::vector<double> history;
  CrfModel model = train(train_ds, cfg, dev_ds ? &*dev_ds : nullptr, &history);
  json summary{{"config", echo}};

  MixedAugmentStats mixed_stats;
  if (a.defense == "mixed") {
    AttackConfig atk = a.attack;
    atk.mode = attack_mode_from_string(a.mode);
    CrfVictim base(std::move(model), cfg.mask_token);
    Dataset augmented =
        mixed_adversarial_augment(train_ds, base, atk, &mixed_stats);
    history.clear();
    model = train(augmented, cfg, dev_ds ? &*dev_ds : nullptr, &history);
    summary["mixed"] = {
        {"successes", mixed_stats.successes},
        {"contributed", mixed_stats.contributed},
        {"skipped_label_conflict", mixed_stats.skipped_label_conflict},
        {"victim_errors", mixed_stats.victim_errors}};
  }

  save_model(model, (out_dir / "model.crf").string());

  if (!history.empty()) {
    summary["dev_f1_per_epoch"] = history;
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
      if (history[i] > history[best]) best = i;
    summary["selected_epoch"] = best + 1;
    summary["dev_f1"] = history[best];
    std::printf("dev F1: %.4f (epoch %zu of %zu)\n", history[best], best + 1,
                history.size());
  }
  if (!a.test_path.empty()) {
    Dataset test_ds = load_conll_file(a.test_path);
    CrfVictim victim(std::move(model), cfg.mask_token);
    std::vector<TagSequence> predicted;
    predicted.reserve(test_ds.size());
    for (const auto& s : test_ds.sentences)
      predicted.push_back(victim.predict(s.tokens).tags);
    auto f1 = evaluate_f1(test_ds, predicted);
    summary["test_f1"] = f1.f1;
    summary["test_precision"] = f1.precision;
    summary["test_recall"] = f1.recall;
    std::printf("test F1: %.4f\n", f1.f1);
  }
  write_file(out_dir / "train_summary.json", summary.dump(2) + "\n");
  std::printf("model written to %s\n", (out_dir / "model.crf").c_str());
  return kExitOk;
}

// --- attack ---

struct AttackArgs {
  std::string test_path, out_dir, scorer = "lcs", mode = "insert";
  VictimSpec victim;
  AttackConfig cfg;
  std::uint64_t seed = 0;
  std::size_t parallel = 0;
};

int cmd_attack(const AttackArgs& a) {
  auto out_dir = prepare_out_dir(a.out_dir);
  Dataset test_ds = load_conll_file(a.test_path);
  auto victim = a.victim.resolve();
  auto scorer = make_scorer(a.scorer);

  AttackConfig cfg = a.cfg;
  cfg.mode = attack_mode_from_string(a.mode);

  json echo{{"command", "attack"},
            {"test", a.test_path},
            {"victim", a.victim.echo()},
            {"w", cfg.w},
            {"mode", a.mode},
            {"exhaustive", cfg.exhaustive},
            {"scorer", a.scorer},
            {"seed", a.seed},
            {"parallel", a.parallel},
            {"out_dir", a.out_dir}};
  write_config_echo(out_dir, echo);

  auto result = attack_dataset(*victim, test_ds, cfg, a.parallel);
  save_outcomes(result, (out_dir / "outcomes.jsonl").string());

  auto report = build_report(result.sentences, *scorer, cfg.exhaustive);
  write_file(out_dir / "report.json", report_to_json(report, echo.dump()));
  write_file(out_dir / "report.csv", report_to_csv(report));

  std::printf("attacked %zu sentences: %zu succeeded, %zu skipped\n",
              report.sentences, report.succeeded, report.skipped);
  if (report.asr) std::printf("ASR: %.4f\n", *report.asr);
  if (report.easr1)
    std::printf("EASR1: %.4f  EASR2: %.4f\n", *report.easr1, *report.easr2);
  return kExitOk;
}

// --- probe ---

struct ProbeArgs {
  std::string test_path, outcomes_path, out_dir, mode = "insert";
  VictimSpec victim;
  AttackConfig cfg;
  bool details = false;
  bool include_singletons = false;
};

int cmd_probe(const ProbeArgs& a) {
  auto out_dir = prepare_out_dir(a.out_dir);
  Dataset test_ds = load_conll_file(a.test_path);
  auto victim = a.victim.resolve();

  json echo{{"command", "probe"},
            {"test", a.test_path},
            {"victim", a.victim.echo()},
            {"outcomes", a.outcomes_path},
            {"w", a.cfg.w},
            {"mode", a.mode},
            {"include_single_token_entities", a.include_singletons},
            {"out_dir", a.out_dir}};
  write_config_echo(out_dir, echo);

  DatasetAttackResult outcomes;
  if (!a.outcomes_path.empty()) {
    outcomes = load_outcomes(a.outcomes_path);
  } else {
    AttackConfig cfg = a.cfg;
    cfg.mode = attack_mode_from_string(a.mode);
    cfg.exhaustive = false;
    outcomes = attack_dataset(*victim, test_ds, cfg);
  }

  ProbeConfig pc;
  pc.include_single_token_entities = a.include_singletons;
  auto drops = boundary_inner_drop_probe(*victim, test_ds, pc);
  auto cosines = representation_similarity_probe(*victim, outcomes.sentences);

  ProbeReport report;
  report.mean_boundary_drop = drops.mean_boundary_drop;
  report.mean_inner_drop = drops.mean_inner_drop;
  report.probed_entities = drops.probed_entities;
  report.boundary_contributors = drops.boundary_contributors;
  report.inner_contributors = drops.inner_contributors;
  report.mean_cosine_inserted = cosines.mean_cosine_inserted;
  report.mean_cosine_other = cosines.mean_cosine_other;
  report.cosine_successes = cosines.successes_used;
  report.skipped_zero_vectors = cosines.skipped_zero_vectors;

  write_file(out_dir / "probe.json", probe_report_to_json(report, echo.dump()));
  if (a.details)
    write_file(out_dir / "probe_details.csv",
               drop_details_to_csv(drops.details));

  if (report.mean_boundary_drop && report.mean_inner_drop)
    std::printf("mean drop: boundary=%.4f inner=%.4f (%zu entities)\n",
                *report.mean_boundary_drop, *report.mean_inner_drop,
                report.probed_entities);
  if (report.mean_cosine_inserted)
    std::printf("mean cosine: inserted=%.4f other=%.4f (%zu successes)\n",
                *report.mean_cosine_inserted,
                report.mean_cosine_other.value_or(0.0),
                report.cosine_successes);
  return kExitOk;
}

// --- defend ---

struct DefendArgs {
  std::string train_path, dev_path, test_path, out_dir, mode = "insert";
  std::vector<double> p_grid = {0.0, 0.3, 0.5, 0.8};
  std::vector<std::string> strategies = {"boundary_mask", "boundary_dropout"};
  TrainConfig cfg;
  AttackConfig attack;
};

int cmd_defend(const DefendArgs& a) {
  auto out_dir = prepare_out_dir(a.out_dir);
  Dataset train_ds = load_conll_file(a.train_path);
  std::optional<Dataset> dev_ds;
  if (!a.dev_path.empty()) dev_ds = load_conll_file(a.dev_path);
  Dataset test_ds = load_conll_file(a.test_path);

  DefenseGrid grid;
  grid.p_values = a.p_grid;
  grid.strategies.clear();
  for (const auto& s : a.strategies)
    grid.strategies.push_back(defense_strategy_from_string(s));

  AttackConfig atk = a.attack;
  atk.mode = attack_mode_from_string(a.mode);

  json echo{{"command", "defend"},
            {"train", a.train_path},
            {"dev", a.dev_path},
            {"test", a.test_path},
            {"strategies", a.strategies},
            {"p_grid", a.p_grid},
            {"w", atk.w},
            {"mode", a.mode},
            {"epochs", a.cfg.epochs},
            {"learning_rate", a.cfg.learning_rate},
            {"lr_decay", a.cfg.lr_decay},
            {"l2", a.cfg.l2},
            {"seed", a.cfg.seed},
            {"mask_token", a.cfg.mask_token},
            {"out_dir", a.out_dir}};
  write_config_echo(out_dir, echo);

  auto rows = run_defense_experiment(
      train_ds, dev_ds ? &*dev_ds : nullptr, test_ds, grid, atk, a.cfg,
      [](const DefenseRow& row) {
        std::printf("%-17s p=%.2f  ASR=%s  F1=%.4f\n", to_string(row.strategy),
                    row.p,
                    row.asr ? std::to_string(*row.asr).c_str() : "absent",
                    row.clean_f1);
      });

  write_file(out_dir / "defense_table.csv", defense_table_to_csv(rows));
  json jrows = json::array();
  for (const auto& r : rows) {
    json jr{{"strategy", to_string(r.strategy)},
            {"p", r.p},
            {"f1", r.clean_f1},
            {"attack_successes", r.attack_successes},
            {"attack_attempted", r.attack_attempted}};
    jr["asr"] = r.asr ? json(*r.asr) : json(nullptr);
    jrows.push_back(std::move(jr));
  }
  write_file(out_dir / "defense_table.json",
             json{{"config", echo}, {"rows", jrows}}.dump(2) + "\n");
  return kExitOk;
}

// --- report ---

struct ReportArgs {
  std::string outcomes_path, out_dir, scorer = "lcs";
};

int cmd_report(const ReportArgs& a) {
  auto out_dir = prepare_out_dir(a.out_dir);
  auto scorer = make_scorer(a.scorer);
  auto outcomes = load_outcomes(a.outcomes_path);
  bool exhaustive = false;
  for (const auto& r : outcomes.sentences)
    if (!r.records.empty()) exhaustive = true;

  json echo{{"command", "report"},
            {"outcomes", a.outcomes_path},
            {"scorer", a.scorer},
            {"out_dir", a.out_dir}};
  write_config_echo(out_dir, echo);

  auto report = build_report(outcomes.sentences, *scorer, exhaustive);
  write_file(out_dir / "report.json", report_to_json(report, echo.dump()));
  write_file(out_dir / "report.csv", report_to_csv(report));
  if (report.asr) std::printf("ASR: %.4f\n", *report.asr);
  std::printf("report written to %s\n", (out_dir / "report.json").c_str());
  return kExitOk;
}

// --- gen ---

struct GenArgs {
  std::string out;
  SyntheticSpec spec;
  std::uint64_t seed = 0;
  std::string types = "GPE,ORG,PER";
};

int cmd_gen(const GenArgs& a) {
  SyntheticSpec spec = a.spec;
  spec.entity_types.clear();
  std::size_t pos = 0;
  while (pos <= a.types.size()) {
    const auto comma = a.types.find(',', pos);
    const auto part = a.types.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!part.empty()) spec.entity_types.push_back(part);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  auto ds = generate_synthetic_corpus(a.seed, spec);
  save_conll_file(ds, a.out);
  json echo{{"command", "gen"},
            {"out", a.out},
            {"sentences", spec.sentences},
            {"seed", a.seed},
            {"vocabulary_seed", spec.vocabulary_seed},
            {"min_tokens", spec.min_tokens},
            {"max_tokens", spec.max_tokens},
            {"entities_per_sentence", spec.entities_per_sentence},
            {"types", spec.entity_types},
            {"id_prefix", spec.id_prefix}};
  write_file(a.out + ".config.json", echo.dump(2) + "\n");
  std::printf("wrote %zu sentences to %s\n", ds.size(), a.out.c_str());
  return kExitOk;
}

void add_train_hypers(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--epochs", cfg.epochs, "training epochs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", cfg.learning_rate, "initial learning rate");
  cmd->add_option("--lr-decay", cfg.lr_decay, "per-epoch learning rate decay");
  cmd->add_option("--l2", cfg.l2, "L2 regularization strength");
  cmd->add_option("--seed", cfg.seed, "run seed");
  cmd->add_option("--mask-token", cfg.mask_token, "mask sentinel");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "viba: single-token boundary attacks, metrics, probes and defenses "
      "for NER sequence taggers"};
  app.require_subcommand(1);

  std::function<int()> action;

  // train
  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train the native CRF tagger");
  train_cmd->add_option("--train", train_args.train_path, "training CoNLL file")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd
      ->add_option("--dev", train_args.dev_path,
                   "dev CoNLL file for checkpoint selection")
      ->check(CLI::ExistingFile);
  train_cmd
      ->add_option("--test", train_args.test_path,
                   "optional test CoNLL file for a final F1")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out-dir", train_args.out_dir, "output directory")
      ->required();
  add_train_hypers(train_cmd, train_args.cfg);
  train_cmd->add_option("--defense", train_args.defense,
                        "boundary_mask|boundary_dropout|mixed");
  train_cmd->add_option("--p", train_args.p, "defense probability")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--w", train_args.attack.w,
                        "safety distance for --defense mixed");
  train_cmd->add_option("--mode", train_args.mode,
                        "attack mode for --defense mixed (insert|replace)");
  train_cmd->callback([&] { action = [&] { return cmd_train(train_args); }; });

  // attack
  AttackArgs attack_args;
  auto* attack_cmd = app.add_subcommand("attack", "run the boundary attack");
  attack_cmd->add_option("--test", attack_args.test_path, "test CoNLL file")
      ->required()
      ->check(CLI::ExistingFile);
  attack_cmd->add_option("--out-dir", attack_args.out_dir, "output directory")
      ->required();
  attack_args.victim.add_options(attack_cmd);
  attack_cmd->add_option("--w", attack_args.cfg.w, "safety distance (default 2)");
  attack_cmd->add_option("--mode", attack_args.mode, "insert|replace");
  attack_cmd->add_flag("--exhaustive", attack_args.cfg.exhaustive,
                       "no early return; enables EASR1/EASR2");
  attack_cmd->add_option("--scorer", attack_args.scorer,
                         "lcs or embed:<table-path>");
  attack_cmd->add_option("--seed", attack_args.seed, "run seed (echoed)");
  attack_cmd->add_option("--parallel", attack_args.parallel,
                         "worker threads (concurrency-safe victims only)");
  attack_cmd->callback(
      [&] { action = [&] { return cmd_attack(attack_args); }; });

  // probe
  ProbeArgs probe_args;
  auto* probe_cmd =
      app.add_subcommand("probe", "masking and representation probes");
  probe_cmd->add_option("--test", probe_args.test_path, "test CoNLL file")
      ->required()
      ->check(CLI::ExistingFile);
  probe_cmd->add_option("--out-dir", probe_args.out_dir, "output directory")
      ->required();
  probe_args.victim.add_options(probe_cmd);
  probe_cmd
      ->add_option("--outcomes", probe_args.outcomes_path,
                   "reuse an attack outcomes file")
      ->check(CLI::ExistingFile);
  probe_cmd->add_option("--w", probe_args.cfg.w, "safety distance");
  probe_cmd->add_option("--mode", probe_args.mode, "insert|replace");
  probe_cmd->add_flag("--details", probe_args.details,
                      "emit per-entity drop rows");
  probe_cmd->add_flag("--include-single-token", probe_args.include_singletons,
                      "probe single-token entities too");
  probe_cmd->callback([&] { action = [&] { return cmd_probe(probe_args); }; });

  // defend
  DefendArgs defend_args;
  auto* defend_cmd =
      app.add_subcommand("defend", "defense grid: train, evaluate, attack");
  defend_cmd
      ->add_option("--train", defend_args.train_path, "training CoNLL file")
      ->required()
      ->check(CLI::ExistingFile);
  defend_cmd->add_option("--dev", defend_args.dev_path, "dev CoNLL file")
      ->check(CLI::ExistingFile);
  defend_cmd->add_option("--test", defend_args.test_path, "test CoNLL file")
      ->required()
      ->check(CLI::ExistingFile);
  defend_cmd->add_option("--out-dir", defend_args.out_dir, "output directory")
      ->required();
  defend_cmd
      ->add_option("--p", defend_args.p_grid,
                   "defense probability grid (default 0 0.3 0.5 0.8)")
      ->check(CLI::Range(0.0, 1.0));
  defend_cmd->add_option(
      "--defense", defend_args.strategies,
      "strategies (default boundary_mask boundary_dropout)");
  add_train_hypers(defend_cmd, defend_args.cfg);
  defend_cmd->add_option("--w", defend_args.attack.w, "safety distance");
  defend_cmd->add_option("--mode", defend_args.mode, "insert|replace");
  defend_cmd->callback(
      [&] { action = [&] { return cmd_defend(defend_args); }; });

  // report
  ReportArgs report_args;
  auto* report_cmd =
      app.add_subcommand("report", "recompute a report from stored outcomes");
  report_cmd
      ->add_option("--outcomes", report_args.outcomes_path,
                   "outcomes JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--out-dir", report_args.out_dir, "output directory")
      ->required();
  report_cmd->add_option("--scorer", report_args.scorer,
                         "lcs or embed:<table-path>");
  report_cmd->callback(
      [&] { action = [&] { return cmd_report(report_args); }; });

  // gen
  GenArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic CoNLL corpus");
  gen_cmd->add_option("--out", gen_args.out, "output CoNLL path")->required();
  gen_cmd->add_option("--sentences", gen_args.spec.sentences, "sentence count");
  gen_cmd->add_option("--seed", gen_args.seed, "sentence seed");
  gen_cmd->add_option("--vocab-seed", gen_args.spec.vocabulary_seed,
                      "vocabulary seed shared across splits");
  gen_cmd->add_option("--min-tokens", gen_args.spec.min_tokens,
                      "minimum sentence length");
  gen_cmd->add_option("--max-tokens", gen_args.spec.max_tokens,
                      "maximum sentence length");
  gen_cmd->add_option("--entities-per-sentence",
                      gen_args.spec.entities_per_sentence,
                      "mean entities per sentence");
  gen_cmd->add_option("--types", gen_args.types, "comma-separated type names");
  gen_cmd->add_option("--id-prefix", gen_args.spec.id_prefix, "sentence id prefix");
  gen_cmd->callback([&] { action = [&] { return cmd_gen(gen_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    return action();
  } catch (const CapabilityError& e) {
    std::fprintf(stderr, "capability error: %s\n", e.what());
    return kExitCapability;
  } catch (const VictimError& e) {  // includes protocol errors
    std::fprintf(stderr, "victim/protocol error: %s\n", e.what());
    return kExitCapability;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const LoadError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  }
}
