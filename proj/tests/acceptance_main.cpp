// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit status is the number of
// failed criteria. Criteria 8-11 drive the installed CLI binary end to end.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "interference_fixture.hpp"
#include "mocks.hpp"
#include "oracles.hpp"
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
using namespace viba::testing;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int number, const char* name, bool ok, const std::string& detail) {
  std::printf("%s  %2d. %s (%s)\n", ok ? "PASS" : "FAIL", number, name,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double elapsed_s(Clock::time_point from) {
  return std::chrono::duration<double>(Clock::now() - from).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VIBA_CLI_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---- criteria 1 + 2: inference vs exhaustive enumeration ----

void criteria_inference(int first_number) {
  const auto t0 = Clock::now();
  Rng rng(20250);
  std::size_t viterbi_bad = 0, logz_bad = 0, marg_bad = 0, row_bad = 0;
  const int instances = 220;
  for (int i = 0; i < instances; ++i) {
    auto inst = random_instance(rng, 6, 4);
    auto oracle = oracle_enumerate(inst.model, inst.tokens);

    TagSequence expected;
    for (std::size_t y : oracle.argmax_path)
      expected.push_back(inst.model.tags()[y]);
    if (viterbi(inst.model, inst.tokens) != expected) ++viterbi_bad;

    auto fb = forward_backward(inst.model, inst.tokens);
    const double rel = std::abs(fb.log_partition - oracle.log_partition) /
                       std::max(1.0, std::abs(oracle.log_partition));
    if (rel > 1e-6) ++logz_bad;

    for (std::size_t pos = 0; pos < inst.tokens.size(); ++pos) {
      double row = 0.0;
      for (std::size_t y = 0; y < inst.model.tag_count(); ++y) {
        if (std::abs(fb.marginals[pos][y] - oracle.marginals[pos][y]) > 1e-9)
          ++marg_bad;
        row += fb.marginals[pos][y];
      }
      if (std::abs(row - 1.0) > 1e-9) ++row_bad;
    }
  }
  const double secs = elapsed_s(t0);
  report(first_number, "crf-inference-oracle",
         viterbi_bad == 0 && logz_bad == 0 && secs < 30.0,
         fmt("%d instances, viterbi mismatches=%zu, logZ>1e-6rel=%zu, %.1fs",
             instances, viterbi_bad, logz_bad, secs));
  report(first_number + 1, "marginal-correctness",
         marg_bad == 0 && row_bad == 0,
         fmt("entries>1e-9=%zu, rows off 1e-9=%zu", marg_bad, row_bad));
}

// ---- criterion 3: analytic gradient vs central finite differences ----

void criterion_gradient(int number) {
  Rng rng(331);
  const double h = 1e-5;
  std::size_t bad = 0, checked = 0;
  const int instances = 24;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    auto inst = random_instance(rng, 5, 3);
    std::vector<TrainExample> batch{{inst.tokens, inst.gold}};
    const double l2 = 0.1;
    auto [loss, grad] = nll_and_gradient(inst.model, batch, l2);
    (void)loss;
    auto loss_at = [&](const CrfModel& m) {
      return nll_and_gradient(m, batch, l2).first;
    };
    const std::size_t L = inst.model.tag_count();
    auto check = [&](double analytic, double fd) {
      ++checked;
      const double rel = std::abs(analytic - fd) /
                         std::max({std::abs(analytic), std::abs(fd), 1e-3});
      worst = std::max(worst, rel);
      if (rel > 1e-4) ++bad;
    };
    for (std::size_t f = 0; f < inst.model.feature_count(); ++f)
      for (std::size_t y = 0; y < L; ++y) {
        CrfModel up = inst.model, down = inst.model;
        up.set_emission(f, y, up.emission(f, y) + h);
        down.set_emission(f, y, down.emission(f, y) - h);
        check(grad.emission[f * L + y], (loss_at(up) - loss_at(down)) / (2 * h));
      }
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) {
        CrfModel up = inst.model, down = inst.model;
        up.set_transition(a, b, up.transition(a, b) + h);
        down.set_transition(a, b, down.transition(a, b) - h);
        check(grad.transition[a * L + b],
              (loss_at(up) - loss_at(down)) / (2 * h));
      }
      CrfModel su = inst.model, sd = inst.model;
      su.set_start(a, su.start(a) + h);
      sd.set_start(a, sd.start(a) - h);
      check(grad.start[a], (loss_at(su) - loss_at(sd)) / (2 * h));
      CrfModel tu = inst.model, td = inst.model;
      tu.set_stop(a, tu.stop(a) + h);
      td.set_stop(a, td.stop(a) - h);
      check(grad.stop[a], (loss_at(tu) - loss_at(td)) / (2 * h));
    }
  }
  report(number, "gradient-check", bad == 0,
         fmt("%d instances, %zu coordinates, worst rel=%.2e", instances,
             checked, worst));
}

// ---- criterion 4 helper: validate one stored success against a victim ----

struct ValiditySummary {
  std::size_t successes = 0;
  std::size_t ed_bad = 0;
  std::size_t safety_bad = 0;
  std::size_t recheck_bad = 0;
  std::size_t engine_oracle_disagree = 0;

  void merge(const ValiditySummary& o) {
    successes += o.successes;
    ed_bad += o.ed_bad;
    safety_bad += o.safety_bad;
    recheck_bad += o.recheck_bad;
    engine_oracle_disagree += o.engine_oracle_disagree;
  }

  bool ok() const {
    return successes > 0 && ed_bad == 0 && safety_bad == 0 &&
           recheck_bad == 0 && engine_oracle_disagree == 0;
  }
};

ValiditySummary validate_successes(
    std::span<const SentenceAttackResult> outcomes, Victim& victim) {
  ValiditySummary v;
  for (const auto& r : outcomes) {
    const auto& o = r.outcome;
    // engine safety area vs independent oracle, success or not
    const auto entities = decode_entities(o.x, repair_bio(o.y));
    const auto engine = compute_safety_area(entities, o.x.size(), o.w);
    const auto oracle = oracle_safety_area(entities, o.x.size(), o.w);
    auto engine_set = engine.indices();
    if (std::set<std::size_t>(engine_set.begin(), engine_set.end()) != oracle)
      ++v.engine_oracle_disagree;
    if (!o.success) continue;
    ++v.successes;
    const auto& d = *o.detail;

    if (edit_distance(o.x, d.x_prime) != 1) ++v.ed_bad;

    const std::size_t j = d.candidate.position;
    bool safe = oracle.count(j) == 0;
    if (d.candidate.mode == AttackMode::insert && j > 0)
      safe = safe && oracle.count(j - 1) == 0;
    if (!safe) ++v.safety_bad;

    // deterministic recheck of the firing criterion
    bool reproduced = victim.predict(d.x_prime).tags == d.y_prime;
    if (reproduced) {
      if (d.criterion == Criterion::s1) {
        reproduced = check_criterion1(o.y, d.y_prime, j, o.w, d.candidate.mode);
      } else {
        auto res = check_criterion2(victim, d.x_prime, d.y_prime,
                                    shifted_entity(d.candidate), j);
        reproduced = res.fired && res.y_masked == d.y_prime_masked;
      }
    }
    if (!reproduced) ++v.recheck_bad;
  }
  return v;
}

// ---- criterion 5: victim-call budget ----

void criterion_budget(int number) {
  bool ok = true;
  std::string detail;
  for (std::size_t n : {5u, 20u, 50u}) {
    for (std::size_t m : {1u, 3u, 5u}) {
      std::vector<std::string> tokens;
      const std::size_t stride = n / m;
      for (std::size_t i = 0; i < n; ++i) {
        if (i % stride == 0 && i / stride < m)
          tokens.push_back("Ent" + std::to_string(i));
        else
          tokens.push_back("f" + std::to_string(i));
      }
      PositionLocalVictim victim;
      auto outcome = attack_sentence(victim, {"b", tokens}, {});
      const std::uint64_t bound = 1 + 4 * m * (n + 1);
      if (outcome.entities_predicted != m || victim.call_count() > bound) {
        ok = false;
        detail += fmt("(n=%zu,m=%zu: %llu > %llu) ", n, m,
                      (unsigned long long)victim.call_count(),
                      (unsigned long long)bound);
      }
    }
  }
  report(number, "victim-call-budget", ok,
         ok ? "all 9 grid points within 1 + 4m(n+1)" : detail);
}

// ---- criterion 6: null cases ----

Dataset null_case_corpus() {
  Dataset ds;
  Rng rng(606);
  for (int i = 0; i < 25; ++i) {
    std::vector<std::string> tokens;
    const std::size_t n = 8 + rng.uniform_index(10);
    for (std::size_t k = 0; k < n; ++k) {
      if (k % 6 == 0)
        tokens.push_back("Ent" + std::to_string(rng.uniform_index(50)));
      else
        tokens.push_back("w" + std::to_string(rng.uniform_index(40)));
    }
    ds.sentences.push_back({"n" + std::to_string(i), tokens});
  }
  return ds;
}

void criterion_null_cases(int number) {
  auto ds = null_case_corpus();
  AttackConfig cfg;
  cfg.exhaustive = true;

  WindowLocalVictim window_victim(2);
  auto wres = attack_dataset(window_victim, ds, cfg);
  auto weasr = compute_easr(wres.sentences);

  PositionLocalVictim pos_victim;
  auto pres = attack_dataset(pos_victim, ds, cfg);
  auto peasr = compute_easr(pres.sentences);

  const bool ok = weasr.easr1.has_value() && *weasr.easr1 == 0.0 &&
                  peasr.easr2.has_value() && *peasr.easr2 == 0.0 &&
                  weasr.entities_total > 0 && peasr.entities_total > 0;
  report(number, "null-case-soundness", ok,
         fmt("w-local EASR1=%g over %zu entities; position-local EASR2=%g "
             "over %zu entities",
             weasr.easr1.value_or(-1), weasr.entities_total,
             peasr.easr2.value_or(-1), peasr.entities_total));
}

// ---- criterion 7: scripted interference reproduction ----

ValiditySummary criterion_scripted(int number) {
  InterferenceFixture fix;
  ScriptedVictim victim(InterferenceFixture::labels());
  fix.populate(victim);

  auto result = attack_dataset(victim, fix.corpus, {});
  auto asr = compute_asr(result.sentences);
  std::size_t s1 = 0, s2 = 0;
  for (const auto& r : result.sentences)
    if (r.outcome.success) {
      if (r.outcome.detail->criterion == Criterion::s1) ++s1;
      if (r.outcome.detail->criterion == Criterion::s2) ++s2;
    }
  const bool ok = asr.asr.has_value() && *asr.asr == 1.0 && s1 == 1 && s2 == 1;
  report(number, "scripted-interference-reproduction", ok,
         fmt("ASR=%g, S1 successes=%zu, S2 successes=%zu",
             asr.asr.value_or(-1), s1, s2));
  return validate_successes(result.sentences, victim);
}

// ---- criteria 8 + 9 + 10: CLI end-to-end, probe direction, defense grid ----

struct EndToEnd {
  fs::path work;
  fs::path train_file, dev_file, test_file;
  fs::path train_dir, attack_dir;
  double test_f1 = -1.0;
  double asr = -1.0;
  bool trained = false;
  std::string hypers;
};

EndToEnd criterion_end_to_end(int number, const fs::path& work) {
  EndToEnd e;
  e.work = work;
  e.train_file = work / "train.conll";
  e.dev_file = work / "dev.conll";
  e.test_file = work / "test.conll";
  e.train_dir = work / "train_out";
  e.attack_dir = work / "attack_out";
  e.hypers = "--epochs 12 --seed 1 --lr 0.2 --lr-decay 0.08 --l2 2e-4";

  bool ok = true;
  std::string detail;

  if (run_cli("gen --out " + e.train_file.string() +
              " --sentences 2000 --seed 11") != 0 ||
      run_cli("gen --out " + e.dev_file.string() +
              " --sentences 200 --seed 12 --id-prefix dev") != 0 ||
      run_cli("gen --out " + e.test_file.string() +
              " --sentences 500 --seed 13 --id-prefix tst") != 0) {
    report(number, "end-to-end-desk-scale", false, "gen failed");
    return e;
  }

  if (run_cli("train --train " + e.train_file.string() + " --dev " +
              e.dev_file.string() + " --test " + e.test_file.string() +
              " --out-dir " + e.train_dir.string() + " " + e.hypers) != 0) {
    report(number, "end-to-end-desk-scale", false, "train failed");
    return e;
  }
  e.trained = true;

  json summary = json::parse(slurp(e.train_dir / "train_summary.json"));
  e.test_f1 = summary.at("test_f1").get<double>();
  if (e.test_f1 < 0.80) {
    ok = false;
    detail += fmt("F1=%.4f < 0.80; ", e.test_f1);
  }

  const auto t0 = Clock::now();
  if (run_cli("attack --test " + e.test_file.string() + " --model " +
              (e.train_dir / "model.crf").string() + " --out-dir " +
              e.attack_dir.string() + " --exhaustive") != 0) {
    report(number, "end-to-end-desk-scale", false, "attack failed");
    return e;
  }
  const double attack_secs = elapsed_s(t0);
  if (attack_secs >= 300.0) {
    ok = false;
    detail += fmt("attack took %.0fs >= 300s; ", attack_secs);
  }

  json rep = json::parse(slurp(e.attack_dir / "report.json"));
  auto in01 = [](const json& v) {
    return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
  };
  if (!in01(rep.at("asr")) || !in01(rep.at("easr1")) || !in01(rep.at("easr2"))) {
    ok = false;
    detail += "ASR/EASR outside [0,1]; ";
  } else {
    e.asr = rep.at("asr").get<double>();
  }
  if (!rep.at("mean_ed").is_number() || rep.at("mean_ed").get<double>() != 1.0) {
    ok = false;
    detail += "mean ED != 1.0; ";
  }
  if (!rep.at("mean_ss").is_number() || rep.at("mean_ss").get<double>() <= 0.0 ||
      rep.at("mean_ss").get<double>() > 1.0) {
    ok = false;
    detail += "mean SS outside (0,1]; ";
  }

  report(number, "end-to-end-desk-scale", ok,
         ok ? fmt("F1=%.4f, ASR=%.4f, EASR1=%.4f, EASR2=%.4f, SS=%.4f, "
                  "attack %.0fs",
                  e.test_f1, e.asr, rep.at("easr1").get<double>(),
                  rep.at("easr2").get<double>(),
                  rep.at("mean_ss").get<double>(), attack_secs)
            : detail);
  return e;
}

void criterion_probe_direction(int number, const EndToEnd& e) {
  if (!e.trained) {
    report(number, "probe-direction", false, "no trained model available");
    return;
  }
  CrfVictim victim(load_model((e.train_dir / "model.crf").string()));
  Dataset test_ds = load_conll_file(e.test_file.string());
  auto drops = boundary_inner_drop_probe(victim, test_ds);
  const bool ok = drops.mean_boundary_drop.has_value() &&
                  drops.mean_inner_drop.has_value() &&
                  *drops.mean_boundary_drop > *drops.mean_inner_drop;
  report(number, "probe-direction", ok,
         fmt("boundary drop=%.4f vs inner drop=%.4f over %zu entities",
             drops.mean_boundary_drop.value_or(-1),
             drops.mean_inner_drop.value_or(-1), drops.probed_entities));
}

void criterion_defense_grid(int number, const EndToEnd& e) {
  if (!e.trained) {
    report(number, "defense-grid", false, "no trained model available");
    return;
  }
  const std::string common =
      "defend --train " + e.train_file.string() + " --dev " +
      e.dev_file.string() + " --test " + e.test_file.string() + " " + e.hypers +
      " --p 0 0.3 0.5 0.8 --defense boundary_mask boundary_dropout --out-dir ";
  const fs::path dir1 = e.work / "defend1";
  const fs::path dir2 = e.work / "defend2";
  if (run_cli(common + dir1.string()) != 0 ||
      run_cli(common + dir2.string()) != 0) {
    report(number, "defense-grid", false, "defend command failed");
    return;
  }
  const std::string csv1 = slurp(dir1 / "defense_table.csv");
  const std::string csv2 = slurp(dir2 / "defense_table.csv");

  bool ok = true;
  std::string detail;
  if (csv1.empty() || csv1 != csv2) {
    ok = false;
    detail += "repeated runs differ; ";
  }
  std::size_t rows = 0;
  for (char c : csv1)
    if (c == '\n') ++rows;
  if (rows != 9) {  // header + 8 rows
    ok = false;
    detail += fmt("expected 8 rows, got %zu; ", rows ? rows - 1 : 0);
  }

  json table = json::parse(slurp(dir1 / "defense_table.json"));
  std::size_t p0_checked = 0;
  for (const auto& row : table.at("rows")) {
    if (row.at("p").get<double>() != 0.0) continue;
    ++p0_checked;
    if (row.at("f1").get<double>() != e.test_f1) {
      ok = false;
      detail += fmt("p=0 F1 %.6f != undefended %.6f; ",
                    row.at("f1").get<double>(), e.test_f1);
    }
    if (!row.at("asr").is_number() || row.at("asr").get<double>() != e.asr) {
      ok = false;
      detail += "p=0 ASR differs from the undefended attack; ";
    }
  }
  if (p0_checked != 2) {
    ok = false;
    detail += "missing p=0 rows; ";
  }
  report(number, "defense-grid", ok,
         ok ? fmt("8 rows, byte-identical repeat, p=0 matches (ASR=%.4f, "
                  "F1=%.4f)",
                  e.asr, e.test_f1)
            : detail);
}

// ---- criterion 11: adapter conformance ----

void criterion_adapter(int number, const fs::path& work) {
  bool ok = true;
  std::string detail;

  try {
    SubprocessVictim victim(std::string(VIBA_MOCK_ADAPTER) + " echo", 10000);
    if (victim.labels().size() != 3) {
      ok = false;
      detail += "unexpected label inventory; ";
    }
    Rng rng(1111);
    for (int i = 0; i < 1000; ++i) {
      std::vector<std::string> tokens;
      const std::size_t n = 1 + rng.uniform_index(12);
      TagSequence expected;
      for (std::size_t k = 0; k < n; ++k) {
        const bool upper = rng.bernoulli(0.4);
        tokens.push_back((upper ? "T" : "t") + std::to_string(rng.next_u64() % 1000));
        expected.push_back(upper ? "B-PER" : "O");
      }
      auto rec = victim.predict(tokens);
      if (rec.tags != expected) {
        ok = false;
        detail += fmt("tag echo mismatch at call %d; ", i);
        break;
      }
    }
    if (victim.call_count() != 1000 && ok) {
      ok = false;
      detail += "call count drift; ";
    }
  } catch (const Error& err) {
    ok = false;
    detail += fmt("round-trip phase: %s; ", err.what());
  }

  // timeout path
  try {
    SubprocessVictim slow(std::string(VIBA_MOCK_ADAPTER) + " slow 1000", 150);
    slow.predict({"a"});
    ok = false;
    detail += "timeout not enforced; ";
  } catch (const VictimError&) {
  }

  // malformed line through the CLI: capability/protocol exit code 3
  const fs::path tiny = work / "tiny.conll";
  {
    std::ofstream out(tiny);
    out << "Alpha\nword\n\n";
  }
  const int code = run_cli("attack --test " + tiny.string() +
                           " --adapter-cmd \"" + VIBA_MOCK_ADAPTER +
                           " malformed\" --out-dir " +
                           (work / "adapter_out").string());
  if (code != 3) {
    ok = false;
    detail += fmt("malformed-line exit code %d != 3; ", code);
  }
  const int hs = run_cli("attack --test " + tiny.string() +
                         " --adapter-cmd \"echo not-json\" --out-dir " +
                         (work / "adapter_out2").string());
  if (hs != 3) {
    ok = false;
    detail += fmt("handshake-failure exit code %d != 3; ", hs);
  }
  // probing a victim without marginals is a capability error, also exit 3
  const int cap = run_cli("probe --test " + tiny.string() +
                          " --adapter-cmd \"" + VIBA_MOCK_ADAPTER +
                          " echo\" --out-dir " +
                          (work / "adapter_out3").string());
  if (cap != 3) {
    ok = false;
    detail += fmt("capability-error exit code %d != 3; ", cap);
  }

  report(number, "adapter-conformance", ok,
         ok ? "handshake, 1000 bit-exact round trips, timeout and "
              "protocol-error paths"
            : detail);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = argc > 1 ? fs::path(argv[1])
                           : fs::temp_directory_path() / "viba-acceptance";
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work);
  std::printf("acceptance work dir: %s\n", work.string().c_str());

  const auto t0 = Clock::now();

  criteria_inference(1);
  criterion_gradient(3);

  ValiditySummary validity;
  criterion_budget(5);
  criterion_null_cases(6);
  validity.merge(criterion_scripted(7));

  EndToEnd e = criterion_end_to_end(8, work);
  criterion_probe_direction(9, e);
  criterion_defense_grid(10, e);
  criterion_adapter(11, work);

  // criterion 4 runs last: it re-validates every success stored by the runs
  // above (scripted fixture plus the end-to-end attack outcomes).
  if (e.trained) {
    auto outcomes = load_outcomes((e.attack_dir / "outcomes.jsonl").string());
    CrfVictim victim(load_model((e.train_dir / "model.crf").string()));
    validity.merge(validate_successes(outcomes.sentences, victim));
  }
  report(4, "attack-validity-suite", validity.ok(),
         fmt("%zu successes validated; ed!=1: %zu, unsafe position: %zu, "
             "recheck failures: %zu, safety oracle disagreements: %zu",
             validity.successes, validity.ed_bad, validity.safety_bad,
             validity.recheck_bad, validity.engine_oracle_disagree));

  std::printf("%s: %d criterion(s) failed, total %.0fs\n",
              g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              g_failures, elapsed_s(t0));
  return g_failures;
}
