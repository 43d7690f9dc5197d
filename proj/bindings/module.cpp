// Python bindings for the core operations: corpus handling, CRF training,
// the boundary attack, metrics, probes and defenses.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "viba/attack.hpp"
#include "viba/corpus.hpp"
#include "viba/crf.hpp"
#include "viba/defense.hpp"
#include "viba/errors.hpp"
#include "viba/metrics.hpp"
#include "viba/probes.hpp"
#include "viba/subprocess_victim.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace viba;

namespace {

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<long long>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<unsigned long long>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it)
        out[py::str(it.key())] = json_to_py(it.value());
      return out;
    }
    default:
      return py::none();
  }
}

py::dict prediction_to_py(const PredictionRecord& rec) {
  py::dict out;
  out["tags"] = rec.tags;
  out["marginals"] = rec.marginals ? py::cast(*rec.marginals) : py::none();
  out["representations"] =
      rec.representations ? py::cast(*rec.representations) : py::none();
  return out;
}

/// Holds a dataset-level attack result for report building and persistence.
struct AttackRun {
  DatasetAttackResult result;
  bool exhaustive = false;
};

std::unique_ptr<SimilarityScorer> scorer_from_name(const std::string& name) {
  if (name == "lcs") return std::make_unique<LcsScorer>();
  if (name.rfind("embed:", 0) == 0)
    return std::make_unique<EmbeddingScorer>(
        EmbeddingScorer::from_file(name.substr(6)));
  throw ValidationError("unknown scorer '" + name + "'");
}

AttackConfig make_attack_config(std::size_t w, const std::string& mode,
                                bool exhaustive) {
  AttackConfig cfg;
  cfg.w = w;
  cfg.mode = attack_mode_from_string(mode);
  cfg.exhaustive = exhaustive;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Single-token boundary attacks, metrics, probes and defenses "
            "for NER sequence taggers";

  py::register_exception<CapabilityError>(m, "CapabilityError");
  py::register_exception<ProtocolError>(m, "ProtocolError");
  py::register_exception<VictimError>(m, "VictimError");
  py::register_exception<ParseError>(m, "ParseFileError");
  py::register_exception<ValidationError>(m, "ValidationError");
  py::register_exception<LoadError>(m, "ModelLoadError");

  // --- corpus ---

  py::class_<Sentence>(m, "Sentence")
      .def(py::init<>())
      .def(py::init([](std::string id, std::vector<std::string> tokens) {
             return Sentence{std::move(id), std::move(tokens)};
           }),
           py::arg("id"), py::arg("tokens"))
      .def_readwrite("id", &Sentence::id)
      .def_readwrite("tokens", &Sentence::tokens)
      .def("__repr__", [](const Sentence& s) {
        return "Sentence(id=" + s.id + ", n=" + std::to_string(s.tokens.size()) +
               ")";
      });

  py::class_<Entity>(m, "Entity")
      .def(py::init<>())
      .def(py::init([](std::string type, std::size_t start, std::size_t end,
                       std::string left, std::string right) {
             return Entity{std::move(type), start, end, std::move(left),
                           std::move(right)};
           }),
           py::arg("type"), py::arg("start"), py::arg("end"),
           py::arg("left") = "", py::arg("right") = "")
      .def_readwrite("type", &Entity::type)
      .def_readwrite("start", &Entity::start)
      .def_readwrite("end", &Entity::end)
      .def_readwrite("left_boundary", &Entity::left_boundary)
      .def_readwrite("right_boundary", &Entity::right_boundary)
      .def("__len__", &Entity::size)
      .def("__repr__", [](const Entity& e) {
        return "Entity(" + e.type + ", [" + std::to_string(e.start) + ", " +
               std::to_string(e.end) + "))";
      });

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("sentences", &Dataset::sentences)
      .def_property(
          "gold", [](const Dataset& d) { return d.gold; },
          [](Dataset& d, std::optional<std::vector<TagSequence>> g) {
            d.gold = std::move(g);
          })
      .def_readwrite("entity_types", &Dataset::entity_types)
      .def("__len__", &Dataset::size);

  m.def("parse_conll",
        [](const std::string& text) { return parse_conll(text); },
        py::arg("text"));
  m.def("write_conll", &write_conll, py::arg("dataset"));
  m.def("load_conll", &load_conll_file, py::arg("path"));
  m.def("save_conll", &save_conll_file, py::arg("dataset"), py::arg("path"));
  m.def("repair_bio", &repair_bio, py::arg("tags"));
  m.def("decode_entities",
        [](const TagSequence& tags,
           const std::optional<std::vector<std::string>>& tokens) {
          if (tokens) return decode_entities(*tokens, tags);
          return decode_entities(tags);
        },
        py::arg("tags"), py::arg("tokens") = py::none());
  m.def("encode_entities",
        [](const std::vector<Entity>& entities, std::size_t n) {
          return encode_entities(entities, n);
        },
        py::arg("entities"), py::arg("n"));

  m.def("generate_corpus",
        [](std::uint64_t seed, std::size_t sentences, std::size_t min_tokens,
           std::size_t max_tokens, double entities_per_sentence,
           std::vector<std::string> types, std::string id_prefix,
           std::uint64_t vocabulary_seed) {
          SyntheticSpec spec;
          spec.sentences = sentences;
          spec.min_tokens = min_tokens;
          spec.max_tokens = max_tokens;
          spec.entities_per_sentence = entities_per_sentence;
          spec.entity_types = std::move(types);
          spec.id_prefix = std::move(id_prefix);
          spec.vocabulary_seed = vocabulary_seed;
          return generate_synthetic_corpus(seed, spec);
        },
        py::arg("seed"), py::arg("sentences") = 1000,
        py::arg("min_tokens") = 12, py::arg("max_tokens") = 36,
        py::arg("entities_per_sentence") = 2.45,
        py::arg("types") = std::vector<std::string>{"GPE", "ORG", "PER"},
        py::arg("id_prefix") = "syn", py::arg("vocabulary_seed") = 0x5eed);

  // --- CRF ---

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init([](std::size_t epochs, double learning_rate,
                       double lr_decay, double l2, std::uint64_t seed,
                       double boundary_mask_p, double boundary_dropout_p,
                       bool bio_hard_constraints, std::string mask_token) {
             TrainConfig cfg;
             cfg.epochs = epochs;
             cfg.learning_rate = learning_rate;
             cfg.lr_decay = lr_decay;
             cfg.l2 = l2;
             cfg.seed = seed;
             cfg.boundary_mask_p = boundary_mask_p;
             cfg.boundary_dropout_p = boundary_dropout_p;
             cfg.bio_hard_constraints = bio_hard_constraints;
             cfg.mask_token = std::move(mask_token);
             return cfg;
           }),
           py::arg("epochs") = 12, py::arg("learning_rate") = 0.2,
           py::arg("lr_decay") = 0.08, py::arg("l2") = 2e-4,
           py::arg("seed") = 0, py::arg("boundary_mask_p") = 0.0,
           py::arg("boundary_dropout_p") = 0.0,
           py::arg("bio_hard_constraints") = true,
           py::arg("mask_token") = kDefaultMaskToken)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("lr_decay", &TrainConfig::lr_decay)
      .def_readwrite("l2", &TrainConfig::l2)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("boundary_mask_p", &TrainConfig::boundary_mask_p)
      .def_readwrite("boundary_dropout_p", &TrainConfig::boundary_dropout_p)
      .def_readwrite("bio_hard_constraints", &TrainConfig::bio_hard_constraints)
      .def_readwrite("mask_token", &TrainConfig::mask_token);

  py::class_<CrfModel>(m, "CrfModel")
      .def_property_readonly("tags", &CrfModel::tags)
      .def_property_readonly("feature_count", &CrfModel::feature_count)
      .def("save",
           [](const CrfModel& model, const std::string& path) {
             save_model(model, path);
           },
           py::arg("path"));

  m.def("train",
        [](const Dataset& data, const TrainConfig& cfg, const Dataset* dev) {
          std::vector<double> history;
          CrfModel model = train(data, cfg, dev, &history);
          py::gil_scoped_acquire gil;
          return py::make_tuple(std::move(model), history);
        },
        py::arg("data"), py::arg("config") = TrainConfig{},
        py::arg("dev") = nullptr,
        py::call_guard<py::gil_scoped_release>(),
        "Returns (model, dev_f1_per_epoch).");
  m.def("load_model", &load_model, py::arg("path"));
  m.def("viterbi",
        [](const CrfModel& model, const std::vector<std::string>& tokens,
           const std::string& mask) { return viterbi(model, tokens, mask); },
        py::arg("model"), py::arg("tokens"),
        py::arg("mask_token") = kDefaultMaskToken);
  m.def("featurize",
        [](const std::vector<std::string>& tokens, std::size_t position,
           const std::string& mask) { return featurize(tokens, position, mask); },
        py::arg("tokens"), py::arg("position"),
        py::arg("mask_token") = kDefaultMaskToken);

  // --- victims ---

  py::class_<Victim>(m, "Victim")
      .def("predict",
           [](Victim& v, const std::vector<std::string>& tokens) {
             return prediction_to_py(v.predict(tokens));
           },
           py::arg("tokens"))
      .def_property_readonly("labels", &Victim::labels)
      .def_property_readonly("mask_token",
                             [](const Victim& v) {
                               return v.capabilities().mask_token;
                             })
      .def_property_readonly("has_marginals",
                             [](const Victim& v) {
                               return v.capabilities().has_marginals;
                             })
      .def_property_readonly("has_representations",
                             [](const Victim& v) {
                               return v.capabilities().has_representations;
                             })
      .def("call_count", &Victim::call_count)
      .def("reset_call_count", &Victim::reset_call_count);

  py::class_<CrfVictim, Victim>(m, "CrfVictim")
      .def(py::init<CrfModel, std::string>(), py::arg("model"),
           py::arg("mask_token") = kDefaultMaskToken);

  py::class_<SubprocessVictim, Victim>(m, "SubprocessVictim")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("command"),
           py::arg("timeout_ms") = 30000);

  // --- attack ---

  py::class_<AttackRun>(m, "AttackRun")
      .def("outcomes",
           [](const AttackRun& run) {
             py::list out;
             for (const auto& r : run.result.sentences)
               out.append(json_to_py(json::parse(result_to_json_line(r))));
             return out;
           })
      .def("report",
           [](const AttackRun& run, const std::string& scorer) {
             auto s = scorer_from_name(scorer);
             auto rep = build_report(run.result.sentences, *s, run.exhaustive);
             return json_to_py(json::parse(report_to_json(rep, "")));
           },
           py::arg("scorer") = "lcs")
      .def("save",
           [](const AttackRun& run, const std::string& path) {
             save_outcomes(run.result, path);
           },
           py::arg("path"))
      .def("__len__",
           [](const AttackRun& run) { return run.result.sentences.size(); });

  m.def("attack_dataset",
        [](Victim& victim, const Dataset& dataset, std::size_t w,
           const std::string& mode, bool exhaustive, std::size_t parallel) {
          AttackRun run;
          run.exhaustive = exhaustive;
          run.result = attack_dataset(victim, dataset,
                                      make_attack_config(w, mode, exhaustive),
                                      parallel);
          return run;
        },
        py::arg("victim"), py::arg("dataset"), py::arg("w") = 2,
        py::arg("mode") = "insert", py::arg("exhaustive") = false,
        py::arg("parallel") = 0, py::call_guard<py::gil_scoped_release>());
  m.def("attack_sentence",
        [](Victim& victim, const Sentence& sentence, std::size_t w,
           const std::string& mode) {
          auto outcome = attack_sentence(victim, sentence,
                                         make_attack_config(w, mode, false));
          return json_to_py(json::parse(
              result_to_json_line(SentenceAttackResult{outcome, {}})));
        },
        py::arg("victim"), py::arg("sentence"), py::arg("w") = 2,
        py::arg("mode") = "insert");
  m.def("load_outcomes",
        [](const std::string& path) {
          AttackRun run;
          run.result = load_outcomes(path);
          for (const auto& r : run.result.sentences)
            if (!r.records.empty()) run.exhaustive = true;
          return run;
        },
        py::arg("path"));

  // --- metrics ---

  m.def("edit_distance",
        [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
          return edit_distance(a, b);
        },
        py::arg("a"), py::arg("b"));
  m.def("semantic_similarity",
        [](const std::vector<std::string>& a, const std::vector<std::string>& b,
           const std::string& scorer) {
          return scorer_from_name(scorer)->score(a, b);
        },
        py::arg("a"), py::arg("b"), py::arg("scorer") = "lcs");
  m.def("evaluate_f1",
        [](const Dataset& gold, const std::vector<TagSequence>& predicted) {
          auto r = evaluate_f1(gold, predicted);
          return py::make_tuple(r.precision, r.recall, r.f1);
        },
        py::arg("gold"), py::arg("predicted"));

  // --- probes ---

  m.def("boundary_inner_drop_probe",
        [](Victim& victim, const Dataset& dataset, bool include_singletons) {
          ProbeConfig cfg;
          cfg.include_single_token_entities = include_singletons;
          auto r = boundary_inner_drop_probe(victim, dataset, cfg);
          py::dict out;
          out["mean_boundary_drop"] =
              r.mean_boundary_drop ? py::cast(*r.mean_boundary_drop)
                                   : py::none();
          out["mean_inner_drop"] =
              r.mean_inner_drop ? py::cast(*r.mean_inner_drop) : py::none();
          out["probed_entities"] = r.probed_entities;
          return out;
        },
        py::arg("victim"), py::arg("dataset"),
        py::arg("include_single_token_entities") = false);
  m.def("representation_similarity_probe",
        [](Victim& victim, const AttackRun& run) {
          auto r = representation_similarity_probe(victim, run.result.sentences);
          py::dict out;
          out["mean_cosine_inserted"] =
              r.mean_cosine_inserted ? py::cast(*r.mean_cosine_inserted)
                                     : py::none();
          out["mean_cosine_other"] =
              r.mean_cosine_other ? py::cast(*r.mean_cosine_other) : py::none();
          out["successes_used"] = r.successes_used;
          out["skipped_zero_vectors"] = r.skipped_zero_vectors;
          return out;
        },
        py::arg("victim"), py::arg("run"));
  m.def("entity_probability",
        [](Victim& victim, const std::vector<std::string>& tokens,
           const Entity& entity) {
          return entity_probability(victim, tokens, entity);
        },
        py::arg("victim"), py::arg("tokens"), py::arg("entity"));

  // --- defenses ---

  m.def("boundary_mask_augment",
        [](const Dataset& dataset, double p, std::uint64_t seed,
           const std::string& mask) {
          return boundary_mask_augment(dataset, p, seed, mask);
        },
        py::arg("dataset"), py::arg("p"), py::arg("seed") = 0,
        py::arg("mask_token") = kDefaultMaskToken);
  m.def("mixed_adversarial_augment",
        [](const Dataset& dataset, Victim& victim, std::size_t w,
           const std::string& mode) {
          MixedAugmentStats stats;
          auto out = mixed_adversarial_augment(
              dataset, victim, make_attack_config(w, mode, false), &stats);
          py::gil_scoped_acquire gil;
          py::dict info;
          info["successes"] = stats.successes;
          info["contributed"] = stats.contributed;
          info["skipped_label_conflict"] = stats.skipped_label_conflict;
          info["victim_errors"] = stats.victim_errors;
          return py::make_tuple(std::move(out), info);
        },
        py::arg("dataset"), py::arg("victim"), py::arg("w") = 2,
        py::arg("mode") = "insert",
        py::call_guard<py::gil_scoped_release>());
  m.def("run_defense_experiment",
        [](const Dataset& train_split, const Dataset* dev_split,
           const Dataset& test_split, const std::vector<std::string>& strategies,
           const std::vector<double>& p_values, std::size_t w,
           const std::string& mode, const TrainConfig& cfg) {
          DefenseGrid grid;
          grid.strategies.clear();
          for (const auto& s : strategies)
            grid.strategies.push_back(defense_strategy_from_string(s));
          grid.p_values = p_values;
          auto rows = run_defense_experiment(train_split, dev_split, test_split,
                                             grid,
                                             make_attack_config(w, mode, false),
                                             cfg);
          py::gil_scoped_acquire gil;
          py::list out;
          for (const auto& r : rows) {
            py::dict row;
            row["strategy"] = std::string(to_string(r.strategy));
            row["p"] = r.p;
            row["f1"] = r.clean_f1;
            row["asr"] = r.asr ? py::cast(*r.asr) : py::none();
            out.append(std::move(row));
          }
          return py::object(out);
        },
        py::arg("train"), py::arg("dev"), py::arg("test"),
        py::arg("strategies") =
            std::vector<std::string>{"boundary_mask", "boundary_dropout"},
        py::arg("p_values") = std::vector<double>{0.0, 0.3, 0.5, 0.8},
        py::arg("w") = 2, py::arg("mode") = "insert",
        py::arg("config") = TrainConfig{},
        py::call_guard<py::gil_scoped_release>());

  m.attr("__version__") = "0.1.0";
  m.attr("DEFAULT_MASK_TOKEN") = kDefaultMaskToken;
}
