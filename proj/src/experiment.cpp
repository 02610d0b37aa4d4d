// Copyright 2026 The cdro Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "cdro/experiment.hpp"

#include "cdro/classifier.hpp"
#include "cdro/io.hpp"
#include "cdro/noise_sim.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <system_error>

namespace cdro {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

enum StreamTag : std::uint32_t { kTrainFeatures = 11, kTestFeatures = 12, kAnnotations = 13 };

std::uint64_t derive(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

LossTransformd transform_from(std::string_view name) {
  if (name == "linear") return LossTransformd::linear();
  if (name == "clipped_neg_log") return LossTransformd::clipped_neg_log();
  throw ConfigError("transform must be linear or clipped_neg_log");
}

// Rebuilds the loss spec with one component changed.
void rebuild_spec(TrainConfig& train, std::optional<LossTransformd> transform, std::optional<double> p,
                  std::optional<double> kappa, std::optional<double> eps) {
  const auto& old = train.spec;
  try {
    train.spec = RobustLossSpecd(transform.value_or(old.transform()), p.value_or(old.p()), kappa.value_or(old.kappa()),
                                 eps.value_or(old.epsilon()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

struct KeyHandler {
  ConfigKey doc;
  std::function<void(ExperimentConfig&, std::string_view)> apply;
  std::function<std::string(const ExperimentConfig&)> show;
};

const std::vector<KeyHandler>& handlers() {
  using C = ExperimentConfig;
  using V = std::string_view;
  static const std::vector<KeyHandler> table = [] {
    std::vector<KeyHandler> t;
    auto add = [&t](std::string name, std::string help, std::function<void(C&, V)> apply,
                    std::function<std::string(const C&)> show) {
      t.push_back({{std::move(name), std::move(help)}, std::move(apply), std::move(show)});
    };
    auto d = [](double v) { return format_double(v); };
    add("architecture", "linear or mlp",
        [](C& c, V v) {
          try {
            c.train.architecture = architecture_from_string(std::string(v));
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        },
        [](const C& c) { return to_string(c.train.architecture); });
    add("baselines", "comma list of mv, em; or none",
        [](C& c, V v) {
          c.baseline_mv = c.baseline_em = false;
          if (v == "none") return;
          while (!v.empty()) {
            const auto comma = v.find(',');
            const V item = trim(v.substr(0, comma));
            if (item == "mv") c.baseline_mv = true;
            else if (item == "em") c.baseline_em = true;
            else throw ConfigError("unknown baseline '" + std::string(item) + "'");
            if (comma == V::npos) break;
            v.remove_prefix(comma + 1);
          }
        },
        [](const C& c) {
          if (c.baseline_mv && c.baseline_em) return std::string("mv,em");
          if (c.baseline_mv) return std::string("mv");
          if (c.baseline_em) return std::string("em");
          return std::string("none");
        });
    add("batch_size", "minibatch size", [](C& c, V v) { c.train.batch_size = parse_number<int>("batch_size", v); },
        [](const C& c) { return std::to_string(c.train.batch_size); });
    add("d", "feature dimension (generate)", [](C& c, V v) { c.generator.d = parse_number<int>("d", v); },
        [](const C& c) { return std::to_string(c.generator.d); });
    add("data_dir", "dataset directory", [](C& c, V v) { c.data_dir = fs::path(std::string(v)); },
        [](const C& c) { return c.data_dir.string(); });
    add("em_smoothing", "Dirichlet pseudo-count of the CE(EM) baseline",
        [](C& c, V v) { c.train.em_smoothing = parse_number<double>("em_smoothing", v); },
        [d](const C& c) { return d(c.train.em_smoothing); });
    add("epochs", "total epochs, warm-up included", [](C& c, V v) { c.train.epochs = parse_number<int>("epochs", v); },
        [](const C& c) { return std::to_string(c.train.epochs); });
    add("epsilon", "ambiguity radius, must lie in (0, 1/K)",
        [](C& c, V v) { rebuild_spec(c.train, {}, {}, {}, parse_number<double>("epsilon", v)); },
        [d](const C& c) { return d(c.train.spec.epsilon()); });
    add("hidden", "hidden width of the mlp", [](C& c, V v) { c.train.hidden = parse_number<int>("hidden", v); },
        [](const C& c) { return std::to_string(c.train.hidden); });
    add("k", "number of classes (generate)", [](C& c, V v) { c.generator.k = parse_number<int>("k", v); },
        [](const C& c) { return std::to_string(c.generator.k); });
    add("kappa", "label-mismatch cost",
        [](C& c, V v) { rebuild_spec(c.train, {}, {}, parse_number<double>("kappa", v), {}); },
        [d](const C& c) { return d(c.train.spec.kappa()); });
    add("labels_per_instance", "annotations per instance (generate)",
        [](C& c, V v) { c.generator.labels_per_instance = parse_number<int>("labels_per_instance", v); },
        [](const C& c) { return std::to_string(c.generator.labels_per_instance); });
    add("lambda", "multiplier step parameter", [](C& c, V v) { c.train.lambda = parse_number<double>("lambda", v); },
        [d](const C& c) { return d(c.train.lambda); });
    add("learning_rate", "optimizer step size",
        [](C& c, V v) { c.train.optimizer.learning_rate = parse_number<double>("learning_rate", v); },
        [d](const C& c) { return d(c.train.optimizer.learning_rate); });
    add("lrt_threshold", "pseudo-label likelihood-ratio threshold, > 1",
        [](C& c, V v) { c.train.lrt_threshold = parse_number<double>("lrt_threshold", v); },
        [d](const C& c) { return d(c.train.lrt_threshold); });
    add("momentum", "SGD momentum", [](C& c, V v) { c.train.optimizer.momentum = parse_number<double>("momentum", v); },
        [d](const C& c) { return d(c.train.optimizer.momentum); });
    add("n", "training instances (generate)", [](C& c, V v) { c.generator.n = parse_number<int>("n", v); },
        [](const C& c) { return std::to_string(c.generator.n); });
    add("optimizer", "adam or sgd",
        [](C& c, V v) {
          if (v == "adam") c.train.optimizer.kind = OptimizerKind::Adam;
          else if (v == "sgd") c.train.optimizer.kind = OptimizerKind::Sgd;
          else throw ConfigError("optimizer must be adam or sgd");
        },
        [](const C& c) { return std::string(c.train.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd"); });
    add("output_dir", "run directory, relative to the output root",
        [](C& c, V v) { c.output_dir = fs::path(std::string(v)); }, [](const C& c) { return c.output_dir.string(); });
    add("p", "cost exponent, >= 1", [](C& c, V v) { rebuild_spec(c.train, {}, parse_number<double>("p", v), {}, {}); },
        [d](const C& c) { return d(c.train.spec.p()); });
    add("preset", "annotator preset idn-{low,mid,high}-r{5,10,30,50,100,200}",
        [](C& c, V v) { c.generator.preset = std::string(v); }, [](const C& c) { return c.generator.preset; });
    add("reference_mode", "point_mass or soft_posterior",
        [](C& c, V v) {
          if (v == "point_mass") c.train.reference_mode = ReferenceMode::PointMass;
          else if (v == "soft_posterior") c.train.reference_mode = ReferenceMode::SoftPosterior;
          else throw ConfigError("reference_mode must be point_mass or soft_posterior");
        },
        [](const C& c) {
          return std::string(c.train.reference_mode == ReferenceMode::PointMass ? "point_mass" : "soft_posterior");
        });
    add("seed", "seed for data generation and training",
        [](C& c, V v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
        [](const C& c) { return std::to_string(c.train.seed); });
    add("separation", "distance between class means (generate)",
        [](C& c, V v) { c.generator.separation = parse_number<double>("separation", v); },
        [d](const C& c) { return d(c.generator.separation); });
    add("small_loss_ratio", "anchor fraction in (0, 1], or auto",
        [](C& c, V v) {
          if (v == "auto") c.train.small_loss_ratio.reset();
          else c.train.small_loss_ratio = parse_number<double>("small_loss_ratio", v);
        },
        [d](const C& c) { return c.train.small_loss_ratio ? d(*c.train.small_loss_ratio) : std::string("auto"); });
    add("smoothing", "Laplace pseudo-count for annotator confusions",
        [](C& c, V v) { c.train.smoothing = parse_number<double>("smoothing", v); },
        [d](const C& c) { return d(c.train.smoothing); });
    add("test_n", "clean test instances (generate), 0 for none",
        [](C& c, V v) { c.generator.test_n = parse_number<int>("test_n", v); },
        [](const C& c) { return std::to_string(c.generator.test_n); });
    add("transform", "linear or clipped_neg_log",
        [](C& c, V v) { rebuild_spec(c.train, transform_from(v), {}, {}, {}); },
        [](const C& c) { return c.train.spec.transform().name(); });
    add("validation_fraction", "held-out share scored against majority vote",
        [](C& c, V v) { c.train.validation_fraction = parse_number<double>("validation_fraction", v); },
        [d](const C& c) { return d(c.train.validation_fraction); });
    add("warmup_epochs", "majority-vote warm-up epochs",
        [](C& c, V v) { c.train.warmup_epochs = parse_number<int>("warmup_epochs", v); },
        [](const C& c) { return std::to_string(c.train.warmup_epochs); });
    add("weight_decay", "L2 coefficient added to the gradient",
        [](C& c, V v) { c.train.optimizer.weight_decay = parse_number<double>("weight_decay", v); },
        [d](const C& c) { return d(c.train.optimizer.weight_decay); });
    return t;
  }();
  return table;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Json epoch_record(const EpochMetrics& m, bool robust_fields) {
  Json j;
  j["epoch"] = m.epoch;
  if (robust_fields) j["phase"] = m.warmup ? "warmup" : "robust";
  j["train_loss"] = m.train_loss;
  if (robust_fields) {
    j["gamma_a"] = m.gamma_a;
    j["gamma_b"] = m.gamma_b;
    j["pseudo_coverage"] = m.pseudo_coverage;
    if (m.pseudo_precision) j["pseudo_precision"] = *m.pseudo_precision;
    j["fallbacks"] = m.fallbacks;
  }
  j["val_acc"] = m.val_acc;
  if (m.test_acc) j["test_acc"] = *m.test_acc;
  return j;
}

Json outcome_json(const RunOutcome& r) {
  Json j;
  j["test_acc"] = r.test_acc ? Json(*r.test_acc) : Json(nullptr);
  j["best_epoch"] = r.best_epoch;
  j["best_val_acc"] = r.best_val_acc;
  return j;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void write(const Json& record) {
    out_ << record.dump() << '\n';
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

constexpr const char* kModelA = "adaptcdrp_model_a.txt";
constexpr const char* kModelB = "adaptcdrp_model_b.txt";

std::string baseline_checkpoint(Baseline b) { return to_string(b) + "_model.txt"; }

}  // namespace

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  for (const auto& h : handlers()) {
    if (h.doc.name == key) {
      h.apply(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::map<std::string, std::string> ExperimentConfig::entries() const {
  std::map<std::string, std::string> out;
  for (const auto& h : handlers()) out[h.doc.name] = h.show(*this);
  return out;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& h : handlers()) k.push_back(h.doc);
    return k;
  }();
  return keys;
}

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    const std::string key(trim(view.substr(0, eq)));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(number) + ": empty key");
    out[key] = std::string(trim(view.substr(eq + 1)));
  }
  return out;
}

GeneratedData generate_data(const ExperimentConfig& config) {
  const auto& g = config.generator;
  if (g.n < 1 || g.d < 1 || g.k < 2 || g.test_n < 0) throw ConfigError("need n >= 1, d >= 1, k >= 2, test_n >= 0");
  if (!(g.separation > 0)) throw ConfigError("separation must be positive");
  std::vector<AnnotatorSpec> annotators;
  try {
    annotators = annotator_preset(g.preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (g.labels_per_instance < 1 || g.labels_per_instance > static_cast<int>(annotators.size())) {
    throw ConfigError("labels_per_instance must lie in [1, " + std::to_string(annotators.size()) + "]");
  }
  const auto seed = config.train.seed;
  const auto clean = make_gaussian_dataset(g.n, g.d, g.k, g.separation, derive(seed, kTrainFeatures));
  GeneratedData out{annotate(clean, annotators, g.labels_per_instance, derive(seed, kAnnotations)), std::nullopt};
  if (g.test_n > 0) out.test = make_gaussian_dataset(g.test_n, g.d, g.k, g.separation, derive(seed, kTestFeatures));
  return out;
}

void write_data_dir(const fs::path& dir, const GeneratedData& data, const ExperimentConfig& config) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  write_features_csv(dir / "features.csv", data.train.features());
  write_annotations_csv(dir / "annotations.csv", data.train.annotations());
  if (data.train.has_truth()) write_truth_csv(dir / "truth.csv", data.train.true_labels());
  if (data.test) {
    write_features_csv(dir / "test_features.csv", data.test->features());
    write_truth_csv(dir / "test_truth.csv", data.test->true_labels());
  }
  Json m;
  m["format"] = "cdro-dataset v1";
  m["seed"] = config.train.seed;
  m["preset"] = config.generator.preset;
  m["n"] = data.train.n();
  m["d"] = data.train.d();
  m["k"] = data.train.k();
  m["r"] = data.train.r();
  m["separation"] = config.generator.separation;
  m["labels_per_instance"] = config.generator.labels_per_instance;
  m["test_n"] = data.test ? data.test->n() : 0;
  if (data.train.has_truth()) m["realized_noise_rate"] = realized_noise_rate(data.train);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

GeneratedData read_data_dir(const fs::path& dir) {
  int k = 0;
  int r = 0;
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    Json m;
    try {
      m = Json::parse(in);
      k = m.value("k", 0);
      r = m.value("r", 0);
    } catch (const Json::exception& e) {
      throw SchemaError(dir / "manifest.json", 0, e.what());
    }
  }
  auto optional_file = [&dir](const char* name) -> std::optional<fs::path> {
    const auto p = dir / name;
    return fs::exists(p) ? std::optional<fs::path>(p) : std::nullopt;
  };
  const auto annotations = optional_file("annotations.csv");
  if (!annotations) throw std::runtime_error("missing " + (dir / "annotations.csv").string());
  GeneratedData out{read_dataset(dir / "features.csv", annotations, optional_file("truth.csv"), k, r), std::nullopt};
  if (const auto test_features = optional_file("test_features.csv")) {
    const auto test_truth = optional_file("test_truth.csv");
    if (!test_truth) throw std::runtime_error("test_features.csv without test_truth.csv in " + dir.string());
    out.test = read_dataset(*test_features, std::nullopt, test_truth, out.train.k(), 1);
    if (out.test->d() != out.train.d()) throw std::runtime_error("test features have a different dimension");
  }
  return out;
}

ExperimentSummary run_experiment(const ExperimentConfig& config, const GeneratedData& data, std::ostream* log) {
  try {
    config.train.validate(data.train.k());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const fs::path& out_dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
  const AnnotationDataset* test = data.test ? &*data.test : nullptr;

  ExperimentSummary summary;
  {
    JsonlWriter metrics(out_dir / "metrics.jsonl");
    AdaptCdrpTrainer trainer(data.train, config.train, test);
    const TrainResult r = trainer.run([&](const EpochMetrics& m) {
      metrics.write(epoch_record(m, true));
      if (log) {
        *log << "adaptcdrp epoch " << m.epoch << (m.warmup ? " warmup" : "") << " loss " << m.train_loss
             << " val " << m.val_acc;
        if (m.test_acc) *log << " test " << *m.test_acc;
        *log << '\n';
      }
    });
    summary.adaptcdrp = {"adaptcdrp", r.best_epoch, r.best_val_acc, r.test_acc};
    summary.small_loss_ratio = r.small_loss_ratio;
    summary.anchors = r.anchors;
    save_model(r.model_a, out_dir / kModelA);
    save_model(r.model_b, out_dir / kModelB);
  }
  for (const Baseline kind : {Baseline::MajorityVote, Baseline::DawidSkene}) {
    if ((kind == Baseline::MajorityVote && !config.baseline_mv) || (kind == Baseline::DawidSkene && !config.baseline_em)) {
      continue;
    }
    const std::string name = to_string(kind);
    JsonlWriter metrics(out_dir / ("metrics_" + name + ".jsonl"));
    const BaselineResult b = train_baseline(kind, data.train, config.train, test, [&](const EpochMetrics& m) {
      metrics.write(epoch_record(m, false));
      if (log) *log << name << " epoch " << m.epoch << " loss " << m.train_loss << " val " << m.val_acc << '\n';
    });
    save_model(b.model, out_dir / baseline_checkpoint(kind));
    (kind == Baseline::MajorityVote ? summary.ce_mv : summary.ce_em) = RunOutcome{name, b.best_epoch, b.best_val_acc, b.test_acc};
  }

  Json s;
  s["adaptcdrp"] = outcome_json(summary.adaptcdrp);
  s["adaptcdrp"]["small_loss_ratio"] = summary.small_loss_ratio;
  s["adaptcdrp"]["anchors"] = summary.anchors;
  if (summary.ce_mv) s["ce_mv"] = outcome_json(*summary.ce_mv);
  if (summary.ce_em) s["ce_em"] = outcome_json(*summary.ce_em);
  Json cfg;
  // Training keys only; paths and generator settings do not affect the run.
  static const std::set<std::string> skipped{"d",      "data_dir",   "k",          "labels_per_instance", "n",
                                             "output_dir", "preset", "separation", "test_n"};
  for (const auto& [key, value] : config.entries()) {
    if (!skipped.contains(key)) cfg[key] = value;
  }
  s["config"] = cfg;
  s["data"] = {{"n", data.train.n()}, {"d", data.train.d()}, {"k", data.train.k()}, {"r", data.train.r()},
               {"test_n", test ? test->n() : 0}};
  write_text(out_dir / "summary.json", s.dump(2) + "\n");
  return summary;
}

std::vector<EvalOutcome> evaluate_run(const fs::path& run_dir, const GeneratedData& data) {
  const AnnotationDataset& target = data.test ? *data.test : data.train;
  if (!target.has_truth()) throw std::runtime_error("evaluation needs true labels");
  const auto& x = target.features();
  std::vector<EvalOutcome> out;
  if (fs::exists(run_dir / kModelA) && fs::exists(run_dir / kModelB)) {
    const SoftmaxModel a = load_model(run_dir / kModelA);
    const SoftmaxModel b = load_model(run_dir / kModelB);
    out.push_back({"adaptcdrp", accuracy(0.5 * (a.predict_batch(x) + b.predict_batch(x)), target.true_labels())});
  }
  for (const Baseline kind : {Baseline::MajorityVote, Baseline::DawidSkene}) {
    const auto path = run_dir / baseline_checkpoint(kind);
    if (!fs::exists(path)) continue;
    out.push_back({to_string(kind), accuracy(load_model(path).predict_batch(x), target.true_labels())});
  }
  if (out.empty()) throw std::runtime_error("no checkpoints found in " + run_dir.string());
  return out;
}

}  // namespace cdro
