#include "lbt/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "lbt/error.hpp"
#include "lbt/metrics.hpp"

namespace lbt {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config ---

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), ErrorCode::Config, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    require(known, ErrorCode::Config, "unknown key '" + key + "' in " + where);
  }
}

const json& section(const json& doc, const char* name) {
  static const json empty = json::object();
  return doc.contains(name) ? doc.at(name) : empty;
}

TrainConfig train_config_from(const json& j, TrainConfig base, const std::string& where) {
  check_keys(j, {"learning_rate", "epochs", "batch_size", "l2"}, where);
  from_json(j, base);
  return base;
}

json train_config_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"epochs", t.epochs}, {"batch_size", t.batch_size}, {"l2", t.l2}};
}

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    check_keys(doc, {"seed", "dataset", "splits", "mut", "attack", "surrogate", "pool", "sprt", "baselines",
                     "retrain"},
               "config");
    c.seed = doc.value("seed", c.seed);

    const json& d = section(doc, "dataset");
    check_keys(d, {"kind", "num_classes", "dim", "spread", "n_per_class", "images", "labels"}, "dataset");
    c.dataset.kind = d.value("kind", c.dataset.kind);
    c.dataset.num_classes = d.value("num_classes", c.dataset.num_classes);
    c.dataset.dim = d.value("dim", c.dataset.dim);
    c.dataset.spread = d.value("spread", c.dataset.spread);
    c.dataset.n_per_class = d.value("n_per_class", c.dataset.n_per_class);
    auto resolve = [&](const std::string& p) {
      const fs::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    if (d.contains("images")) c.dataset.images = resolve(d.at("images").get<std::string>());
    if (d.contains("labels")) c.dataset.labels = resolve(d.at("labels").get<std::string>());

    const json& s = section(doc, "splits");
    check_keys(s, {"mut_train", "validation", "surrogate_seeds", "attack", "eval_fraction"}, "splits");
    c.splits.mut_train = s.value("mut_train", c.splits.mut_train);
    c.splits.validation = s.value("validation", c.splits.validation);
    c.splits.surrogate_seeds = s.value("surrogate_seeds", c.splits.surrogate_seeds);
    c.splits.attack = s.value("attack", c.splits.attack);
    c.splits.eval_fraction = s.value("eval_fraction", c.splits.eval_fraction);

    const json& m = section(doc, "mut");
    check_keys(m, {"hidden", "train"}, "mut");
    c.mut_hidden = m.value("hidden", c.mut_hidden);
    c.mut_train = train_config_from(section(m, "train"), c.mut_train, "mut.train");

    const json& a = section(doc, "attack");
    check_keys(a, {"kind", "tune", "epsilon", "theta", "gamma", "band"}, "attack");
    json attack_fields = a;
    attack_fields.erase("tune");
    attack_fields.erase("band");
    lbt::from_json(attack_fields, c.attack.attack);
    c.attack.tune = a.value("tune", c.attack.tune);
    const json& band = section(a, "band");
    check_keys(band, {"floor", "drop"}, "attack.band");
    c.attack.band.floor = band.value("floor", c.attack.band.floor);
    c.attack.band.drop = band.value("drop", c.attack.band.drop);

    const json& sg = section(doc, "surrogate");
    check_keys(sg, {"hidden", "tau", "patience", "lambda", "max_rounds", "train"}, "surrogate");
    c.surrogate_hidden = sg.value("hidden", c.surrogate_hidden);
    json sg_fields = sg;
    sg_fields.erase("hidden");
    sg_fields.erase("train");
    lbt::from_json(sg_fields, c.surrogate);
    c.surrogate.train = train_config_from(section(sg, "train"), c.surrogate.train, "surrogate.train");

    const json& p = section(doc, "pool");
    check_keys(p, {"operators", "operator", "rate", "gf_sigma", "min_agreement", "calibration_size"}, "pool");
    json pool_fields = p;
    pool_fields.erase("calibration_size");
    lbt::from_json(pool_fields, c.pool.pool);
    c.pool.calibration_size = p.value("calibration_size", c.pool.calibration_size);

    const json& sp = section(doc, "sprt");
    check_keys(sp, {"alpha", "beta", "delta", "p_clamp", "subset_fraction", "subset_min", "decided_target",
                    "nmax_ceiling"},
               "sprt");
    lbt::from_json(sp, c.sprt);

    const json& b = section(doc, "baselines");
    check_keys(b, {"methods", "nac_threshold"}, "baselines");
    if (b.contains("methods")) {
      c.baselines.clear();
      for (const auto& name : b.at("methods")) c.baselines.push_back(baseline_from_string(name.get<std::string>()));
    }
    c.baseline_params.nac_threshold = b.value("nac_threshold", c.baseline_params.nac_threshold);

    c.retrain = train_config_from(section(doc, "retrain"), c.retrain, "retrain");
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(ErrorCode::Config, e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Config, "cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc, path.parent_path());
}

json ExperimentConfig::to_json() const {
  std::vector<std::string> methods;
  for (auto m : baselines) methods.emplace_back(lbt::to_string(m));
  json attack_j = attack.attack;
  attack_j.erase("seed");
  attack_j["tune"] = attack.tune;
  attack_j["band"] = {{"floor", attack.band.floor}, {"drop", attack.band.drop}};
  json surrogate_j = surrogate;
  surrogate_j["hidden"] = surrogate_hidden;
  surrogate_j["train"] = train_config_json(surrogate.train);
  json pool_j = pool.pool;
  pool_j.erase("seed");
  pool_j["calibration_size"] = pool.calibration_size;
  json sprt_j = sprt;
  sprt_j.erase("seed");
  sprt_j.erase("zeta_h");
  json dataset_j{{"kind", dataset.kind}};
  if (dataset.kind == "blobs") {
    dataset_j.update({{"num_classes", dataset.num_classes},
                      {"dim", dataset.dim},
                      {"spread", dataset.spread},
                      {"n_per_class", dataset.n_per_class}});
  } else {
    dataset_j.update({{"images", dataset.images.string()}, {"labels", dataset.labels.string()}});
  }
  return {{"seed", seed},
          {"dataset", dataset_j},
          {"splits",
           {{"mut_train", splits.mut_train},
            {"validation", splits.validation},
            {"surrogate_seeds", splits.surrogate_seeds},
            {"attack", splits.attack},
            {"eval_fraction", splits.eval_fraction}}},
          {"mut", {{"hidden", mut_hidden}, {"train", train_config_json(mut_train)}}},
          {"attack", attack_j},
          {"surrogate", surrogate_j},
          {"pool", pool_j},
          {"sprt", sprt_j},
          {"baselines", {{"methods", methods}, {"nac_threshold", baseline_params.nac_threshold}}},
          {"retrain", train_config_json(retrain)}};
}

void ExperimentConfig::validate() const {
  require(dataset.kind == "blobs" || dataset.kind == "idx", ErrorCode::Config,
          "dataset.kind must be 'blobs' or 'idx', got '" + dataset.kind + "'");
  if (dataset.kind == "idx") {
    require(!dataset.images.empty() && !dataset.labels.empty(), ErrorCode::Config,
            "idx dataset needs 'images' and 'labels' paths");
  } else {
    require(dataset.num_classes >= 2 && dataset.dim >= 2 && dataset.spread > 0 && dataset.n_per_class >= 1,
            ErrorCode::Config, "blobs need num_classes >= 2, dim >= 2, spread > 0, n_per_class >= 1");
  }
  require(splits.mut_train > 0 && splits.validation > 0 && splits.surrogate_seeds > 0 && splits.attack > 0,
          ErrorCode::Config, "every split size must be positive");
  require(splits.eval_fraction > 0.0 && splits.eval_fraction < 1.0, ErrorCode::Config,
          "splits.eval_fraction must lie in (0, 1)");
  for (int h : mut_hidden) require(h > 0, ErrorCode::Config, "mut.hidden sizes must be positive");
  for (int h : surrogate_hidden) require(h > 0, ErrorCode::Config, "surrogate.hidden sizes must be positive");
  mut_train.validate();
  surrogate.validate();
  retrain.validate();
  require(attack.band.floor >= 0.0 && attack.band.floor <= 1.0 && attack.band.drop >= 0.0 && attack.band.drop <= 1.0,
          ErrorCode::Config, "attack band values must lie in [0, 1]");
  require(!pool.pool.operators.empty(), ErrorCode::Config, "pool needs at least one operator");
  require(pool.pool.rate > 0.0 && pool.pool.rate <= 1.0, ErrorCode::Config, "pool.rate must lie in (0, 1]");
  require(pool.pool.min_agreement >= 0.0 && pool.pool.min_agreement <= 1.0, ErrorCode::Config,
          "pool.min_agreement must lie in [0, 1]");
  require(pool.calibration_size >= 1, ErrorCode::Config, "pool.calibration_size must be positive");
  SprtConfig probe = sprt;
  probe.zeta_h = 0.5;
  probe.validate();
  require(baseline_params.nac_threshold > 0.0 && baseline_params.nac_threshold < 1.0, ErrorCode::Config,
          "baselines.nac_threshold must lie in (0, 1)");
}

// ---------------------------------------------------------------- stages ---

const char* to_string(Stage s) {
  switch (s) {
    case Stage::TrainMut: return "train-mut";
    case Stage::GenAdv: return "gen-adv";
    case Stage::BuildSurrogate: return "build-surrogate";
    case Stage::Calibrate: return "calibrate";
    case Stage::Prioritize: return "prioritize";
    case Stage::Evaluate: return "evaluate";
    case Stage::Retrain: return "retrain";
    case Stage::Report: return "report";
  }
  return "?";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::TrainMut,  Stage::GenAdv,     Stage::BuildSurrogate,
                                         Stage::Calibrate, Stage::Prioritize, Stage::Evaluate,
                                         Stage::Retrain,   Stage::Report};
  return stages;
}

Stage stage_from_string(const std::string& name) {
  for (Stage s : all_stages())
    if (name == to_string(s)) return s;
  fail(ErrorCode::Config, "unknown stage '" + name + "'");
}

// -------------------------------------------------------------- report -----

const MethodRow& RunReport::row(const std::string& method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  fail(ErrorCode::Domain, "report has no row for method '" + method + "'");
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string opt_csv(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << *v;
  return s.str();
}

json read_json(const fs::path& path, const std::string& producer) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::MissingArtifact,
          "missing " + path.string() + " (run " + producer + " first)");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "malformed " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::Io, "failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "absent";
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  std::ostringstream hex;
  hex << std::hex << fnv1a(bytes.data(), bytes.size());
  return hex.str();
}

}  // namespace

RunReport RunReport::load(const fs::path& out_dir) {
  const json doc = read_json(out_dir / "report.json", "report");
  RunReport r;
  try {
    r.seed = doc.at("seed").get<Seed>();
    r.benign_accuracy = doc.at("benign_accuracy").get<double>();
    r.adv_accuracy = doc.at("adv_accuracy").get<double>();
    r.zeta_h = doc.at("zeta_h").get<double>();
    r.n_max = doc.at("n_max").get<int>();
    r.surrogate_similarity = doc.at("surrogate_similarity").get<double>();
    r.oracle_queries = doc.at("oracle_queries").get<std::size_t>();
    r.prioritization_size = doc.at("prioritization_size").get<std::size_t>();
    r.total_faults = doc.at("total_faults").get<std::size_t>();
    for (const auto& row : doc.at("rows")) {
      MethodRow m;
      m.method = row.at("method").get<std::string>();
      m.k = row.at("k").get<std::size_t>();
      m.fdr = row.at("fdr").get<double>();
      m.apfd_raw = opt_from(row, "apfd_raw");
      m.apfd_norm = opt_from(row, "apfd_norm");
      m.rauc = opt_from(row, "rauc");
      m.retrain_delta = opt_from(row, "retrain_delta");
      r.rows.push_back(m);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed report.json: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------- data -----

namespace {

struct Data {
  LabeledSet mut_train;
  LabeledSet validation;
  LabeledSet seeds;
  LabeledSet attack;
  int num_classes = 0;
  int dim = 0;
};

Data load_data(const ExperimentConfig& cfg) {
  LabeledSet all = cfg.dataset.kind == "idx"
                       ? load_idx(cfg.dataset.images, cfg.dataset.labels)
                       : synth_blobs(cfg.dataset.n_per_class, cfg.dataset.num_classes, cfg.dataset.dim,
                                     cfg.dataset.spread, derive_seed(cfg.seed, "data"));
  const auto& s = cfg.splits;
  const std::size_t used = s.mut_train + s.validation + s.surrogate_seeds + s.attack;
  require(used <= all.size(), ErrorCode::Config,
          "splits ask for " + std::to_string(used) + " rows but the dataset has " + std::to_string(all.size()));
  const auto n = static_cast<double>(all.size());
  std::vector<double> fractions{s.mut_train / n, s.validation / n, s.surrogate_seeds / n, s.attack / n};
  if (used < all.size()) fractions.push_back((all.size() - used) / n);
  const auto parts = split(all, {fractions, derive_seed(cfg.seed, "split")});
  return {parts[0], parts[1], parts[2], parts[3], all.num_classes(), all.dim()};
}

// Reads the ordered ids marked "selected" from a suite or ranking CSV.
Network read_network(const fs::path& path, const std::string& producer) {
  require(fs::exists(path), ErrorCode::MissingArtifact, "missing " + path.string() + " (run " + producer + " first)");
  return load_network(path);
}

std::vector<std::size_t> read_selected(const fs::path& path, const std::string& producer) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::MissingArtifact,
          "missing " + path.string() + " (run " + producer + " first)");
  std::vector<std::size_t> ids;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) f.push_back(cell);
    require(f.size() == 7, ErrorCode::Format, "bad row in " + path.string() + ": " + line);
    if (f[5] == "selected") ids.push_back(std::stoull(f[0]));
  }
  return ids;
}

struct AdvData {
  AdvSet adv;
  json extra;
  LabeledSet prioritization;  // adversarial rows, true labels
  LabeledSet evaluation;
};

AdvData load_adv(const fs::path& out) {
  AdvData d{load_adv_set(out, "adv"), read_json(out / "adv.json", "gen-adv").at("extra"), {}, {}};
  const LabeledSet rows = d.adv.as_labeled();
  auto positions_of = [&](const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> pos;
    std::unordered_map<std::size_t, std::size_t> where;
    for (std::size_t i = 0; i < rows.size(); ++i) where[rows.ids()[i]] = i;
    for (auto id : ids) {
      const auto it = where.find(id);
      require(it != where.end(), ErrorCode::Format, "adv.json names unknown id " + std::to_string(id));
      pos.push_back(it->second);
    }
    return pos;
  };
  d.prioritization = rows.subset(positions_of(d.extra.at("prioritization_ids").get<std::vector<std::size_t>>()));
  d.evaluation = rows.subset(positions_of(d.extra.at("eval_ids").get<std::vector<std::size_t>>()));
  return d;
}

std::vector<std::string> methods_for(const ExperimentConfig& cfg, const std::string& method) {
  std::vector<std::string> all{"lbt"};
  for (auto m : cfg.baselines) all.emplace_back(to_string(m));
  if (method.empty()) return all;
  require(std::find(all.begin(), all.end(), method) != all.end(), ErrorCode::Config,
          "method '" + method + "' is not enabled (choose lbt or one of the configured baselines)");
  return {method};
}

fs::path ordering_file(const fs::path& out, const std::string& method) {
  return out / (method == "lbt" ? std::string("suite-lbt.csv") : "ranking-" + method + ".csv");
}

}  // namespace

// ---------------------------------------------------------- experiment -----

Experiment::Experiment(ExperimentConfig cfg, fs::path out_dir) : cfg_(std::move(cfg)), out_(std::move(out_dir)) {
  cfg_.validate();
  std::error_code ec;
  fs::create_directories(out_ / ".stamps", ec);
  require(!ec, ErrorCode::Io, "cannot create output directory " + out_.string() + ": " + ec.message());
  lock_ = out_ / ".lock";
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  require(fd >= 0, ErrorCode::Io,
          "output directory " + out_.string() + " is locked by another run (delete " + lock_.string() +
              " if that run is gone)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

Experiment::~Experiment() {
  std::error_code ec;
  fs::remove(lock_, ec);
}

std::string Experiment::stamp_for(Stage stage, const std::string& method) const {
  const json c = cfg_.to_json();
  json key{{"stage", to_string(stage)}, {"method", method}, {"seed", cfg_.seed}};
  std::vector<std::string> inputs;
  switch (stage) {
    case Stage::TrainMut:
      key["cfg"] = {c["dataset"], c["splits"], c["mut"]};
      break;
    case Stage::GenAdv:
      key["cfg"] = {c["dataset"], c["splits"], c["attack"]};
      inputs = {"mut.json"};
      break;
    case Stage::BuildSurrogate:
      key["cfg"] = {c["dataset"], c["splits"], c["surrogate"]};
      inputs = {"mut.json"};
      break;
    case Stage::Calibrate:
      key["cfg"] = {c["dataset"], c["splits"], c["pool"], c["sprt"]};
      inputs = {"surrogate.json", "adv.json", "adv-adversarials.idx"};
      break;
    case Stage::Prioritize:
      key["cfg"] = {c["dataset"], c["splits"], c["sprt"], c["baselines"]};
      inputs = {"mut.json", "surrogate.json", "pool.json", "calibration.json", "adv.json", "adv-adversarials.idx"};
      break;
    case Stage::Evaluate:
    case Stage::Retrain:
      key["cfg"] = {c["baselines"], c["retrain"]};
      inputs = {"mut.json", "adv.json", "adv-adversarials.idx", "suite-lbt.csv"};
      for (auto m : cfg_.baselines) inputs.push_back(std::string("ranking-") + to_string(m) + ".csv");
      break;
    case Stage::Report:
      key["cfg"] = c;
      inputs = {"eval.json", "retrain.json", "mut-summary.json", "adv.json", "surrogate-summary.json",
                "calibration.json"};
      break;
  }
  for (const auto& f : inputs) key["inputs"][f] = file_digest(out_ / f);
  const std::string text = key.dump();
  std::ostringstream hex;
  hex << std::hex << fnv1a(text.data(), text.size());
  return hex.str();
}

namespace {
fs::path stamp_path(const fs::path& out, Stage stage, const std::string& method) {
  return out / ".stamps" / (std::string(to_string(stage)) + (method.empty() ? "" : "-" + method) + ".stamp");
}
}  // namespace

bool Experiment::fresh(Stage stage, const std::string& stamp) const {
  std::ifstream in(stamp_path(out_, stage, ""));
  std::string have;
  return in && std::getline(in, have) && have == stamp;
}

void Experiment::write_stamp(Stage stage, const std::string& stamp) const {
  write_text(stamp_path(out_, stage, ""), stamp + "\n");
}

StageResult Experiment::run(Stage stage, const std::string& method) {
  StageResult result{stage, false, {}};
  try {
    if (!method.empty()) {
      require(stage == Stage::Prioritize || stage == Stage::Evaluate || stage == Stage::Retrain, ErrorCode::Config,
              std::string("--method applies to prioritize, evaluate and retrain, not ") + to_string(stage));
      methods_for(cfg_, method);
    }
    const std::string stamp = stamp_for(stage, method);
    const fs::path summary_file = out_ / ".stamps" / (std::string(to_string(stage)) + ".summary");
    // Method-restricted runs are never cached: they overwrite a subset of the
    // stage's artifacts.
    if (method.empty() && fresh(stage, stamp)) {
      std::ifstream in(summary_file);
      std::ostringstream ss;
      ss << in.rdbuf();
      return {stage, true, ss.str()};
    }
    switch (stage) {
      case Stage::TrainMut: result.summary = train_mut(); break;
      case Stage::GenAdv: result.summary = gen_adv(); break;
      case Stage::BuildSurrogate: result.summary = build_surrogate_stage(); break;
      case Stage::Calibrate: result.summary = calibrate(); break;
      case Stage::Prioritize: result.summary = prioritize_stage(method); break;
      case Stage::Evaluate: result.summary = evaluate(method); break;
      case Stage::Retrain: result.summary = retrain_stage(method); break;
      case Stage::Report: result.summary = report(); break;
    }
    if (method.empty()) {
      write_text(summary_file, result.summary);
      write_stamp(stage, stamp_for(stage, method));
    } else {
      std::error_code ec;
      fs::remove(stamp_path(out_, stage, ""), ec);
    }
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + to_string(stage) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Io, std::string("stage ") + to_string(stage) + ": " + e.what());
  }
  return result;
}

std::vector<StageResult> Experiment::run_all() {
  std::vector<StageResult> out;
  for (Stage s : all_stages()) out.push_back(run(s));
  return out;
}

// -------------------------------------------------------------- stage bodies

std::string Experiment::train_mut() {
  const Data data = load_data(cfg_);
  TrainConfig tc = cfg_.mut_train;
  tc.seed = derive_seed(cfg_.seed, "mut-train");
  const Network init =
      Network::mlp(layer_sizes(data.dim, cfg_.mut_hidden, data.num_classes), derive_seed(cfg_.seed, "mut-init"));
  const Network mut = sgd_train(init, data.mut_train, tc);
  save_network(mut, out_ / "mut.json");
  const json summary{{"train_accuracy", accuracy(mut, data.mut_train)},
                     {"validation_accuracy", accuracy(mut, data.validation)},
                     {"attack_set_accuracy", accuracy(mut, data.attack)},
                     {"parameters", mut.parameter_count()}};
  write_json(out_ / "mut-summary.json", summary);
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "MUT trained: train acc " << summary["train_accuracy"].get<double>()
    << ", validation acc " << summary["validation_accuracy"].get<double>() << ", attack-set acc "
    << summary["attack_set_accuracy"].get<double>() << "\n";
  return s.str();
}

std::string Experiment::gen_adv() {
  const Data data = load_data(cfg_);
  const Network mut = read_network(out_ / "mut.json", "train-mut");
  AttackConfig attack = cfg_.attack.attack;
  attack.seed = derive_seed(cfg_.seed, "attack");
  json extra;
  double benign = accuracy(mut, data.attack);
  if (cfg_.attack.tune) {
    const TuneResult t = tune_attack(mut, data.attack, attack, cfg_.attack.band);
    attack = t.config;
    json frontier = json::array();
    for (const auto& p : t.frontier) frontier.push_back({{"strength", p.strength}, {"adv_accuracy", p.adv_accuracy}});
    extra["frontier"] = frontier;
    benign = t.benign_accuracy;
  }
  const AdvSet adv = generate(mut, data.attack, attack);
  const double adv_acc = adversarial_accuracy(mut, adv);
  const double ev = cfg_.splits.eval_fraction;
  const auto parts = split(adv.originals, {{1.0 - ev, ev}, derive_seed(cfg_.seed, "adv-split")});
  extra["benign_accuracy"] = benign;
  extra["adv_accuracy"] = adv_acc;
  extra["band_floor"] = cfg_.attack.band.floor;
  extra["band_drop"] = cfg_.attack.band.drop;
  extra["prioritization_ids"] = parts[0].ids();
  extra["eval_ids"] = parts[1].ids();
  save_adv_set(adv, out_, "adv", extra);
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << to_string(attack.kind) << " attack ("
    << (attack.kind == AttackKind::FGSM ? "epsilon " + std::to_string(attack.epsilon)
                                        : "theta " + std::to_string(attack.theta))
    << "): benign acc " << benign << ", adversarial acc " << adv_acc << "; " << parts[0].size()
    << " prioritization / " << parts[1].size() << " evaluation rows\n";
  return s.str();
}

std::string Experiment::build_surrogate_stage() {
  const Data data = load_data(cfg_);
  NetworkOracle oracle(read_network(out_ / "mut.json", "train-mut"));
  SurrogateConfig sc = cfg_.surrogate;
  sc.train.seed = derive_seed(cfg_.seed, "surrogate-train");
  const Network b0 = Network::mlp(layer_sizes(data.dim, cfg_.surrogate_hidden, data.num_classes),
                                  derive_seed(cfg_.seed, "surrogate-init"));
  const auto res = build_surrogate(b0, oracle, data.seeds.unlabeled(), data.validation.unlabeled(), sc);
  save_network(res.model, out_ / "surrogate.json");
  std::ostringstream csv;
  res.trace.write_csv(csv);
  write_text(out_ / "surrogate-trace.csv", csv.str());
  write_json(out_ / "surrogate-summary.json", {{"similarity", res.trace.final_similarity()},
                                               {"rounds", res.trace.rounds.size()},
                                               {"termination", to_string(res.trace.reason)},
                                               {"oracle_queries", res.trace.oracle_queries}});
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << "surrogate: similarity " << res.trace.final_similarity() << " after "
    << res.trace.rounds.size() << " rounds (" << to_string(res.trace.reason) << "), " << res.trace.oracle_queries
    << " oracle queries\n";
  return s.str();
}

std::string Experiment::calibrate() {
  const Data data = load_data(cfg_);
  const Network surrogate = read_network(out_ / "surrogate.json", "build-surrogate");
  const AdvData adv = load_adv(out_);
  PoolConfig pc = cfg_.pool.pool;
  pc.seed = derive_seed(cfg_.seed, "pool");
  MutantPool pool(surrogate, data.validation.xs(), pc);
  pool.grow(cfg_.pool.calibration_size);
  SprtConfig sc = cfg_.sprt;
  sc.seed = derive_seed(cfg_.seed, "sprt");
  sc.zeta_h = calibrate_zeta(pool, data.validation.xs());
  const NmaxCalibration cal = calibrate_nmax(pool, adv.prioritization.unlabeled(), sc);
  write_json(out_ / "pool.json", pool.manifest());
  json states = json::array();
  for (const auto& st : cal.states)
    states.push_back({{"input_id", st.input_id},
                      {"n", st.n},
                      {"z", st.z},
                      {"verdict", to_string(st.verdict)},
                      {"decided_at", st.decided_at}});
  json sprt_j = sc;
  write_json(out_ / "calibration.json", {{"zeta_h", sc.zeta_h},
                                         {"n_max", cal.n_max},
                                         {"pool_size", pool.size()},
                                         {"sprt", sprt_j},
                                         {"pool", cfg_.to_json()["pool"]},
                                         {"probe_positions", cal.subset_positions},
                                         {"probe_states", states}});
  std::ostringstream s;
  s << std::setprecision(6) << "zeta_h " << sc.zeta_h << "\nn_max " << cal.n_max << "\nsprt "
    << sprt_j.dump() << "\npool " << cfg_.to_json()["pool"].dump() << "\n";
  return s.str();
}

std::string Experiment::prioritize_stage(const std::string& method) {
  const Network surrogate = read_network(out_ / "surrogate.json", "build-surrogate");
  const AdvData adv = load_adv(out_);
  const Data data = load_data(cfg_);
  const json cal = read_json(out_ / "calibration.json", "calibrate");
  const json manifest = read_json(out_ / "pool.json", "calibrate");
  const int n_max = cal.at("n_max").get<int>();
  SprtConfig sc = cal.at("sprt").get<SprtConfig>();
  MutantPool pool = MutantPool::from_manifest(surrogate, data.validation.xs(), manifest);

  // Restore the probe members' step-2 states; the rest go through step 3.
  NmaxCalibration probe;
  probe.n_max = n_max;
  std::set<std::size_t> probed;
  for (const auto& st : cal.at("probe_states")) {
    const std::string v = st.at("verdict").get<std::string>();
    SprtState s{st.at("input_id").get<std::size_t>(), st.at("n").get<int>(), st.at("z").get<int>(),
                v == "selected" ? Verdict::Selected : v == "discarded" ? Verdict::Discarded : Verdict::Undecided,
                st.at("decided_at").get<int>()};
    probed.insert(s.input_id);
    probe.states.push_back(s);
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < adv.prioritization.size(); ++i)
    if (!probed.count(adv.prioritization.ids()[i])) rest.push_back(i);
  if (pool.size() < static_cast<std::size_t>(n_max)) pool.grow(static_cast<std::size_t>(n_max) - pool.size());

  std::ostringstream s;
  const bool want_all = method.empty();
  const PrioritizedSuite suite = prioritize(pool, adv.prioritization.subset(rest).unlabeled(), n_max, sc, &probe);
  const std::size_t k = suite.selected.size();
  if (want_all || method == "lbt") {
    std::ofstream out(out_ / "suite-lbt.csv");
    suite.write_csv(out, {{"method", "lbt"}, {"n_max", n_max}, {"zeta_h", sc.zeta_h}, {"seed", cfg_.seed}});
    s << "lbt: " << k << " selected, " << suite.discarded.size() << " discarded, " << suite.undecided.size()
      << " undecided after n_max " << n_max << "\n";
  }
  require(k > 0, ErrorCode::Domain, "LBT selected no inputs, so there is no budget for the baselines");

  const Network mut = read_network(out_ / "mut.json", "train-mut");
  BaselineParams bp = cfg_.baseline_params;
  for (auto m : cfg_.baselines) {
    const std::string name = to_string(m);
    if (!want_all && method != name) continue;
    bp.seed = derive_seed(cfg_.seed, "baseline-" + name);
    const RankedList ranked =
        rank_baseline(m, mut, data.mut_train.xs(), adv.prioritization.xs(), adv.prioritization.ids(), bp);
    std::ofstream out(out_ / ("ranking-" + name + ".csv"));
    ranked.write_csv(out, k);
    s << name << ": top " << k << " of " << ranked.entries.size() << "\n";
  }
  return s.str();
}

std::string Experiment::evaluate(const std::string& method) {
  const Network mut = read_network(out_ / "mut.json", "train-mut");
  const AdvData adv = load_adv(out_);
  const auto& prio = adv.prioritization;
  const auto predicted = predict(mut, prio.xs());
  const FaultTable faults(prio.ids(), prio.ys(), predicted);
  const std::size_t total = faults.total_faults();

  json rows = json::array();
  if (fs::exists(out_ / "eval.json")) rows = read_json(out_ / "eval.json", "evaluate").at("rows");
  std::ostringstream s;
  for (const auto& name : methods_for(cfg_, method)) {
    const auto ids = read_selected(ordering_file(out_, name), name == "lbt" ? "prioritize" : "prioritize --method " + name);
    require(!ids.empty(), ErrorCode::Domain, name + " selected no inputs");
    json row{{"method", name}, {"k", ids.size()}, {"fdr", fdr(ids, faults, total)}};
    const bool any_fault = std::any_of(ids.begin(), ids.end(), [&](std::size_t id) { return faults.is_fault(id); });
    std::optional<double> raw, norm, ra;
    if (any_fault) {
      const Apfd a = apfd(ids, faults);
      raw = a.raw;
      norm = a.normalized;
      ra = rauc(ids, faults);
    }
    row["apfd_raw"] = opt_json(raw);
    row["apfd_norm"] = opt_json(norm);
    row["rauc"] = opt_json(ra);
    rows.erase(std::remove_if(rows.begin(), rows.end(), [&](const json& r) { return r.at("method") == name; }),
               rows.end());
    rows.push_back(row);
    s << std::fixed << std::setprecision(4) << name << ": k " << ids.size() << ", FDR " << row["fdr"].get<double>()
      << ", APFD " << opt_csv(norm) << ", RAUC " << opt_csv(ra) << "\n";
  }
  write_json(out_ / "eval.json", {{"total_faults", total}, {"prioritization_size", prio.size()}, {"rows", rows}});
  std::ostringstream csv;
  csv << "method,k,fdr,apfd_raw,apfd_norm,rauc\n";
  for (const auto& r : rows)
    csv << r["method"].get<std::string>() << ',' << r["k"].get<std::size_t>() << ','
        << opt_csv(r["fdr"].get<double>()) << ',' << opt_csv(opt_from(r, "apfd_raw")) << ','
        << opt_csv(opt_from(r, "apfd_norm")) << ',' << opt_csv(opt_from(r, "rauc")) << '\n';
  write_text(out_ / "eval.csv", csv.str());
  return s.str();
}

std::string Experiment::retrain_stage(const std::string& method) {
  const Network mut = read_network(out_ / "mut.json", "train-mut");
  const AdvData adv = load_adv(out_);
  TrainConfig tc = cfg_.retrain;
  tc.seed = derive_seed(cfg_.seed, "retrain");
  std::unordered_map<std::size_t, std::size_t> where;
  for (std::size_t i = 0; i < adv.prioritization.size(); ++i) where[adv.prioritization.ids()[i]] = i;

  json rows = json::array();
  if (fs::exists(out_ / "retrain.json")) rows = read_json(out_ / "retrain.json", "retrain").at("rows");
  std::ostringstream s;
  for (const auto& name : methods_for(cfg_, method)) {
    const auto ids = read_selected(ordering_file(out_, name), "prioritize");
    std::vector<std::size_t> pos;
    for (auto id : ids) pos.push_back(where.at(id));
    const double delta = retrain_eval(mut, adv.prioritization.subset(pos), adv.evaluation, tc);
    rows.erase(std::remove_if(rows.begin(), rows.end(), [&](const json& r) { return r.at("method") == name; }),
               rows.end());
    rows.push_back({{"method", name}, {"k", ids.size()}, {"retrain_delta", delta}});
    s << std::fixed << std::setprecision(4) << name << ": retrain accuracy delta " << std::showpos << delta
      << std::noshowpos << "\n";
  }
  write_json(out_ / "retrain.json", {{"eval_size", adv.evaluation.size()}, {"rows", rows}});
  std::ostringstream csv;
  csv << "method,k,retrain_delta\n";
  for (const auto& r : rows)
    csv << r["method"].get<std::string>() << ',' << r["k"].get<std::size_t>() << ','
        << opt_csv(r["retrain_delta"].get<double>()) << '\n';
  write_text(out_ / "retrain.csv", csv.str());
  return s.str();
}

std::string Experiment::report() {
  const json ev = read_json(out_ / "eval.json", "evaluate");
  const json rt = read_json(out_ / "retrain.json", "retrain");
  const json mut = read_json(out_ / "mut-summary.json", "train-mut");
  const json adv = read_json(out_ / "adv.json", "gen-adv").at("extra");
  const json sur = read_json(out_ / "surrogate-summary.json", "build-surrogate");
  const json cal = read_json(out_ / "calibration.json", "calibrate");

  std::map<std::string, double> deltas;
  for (const auto& r : rt.at("rows")) deltas[r.at("method").get<std::string>()] = r.at("retrain_delta").get<double>();

  // Rows follow the configured method order regardless of evaluation order.
  std::vector<std::string> order = methods_for(cfg_, "");
  json rows = json::array();
  std::ostringstream csv;
  csv << "method,k,fdr,apfd_raw,apfd_norm,rauc,retrain_delta,seed\n";
  for (const auto& name : order) {
    const auto it = std::find_if(ev.at("rows").begin(), ev.at("rows").end(),
                                 [&](const json& r) { return r.at("method") == name; });
    if (it == ev.at("rows").end()) continue;
    json row = *it;
    const auto d = deltas.find(name);
    row["retrain_delta"] = d == deltas.end() ? json(nullptr) : json(d->second);
    rows.push_back(row);
    csv << name << ',' << row["k"].get<std::size_t>() << ',' << opt_csv(row["fdr"].get<double>()) << ','
        << opt_csv(opt_from(row, "apfd_raw")) << ',' << opt_csv(opt_from(row, "apfd_norm")) << ','
        << opt_csv(opt_from(row, "rauc")) << ',' << opt_csv(opt_from(row, "retrain_delta")) << ',' << cfg_.seed
        << '\n';
  }
  write_text(out_ / "report.csv", csv.str());
  write_json(out_ / "report.json", {{"seed", cfg_.seed},
                                    {"config", cfg_.to_json()},
                                    {"mut", mut},
                                    {"benign_accuracy", adv.at("benign_accuracy")},
                                    {"adv_accuracy", adv.at("adv_accuracy")},
                                    {"surrogate_similarity", sur.at("similarity")},
                                    {"oracle_queries", sur.at("oracle_queries")},
                                    {"zeta_h", cal.at("zeta_h")},
                                    {"n_max", cal.at("n_max")},
                                    {"prioritization_size", ev.at("prioritization_size")},
                                    {"total_faults", ev.at("total_faults")},
                                    {"rows", rows}});
  return csv.str();
}

}  // namespace lbt
