#pragma once

// Staged experiment driver. Each stage reads its inputs from the output
// directory, writes its artifacts there, and records a stamp so an unchanged
// stage is skipped on the next run.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbt/attacks.hpp"
#include "lbt/baselines.hpp"
#include "lbt/mutation.hpp"
#include "lbt/sprt.hpp"
#include "lbt/surrogate.hpp"

namespace lbt {

struct DatasetConfig {
  std::string kind = "blobs";  // "blobs" or "idx"
  // blobs
  int num_classes = 2;
  int dim = 2;
  double spread = 0.1;
  int n_per_class = 1000;
  // idx, paths resolved against the config file's directory
  std::filesystem::path images;
  std::filesystem::path labels;
};

struct SplitConfig {
  std::size_t mut_train = 600;
  std::size_t validation = 500;
  std::size_t surrogate_seeds = 50;
  std::size_t attack = 500;
  double eval_fraction = 0.1;  // held out of the adversarial set for retraining
};

struct AttackStageConfig {
  AttackConfig attack;
  bool tune = true;
  AttackBand band;
};

struct PoolStageConfig {
  PoolConfig pool;
  std::size_t calibration_size = 100;
};

struct ExperimentConfig {
  Seed seed = 1;
  DatasetConfig dataset;
  SplitConfig splits;
  std::vector<int> mut_hidden{16};
  TrainConfig mut_train;
  AttackStageConfig attack;
  std::vector<int> surrogate_hidden{8};
  SurrogateConfig surrogate;
  PoolStageConfig pool;
  SprtConfig sprt;
  std::vector<BaselineMethod> baselines = all_baselines();
  BaselineParams baseline_params;
  TrainConfig retrain{0.05, 5, 16, 0, 0.0};

  /// Parses and validates; every problem is reported as ErrorCode::Config.
  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

enum class Stage { TrainMut, GenAdv, BuildSurrogate, Calibrate, Prioritize, Evaluate, Retrain, Report };

const char* to_string(Stage s);
Stage stage_from_string(const std::string& name);
const std::vector<Stage>& all_stages();

struct MethodRow {
  std::string method;
  std::size_t k = 0;
  double fdr = 0.0;
  std::optional<double> apfd_raw;   // undefined when the subset holds no fault
  std::optional<double> apfd_norm;
  std::optional<double> rauc;
  std::optional<double> retrain_delta;
};

struct RunReport {
  Seed seed = 0;
  double benign_accuracy = 0.0;
  double adv_accuracy = 0.0;
  double zeta_h = 0.0;
  int n_max = 0;
  double surrogate_similarity = 0.0;
  std::size_t oracle_queries = 0;
  std::size_t prioritization_size = 0;
  std::size_t total_faults = 0;
  std::vector<MethodRow> rows;

  const MethodRow& row(const std::string& method) const;
  static RunReport load(const std::filesystem::path& out_dir);
};

struct StageResult {
  Stage stage;
  bool cached = false;
  std::string summary;  // human-readable lines
};

class Experiment {
 public:
  /// Takes the output directory's lock for the lifetime of the object.
  Experiment(ExperimentConfig cfg, std::filesystem::path out_dir);
  ~Experiment();
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return out_; }

  /// `method` narrows prioritize/evaluate/retrain to one method ("lbt" or a
  /// baseline name); empty means all.
  StageResult run(Stage stage, const std::string& method = {});
  std::vector<StageResult> run_all();

 private:
  std::string stamp_for(Stage stage, const std::string& method) const;
  bool fresh(Stage stage, const std::string& stamp) const;
  void write_stamp(Stage stage, const std::string& stamp) const;

  std::string train_mut();
  std::string gen_adv();
  std::string build_surrogate_stage();
  std::string calibrate();
  std::string prioritize_stage(const std::string& method);
  std::string evaluate(const std::string& method);
  std::string retrain_stage(const std::string& method);
  std::string report();

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  std::filesystem::path lock_;
};

}  // namespace lbt
