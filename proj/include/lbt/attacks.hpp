#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbt/dataset.hpp"
#include "lbt/nn.hpp"

namespace lbt {

enum class AttackKind { FGSM, JSMA };

const char* to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

struct AttackConfig {
  AttackKind kind = AttackKind::FGSM;
  double epsilon = 0.1;  // FGSM step
  double theta = 1.0;    // JSMA per-feature perturbation; sign picks direction
  double gamma = 0.1;    // JSMA max fraction of features touched
  Seed seed = 0;

  /// Checks the ranges that apply to `kind` given input dimension d.
  void validate(int dim) const;
};

struct AdvSet {
  LabeledSet originals;  // with ground truth
  Matrix adversarials;   // row-aligned with originals
  AttackConfig config;
  std::vector<bool> fooled;

  /// Adversarial rows carrying the originals' labels and ids.
  LabeledSet as_labeled() const;
};

AdvSet fgsm(const Network& mut, const LabeledSet& set, double epsilon);

struct JsmaResult {
  Vector x;
  bool fooled = false;
  int features_changed = 0;
};

/// Single-feature saliency variant: each step moves the most salient
/// untouched feature by theta toward the most likely wrong class.
JsmaResult jsma(const Network& mut, const Vector& x, int y_true, const AttackConfig& cfg);
AdvSet jsma_set(const Network& mut, const LabeledSet& set, const AttackConfig& cfg);

AdvSet generate(const Network& mut, const LabeledSet& set, const AttackConfig& cfg);

/// Accuracy of the MUT on the adversarial rows of `adv`.
double adversarial_accuracy(const Network& mut, const AdvSet& adv);

struct AttackBand {
  double floor = 0.40;  // adversarial accuracy must stay at or above this
  double drop = 0.30;   // and at least this much below benign accuracy
};

struct FrontierPoint {
  double strength;
  double adv_accuracy;
};

struct TuneResult {
  AttackConfig config;
  double benign_accuracy = 0.0;
  double adv_accuracy = 0.0;
  std::vector<FrontierPoint> frontier;
};

/// Walks epsilon over {0.05k} (FGSM) or theta over {0.1k} (JSMA) from weakest
/// to strongest and returns the first config whose adversarial accuracy lies
/// in [floor, benign - drop]. If two neighbouring grid points straddle the
/// band, the interval between them is bisected.
TuneResult tune_attack(const Network& mut, const LabeledSet& benign, const AttackConfig& base,
                       const AttackBand& band = {});

void to_json(nlohmann::json& j, const AttackConfig& cfg);
void from_json(const nlohmann::json& j, AttackConfig& cfg);

/// <prefix>-originals.idx, <prefix>-adversarials.idx (real-valued IDX),
/// <prefix>-labels.idx and a JSON sidecar <prefix>.json.
void save_adv_set(const AdvSet& adv, const std::filesystem::path& dir, const std::string& prefix,
                  const nlohmann::json& extra = {});
AdvSet load_adv_set(const std::filesystem::path& dir, const std::string& prefix);

}  // namespace lbt
