#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lbt/nn.hpp"

namespace lbt {

/// White-box view of the MUT. Only the reference prioritizers in this header
/// consume it.
class ActivationProvider {
 public:
  virtual ~ActivationProvider() = default;

  virtual Vector probabilities(const Vector& x) const = 0;
  virtual Vector last_hidden(const Vector& x) const = 0;
  /// Post-activation outputs of every hidden layer, one vector per layer.
  virtual std::vector<Vector> neurons(const Vector& x) const = 0;
};

class NetworkActivationProvider final : public ActivationProvider {
 public:
  explicit NetworkActivationProvider(const Network& net) : net_(net) {}

  Vector probabilities(const Vector& x) const override;
  Vector last_hidden(const Vector& x) const override;
  std::vector<Vector> neurons(const Vector& x) const override;

 private:
  const Network& net_;
};

// Softmax-only scores.
double gini(const Vector& probs);
double pe(const Vector& probs);
double maxp(const Vector& probs);

/// Per-layer min-max scaling of one input's activations; constant layers map
/// to zero.
std::vector<Vector> min_max_scale(std::span<const Vector> layers);
/// Fraction of (already scaled) neurons above t.
double nac_score(std::span<const Vector> scaled, double t);
double nac(const ActivationProvider& provider, const Vector& x, double t);

struct NeuronBounds {
  std::vector<Vector> low;
  std::vector<Vector> high;
};

/// Per-neuron min/max over the training rows.
NeuronBounds neuron_bounds(const ActivationProvider& provider, const Matrix& train);
double nbc_score(std::span<const Vector> layers, const NeuronBounds& bounds);
double nbc(const ActivationProvider& provider, const Vector& x, const NeuronBounds& bounds);

/// Last-hidden activations of the training rows with the MUT's predicted class.
struct SurpriseReferences {
  Matrix activations;
  std::vector<int> labels;
  int num_classes = 0;
};

SurpriseReferences surprise_references(const ActivationProvider& provider, const Matrix& train,
                                       int num_classes);

class DsaScorer {
 public:
  explicit DsaScorer(SurpriseReferences refs);
  double score(const Vector& activation, int predicted) const;

 private:
  SurpriseReferences refs_;
};

/// Gaussian product-kernel density per predicted class, per-dimension
/// bandwidth sigma_j * n^(-1/(d+4)) (Scott). Dimensions with no variance in a
/// class are dropped for that class.
class KdeScorer {
 public:
  explicit KdeScorer(SurpriseReferences refs);
  double log_density(const Vector& activation, int predicted) const;

 private:
  struct ClassModel {
    Matrix points;  // kept dimensions only
    std::vector<Eigen::Index> dims;
    Vector bandwidth;
  };
  std::vector<ClassModel> classes_;
};

double dsa(const ActivationProvider& provider, const Vector& x, const SurpriseReferences& refs);
/// Log density of the last-hidden activation under its predicted class. Kept in
/// log space: far-off inputs underflow a plain density to zero.
double kde_score(const ActivationProvider& provider, const Vector& x, const SurpriseReferences& refs);

enum class Direction { Descending, Ascending };

struct RankedEntry {
  std::size_t id = 0;
  double score = 0.0;
};

struct RankedList {
  std::vector<RankedEntry> entries;
  Direction direction = Direction::Descending;

  std::vector<std::size_t> top_ids(std::size_t k) const;
  void write_csv(std::ostream& out, std::size_t k) const;
};

RankedList random_rank(std::span<const std::size_t> ids, Seed seed);
/// Stable sort of scores in the given direction with id tie-break.
RankedList rank_by(std::span<const std::size_t> ids, std::span<const double> scores, Direction dir);

enum class BaselineMethod { Random, Gini, PE, MaxP, NAC, NBC, DSA, KDE };
const char* to_string(BaselineMethod m);
BaselineMethod baseline_from_string(const std::string& name);
std::vector<BaselineMethod> all_baselines();

struct BaselineParams {
  double nac_threshold = 0.75;
  Seed seed = 0;
};

/// Scores every row of `candidates` with the given method and ranks them.
RankedList rank_baseline(BaselineMethod method, const Network& mut, const Matrix& mut_train,
                         const Matrix& candidates, std::span<const std::size_t> ids,
                         const BaselineParams& params);

}  // namespace lbt
