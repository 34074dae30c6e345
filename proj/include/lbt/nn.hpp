#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbt/types.hpp"

namespace lbt {

class LabeledSet;

enum class LayerKind { Dense, ReLU, Softmax };

struct Layer {
  LayerKind kind = LayerKind::Dense;
  Eigen::MatrixXd weight;  // out x in, Dense only
  Vector bias;             // out, Dense only

  static Layer dense(Eigen::MatrixXd w, Vector b);
  static Layer relu() { return {LayerKind::ReLU, {}, {}}; }
  static Layer softmax() { return {LayerKind::Softmax, {}, {}}; }

  bool is_dense() const { return kind == LayerKind::Dense; }
  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

/// Feedforward classifier made of Dense/ReLU layers and a final Softmax.
/// Treated as a value: copying a Network copies its weights.
class Network {
 public:
  Network(int input_dim, std::vector<Layer> layers);

  /// Dense -> ReLU -> ... -> Dense -> Softmax over `sizes` (input first,
  /// classes last), Glorot-uniform weights, zero biases.
  static Network mlp(std::span<const int> sizes, Seed seed);
  static Network mlp(std::initializer_list<int> sizes, Seed seed) {
    return mlp(std::span<const int>(sizes.begin(), sizes.size()), seed);
  }

  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }

  const std::vector<Layer>& layers() const { return layers_; }
  /// Mutable access for mutation operators and training. Callers must keep
  /// the shapes intact.
  std::vector<Layer>& layers() { return layers_; }

  std::size_t parameter_count() const;
  std::uint64_t weights_hash() const;

  bool operator==(const Network& other) const;

 private:
  void validate();

  int input_dim_ = 0;
  int num_classes_ = 0;
  std::vector<Layer> layers_;
};

/// Pre-softmax scores.
Vector logits(const Network& net, const Vector& x);
/// Softmax probabilities; sums to one.
Vector forward(const Network& net, const Vector& x);
/// Row-wise probabilities for a batch (n x C).
Matrix forward_batch(const Network& net, const Matrix& xs);

/// Per-layer outputs for a single input: entry 0 is the input itself, entry
/// i is the output of layer i-1.
std::vector<Vector> forward_trace(const Network& net, const Vector& x);

/// Argmax with ties going to the lowest index.
int argmax(const Vector& v);
std::vector<int> predict(const Network& net, const Matrix& xs);
int predict_one(const Network& net, const Vector& x);
double accuracy(const Network& net, const LabeledSet& set);

struct LayerGradient {
  Eigen::MatrixXd weight;
  Vector bias;
};
/// One entry per layer; non-Dense layers carry empty matrices.
using Gradients = std::vector<LayerGradient>;

/// Mean cross-entropy over the labeled rows.
double mean_loss(const Network& net, const Matrix& xs, std::span<const int> ys);

Gradients param_gradients(const Network& net, const LabeledSet& batch);
Gradients param_gradients(const Network& net, const Matrix& xs, std::span<const int> ys);

enum class GradientOf { Logit, Loss };
Vector input_gradient(const Network& net, const Vector& x, int class_c, GradientOf of);
/// d logit_c / d x for every class at once (C x input_dim).
Matrix logit_jacobian(const Network& net, const Vector& x);

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 20;
  int batch_size = 32;
  Seed seed = 0;
  double l2 = 0.0;

  void validate() const;
};

/// Mini-batch SGD on mean cross-entropy (+ l2/2 * ||W||^2). Bit-identical for
/// identical inputs.
Network sgd_train(Network net, const LabeledSet& train, const TrainConfig& cfg);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

}  // namespace lbt
