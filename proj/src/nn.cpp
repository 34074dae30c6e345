#include "lbt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lbt/dataset.hpp"
#include "lbt/error.hpp"

namespace lbt {

Layer Layer::dense(Eigen::MatrixXd w, Vector b) {
  require(w.rows() == b.size(), ErrorCode::Shape, "dense layer: bias length does not match rows");
  return {LayerKind::Dense, std::move(w), std::move(b)};
}

Network::Network(int input_dim, std::vector<Layer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  validate();
}

void Network::validate() {
  require(input_dim_ >= 1, ErrorCode::Shape, "network input_dim must be positive");
  require(!layers_.empty() && layers_.back().kind == LayerKind::Softmax, ErrorCode::Shape,
          "network must end with a softmax layer");
  Eigen::Index width = input_dim_;
  int dense_count = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.kind == LayerKind::Softmax) {
      require(i + 1 == layers_.size(), ErrorCode::Shape, "softmax is only allowed as the last layer");
    } else if (l.is_dense()) {
      std::ostringstream msg;
      msg << "dense layer " << i << " expects " << l.in() << " inputs, previous width is " << width;
      require(l.in() == width && l.bias.size() == l.out() && l.out() >= 1, ErrorCode::Shape, msg.str());
      require(l.weight.allFinite() && l.bias.allFinite(), ErrorCode::Domain,
              "dense layer " + std::to_string(i) + " has non-finite parameters");
      width = l.out();
      ++dense_count;
    }
  }
  require(dense_count >= 1, ErrorCode::Shape, "network needs at least one dense layer");
  require(width >= 2, ErrorCode::Shape, "network needs at least two classes");
  num_classes_ = static_cast<int>(width);
}

Network Network::mlp(std::span<const int> sizes, Seed seed) {
  require(sizes.size() >= 2, ErrorCode::Shape, "mlp needs at least input and output sizes");
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int in = sizes[i];
    const int out = sizes[i + 1];
    require(in >= 1 && out >= 1, ErrorCode::Shape, "mlp layer sizes must be positive");
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> init(-limit, limit);
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = init(rng);
    layers.push_back(Layer::dense(std::move(w), Vector::Zero(out)));
    if (i + 2 < sizes.size()) layers.push_back(Layer::relu());
  }
  layers.push_back(Layer::softmax());
  return Network(sizes.front(), std::move(layers));
}

std::size_t Network::parameter_count() const {
  std::size_t count = 0;
  for (const auto& l : layers_)
    if (l.is_dense()) count += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return count;
}

std::uint64_t Network::weights_hash() const {
  std::uint64_t h = fnv1a(&input_dim_, sizeof input_dim_);
  for (const auto& l : layers_) {
    const int kind = static_cast<int>(l.kind);
    h = fnv1a(&kind, sizeof kind, h);
    if (!l.is_dense()) continue;
    const Eigen::Index dims[2] = {l.out(), l.in()};
    h = fnv1a(dims, sizeof dims, h);
    h = fnv1a(l.weight.data(), sizeof(double) * static_cast<std::size_t>(l.weight.size()), h);
    h = fnv1a(l.bias.data(), sizeof(double) * static_cast<std::size_t>(l.bias.size()), h);
  }
  return h;
}

bool Network::operator==(const Network& other) const {
  if (input_dim_ != other.input_dim_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& a = layers_[i];
    const Layer& b = other.layers_[i];
    if (a.kind != b.kind) return false;
    if (a.is_dense() && (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
                         a.weight != b.weight || a.bias != b.bias))
      return false;
  }
  return true;
}

namespace {

void check_input(const Network& net, Eigen::Index dim) {
  if (dim != net.input_dim()) {
    std::ostringstream msg;
    msg << "input has dimension " << dim << ", network expects " << net.input_dim();
    fail(ErrorCode::Shape, msg.str());
  }
}

Vector softmax(const Vector& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    row = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

// Batch activations: acts[0] = input, acts[i+1] = output of layer i. The
// softmax layer is not evaluated; acts.back() holds the logits.
std::vector<Matrix> batch_trace(const Network& net, const Matrix& xs) {
  check_input(net, xs.cols());
  std::vector<Matrix> acts;
  acts.reserve(net.layers().size());
  acts.push_back(xs);
  for (const auto& l : net.layers()) {
    const Matrix& h = acts.back();
    switch (l.kind) {
      case LayerKind::Dense: {
        Matrix next = h * l.weight.transpose();
        next.rowwise() += l.bias.transpose();
        acts.push_back(std::move(next));
        break;
      }
      case LayerKind::ReLU:
        acts.push_back(h.cwiseMax(0.0));
        break;
      case LayerKind::Softmax:
        break;
    }
  }
  return acts;
}

// Propagates d(objective)/d(logits) back through the network. Fills grads
// when non-null and returns d(objective)/d(input).
Matrix backprop(const Network& net, const std::vector<Matrix>& acts, Matrix delta, Gradients* grads) {
  const auto& layers = net.layers();
  if (grads) grads->assign(layers.size(), LayerGradient{});
  // acts[i] is the input of layer i for i < layers.size() - 1 (softmax skipped).
  for (std::size_t i = layers.size() - 1; i-- > 0;) {
    const Layer& l = layers[i];
    const Matrix& in = acts[i];
    if (l.is_dense()) {
      if (grads) {
        (*grads)[i].weight = delta.transpose() * in;
        (*grads)[i].bias = delta.colwise().sum().transpose();
      }
      delta = delta * l.weight;
    } else if (l.kind == LayerKind::ReLU) {
      delta = delta.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
    }
  }
  return delta;
}

void check_labels(const Network& net, std::span<const int> ys, Eigen::Index rows) {
  require(static_cast<Eigen::Index>(ys.size()) == rows, ErrorCode::Shape,
          "label count does not match row count");
  for (int y : ys)
    require(y >= 0 && y < net.num_classes(), ErrorCode::Domain,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(net.num_classes()) + ")");
}

// Mean cross-entropy and its gradient w.r.t. the logits.
double loss_and_delta(const Matrix& logits, std::span<const int> ys, Matrix* delta) {
  const auto n = logits.rows();
  Matrix probs = logits;
  softmax_rows(probs);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = logits.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    loss += lse - row(ys[static_cast<std::size_t>(r)]);
  }
  if (delta) {
    *delta = probs;
    for (Eigen::Index r = 0; r < n; ++r) (*delta)(r, ys[static_cast<std::size_t>(r)]) -= 1.0;
    *delta /= static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

}  // namespace

std::vector<Vector> forward_trace(const Network& net, const Vector& x) {
  check_input(net, x.size());
  std::vector<Vector> acts;
  acts.reserve(net.layers().size() + 1);
  acts.push_back(x);
  for (const auto& l : net.layers()) {
    const Vector& h = acts.back();
    switch (l.kind) {
      case LayerKind::Dense: acts.push_back(l.weight * h + l.bias); break;
      case LayerKind::ReLU: acts.push_back(h.cwiseMax(0.0)); break;
      case LayerKind::Softmax: acts.push_back(softmax(h)); break;
    }
  }
  return acts;
}

Vector logits(const Network& net, const Vector& x) {
  auto acts = forward_trace(net, x);
  return acts[acts.size() - 2];
}

Vector forward(const Network& net, const Vector& x) { return forward_trace(net, x).back(); }

Matrix forward_batch(const Network& net, const Matrix& xs) {
  auto acts = batch_trace(net, xs);
  Matrix probs = std::move(acts.back());
  softmax_rows(probs);
  return probs;
}

int argmax(const Vector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

std::vector<int> predict(const Network& net, const Matrix& xs) {
  // Argmax over logits equals argmax over softmax without the exp round-off.
  const auto acts = batch_trace(net, xs);
  const Matrix& z = acts.back();
  std::vector<int> labels(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < z.cols(); ++c)
      if (z(r, c) > z(r, best)) best = static_cast<int>(c);
    labels[static_cast<std::size_t>(r)] = best;
  }
  return labels;
}

int predict_one(const Network& net, const Vector& x) { return argmax(logits(net, x)); }

double accuracy(const Network& net, const LabeledSet& set) {
  require(!set.empty(), ErrorCode::Domain, "accuracy of an empty set");
  const auto pred = predict(net, set.xs());
  const auto& ys = set.ys();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ys[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double mean_loss(const Network& net, const Matrix& xs, std::span<const int> ys) {
  require(xs.rows() > 0, ErrorCode::Domain, "loss of an empty batch");
  check_labels(net, ys, xs.rows());
  const auto acts = batch_trace(net, xs);
  return loss_and_delta(acts.back(), ys, nullptr);
}

Gradients param_gradients(const Network& net, const Matrix& xs, std::span<const int> ys) {
  require(xs.rows() > 0, ErrorCode::Domain, "gradient of an empty batch");
  check_labels(net, ys, xs.rows());
  const auto acts = batch_trace(net, xs);
  Matrix delta;
  loss_and_delta(acts.back(), ys, &delta);
  Gradients grads;
  backprop(net, acts, std::move(delta), &grads);
  return grads;
}

Gradients param_gradients(const Network& net, const LabeledSet& batch) {
  require(batch.has_labels(), ErrorCode::Domain, "gradient needs labeled rows");
  return param_gradients(net, batch.xs(), batch.ys());
}

Vector input_gradient(const Network& net, const Vector& x, int class_c, GradientOf of) {
  require(class_c >= 0 && class_c < net.num_classes(), ErrorCode::Domain,
          "class " + std::to_string(class_c) + " outside [0, " + std::to_string(net.num_classes()) + ")");
  Matrix xs = x.transpose();
  const auto acts = batch_trace(net, xs);
  Matrix delta = Matrix::Zero(1, net.num_classes());
  if (of == GradientOf::Logit) {
    delta(0, class_c) = 1.0;
  } else {
    const int label[1] = {class_c};
    loss_and_delta(acts.back(), label, &delta);
  }
  return backprop(net, acts, std::move(delta), nullptr).row(0).transpose();
}

Matrix logit_jacobian(const Network& net, const Vector& x) {
  const auto acts = forward_trace(net, x);
  const auto& layers = net.layers();
  Matrix jac = Matrix::Identity(net.num_classes(), net.num_classes());
  for (std::size_t i = layers.size() - 1; i-- > 0;) {
    const Layer& l = layers[i];
    if (l.is_dense()) {
      jac = jac * l.weight;
    } else if (l.kind == LayerKind::ReLU) {
      const Vector mask = (acts[i].array() > 0.0).cast<double>();
      jac = jac * mask.asDiagonal();
    }
  }
  return jac;
}

void TrainConfig::validate() const {
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::Config,
          "learning_rate must be finite and non-negative");
  require(epochs >= 1, ErrorCode::Config, "epochs must be positive");
  require(batch_size >= 1, ErrorCode::Config, "batch_size must be positive");
  require(l2 >= 0.0, ErrorCode::Config, "l2 must be non-negative");
}

Network sgd_train(Network net, const LabeledSet& train, const TrainConfig& cfg) {
  cfg.validate();
  require(!train.empty(), ErrorCode::Domain, "training set is empty");
  require(train.has_labels(), ErrorCode::Domain, "training set needs labels");
  check_input(net, train.dim());
  check_labels(net, train.ys(), static_cast<Eigen::Index>(train.size()));

  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  Matrix xb;
  std::vector<int> yb;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      xb.resize(static_cast<Eigen::Index>(len), train.dim());
      yb.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = train.xs().row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = train.ys()[order[start + i]];
      }
      const auto acts = batch_trace(net, xb);
      Matrix delta;
      epoch_loss += loss_and_delta(acts.back(), yb, &delta) * static_cast<double>(len);
      Gradients grads;
      backprop(net, acts, std::move(delta), &grads);
      for (std::size_t i = 0; i < net.layers().size(); ++i) {
        Layer& l = net.layers()[i];
        if (!l.is_dense()) continue;
        if (cfg.l2 > 0.0) grads[i].weight += cfg.l2 * l.weight;
        l.weight -= cfg.learning_rate * grads[i].weight;
        l.bias -= cfg.learning_rate * grads[i].bias;
      }
    }
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorCode::TrainingDiverged, "training diverged in epoch " + std::to_string(epoch + 1) +
                                            ": loss is not finite");
    }
  }
  for (const auto& l : net.layers())
    if (l.is_dense() && !(l.weight.allFinite() && l.bias.allFinite()))
      fail(ErrorCode::TrainingDiverged, "training diverged: non-finite weights after final epoch");
  return net;
}

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

constexpr int kWeightsVersion = 1;

}  // namespace

nlohmann::json to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json j{{"kind", kind_name(l.kind)}};
    if (l.is_dense()) {
      j["in"] = l.in();
      j["out"] = l.out();
      nlohmann::json w = nlohmann::json::array();
      for (Eigen::Index r = 0; r < l.out(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(l.in()));
        for (Eigen::Index c = 0; c < l.in(); ++c) row[static_cast<std::size_t>(c)] = l.weight(r, c);
        w.push_back(std::move(row));
      }
      j["W"] = std::move(w);
      j["b"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    }
    layers.push_back(std::move(j));
  }
  return {{"version", kWeightsVersion},
          {"input_dim", net.input_dim()},
          {"num_classes", net.num_classes()},
          {"layers", std::move(layers)}};
}

Network network_from_json(const nlohmann::json& doc) {
  try {
    require(doc.at("version").get<int>() == kWeightsVersion, ErrorCode::Format,
            "unsupported weights version " + doc.at("version").dump());
    const int input_dim = doc.at("input_dim").get<int>();
    std::vector<Layer> layers;
    for (const auto& j : doc.at("layers")) {
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "relu") {
        layers.push_back(Layer::relu());
      } else if (kind == "softmax") {
        layers.push_back(Layer::softmax());
      } else if (kind == "dense") {
        const auto in = j.at("in").get<Eigen::Index>();
        const auto out = j.at("out").get<Eigen::Index>();
        const auto& w = j.at("W");
        const auto& b = j.at("b");
        require(static_cast<Eigen::Index>(w.size()) == out && static_cast<Eigen::Index>(b.size()) == out,
                ErrorCode::Shape, "dense layer W/b row count does not match out");
        Eigen::MatrixXd weight(out, in);
        Vector bias(out);
        for (Eigen::Index r = 0; r < out; ++r) {
          const auto& row = w[static_cast<std::size_t>(r)];
          require(static_cast<Eigen::Index>(row.size()) == in, ErrorCode::Shape,
                  "dense layer W row length does not match in");
          for (Eigen::Index c = 0; c < in; ++c) weight(r, c) = row[static_cast<std::size_t>(c)].get<double>();
          bias(r) = b[static_cast<std::size_t>(r)].get<double>();
        }
        layers.push_back(Layer::dense(std::move(weight), std::move(bias)));
      } else {
        fail(ErrorCode::Format, "unknown layer kind '" + kind + "'");
      }
    }
    Network net(input_dim, std::move(layers));
    require(net.num_classes() == doc.at("num_classes").get<int>(), ErrorCode::Shape,
            "num_classes does not match the last dense layer");
    return net;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed weights document: ") + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
  out << to_json(net).dump() << '\n';
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path.string() + ": " + e.what());
  }
  return network_from_json(doc);
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = {{"learning_rate", cfg.learning_rate},
       {"epochs", cfg.epochs},
       {"batch_size", cfg.batch_size},
       {"seed", cfg.seed},
       {"l2", cfg.l2}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.l2 = j.value("l2", cfg.l2);
}

}  // namespace lbt
