#include "lbt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

#include "lbt/error.hpp"

namespace lbt {

Vector NetworkActivationProvider::probabilities(const Vector& x) const { return forward(net_, x); }

std::vector<Vector> NetworkActivationProvider::neurons(const Vector& x) const {
  const auto acts = forward_trace(net_, x);
  std::vector<Vector> out;
  const auto& layers = net_.layers();
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::ReLU) out.push_back(acts[i + 1]);
  return out;
}

Vector NetworkActivationProvider::last_hidden(const Vector& x) const {
  auto layers = neurons(x);
  require(!layers.empty(), ErrorCode::Domain, "network has no hidden layer");
  return std::move(layers.back());
}

namespace {

void check_probs(const Vector& p) {
  require(p.size() >= 1 && (p.array() >= -1e-12).all() && (p.array() <= 1.0 + 1e-12).all(), ErrorCode::Domain,
          "probability entries must lie in [0, 1]");
  require(std::abs(p.sum() - 1.0) <= 1e-6, ErrorCode::Domain, "probability vector does not sum to 1");
}

}  // namespace

double gini(const Vector& probs) {
  check_probs(probs);
  return 1.0 - probs.squaredNorm();
}

double pe(const Vector& probs) {
  check_probs(probs);
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    if (probs(i) > 0.0) h -= probs(i) * std::log(probs(i));
  return h;
}

double maxp(const Vector& probs) {
  check_probs(probs);
  return probs.maxCoeff();
}

std::vector<Vector> min_max_scale(std::span<const Vector> layers) {
  std::vector<Vector> out;
  for (const auto& a : layers) {
    if (a.size() == 0) {
      out.push_back(a);
      continue;
    }
    const double lo = a.minCoeff();
    const double hi = a.maxCoeff();
    out.push_back(hi > lo ? Vector((a.array() - lo) / (hi - lo)) : Vector::Zero(a.size()));
  }
  return out;
}

double nac_score(std::span<const Vector> scaled, double t) {
  require(t > 0.0 && t < 1.0, ErrorCode::Config, "NAC threshold must lie in (0, 1)");
  std::size_t total = 0;
  std::size_t covered = 0;
  for (const auto& a : scaled) {
    total += static_cast<std::size_t>(a.size());
    covered += static_cast<std::size_t>((a.array() > t).count());
  }
  require(total > 0, ErrorCode::Domain, "NAC needs at least one neuron");
  return static_cast<double>(covered) / static_cast<double>(total);
}

double nac(const ActivationProvider& provider, const Vector& x, double t) {
  const auto layers = provider.neurons(x);
  return nac_score(min_max_scale(layers), t);
}

NeuronBounds neuron_bounds(const ActivationProvider& provider, const Matrix& train) {
  require(train.rows() > 0, ErrorCode::Domain, "neuron bounds need training rows");
  NeuronBounds b;
  for (Eigen::Index r = 0; r < train.rows(); ++r) {
    const auto layers = provider.neurons(train.row(r).transpose());
    if (r == 0) {
      b.low = layers;
      b.high = layers;
      continue;
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      b.low[l] = b.low[l].cwiseMin(layers[l]);
      b.high[l] = b.high[l].cwiseMax(layers[l]);
    }
  }
  return b;
}

double nbc_score(std::span<const Vector> layers, const NeuronBounds& bounds) {
  require(bounds.low.size() == layers.size() && bounds.high.size() == layers.size(), ErrorCode::Config,
          "NBC bounds do not cover every layer");
  std::size_t total = 0;
  std::size_t outside = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    require(bounds.low[l].size() == a.size() && bounds.high[l].size() == a.size(), ErrorCode::Config,
            "NBC bounds missing for neurons of layer " + std::to_string(l));
    total += static_cast<std::size_t>(a.size());
    outside += static_cast<std::size_t>(((a.array() < bounds.low[l].array()) || (a.array() > bounds.high[l].array())).count());
  }
  require(total > 0, ErrorCode::Domain, "NBC needs at least one neuron");
  return static_cast<double>(outside) / static_cast<double>(total);
}

double nbc(const ActivationProvider& provider, const Vector& x, const NeuronBounds& bounds) {
  const auto layers = provider.neurons(x);
  return nbc_score(layers, bounds);
}

SurpriseReferences surprise_references(const ActivationProvider& provider, const Matrix& train, int num_classes) {
  require(train.rows() > 0, ErrorCode::Domain, "surprise references need training rows");
  SurpriseReferences refs;
  refs.num_classes = num_classes;
  for (Eigen::Index r = 0; r < train.rows(); ++r) {
    const Vector x = train.row(r).transpose();
    const Vector a = provider.last_hidden(x);
    if (r == 0) refs.activations.resize(train.rows(), a.size());
    refs.activations.row(r) = a.transpose();
    refs.labels.push_back(argmax(provider.probabilities(x)));
  }
  return refs;
}

namespace {

void check_class(const SurpriseReferences& refs, int cls, std::size_t count) {
  require(cls >= 0 && cls < refs.num_classes, ErrorCode::Domain, "predicted class out of range");
  require(count >= 2, ErrorCode::Domain,
          "degenerate class " + std::to_string(cls) + ": " + std::to_string(count) + " reference(s), need 2");
}

}  // namespace

DsaScorer::DsaScorer(SurpriseReferences refs) : refs_(std::move(refs)) {
  require(refs_.labels.size() == static_cast<std::size_t>(refs_.activations.rows()), ErrorCode::Shape,
          "DSA references: label count does not match activation rows");
  for (int c = 0; c < refs_.num_classes; ++c)
    check_class(refs_, c, static_cast<std::size_t>(std::count(refs_.labels.begin(), refs_.labels.end(), c)));
}

double DsaScorer::score(const Vector& activation, int predicted) const {
  const auto& acts = refs_.activations;
  require(activation.size() == acts.cols(), ErrorCode::Shape, "DSA activation width mismatch");
  Eigen::Index nearest = -1;
  double dist_a = std::numeric_limits<double>::infinity();
  std::size_t same = 0;
  for (Eigen::Index r = 0; r < acts.rows(); ++r) {
    if (refs_.labels[static_cast<std::size_t>(r)] != predicted) continue;
    ++same;
    const double d = (acts.row(r).transpose() - activation).norm();
    if (d < dist_a) {
      dist_a = d;
      nearest = r;
    }
  }
  check_class(refs_, predicted, same);
  const Vector anchor = acts.row(nearest).transpose();
  double dist_b = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < acts.rows(); ++r) {
    if (refs_.labels[static_cast<std::size_t>(r)] == predicted) continue;
    dist_b = std::min(dist_b, (acts.row(r).transpose() - anchor).norm());
  }
  require(std::isfinite(dist_b), ErrorCode::Domain, "DSA needs references from another class");
  if (dist_b == 0.0) return dist_a == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return dist_a / dist_b;
}

KdeScorer::KdeScorer(SurpriseReferences refs) {
  require(refs.labels.size() == static_cast<std::size_t>(refs.activations.rows()), ErrorCode::Shape,
          "KDE references: label count does not match activation rows");
  classes_.resize(static_cast<std::size_t>(refs.num_classes));
  for (int c = 0; c < refs.num_classes; ++c) {
    std::vector<Eigen::Index> rows;
    for (std::size_t r = 0; r < refs.labels.size(); ++r)
      if (refs.labels[r] == c) rows.push_back(static_cast<Eigen::Index>(r));
    auto& model = classes_[static_cast<std::size_t>(c)];
    require(rows.size() >= 2, ErrorCode::Domain,
            "degenerate class " + std::to_string(c) + ": " + std::to_string(rows.size()) + " reference(s), need 2");
    const auto n = static_cast<double>(rows.size());
    Matrix pts(static_cast<Eigen::Index>(rows.size()), refs.activations.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = refs.activations.row(rows[i]);
    const Eigen::RowVectorXd mean = pts.colwise().mean();
    std::vector<double> sd;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      const double var = (pts.col(j).array() - mean(j)).square().sum() / (n - 1.0);
      if (var > 1e-10) {
        model.dims.push_back(j);
        sd.push_back(std::sqrt(var));
      }
    }
    const auto d = static_cast<double>(model.dims.size());
    const double factor = std::pow(n, -1.0 / (d + 4.0));
    model.bandwidth.resize(static_cast<Eigen::Index>(sd.size()));
    for (std::size_t j = 0; j < sd.size(); ++j) model.bandwidth(static_cast<Eigen::Index>(j)) = sd[j] * factor;
    model.points.resize(pts.rows(), static_cast<Eigen::Index>(model.dims.size()));
    for (std::size_t j = 0; j < model.dims.size(); ++j)
      model.points.col(static_cast<Eigen::Index>(j)) = pts.col(model.dims[j]);
  }
}

double KdeScorer::log_density(const Vector& activation, int predicted) const {
  require(predicted >= 0 && static_cast<std::size_t>(predicted) < classes_.size(), ErrorCode::Domain,
          "predicted class out of range");
  const auto& m = classes_[static_cast<std::size_t>(predicted)];
  const auto n = static_cast<std::size_t>(m.points.rows());
  require(n >= 2, ErrorCode::Domain,
          "degenerate class " + std::to_string(predicted) + ": " + std::to_string(n) + " reference(s), need 2");
  if (m.dims.empty()) return 0.0;
  Vector x(static_cast<Eigen::Index>(m.dims.size()));
  for (std::size_t j = 0; j < m.dims.size(); ++j) x(static_cast<Eigen::Index>(j)) = activation(m.dims[j]);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector u = (m.points.row(static_cast<Eigen::Index>(i)).transpose() - x).cwiseQuotient(m.bandwidth);
    terms[i] = -0.5 * u.squaredNorm();
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  const double log_norm =
      (m.bandwidth.array() * std::sqrt(2.0 * std::numbers::pi)).log().sum() + std::log(static_cast<double>(n));
  return top + std::log(sum) - log_norm;
}

double dsa(const ActivationProvider& provider, const Vector& x, const SurpriseReferences& refs) {
  return DsaScorer(refs).score(provider.last_hidden(x), argmax(provider.probabilities(x)));
}

double kde_score(const ActivationProvider& provider, const Vector& x, const SurpriseReferences& refs) {
  return (KdeScorer(refs).log_density(provider.last_hidden(x), argmax(provider.probabilities(x))));
}

std::vector<std::size_t> RankedList::top_ids(std::size_t k) const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < std::min(k, entries.size()); ++i) ids.push_back(entries[i].id);
  return ids;
}

void RankedList::write_csv(std::ostream& out, std::size_t k) const {
  out << "input_id,rank,selection_iter,z,n,decision,score\n";
  for (std::size_t i = 0; i < entries.size(); ++i)
    out << entries[i].id << ',' << i + 1 << ",,,," << (i < k ? "selected" : "unselected") << ','
        << entries[i].score << '\n';
}

RankedList random_rank(std::span<const std::size_t> ids, Seed seed) {
  require(!ids.empty(), ErrorCode::Domain, "random_rank needs at least one id");
  std::vector<std::size_t> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  RankedList list;
  for (std::size_t i = 0; i < order.size(); ++i) list.entries.push_back({order[i], static_cast<double>(i)});
  list.direction = Direction::Ascending;
  return list;
}

RankedList rank_by(std::span<const std::size_t> ids, std::span<const double> scores, Direction dir) {
  require(!ids.empty(), ErrorCode::Domain, "rank_by needs at least one id");
  require(ids.size() == scores.size(), ErrorCode::Shape, "rank_by: ids and scores differ in length");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return dir == Direction::Descending ? scores[a] > scores[b] : scores[a] < scores[b];
    return ids[a] < ids[b];
  });
  RankedList list;
  list.direction = dir;
  for (std::size_t i : order) list.entries.push_back({ids[i], scores[i]});
  return list;
}

const char* to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::Random: return "random";
    case BaselineMethod::Gini: return "gini";
    case BaselineMethod::PE: return "pe";
    case BaselineMethod::MaxP: return "maxp";
    case BaselineMethod::NAC: return "nac";
    case BaselineMethod::NBC: return "nbc";
    case BaselineMethod::DSA: return "dsa";
    case BaselineMethod::KDE: return "kde";
  }
  return "?";
}

std::vector<BaselineMethod> all_baselines() {
  return {BaselineMethod::KDE, BaselineMethod::DSA, BaselineMethod::NAC,  BaselineMethod::NBC,
          BaselineMethod::Gini, BaselineMethod::MaxP, BaselineMethod::PE, BaselineMethod::Random};
}

BaselineMethod baseline_from_string(const std::string& name) {
  for (auto m : all_baselines())
    if (name == to_string(m)) return m;
  fail(ErrorCode::Config, "unknown baseline method '" + name + "'");
}

RankedList rank_baseline(BaselineMethod method, const Network& mut, const Matrix& mut_train,
                         const Matrix& candidates, std::span<const std::size_t> ids, const BaselineParams& params) {
  require(static_cast<std::size_t>(candidates.rows()) == ids.size(), ErrorCode::Shape,
          "baseline candidates and ids differ in length");
  if (method == BaselineMethod::Random) return random_rank(ids, params.seed);

  const NetworkActivationProvider provider(mut);
  std::vector<double> scores(ids.size());
  Direction dir = Direction::Descending;
  auto each = [&](auto&& fn) {
    for (Eigen::Index r = 0; r < candidates.rows(); ++r)
      scores[static_cast<std::size_t>(r)] = fn(Vector(candidates.row(r).transpose()));
  };
  switch (method) {
    case BaselineMethod::Gini: each([&](const Vector& x) { return gini(provider.probabilities(x)); }); break;
    case BaselineMethod::PE: each([&](const Vector& x) { return pe(provider.probabilities(x)); }); break;
    case BaselineMethod::MaxP:
      dir = Direction::Ascending;
      each([&](const Vector& x) { return maxp(provider.probabilities(x)); });
      break;
    case BaselineMethod::NAC: each([&](const Vector& x) { return nac(provider, x, params.nac_threshold); }); break;
    case BaselineMethod::NBC: {
      const auto bounds = neuron_bounds(provider, mut_train);
      each([&](const Vector& x) { return nbc(provider, x, bounds); });
      break;
    }
    case BaselineMethod::DSA: {
      const DsaScorer scorer(surprise_references(provider, mut_train, mut.num_classes()));
      each([&](const Vector& x) { return scorer.score(provider.last_hidden(x), argmax(provider.probabilities(x))); });
      break;
    }
    case BaselineMethod::KDE: {
      dir = Direction::Ascending;
      const KdeScorer scorer(surprise_references(provider, mut_train, mut.num_classes()));
      each([&](const Vector& x) {
        return scorer.log_density(provider.last_hidden(x), argmax(provider.probabilities(x)));
      });
      break;
    }
    case BaselineMethod::Random: break;
  }
  return rank_by(ids, scores, dir);
}

}  // namespace lbt
