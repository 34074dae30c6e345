#pragma once

// Independent reference implementations used only by the tests: finite
// differences for gradients and direct transcriptions of the metric
// definitions. None of these call into the code paths they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "lbt/nn.hpp"

namespace lbt::oracle {

inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Random Dense/ReLU network: 1-3 dense layers, widths 2..8.
inline Network random_net(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> depth(1, 3);
  std::uniform_int_distribution<int> width(2, 8);
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  std::uniform_real_distribution<double> b(-0.5, 0.5);
  const int layers = depth(rng);
  int in = width(rng);
  const int input_dim = in;
  std::vector<Layer> out;
  for (int l = 0; l < layers; ++l) {
    const int o = width(rng);
    Eigen::MatrixXd wm(o, in);
    Vector bv(o);
    for (int r = 0; r < o; ++r) {
      for (int c = 0; c < in; ++c) wm(r, c) = w(rng);
      bv(r) = b(rng);
    }
    out.push_back(Layer::dense(wm, bv));
    if (l + 1 < layers) out.push_back(Layer::relu());
    in = o;
  }
  out.push_back(Layer::softmax());
  return Network(input_dim, std::move(out));
}

/// True when no ReLU pre-activation of any row lies within `margin` of zero,
/// so a finite-difference step cannot cross a kink.
inline bool kink_free(const Network& net, const Matrix& xs, double margin = 1e-3) {
  for (Eigen::Index r = 0; r < xs.rows(); ++r) {
    const auto acts = forward_trace(net, xs.row(r).transpose());
    for (std::size_t i = 0; i < net.layers().size(); ++i)
      if (net.layers()[i].kind == LayerKind::ReLU && (acts[i].array().abs() < margin).any()) return false;
  }
  return true;
}

inline double ce_loss(const Network& net, const Matrix& xs, const std::vector<int>& ys) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < xs.rows(); ++r)
    total -= std::log(forward(net, xs.row(r).transpose())(ys[static_cast<std::size_t>(r)]));
  return total / static_cast<double>(xs.rows());
}

/// Central differences of the mean cross-entropy w.r.t. every weight and bias.
inline Gradients fd_param_gradients(const Network& net, const Matrix& xs, const std::vector<int>& ys,
                                    double h = 1e-5) {
  Gradients g(net.layers().size());
  Network probe = net;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    if (!net.layers()[l].is_dense()) continue;
    auto& W = probe.layers()[l].weight;
    auto& B = probe.layers()[l].bias;
    g[l].weight.resize(W.rows(), W.cols());
    g[l].bias.resize(B.size());
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        const double keep = W(r, c);
        W(r, c) = keep + h;
        const double up = ce_loss(probe, xs, ys);
        W(r, c) = keep - h;
        const double down = ce_loss(probe, xs, ys);
        W(r, c) = keep;
        g[l].weight(r, c) = (up - down) / (2 * h);
      }
      const double keep = B(r);
      B(r) = keep + h;
      const double up = ce_loss(probe, xs, ys);
      B(r) = keep - h;
      const double down = ce_loss(probe, xs, ys);
      B(r) = keep;
      g[l].bias(r) = (up - down) / (2 * h);
    }
  }
  return g;
}

inline Vector fd_input_gradient(const Network& net, const Vector& x, int c, GradientOf of, double h = 1e-5) {
  auto objective = [&](const Vector& v) {
    if (of == GradientOf::Logit) return logits(net, v)(c);
    return -std::log(forward(net, v)(c));
  };
  Vector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector up = x, down = x;
    up(j) += h;
    down(j) -= h;
    g(j) = (objective(up) - objective(down)) / (2 * h);
  }
  return g;
}

// ---- metric definitions, transcribed literally ----

struct Case {
  std::vector<std::size_t> order;  // permutation of ids
  std::map<std::size_t, int> truth;
  std::map<std::size_t, int> pred;
  bool fault(std::size_t id) const { return truth.at(id) != pred.at(id); }
};

inline double brute_fdr(const Case& c, const std::vector<std::size_t>& selected) {
  int all_faults = 0;
  for (const auto& [id, t] : c.truth) all_faults += c.fault(id) ? 1 : 0;
  int hits = 0;
  for (auto id : selected) hits += c.fault(id) ? 1 : 0;
  const double denom = static_cast<double>(std::min<std::size_t>(selected.size(), static_cast<std::size_t>(all_faults)));
  return hits / denom;
}

inline double apfd_formula(const std::vector<int>& positions, int n) {
  double sum = 0;
  for (int p : positions) sum += p;
  const double k = static_cast<double>(positions.size());
  return 1.0 - sum / (k * n) + 1.0 / (2.0 * n);
}

inline std::pair<double, double> brute_apfd(const Case& c) {
  const int n = static_cast<int>(c.order.size());
  std::vector<int> positions;
  for (int i = 0; i < n; ++i)
    if (c.fault(c.order[static_cast<std::size_t>(i)])) positions.push_back(i + 1);
  const int k = static_cast<int>(positions.size());
  // Explicit best and worst orderings.
  std::vector<std::size_t> best, worst, faults, clean;
  for (auto id : c.order) (c.fault(id) ? faults : clean).push_back(id);
  best = faults;
  best.insert(best.end(), clean.begin(), clean.end());
  worst = clean;
  worst.insert(worst.end(), faults.begin(), faults.end());
  auto positions_of = [&](const std::vector<std::size_t>& ord) {
    std::vector<int> p;
    for (int i = 0; i < n; ++i)
      if (c.fault(ord[static_cast<std::size_t>(i)])) p.push_back(i + 1);
    return p;
  };
  const double raw = apfd_formula(positions, n);
  const double hi = apfd_formula(positions_of(best), n);
  const double lo = apfd_formula(positions_of(worst), n);
  (void)k;
  return {raw, hi == lo ? 1.0 : (raw - lo) / (hi - lo)};
}

inline double brute_rauc(const Case& c) {
  std::set<std::pair<int, int>> all;
  for (auto id : c.order)
    if (c.fault(id)) all.insert({c.truth.at(id), c.pred.at(id)});
  const std::size_t T = all.size();
  double area = 0, ideal = 0;
  for (std::size_t i = 1; i <= c.order.size(); ++i) {
    std::set<std::pair<int, int>> prefix;
    for (std::size_t j = 0; j < i; ++j) {
      const auto id = c.order[j];
      if (c.fault(id)) prefix.insert({c.truth.at(id), c.pred.at(id)});
    }
    area += static_cast<double>(prefix.size());
    ideal += static_cast<double>(std::min(i, T));
  }
  return area / ideal;
}

/// Random instance with n <= 50 tests, C <= 5 classes and at least one fault.
inline Case random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nd(1, 50), cd(2, 5);
  const int n = nd(rng), C = cd(rng);
  std::uniform_int_distribution<int> label(0, C - 1);
  std::bernoulli_distribution flip(std::uniform_real_distribution<double>(0.05, 0.95)(rng));
  Case c;
  for (int i = 0; i < n; ++i) {
    const auto id = static_cast<std::size_t>(1000 + 3 * i);
    c.order.push_back(id);
    const int t = label(rng);
    int p = t;
    if (flip(rng)) p = (t + 1 + label(rng) % (C - 1)) % C;
    c.truth[id] = t;
    c.pred[id] = p;
  }
  bool any = false;
  for (auto id : c.order) any = any || c.fault(id);
  if (!any) c.pred[c.order[0]] = (c.truth[c.order[0]] + 1) % C;
  std::shuffle(c.order.begin(), c.order.end(), rng);
  return c;
}

/// True when `follower` scores never increase (beyond tol) along the order
/// given by sorting `leader` descending: the two rankings coincide up to ties.
inline bool same_ranking_modulo_ties(const std::vector<double>& leader, const std::vector<double>& follower,
                                     double tol = 1e-12) {
  std::vector<std::size_t> idx(leader.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return leader[a] > leader[b]; });
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    const double dl = leader[idx[i]] - leader[idx[i + 1]];
    const double df = follower[idx[i]] - follower[idx[i + 1]];
    if (dl > tol && df < -tol) return false;
  }
  return true;
}

}  // namespace lbt::oracle
