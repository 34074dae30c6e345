#include "lbt/surrogate.hpp"

#include <algorithm>
#include <ostream>

#include "lbt/error.hpp"

namespace lbt {

std::vector<int> LabelOracle::query(const Matrix& xs) {
  auto labels = answer(xs);
  require(labels.size() == static_cast<std::size_t>(xs.rows()), ErrorCode::ContractViolation,
          "oracle returned " + std::to_string(labels.size()) + " labels for " + std::to_string(xs.rows()) +
              " rows");
  queries_ += labels.size();
  return labels;
}

std::vector<int> NetworkOracle::answer(const Matrix& xs) { return predict(net_, xs); }

void SurrogateConfig::validate() const {
  require(tau > 0.0 && tau <= 1.0, ErrorCode::Config, "tau must lie in (0, 1]");
  require(patience >= 1, ErrorCode::Config, "patience must be positive");
  require(lambda >= 0.0 && lambda <= 0.5, ErrorCode::Config, "lambda must lie in [0, 0.5]");
  require(max_rounds >= 1, ErrorCode::Config, "max_rounds must be positive");
  train.validate();
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Threshold: return "threshold";
    case Termination::Patience: return "patience";
    case Termination::MaxRounds: return "max_rounds";
  }
  return "?";
}

void SimilarityTrace::write_csv(std::ostream& out) const {
  out << "round,S_size,similarity,added\n";
  for (const auto& r : rounds) out << r.round << ',' << r.s_size << ',' << r.similarity << ',' << r.added << '\n';
}

double similarity(const Network& b, std::span<const int> oracle_labels, const Matrix& x_val) {
  require(oracle_labels.size() == static_cast<std::size_t>(x_val.rows()), ErrorCode::Shape,
          "similarity: label count does not match validation rows");
  require(x_val.rows() > 0, ErrorCode::Domain, "similarity over an empty validation set");
  const auto pred = predict(b, x_val);
  std::size_t same = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) same += pred[i] == oracle_labels[i];
  return static_cast<double>(same) / static_cast<double>(pred.size());
}

Matrix jacobian_augment(const Network& b, const LabeledSet& s, double lambda) {
  const auto& ys = s.ys();
  Matrix out = s.xs();
  if (lambda == 0.0) return out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vector g = input_gradient(b, s.row(i), ys[i], GradientOf::Logit);
    auto row = out.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      const double step = g(j) > 0.0 ? lambda : (g(j) < 0.0 ? -lambda : 0.0);
      row(j) = std::clamp(row(j) + step, 0.0, 1.0);
    }
  }
  return out;
}

SurrogateResult build_surrogate(Network b0, LabelOracle& oracle, const LabeledSet& x,
                                const LabeledSet& x_val, const SurrogateConfig& cfg) {
  cfg.validate();
  require(!x.empty() && !x_val.empty(), ErrorCode::Domain, "surrogate needs non-empty X and X_val");
  const std::size_t queries_before = oracle.query_count();

  LabeledSet s = x.unlabeled().relabeled(oracle.query(x.xs()));
  const auto y_val = oracle.query(x_val.xs());

  SurrogateResult res{std::move(b0), {}};
  double best = 0.0;
  int no_improvement = 0;
  for (int round = 1;; ++round) {
    TrainConfig train = cfg.train;
    train.seed = derive_seed(cfg.train.seed, static_cast<std::uint64_t>(round));
    res.model = sgd_train(std::move(res.model), s, train);

    RoundRecord rec{round, s.size(), similarity(res.model, y_val, x_val.xs()), 0};
    res.trace.rounds.push_back(rec);
    if (rec.similarity > cfg.tau) {
      res.trace.reason = Termination::Threshold;
      break;
    }
    if (rec.similarity > best + 1e-6) {
      best = rec.similarity;
      no_improvement = 0;
    } else {
      ++no_improvement;
    }
    if (no_improvement >= cfg.patience) {
      res.trace.reason = Termination::Patience;
      break;
    }
    if (round >= cfg.max_rounds) {
      res.trace.reason = Termination::MaxRounds;
      break;
    }

    const Matrix augmented = jacobian_augment(res.model, s, cfg.lambda);
    const auto oracle_labels = oracle.query(augmented);
    const auto own_labels = predict(res.model, augmented);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < oracle_labels.size(); ++i)
      if (oracle_labels[i] != own_labels[i]) keep.push_back(i);
    if (!keep.empty()) {
      Matrix added(static_cast<Eigen::Index>(keep.size()), augmented.cols());
      std::vector<int> added_labels;
      std::vector<std::size_t> added_ids;
      const std::size_t next_id = *std::max_element(s.ids().begin(), s.ids().end()) + 1;
      for (std::size_t k = 0; k < keep.size(); ++k) {
        added.row(static_cast<Eigen::Index>(k)) = augmented.row(static_cast<Eigen::Index>(keep[k]));
        added_labels.push_back(oracle_labels[keep[k]]);
        added_ids.push_back(next_id + k);
      }
      s = s.concat(LabeledSet(std::move(added), std::move(added_labels), s.num_classes(), std::move(added_ids)));
    }
    res.trace.rounds.back().added = keep.size();
  }
  res.trace.oracle_queries = oracle.query_count() - queries_before;
  return res;
}

void to_json(nlohmann::json& j, const SurrogateConfig& cfg) {
  j = {{"tau", cfg.tau},
       {"patience", cfg.patience},
       {"lambda", cfg.lambda},
       {"max_rounds", cfg.max_rounds},
       {"train", cfg.train}};
}

void from_json(const nlohmann::json& j, SurrogateConfig& cfg) {
  cfg.tau = j.value("tau", cfg.tau);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.max_rounds = j.value("max_rounds", cfg.max_rounds);
  if (j.contains("train")) from_json(j.at("train"), cfg.train);
}

}  // namespace lbt
