#include "lbt/mutation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "lbt/error.hpp"

namespace lbt {

const char* to_string(MutationOperator op) {
  switch (op) {
    case MutationOperator::GF: return "GF";
    case MutationOperator::WS: return "WS";
    case MutationOperator::NAI: return "NAI";
    case MutationOperator::NS: return "NS";
  }
  return "?";
}

MutationOperator mutation_operator_from_string(const std::string& name) {
  for (auto op : {MutationOperator::GF, MutationOperator::WS, MutationOperator::NAI, MutationOperator::NS})
    if (name == to_string(op)) return op;
  fail(ErrorCode::Config, "unknown mutation operator '" + name + "'");
}

namespace {

struct Neuron {
  std::size_t layer;
  Eigen::Index row;
};

// Hidden dense layers (followed by ReLU); a network without hidden layers
// falls back to its output layer.
std::vector<std::size_t> neuron_layers(const Network& net) {
  std::vector<std::size_t> hidden;
  std::vector<std::size_t> dense;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].is_dense()) continue;
    dense.push_back(i);
    if (i + 1 < layers.size() && layers[i + 1].kind == LayerKind::ReLU) hidden.push_back(i);
  }
  return hidden.empty() ? dense : hidden;
}

std::vector<Neuron> neurons(const Network& net) {
  std::vector<Neuron> out;
  for (std::size_t l : neuron_layers(net))
    for (Eigen::Index r = 0; r < net.layers()[l].out(); ++r) out.push_back({l, r});
  return out;
}

std::size_t total_weights(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers())
    if (l.is_dense()) n += static_cast<std::size_t>(l.weight.size());
  return n;
}

std::size_t rounded(double v) { return static_cast<std::size_t>(std::llround(v)); }

template <typename T>
std::vector<T> sample(const std::vector<T>& from, std::size_t k, std::mt19937_64& rng) {
  std::vector<T> out;
  out.reserve(k);
  std::sample(from.begin(), from.end(), std::back_inserter(out), k, rng);
  return out;
}

void gaussian_fuzz(Network& net, const MutantSpec& spec, std::size_t count, std::mt19937_64& rng) {
  auto& layers = net.layers();
  std::vector<std::size_t> dense;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].is_dense()) continue;
    dense.push_back(i);
    offsets.push_back(total);
    total += static_cast<std::size_t>(layers[i].weight.size());
  }
  std::vector<double> stddev;
  for (std::size_t i : dense) {
    const auto& w = layers[i].weight;
    const double mean = w.mean();
    stddev.push_back(std::sqrt((w.array() - mean).square().mean()));
  }
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t flat : sample(all, count, rng)) {
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat) - 1;
    const auto li = static_cast<std::size_t>(it - offsets.begin());
    const double scale = spec.gf_sigma * stddev[li];
    if (scale <= 0.0) continue;
    std::normal_distribution<double> noise(0.0, scale);
    // Eigen::MatrixXd is column-major; the flat index addresses its storage.
    layers[dense[li]].weight.data()[flat - *it] += noise(rng);
  }
}

void neuron_switch(Network& net, std::size_t pairs_wanted, std::mt19937_64& rng) {
  std::vector<std::pair<Neuron, Neuron>> pairs;
  bool applicable = false;
  for (std::size_t l : neuron_layers(net)) {
    const auto width = net.layers()[l].out();
    if (width < 2) continue;
    applicable = true;
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(width));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t i = 0; i + 1 < rows.size(); i += 2) pairs.push_back({{l, rows[i]}, {l, rows[i + 1]}});
  }
  require(applicable, ErrorCode::OperatorInapplicable, "NS needs a layer with at least two neurons");
  if (pairs_wanted > pairs.size()) {
    std::ostringstream msg;
    msg << "NS wants " << pairs_wanted << " disjoint neuron pairs, only " << pairs.size() << " exist";
    fail(ErrorCode::OperatorInapplicable, msg.str());
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  for (std::size_t p = 0; p < pairs_wanted; ++p) {
    auto& layer = net.layers()[pairs[p].first.layer];
    const auto a = pairs[p].first.row;
    const auto b = pairs[p].second.row;
    layer.weight.row(a).swap(layer.weight.row(b));
    std::swap(layer.bias(a), layer.bias(b));
  }
}

}  // namespace

std::size_t selection_size(const Network& base, const MutantSpec& spec) {
  switch (spec.op) {
    case MutationOperator::GF: return rounded(spec.rate * static_cast<double>(total_weights(base)));
    case MutationOperator::WS:
    case MutationOperator::NAI: return rounded(spec.rate * static_cast<double>(neurons(base).size()));
    case MutationOperator::NS: return rounded(spec.rate * static_cast<double>(neurons(base).size()) / 2.0);
  }
  return 0;
}

Network mutate(const Network& base, const MutantSpec& spec) {
  require(spec.rate >= 0.0 && spec.rate <= 1.0, ErrorCode::Config, "mutation rate must lie in [0, 1]");
  require(spec.gf_sigma >= 0.0, ErrorCode::Config, "gf_sigma must be non-negative");
  Network mutant = base;
  std::mt19937_64 rng(spec.seed);
  const std::size_t count = selection_size(base, spec);
  switch (spec.op) {
    case MutationOperator::GF:
      gaussian_fuzz(mutant, spec, count, rng);
      break;
    case MutationOperator::WS:
      for (const auto& nrn : sample(neurons(base), count, rng)) {
        auto row = mutant.layers()[nrn.layer].weight.row(nrn.row);
        std::vector<double> w(row.begin(), row.end());
        std::shuffle(w.begin(), w.end(), rng);
        for (Eigen::Index c = 0; c < row.size(); ++c) row(c) = w[static_cast<std::size_t>(c)];
      }
      break;
    case MutationOperator::NAI:
      for (const auto& nrn : sample(neurons(base), count, rng)) {
        auto& layer = mutant.layers()[nrn.layer];
        layer.weight.row(nrn.row) *= -1.0;
        layer.bias(nrn.row) = -layer.bias(nrn.row);
      }
      break;
    case MutationOperator::NS:
      neuron_switch(mutant, count, rng);
      break;
  }
  return mutant;
}

GateResult sanity_gate(std::span<const int> base_labels, const Network& mutant, const Matrix& x_val,
                       double min_agreement) {
  require(x_val.rows() > 0, ErrorCode::Domain, "sanity gate needs validation rows");
  const auto pred = predict(mutant, x_val);
  std::size_t same = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) same += pred[i] == base_labels[i];
  const double agreement = static_cast<double>(same) / static_cast<double>(pred.size());
  return {agreement >= min_agreement, agreement};
}

GateResult sanity_gate(const Network& base, const Network& mutant, const Matrix& x_val, double min_agreement) {
  require(x_val.rows() > 0, ErrorCode::Domain, "sanity gate needs validation rows");
  return sanity_gate(predict(base, x_val), mutant, x_val, min_agreement);
}

MutantPool::MutantPool(Network base, Matrix x_val, PoolConfig cfg)
    : base_(std::move(base)), x_val_(std::move(x_val)), cfg_(std::move(cfg)) {
  require(!cfg_.operators.empty(), ErrorCode::Config, "mutant pool needs at least one operator");
  require(cfg_.rate > 0.0 && cfg_.rate <= 1.0, ErrorCode::Config, "mutation rate must lie in (0, 1]");
  require(cfg_.min_agreement >= 0.0 && cfg_.min_agreement <= 1.0, ErrorCode::Config,
          "min_agreement must lie in [0, 1]");
  require(x_val_.rows() > 0, ErrorCode::Domain, "mutant pool needs validation rows");
  base_val_labels_ = predict(base_, x_val_);
}

MutantSpec MutantPool::candidate_spec(std::size_t c) const {
  const MutationOperator op = cfg_.operators[c % cfg_.operators.size()];
  return {op, cfg_.rate, cfg_.gf_sigma, derive_seed(derive_seed(cfg_.seed, to_string(op)), c)};
}

void MutantPool::grow(std::size_t k) {
  std::size_t accepted_now = 0;
  std::size_t attempts = 0;
  while (accepted_now < k) {
    if (attempts >= 10 * k) {
      std::ostringstream msg;
      msg << "mutant pool exhausted: " << accepted_now << " of " << k << " mutants accepted after " << attempts
          << " candidates (min_agreement " << cfg_.min_agreement << ", rate " << cfg_.rate << ")";
      fail(ErrorCode::PoolExhausted, msg.str());
    }
    const std::size_t c = candidates_.size();
    CandidateRecord rec{c, candidate_spec(c), 0.0, false};
    const auto gate = sanity_gate(base_val_labels_, mutate(base_, rec.spec), x_val_, cfg_.min_agreement);
    rec.agreement = gate.agreement;
    rec.accepted = gate.accepted;
    candidates_.push_back(rec);
    if (rec.accepted) {
      accepted_.push_back(c);
      ++accepted_now;
    }
    ++attempts;
  }
}

Network MutantPool::materialize(std::size_t i) const {
  require(i < size(), ErrorCode::Domain, "mutant index out of range");
  return mutate(base_, spec(i));
}

std::vector<int> MutantPool::predict_mutant(std::size_t i, const Matrix& xs) const {
  if (!cache_ || cache_->first != i) cache_.emplace(i, materialize(i));
  return predict(cache_->second, xs);
}

nlohmann::json MutantPool::manifest() const {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : candidates_)
    cands.push_back({{"candidate", c.candidate},
                     {"operator", to_string(c.spec.op)},
                     {"seed", c.spec.seed},
                     {"agreement", c.agreement},
                     {"accepted", c.accepted}});
  std::ostringstream hash;
  hash << std::hex << base_.weights_hash();
  return {{"base_hash", hash.str()}, {"config", cfg_}, {"size", size()}, {"candidates", std::move(cands)}};
}

MutantPool MutantPool::from_manifest(Network base, Matrix x_val, const nlohmann::json& doc) {
  try {
    MutantPool pool(std::move(base), std::move(x_val), doc.at("config").get<PoolConfig>());
    std::ostringstream hash;
    hash << std::hex << pool.base_.weights_hash();
    require(doc.at("base_hash").get<std::string>() == hash.str(), ErrorCode::Format,
            "pool manifest was written for a different base network");
    for (const auto& j : doc.at("candidates")) {
      const std::size_t c = pool.candidates_.size();
      CandidateRecord rec{c, pool.candidate_spec(c), j.at("agreement").get<double>(), j.at("accepted").get<bool>()};
      require(j.at("candidate").get<std::size_t>() == c && j.at("seed").get<Seed>() == rec.spec.seed,
              ErrorCode::Format, "pool manifest candidate " + std::to_string(c) + " does not match its seed");
      pool.candidates_.push_back(rec);
      if (rec.accepted) pool.accepted_.push_back(c);
    }
    return pool;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed pool manifest: ") + e.what());
  }
}

MutationScore mutation_score(const Network& base, std::span<const Network> mutants, const Vector& x) {
  require(!mutants.empty(), ErrorCode::Domain, "mutation score needs at least one mutant");
  const int ref = predict_one(base, x);
  MutationScore s{0, static_cast<int>(mutants.size())};
  for (const auto& m : mutants) s.z += predict_one(m, x) != ref;
  return s;
}

void to_json(nlohmann::json& j, const PoolConfig& cfg) {
  std::vector<std::string> ops;
  for (auto op : cfg.operators) ops.emplace_back(to_string(op));
  j = {{"operators", ops},
       {"rate", cfg.rate},
       {"gf_sigma", cfg.gf_sigma},
       {"min_agreement", cfg.min_agreement},
       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, PoolConfig& cfg) {
  if (j.contains("operators")) {
    cfg.operators.clear();
    for (const auto& name : j.at("operators")) cfg.operators.push_back(mutation_operator_from_string(name));
  } else if (j.contains("operator")) {
    cfg.operators = {mutation_operator_from_string(j.at("operator").get<std::string>())};
  }
  cfg.rate = j.value("rate", cfg.rate);
  cfg.gf_sigma = j.value("gf_sigma", cfg.gf_sigma);
  cfg.min_agreement = j.value("min_agreement", cfg.min_agreement);
  cfg.seed = j.value("seed", cfg.seed);
}

}  // namespace lbt
