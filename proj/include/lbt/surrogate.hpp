#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "lbt/dataset.hpp"
#include "lbt/nn.hpp"

namespace lbt {

/// Black-box access to the model under test: class labels only.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;

  std::vector<int> query(const Matrix& xs);
  std::size_t query_count() const { return queries_; }

 protected:
  virtual std::vector<int> answer(const Matrix& xs) = 0;

 private:
  std::size_t queries_ = 0;
};

/// Wraps a network; only its argmax labels escape.
class NetworkOracle final : public LabelOracle {
 public:
  explicit NetworkOracle(Network net) : net_(std::move(net)) {}

 protected:
  std::vector<int> answer(const Matrix& xs) override;

 private:
  Network net_;
};

class FunctionOracle final : public LabelOracle {
 public:
  using Fn = std::function<std::vector<int>(const Matrix&)>;
  explicit FunctionOracle(Fn fn) : fn_(std::move(fn)) {}

 protected:
  std::vector<int> answer(const Matrix& xs) override { return fn_(xs); }

 private:
  Fn fn_;
};

struct SurrogateConfig {
  double tau = 0.95;
  int patience = 5;
  double lambda = 0.1;
  int max_rounds = 20;
  TrainConfig train;

  void validate() const;
};

enum class Termination { Threshold, Patience, MaxRounds };
const char* to_string(Termination t);

struct RoundRecord {
  int round = 0;
  std::size_t s_size = 0;  // |S| used for training in this round
  double similarity = 0.0;
  std::size_t added = 0;  // disagreement rows appended after this round
};

struct SimilarityTrace {
  std::vector<RoundRecord> rounds;
  Termination reason = Termination::MaxRounds;
  std::size_t oracle_queries = 0;

  double final_similarity() const { return rounds.empty() ? 0.0 : rounds.back().similarity; }
  void write_csv(std::ostream& out) const;
};

double similarity(const Network& b, std::span<const int> oracle_labels, const Matrix& x_val);

/// x' = clip(x + lambda * sign(d logit_y / dx)) for each labeled row of S.
Matrix jacobian_augment(const Network& b, const LabeledSet& s, double lambda);

struct SurrogateResult {
  Network model;
  SimilarityTrace trace;
};

/// Iteratively trains `b0` to agree with the oracle, growing the training set
/// with augmented rows on which the oracle and the current surrogate disagree.
SurrogateResult build_surrogate(Network b0, LabelOracle& oracle, const LabeledSet& x,
                                const LabeledSet& x_val, const SurrogateConfig& cfg);

void to_json(nlohmann::json& j, const SurrogateConfig& cfg);
void from_json(const nlohmann::json& j, SurrogateConfig& cfg);

}  // namespace lbt
