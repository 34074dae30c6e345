#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbt/nn.hpp"

namespace lbt {

/// Structure-preserving model-level mutation operators.
enum class MutationOperator {
  GF,   // Gaussian fuzzing of individual weights
  WS,   // shuffle a neuron's incoming weights
  NAI,  // invert a neuron's pre-activation
  NS,   // switch two neurons of one layer
};

const char* to_string(MutationOperator op);
MutationOperator mutation_operator_from_string(const std::string& name);

struct MutantSpec {
  MutationOperator op = MutationOperator::GF;
  double rate = 0.01;
  double gf_sigma = 1.0;
  Seed seed = 0;
};

/// Number of selected units for a spec on a given network.
std::size_t selection_size(const Network& base, const MutantSpec& spec);

/// Applies the operator to a copy of `base`. The selection depends only on the
/// network's shape and the seed, so re-applying an involutive operator with
/// the same spec restores the original weights.
Network mutate(const Network& base, const MutantSpec& spec);

struct GateResult {
  bool accepted = false;
  double agreement = 0.0;
};

GateResult sanity_gate(const Network& base, const Network& mutant, const Matrix& x_val,
                       double min_agreement);
/// Same check against precomputed base predictions.
GateResult sanity_gate(std::span<const int> base_labels, const Network& mutant,
                       const Matrix& x_val, double min_agreement);

struct PoolConfig {
  std::vector<MutationOperator> operators{MutationOperator::GF};  // cycled per candidate
  double rate = 0.01;
  double gf_sigma = 1.0;
  double min_agreement = 0.90;
  Seed seed = 0;
};

struct CandidateRecord {
  std::size_t candidate = 0;
  MutantSpec spec;
  double agreement = 0.0;
  bool accepted = false;
};

/// Deterministic, seed-indexed sequence of sanity-gated mutants of one base
/// network. Candidate c gets seed derive(pool seed, operator, c); rejected
/// candidates are skipped so accepted indices stay contiguous.
class MutantPool {
 public:
  MutantPool(Network base, Matrix x_val, PoolConfig cfg);

  const Network& base() const { return base_; }
  const PoolConfig& config() const { return cfg_; }
  const Matrix& validation() const { return x_val_; }

  std::size_t size() const { return accepted_.size(); }
  const MutantSpec& spec(std::size_t i) const { return candidates_[accepted_[i]].spec; }
  double agreement(std::size_t i) const { return candidates_[accepted_[i]].agreement; }
  const std::vector<CandidateRecord>& candidates() const { return candidates_; }

  /// Appends k accepted mutants; throws PoolExhausted when 10k candidates do
  /// not yield k acceptances.
  void grow(std::size_t k);

  Network materialize(std::size_t i) const;
  /// Predictions of mutant i on xs; the last materialized mutant is cached.
  std::vector<int> predict_mutant(std::size_t i, const Matrix& xs) const;

  nlohmann::json manifest() const;
  /// Restores a pool from manifest(). The base hash must match; gate results
  /// are taken from the manifest.
  static MutantPool from_manifest(Network base, Matrix x_val, const nlohmann::json& doc);

 private:
  MutantSpec candidate_spec(std::size_t c) const;

  Network base_;
  Matrix x_val_;
  std::vector<int> base_val_labels_;
  PoolConfig cfg_;
  std::vector<CandidateRecord> candidates_;
  std::vector<std::size_t> accepted_;
  mutable std::optional<std::pair<std::size_t, Network>> cache_;
};

struct MutationScore {
  int z = 0;
  int n = 0;
};

MutationScore mutation_score(const Network& base, std::span<const Network> mutants, const Vector& x);

void to_json(nlohmann::json& j, const PoolConfig& cfg);
void from_json(const nlohmann::json& j, PoolConfig& cfg);

}  // namespace lbt
