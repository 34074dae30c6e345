#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbt/dataset.hpp"
#include "lbt/mutation.hpp"

namespace lbt {

struct SprtConfig {
  double alpha = 0.05;
  double beta = 0.05;
  double delta = 0.05;
  double zeta_h = 0.0;
  double p_clamp = 1e-3;
  double subset_fraction = 0.1;
  std::size_t subset_min = 30;
  double decided_target = 0.9;
  int nmax_ceiling = 1000;
  Seed seed = 0;

  void validate() const;
  double p0() const;
  double p1() const;
  double upper() const { return (1.0 - beta) / alpha; }
  double lower() const { return beta / (1.0 - alpha); }
};

/// Bernoulli likelihood ratio L(p1)/L(p0) after z differing outputs in n
/// trials, evaluated in log space.
double sprt_log_ratio(int n, int z, const SprtConfig& cfg);
double sprt_ratio(int n, int z, const SprtConfig& cfg);

enum class Verdict { Undecided, Selected, Discarded };
const char* to_string(Verdict v);

struct SprtState {
  std::size_t input_id = 0;
  int n = 0;
  int z = 0;
  Verdict verdict = Verdict::Undecided;
  int decided_at = 0;  // iteration of the terminal decision

  bool decided() const { return verdict != Verdict::Undecided; }
};

/// One trial. Selected when the ratio reaches (1-beta)/alpha, discarded when
/// it falls to beta/(1-alpha).
SprtState sprt_step(SprtState state, bool differs, const SprtConfig& cfg, int iter);

/// Mean fraction of pool mutants whose prediction differs from the base over
/// the benign validation rows.
double calibrate_zeta(const MutantPool& pool, const Matrix& x_val);

struct NmaxCalibration {
  int n_max = 0;
  std::vector<SprtState> states;  // every member of the probe subset
  std::vector<std::size_t> subset_positions;  // row positions within X_adv
};

/// Probes a seeded subset of X_adv one mutant at a time, growing the pool on
/// demand, until the decided fraction reaches cfg.decided_target.
NmaxCalibration calibrate_nmax(MutantPool& pool, const LabeledSet& x_adv, const SprtConfig& cfg);

struct SuiteEntry {
  std::size_t input_id = 0;
  int iter = 0;
  int z = 0;
  int n = 0;
};

struct PrioritizedSuite {
  std::vector<SuiteEntry> selected;  // in priority order
  std::vector<SuiteEntry> discarded;
  std::vector<SuiteEntry> undecided;  // still open after n_max trials
  int n_max = 0;
  double zeta_h = 0.0;

  std::vector<std::size_t> selected_ids() const;
  /// Header JSON as '# ' comment lines, then
  /// input_id,rank,selection_iter,z,n,decision,score.
  void write_csv(std::ostream& out, const nlohmann::json& header) const;
  static PrioritizedSuite read_csv(std::istream& in);
};

/// Priority order: selection iteration ascending, then z/n descending, then id.
bool suite_order(const SuiteEntry& a, const SuiteEntry& b);

/// Runs mutants 0..n_max-1 against every still-undecided row. States from the
/// n_max probe (if given) are merged into the suite as already decided.
PrioritizedSuite prioritize(const MutantPool& pool, const LabeledSet& x_adv_rest, int n_max,
                            const SprtConfig& cfg, const NmaxCalibration* probe = nullptr);

void to_json(nlohmann::json& j, const SprtConfig& cfg);
void from_json(const nlohmann::json& j, SprtConfig& cfg);

}  // namespace lbt
