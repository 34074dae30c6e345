#include "lbt/sprt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "lbt/error.hpp"

namespace lbt {

void SprtConfig::validate() const {
  require(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0, ErrorCode::Config,
          "alpha and beta must lie in (0, 1)");
  require(alpha + beta < 1.0, ErrorCode::Config, "alpha + beta must be below 1");
  require(delta > 0.0, ErrorCode::Config, "delta must be positive");
  require(zeta_h >= 0.0 && zeta_h <= 1.0, ErrorCode::Config, "zeta_h must lie in [0, 1]");
  require(p_clamp > 0.0 && p_clamp < 0.5, ErrorCode::Config, "p_clamp must lie in (0, 0.5)");
  require(subset_fraction > 0.0 && subset_fraction <= 1.0, ErrorCode::Config,
          "subset_fraction must lie in (0, 1]");
  require(decided_target >= 0.0 && decided_target <= 1.0, ErrorCode::Config,
          "decided_target must lie in [0, 1]");
  require(nmax_ceiling >= 1, ErrorCode::Config, "nmax_ceiling must be positive");
  require(p0() < p1(), ErrorCode::Config, "clamped p0 must be below p1");
}

double SprtConfig::p0() const { return std::clamp(zeta_h - delta, p_clamp, 1.0 - p_clamp); }
double SprtConfig::p1() const { return std::clamp(zeta_h + delta, p_clamp, 1.0 - p_clamp); }

double sprt_log_ratio(int n, int z, const SprtConfig& cfg) {
  require(n >= 1 && z >= 0 && z <= n, ErrorCode::Domain, "SPRT needs 0 <= z <= n and n >= 1");
  const double p0 = cfg.p0();
  const double p1 = cfg.p1();
  return z * std::log(p1 / p0) + (n - z) * std::log((1.0 - p1) / (1.0 - p0));
}

double sprt_ratio(int n, int z, const SprtConfig& cfg) { return std::exp(sprt_log_ratio(n, z, cfg)); }

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Undecided: return "undecided";
    case Verdict::Selected: return "selected";
    case Verdict::Discarded: return "discarded";
  }
  return "?";
}

SprtState sprt_step(SprtState state, bool differs, const SprtConfig& cfg, int iter) {
  require(!state.decided(), ErrorCode::ContractViolation,
          "input " + std::to_string(state.input_id) + " already decided");
  ++state.n;
  state.z += differs ? 1 : 0;
  const double s = sprt_ratio(state.n, state.z, cfg);
  if (s >= cfg.upper()) {
    state.verdict = Verdict::Selected;
    state.decided_at = iter;
  } else if (s <= cfg.lower()) {
    state.verdict = Verdict::Discarded;
    state.decided_at = iter;
  }
  return state;
}

double calibrate_zeta(const MutantPool& pool, const Matrix& x_val) {
  require(pool.size() > 0, ErrorCode::Domain, "zeta calibration needs a non-empty pool");
  require(x_val.rows() > 0, ErrorCode::Domain, "zeta calibration needs validation rows");
  const auto base = predict(pool.base(), x_val);
  std::size_t differs = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto pred = pool.predict_mutant(i, x_val);
    for (std::size_t r = 0; r < pred.size(); ++r) differs += pred[r] != base[r];
  }
  return static_cast<double>(differs) / (static_cast<double>(pool.size()) * static_cast<double>(x_val.rows()));
}

namespace {

Matrix gather_rows(const Matrix& xs, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), xs.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = xs.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// One trial of mutant `m` for every undecided state. Returns the number of
// states decided in this iteration.
std::size_t run_iteration(const MutantPool& pool, std::size_t m, const Matrix& xs,
                          const std::vector<int>& base_labels, std::vector<SprtState>& states,
                          const SprtConfig& cfg, int iter) {
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < states.size(); ++i)
    if (!states[i].decided()) open.push_back(i);
  if (open.empty()) return 0;
  const auto pred = pool.predict_mutant(m, gather_rows(xs, open));
  std::size_t decided = 0;
  for (std::size_t k = 0; k < open.size(); ++k) {
    auto& st = states[open[k]];
    st = sprt_step(st, pred[k] != base_labels[open[k]], cfg, iter);
    decided += st.decided();
  }
  return decided;
}

}  // namespace

NmaxCalibration calibrate_nmax(MutantPool& pool, const LabeledSet& x_adv, const SprtConfig& cfg) {
  cfg.validate();
  require(!x_adv.empty(), ErrorCode::Domain, "n_max calibration needs adversarial inputs");
  const std::size_t total = x_adv.size();
  const auto by_fraction = static_cast<std::size_t>(std::ceil(cfg.subset_fraction * static_cast<double>(total)));
  const std::size_t m = std::min(total, std::max(by_fraction, cfg.subset_min));

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(m);
  std::sort(order.begin(), order.end());

  NmaxCalibration res;
  res.subset_positions = order;
  const LabeledSet probe = x_adv.subset(order);
  for (std::size_t i = 0; i < m; ++i) res.states.push_back({probe.ids()[i], 0, 0, Verdict::Undecided, 0});
  const auto base_labels = predict(pool.base(), probe.xs());

  std::size_t decided = 0;
  for (int n = 1;; ++n) {
    if (pool.size() < static_cast<std::size_t>(n)) pool.grow(1);
    decided += run_iteration(pool, static_cast<std::size_t>(n - 1), probe.xs(), base_labels, res.states, cfg, n);
    if (static_cast<double>(decided) >= cfg.decided_target * static_cast<double>(m)) {
      res.n_max = n;
      break;
    }
    if (n >= cfg.nmax_ceiling) {
      std::ostringstream msg;
      msg << "n_max calibration hit the ceiling of " << cfg.nmax_ceiling << " mutants with " << decided << " of "
          << m << " probe inputs decided";
      fail(ErrorCode::CalibrationFailed, msg.str());
    }
  }
  return res;
}

bool suite_order(const SuiteEntry& a, const SuiteEntry& b) {
  if (a.iter != b.iter) return a.iter < b.iter;
  // z/n descending, compared without division.
  const long lhs = static_cast<long>(a.z) * b.n;
  const long rhs = static_cast<long>(b.z) * a.n;
  if (lhs != rhs) return lhs > rhs;
  return a.input_id < b.input_id;
}

std::vector<std::size_t> PrioritizedSuite::selected_ids() const {
  std::vector<std::size_t> ids;
  ids.reserve(selected.size());
  for (const auto& e : selected) ids.push_back(e.input_id);
  return ids;
}

namespace {

void place(PrioritizedSuite& suite, const SprtState& st) {
  const SuiteEntry e{st.input_id, st.decided_at, st.z, st.n};
  switch (st.verdict) {
    case Verdict::Selected: suite.selected.push_back(e); break;
    case Verdict::Discarded: suite.discarded.push_back(e); break;
    case Verdict::Undecided: suite.undecided.push_back(e); break;
  }
}

bool by_id(const SuiteEntry& a, const SuiteEntry& b) { return a.input_id < b.input_id; }

}  // namespace

PrioritizedSuite prioritize(const MutantPool& pool, const LabeledSet& x_adv_rest, int n_max,
                            const SprtConfig& cfg, const NmaxCalibration* probe) {
  cfg.validate();
  require(n_max >= 1, ErrorCode::Domain, "prioritize needs n_max >= 1");
  require(pool.size() >= static_cast<std::size_t>(n_max), ErrorCode::Domain,
          "pool holds " + std::to_string(pool.size()) + " mutants, n_max is " + std::to_string(n_max));
  PrioritizedSuite suite;
  suite.n_max = n_max;
  suite.zeta_h = cfg.zeta_h;

  std::vector<SprtState> states;
  for (std::size_t id : x_adv_rest.ids()) states.push_back({id, 0, 0, Verdict::Undecided, 0});
  if (!x_adv_rest.empty()) {
    const auto base_labels = predict(pool.base(), x_adv_rest.xs());
    for (int it = 1; it <= n_max; ++it)
      run_iteration(pool, static_cast<std::size_t>(it - 1), x_adv_rest.xs(), base_labels, states, cfg, it);
  }
  for (const auto& st : states) place(suite, st);
  if (probe)
    for (const auto& st : probe->states) place(suite, st);

  std::sort(suite.selected.begin(), suite.selected.end(), suite_order);
  std::sort(suite.discarded.begin(), suite.discarded.end(), by_id);
  std::sort(suite.undecided.begin(), suite.undecided.end(), by_id);
  return suite;
}

void PrioritizedSuite::write_csv(std::ostream& out, const nlohmann::json& header) const {
  std::istringstream lines(header.dump(2));
  for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  out << "input_id,rank,selection_iter,z,n,decision,score\n";
  std::size_t rank = 0;
  auto score = [](const SuiteEntry& e) { return e.n > 0 ? static_cast<double>(e.z) / e.n : 0.0; };
  for (const auto& e : selected)
    out << e.input_id << ',' << ++rank << ',' << e.iter << ',' << e.z << ',' << e.n << ",selected," << score(e) << '\n';
  for (const auto& e : discarded)
    out << e.input_id << ",," << e.iter << ',' << e.z << ',' << e.n << ",discarded," << score(e) << '\n';
  for (const auto& e : undecided)
    out << e.input_id << ",,," << e.z << ',' << e.n << ",undecided," << score(e) << '\n';
}

PrioritizedSuite PrioritizedSuite::read_csv(std::istream& in) {
  PrioritizedSuite suite;
  std::string header_json;
  std::string line;
  bool saw_columns = false;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      header_json += line.substr(2) + '\n';
      continue;
    }
    if (!saw_columns) {
      saw_columns = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) f.push_back(cell);
    require(f.size() == 7, ErrorCode::Format, "suite CSV row has " + std::to_string(f.size()) + " fields: " + line);
    SuiteEntry e{std::stoull(f[0]), f[2].empty() ? 0 : std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4])};
    if (f[5] == "selected")
      suite.selected.push_back(e);
    else if (f[5] == "discarded")
      suite.discarded.push_back(e);
    else
      suite.undecided.push_back(e);
  }
  if (!header_json.empty()) {
    const auto header = nlohmann::json::parse(header_json, nullptr, false);
    if (header.is_object()) {
      suite.n_max = header.value("n_max", 0);
      suite.zeta_h = header.value("zeta_h", 0.0);
    }
  }
  return suite;
}

void to_json(nlohmann::json& j, const SprtConfig& cfg) {
  j = {{"alpha", cfg.alpha},
       {"beta", cfg.beta},
       {"delta", cfg.delta},
       {"zeta_h", cfg.zeta_h},
       {"p_clamp", cfg.p_clamp},
       {"subset_fraction", cfg.subset_fraction},
       {"subset_min", cfg.subset_min},
       {"decided_target", cfg.decided_target},
       {"nmax_ceiling", cfg.nmax_ceiling},
       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SprtConfig& cfg) {
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.zeta_h = j.value("zeta_h", cfg.zeta_h);
  cfg.p_clamp = j.value("p_clamp", cfg.p_clamp);
  cfg.subset_fraction = j.value("subset_fraction", cfg.subset_fraction);
  cfg.subset_min = j.value("subset_min", cfg.subset_min);
  cfg.decided_target = j.value("decided_target", cfg.decided_target);
  cfg.nmax_ceiling = j.value("nmax_ceiling", cfg.nmax_ceiling);
  cfg.seed = j.value("seed", cfg.seed);
}

}  // namespace lbt
