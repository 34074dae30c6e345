#include "lbt/metrics.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "lbt/error.hpp"

namespace lbt {

std::optional<FaultType> FaultRecord::fault_type() const {
  if (!is_fault()) return std::nullopt;
  return FaultType{true_label, predicted};
}

FaultTable::FaultTable(std::span<const std::size_t> ids, std::span<const int> truth, std::span<const int> predicted) {
  require(ids.size() == truth.size() && ids.size() == predicted.size(), ErrorCode::Shape,
          "fault table: ids, truth and predictions differ in length");
  for (std::size_t i = 0; i < ids.size(); ++i) add({ids[i], truth[i], predicted[i]});
}

void FaultTable::add(FaultRecord r) {
  require(records_.emplace(r.id, r).second, ErrorCode::Domain, "duplicate fault record for id " + std::to_string(r.id));
}

const FaultRecord& FaultTable::at(std::size_t id) const {
  const auto it = records_.find(id);
  require(it != records_.end(), ErrorCode::Domain, "no fault record for id " + std::to_string(id));
  return it->second;
}

std::size_t FaultTable::total_faults() const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const auto& kv) { return kv.second.is_fault(); }));
}

double fdr(std::span<const std::size_t> selected, const FaultTable& faults, std::size_t total_faults) {
  require(!selected.empty(), ErrorCode::Domain, "FDR of an empty selection is undefined");
  require(total_faults > 0, ErrorCode::Domain, "FDR is undefined when the dataset holds no faults");
  std::size_t found = 0;
  for (std::size_t id : selected) found += faults.is_fault(id);
  return static_cast<double>(found) / static_cast<double>(std::min(selected.size(), total_faults));
}

Apfd apfd_from_positions(std::span<const std::size_t> fault_positions, std::size_t n) {
  const std::size_t k = fault_positions.size();
  require(k >= 1, ErrorCode::Domain, "APFD is undefined without faults");
  require(k <= n, ErrorCode::Domain, "more faults than tests");
  const auto nd = static_cast<double>(n);
  const auto kd = static_cast<double>(k);
  auto value = [&](double position_sum) { return 1.0 - position_sum / (kd * nd) + 1.0 / (2.0 * nd); };
  double sum = 0.0;
  for (std::size_t p : fault_positions) {
    require(p >= 1 && p <= n, ErrorCode::Domain, "fault position outside the permutation");
    sum += static_cast<double>(p);
  }
  const double best = value(kd * (kd + 1.0) / 2.0);
  const double worst = value(kd * nd - kd * (kd - 1.0) / 2.0);
  Apfd out;
  out.raw = value(sum);
  // Every ordering is equivalent when all tests are faults.
  out.normalized = best > worst ? (out.raw - worst) / (best - worst) : 1.0;
  return out;
}

Apfd apfd(std::span<const std::size_t> permutation, const FaultTable& faults) {
  std::unordered_set<std::size_t> seen;
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    require(seen.insert(permutation[i]).second, ErrorCode::Domain,
            "permutation repeats id " + std::to_string(permutation[i]));
    if (faults.is_fault(permutation[i])) positions.push_back(i + 1);
  }
  return apfd_from_positions(positions, permutation.size());
}

std::vector<FaultType> fault_types(std::span<const std::size_t> ids, const FaultTable& faults) {
  std::set<FaultType> types;
  for (std::size_t id : ids)
    if (auto t = faults.at(id).fault_type()) types.insert(*t);
  return {types.begin(), types.end()};
}

double rauc(std::span<const std::size_t> permutation, const FaultTable& faults) {
  const std::size_t total_types = fault_types(permutation, faults).size();
  require(total_types > 0, ErrorCode::Domain, "RAUC is undefined without fault types");
  std::set<FaultType> seen;
  double area = 0.0;
  double ideal = 0.0;
  for (std::size_t i = 0; i < permutation.size(); ++i) {
    if (auto t = faults.at(permutation[i]).fault_type()) seen.insert(*t);
    area += static_cast<double>(seen.size());
    ideal += static_cast<double>(std::min(i + 1, total_types));
  }
  return area / ideal;
}

double retrain_eval(const Network& mut, const LabeledSet& selected, const LabeledSet& eval_set,
                    const TrainConfig& cfg) {
  require(!selected.empty(), ErrorCode::Domain, "retraining needs a non-empty selected set");
  require(!eval_set.empty(), ErrorCode::Domain, "retraining needs a non-empty evaluation set");
  const std::unordered_set<std::size_t> eval_ids(eval_set.ids().begin(), eval_set.ids().end());
  for (std::size_t id : selected.ids())
    require(eval_ids.count(id) == 0, ErrorCode::Domain,
            "selected and evaluation sets overlap at id " + std::to_string(id));
  const double before = accuracy(mut, eval_set);
  const Network retrained = sgd_train(mut, selected, cfg);
  return accuracy(retrained, eval_set) - before;
}

}  // namespace lbt
