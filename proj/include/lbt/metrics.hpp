#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lbt/dataset.hpp"
#include "lbt/nn.hpp"

namespace lbt {

using FaultType = std::pair<int, int>;  // (true label, predicted label)

struct FaultRecord {
  std::size_t id = 0;
  int true_label = 0;
  int predicted = 0;

  bool is_fault() const { return predicted != true_label; }
  std::optional<FaultType> fault_type() const;
};

/// Faults keyed by input id.
class FaultTable {
 public:
  FaultTable() = default;
  FaultTable(std::span<const std::size_t> ids, std::span<const int> truth,
             std::span<const int> predicted);

  void add(FaultRecord r);
  const FaultRecord& at(std::size_t id) const;
  bool contains(std::size_t id) const { return records_.count(id) != 0; }
  bool is_fault(std::size_t id) const { return at(id).is_fault(); }
  std::size_t total_faults() const;
  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::size_t, FaultRecord> records_;
};

/// |F_S| / min(|S|, |F|).
double fdr(std::span<const std::size_t> selected, const FaultTable& faults, std::size_t total_faults);

struct Apfd {
  double raw = 0.0;
  double normalized = 0.0;
};

Apfd apfd_from_positions(std::span<const std::size_t> fault_positions, std::size_t n);
Apfd apfd(std::span<const std::size_t> permutation, const FaultTable& faults);

std::vector<FaultType> fault_types(std::span<const std::size_t> ids, const FaultTable& faults);
double rauc(std::span<const std::size_t> permutation, const FaultTable& faults);

/// Fine-tunes a copy of the MUT on `selected` and reports the change in
/// accuracy on `eval_set`.
double retrain_eval(const Network& mut, const LabeledSet& selected, const LabeledSet& eval_set,
                    const TrainConfig& cfg);

}  // namespace lbt
