#include "lbt/lbt.h"

#include <memory>
#include <string>

#include "lbt/dataset.hpp"
#include "lbt/error.hpp"
#include "lbt/metrics.hpp"
#include "lbt/nn.hpp"
#include "lbt/pipeline.hpp"
#include "lbt/sprt.hpp"

struct lbt_network {
  lbt::Network net;
};

struct lbt_dataset {
  lbt::LabeledSet set;
};

struct lbt_experiment {
  std::unique_ptr<lbt::Experiment> exp;
  std::string last_output;
};

namespace {

thread_local std::string last_error;

lbt_status set_error(lbt_status status, const std::string& msg) {
  last_error = msg;
  return status;
}

template <typename F>
lbt_status guarded(F&& body) {
  try {
    body();
    return LBT_OK;
  } catch (const lbt::Error& e) {
    return set_error(static_cast<lbt_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(LBT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(LBT_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(LBT_ERR_INTERNAL, "unknown exception");
  }
}

#define LBT_NOT_NULL(p) \
  if ((p) == nullptr) return set_error(LBT_ERR_NULL_ARGUMENT, "null argument: " #p)

lbt::Matrix rows_view(const double* xs, std::size_t rows, int cols) {
  return Eigen::Map<const lbt::Matrix>(xs, static_cast<Eigen::Index>(rows), cols);
}

}  // namespace

extern "C" {

const char* lbt_version(void) { return "0.1.0"; }

const char* lbt_status_string(lbt_status status) {
  switch (status) {
    case LBT_OK: return "ok";
    case LBT_ERR_NULL_ARGUMENT: return "null argument";
    case LBT_ERR_INTERNAL: return "internal error";
    default:
      if (status >= LBT_ERR_SHAPE && status <= LBT_ERR_MISSING_ARTIFACT)
        return lbt::to_string(static_cast<lbt::ErrorCode>(status));
      return "unknown status";
  }
}

const char* lbt_last_error_message(void) { return last_error.c_str(); }

lbt_status lbt_network_load(const char* path, lbt_network** out) {
  LBT_NOT_NULL(path);
  LBT_NOT_NULL(out);
  *out = nullptr;
  return guarded([&] { *out = new lbt_network{lbt::load_network(path)}; });
}

lbt_status lbt_network_save(const lbt_network* net, const char* path) {
  LBT_NOT_NULL(net);
  LBT_NOT_NULL(path);
  return guarded([&] { lbt::save_network(net->net, path); });
}

void lbt_network_destroy(lbt_network* net) { delete net; }

lbt_status lbt_network_dims(const lbt_network* net, int* input_dim, int* num_classes) {
  LBT_NOT_NULL(net);
  if (input_dim) *input_dim = net->net.input_dim();
  if (num_classes) *num_classes = net->net.num_classes();
  return LBT_OK;
}

lbt_status lbt_network_forward(const lbt_network* net, const double* xs, size_t rows, double* probs) {
  LBT_NOT_NULL(net);
  LBT_NOT_NULL(xs);
  LBT_NOT_NULL(probs);
  return guarded([&] {
    const lbt::Matrix out = lbt::forward_batch(net->net, rows_view(xs, rows, net->net.input_dim()));
    std::copy(out.data(), out.data() + out.size(), probs);
  });
}

lbt_status lbt_network_predict(const lbt_network* net, const double* xs, size_t rows, int* labels) {
  LBT_NOT_NULL(net);
  LBT_NOT_NULL(xs);
  LBT_NOT_NULL(labels);
  return guarded([&] {
    const auto pred = lbt::predict(net->net, rows_view(xs, rows, net->net.input_dim()));
    std::copy(pred.begin(), pred.end(), labels);
  });
}

lbt_status lbt_dataset_load_idx(const char* images, const char* labels, lbt_dataset** out) {
  LBT_NOT_NULL(images);
  LBT_NOT_NULL(labels);
  LBT_NOT_NULL(out);
  *out = nullptr;
  return guarded([&] { *out = new lbt_dataset{lbt::load_idx(images, labels)}; });
}

void lbt_dataset_destroy(lbt_dataset* set) { delete set; }

lbt_status lbt_dataset_shape(const lbt_dataset* set, size_t* rows, int* cols) {
  LBT_NOT_NULL(set);
  if (rows) *rows = set->set.size();
  if (cols) *cols = set->set.dim();
  return LBT_OK;
}

lbt_status lbt_dataset_features(const lbt_dataset* set, const double** data) {
  LBT_NOT_NULL(set);
  LBT_NOT_NULL(data);
  *data = set->set.xs().data();
  return LBT_OK;
}

lbt_status lbt_dataset_labels(const lbt_dataset* set, const int** labels) {
  LBT_NOT_NULL(set);
  LBT_NOT_NULL(labels);
  return guarded([&] { *labels = set->set.ys().data(); });
}

lbt_status lbt_sprt_ratio(int n, int z, double zeta_h, double delta, double* ratio) {
  LBT_NOT_NULL(ratio);
  return guarded([&] {
    lbt::SprtConfig cfg;
    cfg.zeta_h = zeta_h;
    cfg.delta = delta;
    cfg.validate();
    *ratio = lbt::sprt_ratio(n, z, cfg);
  });
}

lbt_status lbt_fdr(const int* selected_is_fault, size_t k, size_t total_faults, double* out) {
  LBT_NOT_NULL(selected_is_fault);
  LBT_NOT_NULL(out);
  return guarded([&] {
    lbt::FaultTable table;
    std::vector<std::size_t> ids(k);
    for (std::size_t i = 0; i < k; ++i) {
      ids[i] = i;
      table.add({i, 0, selected_is_fault[i] ? 1 : 0});
    }
    *out = lbt::fdr(ids, table, total_faults);
  });
}

lbt_status lbt_apfd(const int* is_fault, size_t n, double* raw, double* normalized) {
  LBT_NOT_NULL(is_fault);
  return guarded([&] {
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < n; ++i)
      if (is_fault[i]) positions.push_back(i + 1);
    const lbt::Apfd a = lbt::apfd_from_positions(positions, n);
    if (raw) *raw = a.raw;
    if (normalized) *normalized = a.normalized;
  });
}

lbt_status lbt_experiment_open(const char* config_path, const char* out_dir, const uint64_t* seed_override,
                               lbt_experiment** out) {
  LBT_NOT_NULL(config_path);
  LBT_NOT_NULL(out_dir);
  LBT_NOT_NULL(out);
  *out = nullptr;
  return guarded([&] {
    lbt::ExperimentConfig cfg = lbt::ExperimentConfig::load(config_path);
    if (seed_override) cfg.seed = *seed_override;
    auto handle = std::make_unique<lbt_experiment>();
    handle->exp = std::make_unique<lbt::Experiment>(std::move(cfg), out_dir);
    *out = handle.release();
  });
}

void lbt_experiment_destroy(lbt_experiment* exp) { delete exp; }

lbt_status lbt_experiment_run_stage(lbt_experiment* exp, const char* stage, const char* method) {
  LBT_NOT_NULL(exp);
  LBT_NOT_NULL(stage);
  exp->last_output.clear();
  return guarded([&] {
    const auto res = exp->exp->run(lbt::stage_from_string(stage), method ? method : "");
    exp->last_output = (res.cached ? "(cached) " : "") + res.summary;
  });
}

lbt_status lbt_experiment_run_all(lbt_experiment* exp) {
  LBT_NOT_NULL(exp);
  exp->last_output.clear();
  return guarded([&] {
    for (lbt::Stage s : lbt::all_stages()) {
      const auto res = exp->exp->run(s);
      exp->last_output += std::string("[") + lbt::to_string(s) + "]" + (res.cached ? " (cached)" : "") + "\n" +
                          res.summary;
    }
  });
}

const char* lbt_experiment_last_output(const lbt_experiment* exp) {
  return exp ? exp->last_output.c_str() : "";
}

}  // extern "C"
