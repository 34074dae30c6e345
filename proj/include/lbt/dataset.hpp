#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lbt/types.hpp"

namespace lbt {

/// Inputs (n x d, features in [0,1]) with optional ground-truth labels and a
/// stable id per row. Ids survive splits and subsetting so that downstream
/// metrics can refer back to the original row.
class LabeledSet {
 public:
  LabeledSet() = default;
  /// Rejects non-finite values, clips features to [0,1]. Ids default to 0..n-1.
  LabeledSet(Matrix xs, std::optional<std::vector<int>> ys, int num_classes,
             std::vector<std::size_t> ids = {});

  std::size_t size() const { return static_cast<std::size_t>(xs_.rows()); }
  bool empty() const { return size() == 0; }
  int dim() const { return static_cast<int>(xs_.cols()); }
  int num_classes() const { return num_classes_; }

  const Matrix& xs() const { return xs_; }
  bool has_labels() const { return ys_.has_value(); }
  const std::vector<int>& ys() const;
  const std::vector<std::size_t>& ids() const { return ids_; }

  Vector row(std::size_t i) const { return xs_.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Rows at the given positions (not ids), keeping ids and labels.
  LabeledSet subset(std::span<const std::size_t> positions) const;
  /// Same rows with labels replaced.
  LabeledSet relabeled(std::vector<int> ys) const;
  LabeledSet unlabeled() const;
  /// Rows of `other` appended; ids of `other` are kept as given.
  LabeledSet concat(const LabeledSet& other) const;

 private:
  Matrix xs_;
  std::optional<std::vector<int>> ys_;
  int num_classes_ = 0;
  std::vector<std::size_t> ids_;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801),
/// scaling pixels by 1/255 and flattening each image row-major.
LabeledSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                    int num_classes = 10);

/// Writes images as unsigned bytes (round(x*255)) and labels as bytes. Images
/// are stored as n x rows x cols with rows*cols == d; pass rows=1 for
/// non-image data.
void write_idx(const LabeledSet& set, const std::filesystem::path& images,
               const std::filesystem::path& labels, int rows, int cols);

/// Lossless IDX variant for real-valued features (type code 0x0E, 2 dims).
void write_idx_doubles(const Matrix& xs, const std::filesystem::path& path);
Matrix read_idx_doubles(const std::filesystem::path& path);
/// Label-only IDX (0x00000801).
void write_idx_labels(std::span<const int> ys, const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

/// C Gaussian clusters around hypercube corners scaled into [0.25,0.75]^d.
/// Class k sits at the corner whose bit pattern is k mod 2^d.
LabeledSet synth_blobs(int n_per_class, int num_classes, int dim, double spread, Seed seed);
Vector blob_center(int cls, int dim);

struct SplitSpec {
  std::vector<double> fractions;
  Seed seed = 0;
};

/// Seeded shuffle then contiguous partition; part sizes are round(f*n) with
/// the remainder going to the last part.
std::vector<LabeledSet> split(const LabeledSet& set, const SplitSpec& spec);
std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> fractions);

}  // namespace lbt
