#include "lbt/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lbt/error.hpp"

namespace lbt {

LabeledSet::LabeledSet(Matrix xs, std::optional<std::vector<int>> ys, int num_classes,
                       std::vector<std::size_t> ids)
    : xs_(std::move(xs)), ys_(std::move(ys)), num_classes_(num_classes), ids_(std::move(ids)) {
  require(num_classes_ >= 2, ErrorCode::Domain, "a labeled set needs at least two classes");
  require(xs_.allFinite(), ErrorCode::Domain, "dataset contains non-finite features");
  xs_ = xs_.cwiseMax(0.0).cwiseMin(1.0);
  if (ys_) {
    require(ys_->size() == size(), ErrorCode::Shape, "label count does not match row count");
    for (int y : *ys_)
      require(y >= 0 && y < num_classes_, ErrorCode::Domain, "label " + std::to_string(y) + " out of range");
  }
  if (ids_.empty()) {
    ids_.resize(size());
    std::iota(ids_.begin(), ids_.end(), std::size_t{0});
  }
  require(ids_.size() == size(), ErrorCode::Shape, "id count does not match row count");
}

const std::vector<int>& LabeledSet::ys() const {
  require(ys_.has_value(), ErrorCode::Domain, "dataset has no labels");
  return *ys_;
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> positions) const {
  Matrix xs(static_cast<Eigen::Index>(positions.size()), xs_.cols());
  std::vector<std::size_t> ids;
  std::optional<std::vector<int>> ys;
  if (ys_) ys.emplace();
  ids.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const std::size_t p = positions[i];
    require(p < size(), ErrorCode::Domain, "subset position out of range");
    xs.row(static_cast<Eigen::Index>(i)) = xs_.row(static_cast<Eigen::Index>(p));
    ids.push_back(ids_[p]);
    if (ys) ys->push_back((*ys_)[p]);
  }
  return LabeledSet(std::move(xs), std::move(ys), num_classes_, std::move(ids));
}

LabeledSet LabeledSet::relabeled(std::vector<int> ys) const {
  return LabeledSet(xs_, std::move(ys), num_classes_, ids_);
}

LabeledSet LabeledSet::unlabeled() const { return LabeledSet(xs_, std::nullopt, num_classes_, ids_); }

LabeledSet LabeledSet::concat(const LabeledSet& other) const {
  if (other.empty()) return *this;
  if (empty()) return other;
  require(other.dim() == dim() || other.empty(), ErrorCode::Shape, "concat: feature dimensions differ");
  require(has_labels() == other.has_labels(), ErrorCode::Domain, "concat: label presence differs");
  Matrix xs(xs_.rows() + other.xs_.rows(), xs_.cols());
  xs << xs_, other.xs_;
  std::vector<std::size_t> ids = ids_;
  ids.insert(ids.end(), other.ids_.begin(), other.ids_.end());
  std::optional<std::vector<int>> ys;
  if (ys_) {
    ys = *ys_;
    ys->insert(ys->end(), other.ys_->begin(), other.ys_->end());
  }
  return LabeledSet(std::move(xs), std::move(ys), num_classes_, std::move(ids));
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) {
    std::ostringstream msg;
    msg << path.string() << ": header truncated at offset " << offset;
    fail(ErrorCode::Format, msg.str());
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) buf.push_back(static_cast<unsigned char>(v >> shift));
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
  if (magic != expected) {
    std::ostringstream msg;
    msg << path.string() << ": bad magic 0x" << std::hex << magic << " at offset 0, expected 0x" << expected;
    fail(ErrorCode::Format, msg.str());
  }
}

void check_payload(std::size_t offset, std::size_t need, std::size_t have, const std::filesystem::path& path) {
  if (have - offset < need) {
    std::ostringstream msg;
    msg << path.string() << ": payload truncated at offset " << have << ", expected " << need
        << " bytes from offset " << offset;
    fail(ErrorCode::Format, msg.str());
  }
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;
constexpr std::uint32_t kDoublesMagic = 0x00000E02;

}  // namespace

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  check_magic(read_be32(buf, 0, path), kLabelsMagic, path);
  const std::size_t count = read_be32(buf, 4, path);
  check_payload(8, count, buf.size(), path);
  return {buf.begin() + 8, buf.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

LabeledSet load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                    int num_classes) {
  const auto buf = read_file(images);
  check_magic(read_be32(buf, 0, images), kImagesMagic, images);
  const std::size_t count = read_be32(buf, 4, images);
  const std::size_t rows = read_be32(buf, 8, images);
  const std::size_t cols = read_be32(buf, 12, images);
  const std::size_t dim = rows * cols;
  require(dim > 0, ErrorCode::Format, images.string() + ": zero-sized images in header at offset 8");
  check_payload(16, count * dim, buf.size(), images);

  auto ys = read_idx_labels(labels);
  if (ys.size() != count) {
    std::ostringstream msg;
    msg << labels.string() << ": label count " << ys.size() << " (offset 4) does not match image count "
        << count;
    fail(ErrorCode::Format, msg.str());
  }
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (ys[i] >= num_classes) {
      std::ostringstream msg;
      msg << labels.string() << ": label " << ys[i] << " at offset " << 8 + i << " exceeds class count";
      fail(ErrorCode::Format, msg.str());
    }
  }

  Matrix xs(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  const unsigned char* px = buf.data() + 16;
  for (std::size_t i = 0; i < count * dim; ++i) xs.data()[i] = px[i] / 255.0;
  return LabeledSet(std::move(xs), std::move(ys), num_classes);
}

void write_idx(const LabeledSet& set, const std::filesystem::path& images,
               const std::filesystem::path& labels, int rows, int cols) {
  require(rows >= 1 && cols >= 1 && rows * cols == set.dim(), ErrorCode::Shape,
          "write_idx: rows*cols must equal the feature dimension");
  std::vector<unsigned char> buf;
  buf.reserve(16 + set.size() * static_cast<std::size_t>(set.dim()));
  put_be32(buf, kImagesMagic);
  put_be32(buf, static_cast<std::uint32_t>(set.size()));
  put_be32(buf, static_cast<std::uint32_t>(rows));
  put_be32(buf, static_cast<std::uint32_t>(cols));
  const auto& xs = set.xs();
  for (Eigen::Index i = 0; i < xs.size(); ++i)
    buf.push_back(static_cast<unsigned char>(std::lround(xs.data()[i] * 255.0)));
  write_file(images, buf);
  write_idx_labels(set.ys(), labels);
}

void write_idx_labels(std::span<const int> ys, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  put_be32(buf, kLabelsMagic);
  put_be32(buf, static_cast<std::uint32_t>(ys.size()));
  for (int y : ys) {
    require(y >= 0 && y < 256, ErrorCode::Domain, "IDX labels must fit in one byte");
    buf.push_back(static_cast<unsigned char>(y));
  }
  write_file(path, buf);
}

void write_idx_doubles(const Matrix& xs, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  put_be32(buf, kDoublesMagic);
  put_be32(buf, static_cast<std::uint32_t>(xs.rows()));
  put_be32(buf, static_cast<std::uint32_t>(xs.cols()));
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(xs.data()[i]);
    put_be32(buf, static_cast<std::uint32_t>(bits >> 32));
    put_be32(buf, static_cast<std::uint32_t>(bits));
  }
  write_file(path, buf);
}

Matrix read_idx_doubles(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  check_magic(read_be32(buf, 0, path), kDoublesMagic, path);
  const std::size_t rows = read_be32(buf, 4, path);
  const std::size_t cols = read_be32(buf, 8, path);
  check_payload(12, rows * cols * 8, buf.size(), path);
  Matrix xs(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const std::size_t off = 12 + 8 * i;
    const std::uint64_t bits = (std::uint64_t{read_be32(buf, off, path)} << 32) | read_be32(buf, off + 4, path);
    xs.data()[i] = std::bit_cast<double>(bits);
  }
  return xs;
}

Vector blob_center(int cls, int dim) {
  Vector c(dim);
  const int corner = dim < 31 ? cls % (1 << dim) : cls;
  for (int j = 0; j < dim; ++j) c(j) = ((corner >> j) & 1) ? 0.75 : 0.25;
  return c;
}

LabeledSet synth_blobs(int n_per_class, int num_classes, int dim, double spread, Seed seed) {
  require(num_classes >= 2, ErrorCode::Domain, "synth_blobs needs at least two classes");
  require(dim >= 2, ErrorCode::Domain, "synth_blobs needs dim >= 2");
  require(spread > 0.0, ErrorCode::Domain, "synth_blobs needs spread > 0");
  require(n_per_class >= 1, ErrorCode::Domain, "synth_blobs needs at least one point per class");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  const auto n = static_cast<Eigen::Index>(n_per_class) * num_classes;
  Matrix xs(n, dim);
  std::vector<int> ys;
  ys.reserve(static_cast<std::size_t>(n));
  Eigen::Index r = 0;
  for (int k = 0; k < num_classes; ++k) {
    const Vector center = blob_center(k, dim);
    for (int i = 0; i < n_per_class; ++i, ++r) {
      for (int j = 0; j < dim; ++j) xs(r, j) = center(j) + noise(rng);
      ys.push_back(k);
    }
  }
  return LabeledSet(std::move(xs), std::move(ys), num_classes);
}

std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> fractions) {
  require(!fractions.empty(), ErrorCode::Domain, "split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    require(f > 0.0, ErrorCode::Domain, "split fractions must be positive");
    total += f;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::Domain, "split fractions must sum to 1");
  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
    const auto want = static_cast<std::size_t>(std::llround(fractions[i] * static_cast<double>(n)));
    const std::size_t take = std::min(want, n - used);
    sizes.push_back(take);
    used += take;
  }
  sizes.push_back(n - used);
  return sizes;
}

std::vector<LabeledSet> split(const LabeledSet& set, const SplitSpec& spec) {
  require(!set.empty(), ErrorCode::Domain, "cannot split an empty set");
  const auto sizes = split_sizes(set.size(), spec.fractions);
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<LabeledSet> parts;
  std::size_t start = 0;
  for (std::size_t len : sizes) {
    parts.push_back(set.subset(std::span<const std::size_t>(order).subspan(start, len)));
    start += len;
  }
  return parts;
}

}  // namespace lbt
