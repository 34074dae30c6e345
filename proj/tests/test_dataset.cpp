#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "lbt/dataset.hpp"
#include "lbt/error.hpp"
#include "lbt/nn.hpp"

using namespace lbt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lbt_test_dataset";
  fs::create_directories(dir);
  return dir / name;
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void raw_images(const fs::path& p, std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                unsigned char fill, std::size_t payload) {
  std::ofstream out(p, std::ios::binary);
  write_be32(out, magic);
  write_be32(out, n);
  write_be32(out, rows);
  write_be32(out, cols);
  std::string bytes(payload, static_cast<char>(fill));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void raw_labels(const fs::path& p, std::uint32_t magic, std::uint32_t n, std::size_t payload) {
  std::ofstream out(p, std::ios::binary);
  write_be32(out, magic);
  write_be32(out, n);
  std::string bytes(payload, '\3');
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode{};
}

}  // namespace

TEST_CASE("idx: all-255 image scales to exactly 1.0") {
  raw_images(scratch("white-img"), 0x803, 2, 28, 28, 255, 2 * 784);
  raw_labels(scratch("white-lbl"), 0x801, 2, 2);
  const LabeledSet s = load_idx(scratch("white-img"), scratch("white-lbl"));
  CHECK(s.size() == 2);
  CHECK(s.dim() == 784);
  CHECK((s.xs().array() == 1.0).all());
  CHECK(s.ys()[1] == 3);
}

TEST_CASE("idx: bad magic, truncation and count mismatch are format errors") {
  raw_images(scratch("ok-img"), 0x803, 10, 2, 2, 7, 40);
  raw_labels(scratch("ok-lbl"), 0x801, 10, 10);
  CHECK_NOTHROW(load_idx(scratch("ok-img"), scratch("ok-lbl")));

  raw_images(scratch("magic-img"), 0x804, 10, 2, 2, 7, 40);
  CHECK(code_of([] { load_idx(scratch("magic-img"), scratch("ok-lbl")); }) == ErrorCode::Format);
  raw_labels(scratch("magic-lbl"), 0x803, 10, 10);
  CHECK(code_of([] { load_idx(scratch("ok-img"), scratch("magic-lbl")); }) == ErrorCode::Format);

  raw_labels(scratch("short-lbl"), 0x801, 10, 9);
  CHECK(code_of([] { load_idx(scratch("ok-img"), scratch("short-lbl")); }) == ErrorCode::Format);
  raw_images(scratch("short-img"), 0x803, 10, 2, 2, 7, 39);
  CHECK(code_of([] { load_idx(scratch("short-img"), scratch("ok-lbl")); }) == ErrorCode::Format);

  raw_labels(scratch("count-lbl"), 0x801, 9, 9);
  CHECK(code_of([] { load_idx(scratch("ok-img"), scratch("count-lbl")); }) == ErrorCode::Format);

  try {
    load_idx(scratch("short-img"), scratch("ok-lbl"));
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("idx round trip is exact on the byte domain") {
  Matrix xs(3, 4);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) xs(r, c) = static_cast<double>((r * 37 + c * 91) % 256) / 255.0;
  const LabeledSet s(xs, std::vector<int>{0, 4, 9}, 10);
  write_idx(s, scratch("rt-img"), scratch("rt-lbl"), 2, 2);
  const LabeledSet back = load_idx(scratch("rt-img"), scratch("rt-lbl"));
  CHECK(back.ys() == s.ys());
  CHECK(((back.xs() * 255.0).array().round() == (xs * 255.0).array().round()).all());
}

TEST_CASE("double idx round trip is bit exact") {
  const LabeledSet s = synth_blobs(5, 3, 3, 0.1, 2);
  write_idx_doubles(s.xs(), scratch("dbl"));
  CHECK(read_idx_doubles(scratch("dbl")) == s.xs());
  write_idx_labels(s.ys(), scratch("dbl-lbl"));
  CHECK(read_idx_labels(scratch("dbl-lbl")) == s.ys());
}

TEST_CASE("labeled set invariants") {
  Matrix xs(2, 2);
  xs << -0.5, 0.5, 1.5, 0.25;
  const LabeledSet s(xs, std::vector<int>{0, 1}, 2);
  CHECK(s.xs()(0, 0) == 0.0);
  CHECK(s.xs()(1, 0) == 1.0);
  CHECK(code_of([&] { LabeledSet(xs, std::vector<int>{0}, 2); }) == ErrorCode::Shape);
  CHECK(code_of([&] { LabeledSet(xs, std::vector<int>{0, 2}, 2); }) == ErrorCode::Domain);
  Matrix bad = xs;
  bad(0, 1) = std::nan("");
  CHECK(code_of([&] { LabeledSet(bad, std::nullopt, 2); }) != ErrorCode{});
}

TEST_CASE("blobs: determinism, degenerate spread and learnability") {
  CHECK(synth_blobs(10, 3, 2, 0.1, 1).xs() == synth_blobs(10, 3, 2, 0.1, 1).xs());
  const LabeledSet tight = synth_blobs(10, 4, 3, 1e-12, 1);
  for (std::size_t i = 0; i < tight.size(); ++i)
    CHECK((tight.row(i) - blob_center(tight.ys()[i], 3)).cwiseAbs().maxCoeff() < 1e-9);

  // A softmax-regression (no hidden layer) model is a linear classifier.
  const LabeledSet data = synth_blobs(100, 2, 2, 0.05, 4);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 1;
  const Network linear = sgd_train(Network::mlp({2, 2}, 1), data, cfg);
  CHECK(accuracy(linear, data) >= 0.95);
  CHECK_THROWS_AS(synth_blobs(10, 1, 2, 0.1, 1), Error);
}

TEST_CASE("split sizes and partition") {
  CHECK(split_sizes(10, std::vector<double>{0.9, 0.1}) == std::vector<std::size_t>{9, 1});
  const LabeledSet s = synth_blobs(25, 4, 2, 0.1, 8);
  const auto one = split(s, {{1.0}, 3});
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == s.size());

  const auto a = split(s, {{0.5, 0.3, 0.2}, 3});
  const auto b = split(s, {{0.5, 0.3, 0.2}, 3});
  const auto c = split(s, {{0.5, 0.3, 0.2}, 4});
  std::multiset<std::size_t> seen;
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(a[p].ids() == b[p].ids());
    CHECK(a[p].size() == c[p].size());
    for (auto id : a[p].ids()) seen.insert(id);
  }
  CHECK(a[0].ids() != c[0].ids());
  std::multiset<std::size_t> all(s.ids().begin(), s.ids().end());
  CHECK(seen == all);
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < a[p].size(); ++i) {
      const auto id = a[p].ids()[i];
      CHECK(a[p].row(i) == s.row(id));
    }
  CHECK_THROWS_AS(split(s.subset(std::vector<std::size_t>{}), {{1.0}, 1}), Error);
  CHECK_THROWS_AS(split(s, {{0.5, 0.4}, 1}), Error);
}
