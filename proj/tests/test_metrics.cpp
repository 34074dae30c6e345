#include <doctest.h>

#include <numeric>
#include <random>

#include "lbt/dataset.hpp"
#include "lbt/error.hpp"
#include "lbt/metrics.hpp"
#include "oracles.hpp"

using namespace lbt;

namespace {

FaultTable table_of(const oracle::Case& c) {
  FaultTable t;
  for (auto id : c.order) t.add({id, c.truth.at(id), c.pred.at(id)});
  return t;
}

FaultTable positional(std::size_t n, std::initializer_list<std::size_t> fault_positions) {
  FaultTable out;
  for (std::size_t i = 1; i <= n; ++i) {
    const bool f = std::find(fault_positions.begin(), fault_positions.end(), i) != fault_positions.end();
    out.add({i, 0, f ? 1 : 0});
  }
  return out;
}

}  // namespace

TEST_CASE("fdr hand anchors") {
  FaultTable t;
  for (std::size_t i = 0; i < 100; ++i) t.add({i, 0, i < 50 ? 1 : 0});
  std::vector<std::size_t> sel{0, 1, 2, 3, 4, 5, 6, 60, 61, 62};
  CHECK(fdr(sel, t, 50) == doctest::Approx(0.7));
  std::vector<std::size_t> all(100);
  std::iota(all.begin(), all.end(), 0);
  CHECK(fdr(all, t, 50) == 1.0);
  std::vector<std::size_t> clean{70, 71};
  CHECK(fdr(clean, t, 50) == 0.0);
  CHECK_THROWS_AS(fdr(std::vector<std::size_t>{}, t, 50), Error);
}

TEST_CASE("apfd hand anchors") {
  const std::vector<std::size_t> perm{1, 2, 3, 4, 5};
  const Apfd first = apfd(perm, positional(5, {1, 2}));
  CHECK(first.raw == doctest::Approx(0.8));
  CHECK(first.normalized == doctest::Approx(1.0));
  const Apfd last = apfd(perm, positional(5, {4, 5}));
  CHECK(last.raw == doctest::Approx(0.2));
  CHECK(last.normalized == doctest::Approx(0.0));
  CHECK_THROWS_AS(apfd(perm, positional(5, {})), Error);
}

TEST_CASE("faults-first ordering is normalised to one for any n and k") {
  for (std::size_t n = 1; n <= 12; ++n)
    for (std::size_t k = 1; k <= n; ++k) {
      std::vector<std::size_t> pos(k);
      std::iota(pos.begin(), pos.end(), 1);
      CHECK(apfd_from_positions(pos, n).normalized == doctest::Approx(1.0));
    }
}

TEST_CASE("metrics agree with brute force on random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const oracle::Case c = oracle::random_case(rng);
    const FaultTable t = table_of(c);
    const auto [raw, norm] = oracle::brute_apfd(c);
    const Apfd a = apfd(c.order, t);
    CHECK(std::abs(a.raw - raw) <= 1e-12);
    CHECK(std::abs(a.normalized - norm) <= 1e-12);
    CHECK(std::abs(rauc(c.order, t) - oracle::brute_rauc(c)) <= 1e-12);
    const std::size_t k = 1 + static_cast<std::size_t>(rng() % c.order.size());
    const std::vector<std::size_t> sel(c.order.begin(), c.order.begin() + static_cast<long>(k));
    CHECK(std::abs(fdr(sel, t, t.total_faults()) - oracle::brute_fdr(c, sel)) <= 1e-12);
  }
}

TEST_CASE("rauc anchors") {
  FaultTable t;
  t.add({1, 0, 1});
  t.add({2, 1, 0});
  t.add({3, 0, 0});
  t.add({4, 0, 1});
  CHECK(rauc(std::vector<std::size_t>{1, 2, 3, 4}, t) == doctest::Approx(1.0));
  FaultTable one;
  one.add({1, 0, 0});
  one.add({2, 0, 1});
  one.add({3, 0, 1});
  // c = 0,1,1 ; ideal = 1,1,1
  CHECK(rauc(std::vector<std::size_t>{1, 2, 3}, one) == doctest::Approx(2.0 / 3.0));
  FaultTable none;
  none.add({1, 0, 0});
  CHECK_THROWS_AS(rauc(std::vector<std::size_t>{1}, none), Error);
}

TEST_CASE("normalised apfd ignores relabeling of clean tests") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    oracle::Case c = oracle::random_case(rng);
    const double before = apfd(c.order, table_of(c)).normalized;
    for (auto id : c.order)
      if (!c.fault(id)) c.truth[id] = c.pred[id] = (c.truth[id] + 1) % 5;
    CHECK(apfd(c.order, table_of(c)).normalized == doctest::Approx(before).epsilon(1e-14));
  }
}

TEST_CASE("fdr is monotone when a fault joins a small selection") {
  FaultTable t;
  for (std::size_t i = 0; i < 20; ++i) t.add({i, 0, i % 2 ? 1 : 0});
  std::vector<std::size_t> sel{0, 2, 1};
  const double before = fdr(sel, t, 10);
  sel.push_back(3);
  CHECK(fdr(sel, t, 10) >= before);
}

TEST_CASE("fault types are ordered label pairs") {
  FaultTable t;
  t.add({1, 2, 3});
  t.add({2, 3, 2});
  t.add({3, 2, 3});
  t.add({4, 1, 1});
  const auto types = fault_types(std::vector<std::size_t>{1, 2, 3, 4}, t);
  REQUIRE(types.size() == 2);
  CHECK(types[0] == FaultType{2, 3});
  CHECK(types[1] == FaultType{3, 2});
  CHECK_FALSE(t.at(4).fault_type().has_value());
}

TEST_CASE("retrain_eval contracts") {
  const LabeledSet data = synth_blobs(20, 2, 2, 0.1, 1);
  const Network net = Network::mlp({2, 4, 2}, 1);
  std::vector<std::size_t> a{0, 1, 2, 3}, b{10, 11, 12, 13, 30, 31};
  const LabeledSet sel = data.subset(a), ev = data.subset(b);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK(retrain_eval(net, sel, ev, cfg) == 0.0);
  CHECK_THROWS_AS(retrain_eval(net, sel, sel, cfg), Error);
  CHECK_THROWS_AS(retrain_eval(net, data.subset(std::vector<std::size_t>{}), ev, cfg), Error);
}
