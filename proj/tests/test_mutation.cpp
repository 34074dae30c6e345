#include <doctest.h>

#include <chrono>

#include "lbt/dataset.hpp"
#include "lbt/error.hpp"
#include "lbt/mutation.hpp"

using namespace lbt;

namespace {

const std::vector<MutationOperator> kOps{MutationOperator::GF, MutationOperator::WS, MutationOperator::NAI,
                                         MutationOperator::NS};

struct Fixture {
  LabeledSet data = synth_blobs(150, 2, 2, 0.1, 21);
  Network net = sgd_train(Network::mlp({2, 16, 2}, 3), data, {0.1, 30, 32, 3, 0.0});
};

}  // namespace

TEST_CASE("empty selections and zero noise leave the base untouched") {
  const Network base = Network::mlp({4, 10, 6, 3}, 1);
  for (auto op : kOps) {
    MutantSpec spec{op, 0.0, 1.0, 5};
    CHECK(selection_size(base, spec) == 0);
    CHECK(mutate(base, spec) == base);
  }
  CHECK(mutate(base, {MutationOperator::GF, 1.0, 0.0, 5}) == base);
}

TEST_CASE("NAI and NS are involutions under a fixed seed") {
  const Network base = Network::mlp({4, 10, 6, 3}, 2);
  for (auto op : {MutationOperator::NAI, MutationOperator::NS}) {
    for (double rate : {0.25, 0.5, 1.0}) {
      const MutantSpec spec{op, rate, 1.0, 77};
      const Network once = mutate(base, spec);
      CHECK_FALSE(once == base);
      CHECK(mutate(once, spec) == base);
    }
  }
}

TEST_CASE("mutate never modifies its base and is deterministic") {
  const Network base = Network::mlp({3, 8, 2}, 4);
  const auto hash = base.weights_hash();
  for (auto op : kOps) {
    const MutantSpec spec{op, 0.5, 1.0, 9};
    CHECK(mutate(base, spec) == mutate(base, spec));
    CHECK(base.weights_hash() == hash);
  }
}

TEST_CASE("GF perturbs exactly round(rate * |W|) weights") {
  const Network base = Network::mlp({10, 20, 5}, 6);
  const MutantSpec spec{MutationOperator::GF, 0.1, 1.0, 3};
  const Network m = mutate(base, spec);
  std::size_t changed = 0;
  for (std::size_t l = 0; l < base.layers().size(); ++l) {
    if (!base.layers()[l].is_dense()) continue;
    changed += static_cast<std::size_t>(
        (base.layers()[l].weight.array() != m.layers()[l].weight.array()).count());
    CHECK(base.layers()[l].bias == m.layers()[l].bias);
  }
  CHECK(changed == selection_size(base, spec));
  CHECK(changed == 30);  // 10*20 + 20*5 weights
}

TEST_CASE("WS permutes rows without changing their contents") {
  const Network base = Network::mlp({6, 8, 2}, 7);
  const Network m = mutate(base, {MutationOperator::WS, 1.0, 1.0, 1});
  const auto& a = base.layers()[0].weight;
  const auto& b = m.layers()[0].weight;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    std::vector<double> x(a.row(r).begin(), a.row(r).end()), y(b.row(r).begin(), b.row(r).end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    CHECK(x == y);
  }
  CHECK(m.layers()[2].weight == base.layers()[2].weight);
}

TEST_CASE("output logits are never mutated") {
  const Network base = Network::mlp({4, 6, 3}, 8);
  for (auto op : kOps) {
    const Network m = mutate(base, {op, 1.0, 1.0, 2});
    if (op == MutationOperator::GF) continue;
    CHECK(m.layers()[2].weight == base.layers()[2].weight);
    CHECK(m.layers()[2].bias == base.layers()[2].bias);
  }
}

TEST_CASE("NS on single-neuron layers is inapplicable") {
  const Network base = Network::mlp({3, 1, 2}, 1);
  try {
    mutate(base, {MutationOperator::NS, 1.0, 1.0, 1});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OperatorInapplicable);
  }
}

TEST_CASE("sanity gate") {
  const Network base = Network::mlp({2, 4, 2}, 1);
  const Matrix val = synth_blobs(10, 2, 2, 0.1, 1).xs();
  CHECK(sanity_gate(base, base, val, 1.0).accepted);
  CHECK(sanity_gate(base, base, val, 1.0).agreement == 1.0);
  const Network wild = mutate(base, {MutationOperator::GF, 1.0, 50.0, 3});
  CHECK(sanity_gate(base, wild, val, 0.0).accepted);
}

TEST_CASE("GF pool on a blobs model accepts most candidates and is prefix stable") {
  Fixture f;
  PoolConfig pc;
  pc.seed = 11;
  MutantPool pool(f.net, f.data.xs(), pc);
  const auto t0 = std::chrono::steady_clock::now();
  pool.grow(100);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 10.0);
  CHECK(pool.size() == 100);
  CHECK(100.0 / static_cast<double>(pool.candidates().size()) >= 0.80);
  for (std::size_t i = 0; i < pool.size(); ++i) CHECK(pool.agreement(i) >= 0.90);

  MutantPool halves(f.net, f.data.xs(), pc);
  halves.grow(0);
  CHECK(halves.size() == 0);
  halves.grow(50);
  halves.grow(50);
  for (std::size_t i = 0; i < 100; ++i) CHECK(halves.spec(i).seed == pool.spec(i).seed);
  CHECK(halves.materialize(42) == pool.materialize(42));
}

TEST_CASE("an impossible gate exhausts the pool") {
  Fixture f;
  PoolConfig pc;
  pc.rate = 1.0;
  pc.gf_sigma = 100.0;
  pc.min_agreement = 1.0;
  MutantPool pool(f.net, f.data.xs(), pc);
  try {
    pool.grow(3);
    FAIL("expected exhaustion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PoolExhausted);
  }
}

TEST_CASE("manifest round trip") {
  Fixture f;
  PoolConfig pc;
  pc.operators = {MutationOperator::NAI};
  pc.rate = 0.1;
  pc.min_agreement = 0.5;
  MutantPool pool(f.net, f.data.xs(), pc);
  pool.grow(10);
  const auto doc = nlohmann::json::parse(pool.manifest().dump());
  const MutantPool back = MutantPool::from_manifest(f.net, f.data.xs(), doc);
  REQUIRE(back.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) CHECK(back.materialize(i) == pool.materialize(i));
  Network other = f.net;
  other.layers()[0].bias(0) += 1.0;
  CHECK_THROWS_AS(MutantPool::from_manifest(other, f.data.xs(), doc), Error);
}

TEST_CASE("mutation score counts differing mutants") {
  const Network base = Network::mlp({2, 4, 2}, 1);
  const Vector x = Vector::Constant(2, 0.3);
  std::vector<Network> same(4, base);
  CHECK(mutation_score(base, same, x).z == 0);
  CHECK(mutation_score(base, same, x).n == 4);
}

TEST_CASE("benign mutation scores on an accepted pool stay low") {
  Fixture f;
  PoolConfig pc;
  pc.seed = 5;
  MutantPool pool(f.net, f.data.xs(), pc);
  pool.grow(100);
  std::vector<Network> mutants;
  for (std::size_t i = 0; i < pool.size(); ++i) mutants.push_back(pool.materialize(i));
  double total = 0.0;
  for (std::size_t r = 0; r < f.data.size(); ++r) {
    const auto s = mutation_score(f.net, mutants, f.data.row(r));
    total += static_cast<double>(s.z) / s.n;
  }
  CHECK(total / static_cast<double>(f.data.size()) <= 0.10);
}
