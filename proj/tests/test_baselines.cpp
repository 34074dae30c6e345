#include <doctest.h>

#include <cmath>
#include <random>
#include <numeric>
#include <sstream>

#include "lbt/baselines.hpp"
#include "lbt/dataset.hpp"
#include "lbt/error.hpp"
#include "oracles.hpp"

using namespace lbt;

namespace {

Vector probs(std::initializer_list<double> v) {
  Vector p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

// Provider with fixed activations, for exercising the scoring formulas.
class FixedProvider final : public ActivationProvider {
 public:
  explicit FixedProvider(std::vector<Vector> layers) : layers_(std::move(layers)) {}
  Vector probabilities(const Vector&) const override { return probs({0.5, 0.5}); }
  Vector last_hidden(const Vector&) const override { return layers_.back(); }
  std::vector<Vector> neurons(const Vector&) const override { return layers_; }

 private:
  std::vector<Vector> layers_;
};

struct Trained {
  LabeledSet train = synth_blobs(100, 3, 2, 0.08, 50);
  Network mut = sgd_train(Network::mlp({2, 12, 8, 3}, 2), train, {0.1, 30, 32, 2, 0.0});
};

}  // namespace

TEST_CASE("confidence scores") {
  CHECK(gini(probs({0, 1, 0})) == 0.0);
  CHECK(gini(Vector::Constant(10, 0.1)) == doctest::Approx(0.9));
  CHECK(gini(probs({0.6, 0.4})) == doctest::Approx(0.48));
  CHECK(pe(probs({1, 0})) == 0.0);
  CHECK(pe(Vector::Constant(4, 0.25)) == doctest::Approx(std::log(4.0)));
  CHECK(maxp(probs({0, 1})) == 1.0);
  CHECK(maxp(Vector::Constant(5, 0.2)) == doctest::Approx(0.2));
  CHECK_THROWS_AS(gini(probs({0.6, 0.5})), Error);
  CHECK_THROWS_AS(pe(probs({0.3, 0.3})), Error);
}

TEST_CASE("binary confidence scores rank identically up to ties") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int batch = 0; batch < 20; ++batch) {
    std::vector<double> g, e, m;
    for (int i = 0; i < 40; ++i) {
      const double p = i % 7 == 0 ? 0.5 : u(rng);
      const Vector v = probs({p, 1.0 - p});
      g.push_back(gini(v));
      e.push_back(pe(v));
      m.push_back(1.0 - maxp(v));
    }
    CHECK(oracle::same_ranking_modulo_ties(g, e));
    CHECK(oracle::same_ranking_modulo_ties(e, m));
    CHECK(oracle::same_ranking_modulo_ties(m, g));
  }
}

TEST_CASE("NAC and NBC anchors") {
  const FixedProvider zeros({Vector::Zero(4), Vector::Zero(3)});
  CHECK(nac(zeros, Vector::Zero(2), 0.75) == 0.0);
  const std::vector<Vector> ones{Vector::Ones(4), Vector::Ones(3)};
  CHECK(nac_score(ones, 0.75) == 1.0);

  Vector mixed(4);
  mixed << 0.0, 1.0, 2.0, 4.0;  // scaled: 0, .25, .5, 1
  const FixedProvider one_layer({mixed});
  CHECK(nac(one_layer, Vector::Zero(2), 0.4) == doctest::Approx(0.5));

  const Trained t;
  const NetworkActivationProvider provider(t.mut);
  const NeuronBounds bounds = neuron_bounds(provider, t.train.xs());
  for (std::size_t i = 0; i < t.train.size(); i += 17) CHECK(nbc(provider, t.train.row(i), bounds) == 0.0);
  NeuronBounds partial = bounds;
  partial.low.pop_back();
  partial.high.pop_back();
  CHECK_THROWS_AS(nbc(provider, t.train.row(0), partial), Error);
}

TEST_CASE("NBC counts neurons outside observed bounds") {
  NeuronBounds b{{Vector::Zero(2)}, {Vector::Ones(2)}};
  Vector a(2);
  a << 1.5, 0.5;
  CHECK(nbc_score(std::vector<Vector>{a}, b) == 0.5);
}

TEST_CASE("DSA and KDE") {
  const Trained t;
  const NetworkActivationProvider provider(t.mut);
  const auto refs = surprise_references(provider, t.train.xs(), 3);
  for (std::size_t i = 0; i < t.train.size(); i += 23) {
    CHECK(dsa(provider, t.train.row(i), refs) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isfinite(kde_score(provider, t.train.row(i), refs)));
  }
  // The density is positive everywhere, so its logarithm is finite.
  CHECK(std::isfinite(kde_score(provider, Vector::Constant(2, 0.5), refs)));
  CHECK(kde_score(provider, Vector::Constant(2, 0.5), refs) < kde_score(provider, t.train.row(0), refs));

  SurpriseReferences lonely = refs;
  lonely.labels.assign(lonely.labels.size(), 0);
  lonely.labels[0] = 1;
  try {
    DsaScorer scorer(lonely);
    FAIL("expected a degenerate-class error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
}

TEST_CASE("KDE: a point between two clusters is less dense than a centre") {
  SurpriseReferences refs;
  refs.num_classes = 1;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.1);
  refs.activations.resize(200, 2);
  for (int i = 0; i < 200; ++i) {
    const double cx = i < 100 ? 0.0 : 4.0;
    refs.activations(i, 0) = cx + n(rng);
    refs.activations(i, 1) = n(rng);
  }
  refs.labels.assign(200, 0);
  const KdeScorer kde(refs);
  Vector centre(2), mid(2);
  centre << 0.0, 0.0;
  mid << 2.0, 0.0;
  CHECK(kde.log_density(mid, 0) < kde.log_density(centre, 0));
}

TEST_CASE("rank_by and random_rank") {
  const std::vector<std::size_t> ids{10, 11, 12};
  const std::vector<double> scores{3, 1, 2};
  const auto desc = rank_by(ids, scores, Direction::Descending);
  CHECK(desc.top_ids(3) == std::vector<std::size_t>{10, 12, 11});
  const auto asc = rank_by(ids, scores, Direction::Ascending);
  CHECK(asc.top_ids(2) == std::vector<std::size_t>{11, 12});
  const std::vector<double> tied{1, 1, 1};
  CHECK(rank_by(ids, tied, Direction::Descending).top_ids(3) == ids);
  CHECK(random_rank(std::vector<std::size_t>{4}, 1).top_ids(1) == std::vector<std::size_t>{4});
  std::vector<std::size_t> many(50);
  std::iota(many.begin(), many.end(), 0);
  CHECK(random_rank(many, 9).top_ids(50) == random_rank(many, 9).top_ids(50));
  CHECK(random_rank(many, 9).top_ids(50) != random_rank(many, 10).top_ids(50));
}

TEST_CASE("every baseline ranks every candidate deterministically") {
  const Trained t;
  const LabeledSet cand = synth_blobs(20, 3, 2, 0.2, 51);
  std::vector<std::size_t> ids(cand.size());
  std::iota(ids.begin(), ids.end(), 100);
  for (auto m : all_baselines()) {
    const auto a = rank_baseline(m, t.mut, t.train.xs(), cand.xs(), ids, {});
    const auto b = rank_baseline(m, t.mut, t.train.xs(), cand.xs(), ids, {});
    CHECK(a.entries.size() == ids.size());
    CHECK(a.top_ids(ids.size()) == b.top_ids(ids.size()));
    CHECK(baseline_from_string(to_string(m)) == m);
    std::ostringstream csv;
    a.write_csv(csv, 5);
    CHECK(!csv.str().empty());
  }
  CHECK_THROWS_AS(baseline_from_string("dr"), Error);
}
