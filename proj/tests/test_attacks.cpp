#include <doctest.h>

#include <filesystem>

#include "lbt/attacks.hpp"
#include "lbt/error.hpp"

using namespace lbt;

namespace {

struct Blobs {
  LabeledSet train = synth_blobs(200, 2, 2, 0.1, 31);
  LabeledSet test = synth_blobs(100, 2, 2, 0.1, 32);
  Network mut = sgd_train(Network::mlp({2, 16, 2}, 5), train, {0.1, 30, 32, 5, 0.0});
};

const Blobs& blobs() {
  static const Blobs b;
  return b;
}

}  // namespace

TEST_CASE("fgsm: zero step and L-infinity bound") {
  const auto& b = blobs();
  REQUIRE(accuracy(b.mut, b.test) >= 0.95);
  const AdvSet zero = fgsm(b.mut, b.test, 0.0);
  CHECK(zero.adversarials == b.test.xs());
  CHECK(adversarial_accuracy(b.mut, zero) == accuracy(b.mut, b.test));
  const AdvSet adv = fgsm(b.mut, b.test, 0.25);
  const Matrix diff = (adv.adversarials - b.test.xs()).cwiseAbs();
  CHECK(diff.maxCoeff() <= 0.25 + 1e-15);
  CHECK(adv.adversarials.minCoeff() >= 0.0);
  CHECK(adv.adversarials.maxCoeff() <= 1.0);
  for (Eigen::Index r = 0; r < diff.rows(); ++r)
    for (Eigen::Index c = 0; c < diff.cols(); ++c) {
      const double x = b.test.xs()(r, c), d = diff(r, c);
      const bool clipped = adv.adversarials(r, c) == 0.0 || adv.adversarials(r, c) == 1.0;
      if (!clipped) CHECK((d == 0.0 || std::abs(d - 0.25) < 1e-12));
      (void)x;
    }
  CHECK(adversarial_accuracy(b.mut, adv) < accuracy(b.mut, b.test));
}

TEST_CASE("fgsm needs ground truth") {
  const auto& b = blobs();
  CHECK_THROWS_AS(fgsm(b.mut, b.test.unlabeled(), 0.1), Error);
}

TEST_CASE("jsma budget, zero step and effectiveness") {
  const auto& b = blobs();
  AttackConfig cfg;
  cfg.kind = AttackKind::JSMA;
  cfg.gamma = 0.5;  // gamma * d = 1
  cfg.theta = 0.5;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto r = jsma(b.mut, b.test.row(i), b.test.ys()[i], cfg);
    CHECK(((r.x - b.test.row(i)).array() != 0.0).count() <= 1);
  }
  cfg.theta = 0.0;
  const auto still = jsma(b.mut, b.test.row(0), b.test.ys()[0], cfg);
  CHECK(still.x == b.test.row(0));
  CHECK_FALSE(still.fooled);

  cfg.theta = 0.5;
  cfg.gamma = 0.3;
  CHECK_THROWS_AS(cfg.validate(2), Error);  // gamma * d < 1
  cfg.gamma = 1.0;
  const AdvSet adv = jsma_set(b.mut, b.test, cfg);
  std::size_t fooled = 0;
  for (bool f : adv.fooled) fooled += f;
  CHECK(fooled > 0);
  CHECK(adv.adversarials.minCoeff() >= 0.0);
  CHECK(adv.adversarials.maxCoeff() <= 1.0);
  CHECK(jsma_set(b.mut, b.test, cfg).adversarials == adv.adversarials);
}

TEST_CASE("tuning lands in the accuracy band") {
  const auto& b = blobs();
  const TuneResult t = tune_attack(b.mut, b.test, AttackConfig{});
  CHECK(t.adv_accuracy >= 0.40);
  CHECK(t.adv_accuracy <= t.benign_accuracy - 0.30);
  // weakest: every earlier grid point was outside the band
  for (std::size_t i = 0; i + 1 < t.frontier.size(); ++i)
    CHECK_FALSE((t.frontier[i].adv_accuracy >= 0.40 && t.frontier[i].adv_accuracy <= t.benign_accuracy - 0.30));
  CHECK(adversarial_accuracy(b.mut, generate(b.mut, b.test, t.config)) == doctest::Approx(t.adv_accuracy));
}

TEST_CASE("tuning bisects when the band falls between grid points") {
  const auto& b = blobs();
  // Frontier of the full grid, then a band strictly inside its widest drop.
  std::vector<double> acc;
  for (int k = 1; k <= 20; ++k) {
    AttackConfig cfg;
    cfg.epsilon = 0.05 * k;
    acc.push_back(adversarial_accuracy(b.mut, generate(b.mut, b.test, cfg)));
  }
  std::size_t widest = 1;
  for (std::size_t i = 1; i < acc.size(); ++i)
    if (acc[i - 1] - acc[i] > acc[widest - 1] - acc[widest]) widest = i;
  const double hi = acc[widest - 1], lo = acc[widest];
  REQUIRE(hi - lo > 0.1);
  const double benign = accuracy(b.mut, b.test);
  const AttackBand band{lo + 0.3 * (hi - lo), benign - (lo + 0.7 * (hi - lo))};
  const TuneResult t = tune_attack(b.mut, b.test, AttackConfig{}, band);
  CHECK(t.adv_accuracy >= band.floor);
  CHECK(t.adv_accuracy <= benign - band.drop);
  CHECK(t.config.epsilon > 0.05 * static_cast<double>(widest));
  CHECK(t.config.epsilon < 0.05 * static_cast<double>(widest + 1));
}

TEST_CASE("tuning refuses an empty band") {
  const auto& b = blobs();
  const Network weak = Network::mlp({2, 2}, 1);
  // Relabel so the MUT sits near 0.65 accuracy.
  std::vector<int> ys = predict(b.mut, b.test.xs());
  for (std::size_t i = 0; i < ys.size(); i += 3) ys[i] = 1 - ys[i];
  try {
    tune_attack(b.mut, b.test.relabeled(ys), AttackConfig{});
    FAIL("expected precondition failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Domain);
  }
  (void)weak;
}

TEST_CASE("adv set persistence") {
  const auto& b = blobs();
  const AdvSet adv = fgsm(b.mut, b.test, 0.2);
  const auto dir = std::filesystem::temp_directory_path() / "lbt_test_attacks";
  std::filesystem::remove_all(dir);
  save_adv_set(adv, dir, "adv", {{"note", 1}});
  const AdvSet back = load_adv_set(dir, "adv");
  CHECK(back.adversarials == adv.adversarials);
  CHECK(back.originals.xs() == adv.originals.xs());
  CHECK(back.originals.ys() == adv.originals.ys());
  CHECK(back.originals.ids() == adv.originals.ids());
  CHECK(back.fooled == adv.fooled);
  CHECK(back.config.epsilon == adv.config.epsilon);
  try {
    load_adv_set(dir / "missing", "adv");
    FAIL("expected missing artifact");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingArtifact);
    CHECK(std::string(e.what()).find("gen-adv") != std::string::npos);
  }
}
