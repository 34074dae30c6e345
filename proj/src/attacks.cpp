#include "lbt/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lbt/error.hpp"

namespace lbt {

const char* to_string(AttackKind kind) { return kind == AttackKind::FGSM ? "FGSM" : "JSMA"; }

AttackKind attack_kind_from_string(const std::string& name) {
  if (name == "FGSM" || name == "fgsm") return AttackKind::FGSM;
  if (name == "JSMA" || name == "jsma") return AttackKind::JSMA;
  fail(ErrorCode::Config, "unknown attack kind '" + name + "'");
}

void AttackConfig::validate(int dim) const {
  if (kind == AttackKind::FGSM) {
    require(epsilon >= 0.0 && epsilon <= 1.0, ErrorCode::Config, "FGSM epsilon must lie in [0, 1]");
  } else {
    require(std::isfinite(theta) && std::abs(theta) <= 1.0, ErrorCode::Config, "JSMA theta must lie in [-1, 1]");
    require(gamma > 0.0 && gamma <= 1.0, ErrorCode::Config, "JSMA gamma must lie in (0, 1]");
    require(gamma * dim >= 1.0 - 1e-12, ErrorCode::Config, "JSMA gamma * d must be at least 1");
  }
}

LabeledSet AdvSet::as_labeled() const {
  return LabeledSet(adversarials, originals.ys(), originals.num_classes(), originals.ids());
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<bool> fooled_flags(const Network& mut, const Matrix& adv, const std::vector<int>& ys) {
  const auto pred = predict(mut, adv);
  std::vector<bool> fooled(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) fooled[i] = pred[i] != ys[i];
  return fooled;
}

}  // namespace

AdvSet fgsm(const Network& mut, const LabeledSet& set, double epsilon) {
  AttackConfig cfg;
  cfg.kind = AttackKind::FGSM;
  cfg.epsilon = epsilon;
  cfg.validate(set.dim());
  require(set.has_labels(), ErrorCode::Domain, "FGSM needs ground-truth labels");
  Matrix adv = set.xs();
  const auto& ys = set.ys();
  if (epsilon > 0.0) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Vector g = input_gradient(mut, set.row(i), ys[i], GradientOf::Loss);
      auto row = adv.row(static_cast<Eigen::Index>(i));
      for (Eigen::Index j = 0; j < row.size(); ++j)
        row(j) = std::clamp(row(j) + epsilon * sign(g(j)), 0.0, 1.0);
    }
  }
  auto fooled = fooled_flags(mut, adv, ys);
  return {set, std::move(adv), cfg, std::move(fooled)};
}

JsmaResult jsma(const Network& mut, const Vector& x, int y_true, const AttackConfig& cfg) {
  require(cfg.kind == AttackKind::JSMA, ErrorCode::Config, "jsma called with a non-JSMA config");
  cfg.validate(static_cast<int>(x.size()));
  JsmaResult res{x, false, 0};
  if (cfg.theta == 0.0) return res;

  const auto dim = x.size();
  const auto budget = static_cast<int>(std::ceil(cfg.gamma * static_cast<double>(dim) - 1e-9));
  const bool increase = cfg.theta > 0.0;
  std::vector<bool> touched(static_cast<std::size_t>(dim), false);

  for (int step = 0; step < budget; ++step) {
    const Vector probs = forward(mut, res.x);
    if (argmax(probs) != y_true) break;
    int target = -1;
    for (int c = 0; c < probs.size(); ++c)
      if (c != y_true && (target < 0 || probs(c) > probs(target))) target = c;

    const Matrix jac = logit_jacobian(mut, res.x);
    const Vector alpha = jac.row(target).transpose();
    const Vector beta = jac.colwise().sum().transpose() - alpha;

    Eigen::Index best = -1;
    double best_saliency = 0.0;
    Eigen::Index fallback = -1;
    double fallback_score = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (touched[static_cast<std::size_t>(i)]) continue;
      if (increase ? res.x(i) >= 1.0 : res.x(i) <= 0.0) continue;
      const double a = alpha(i);
      const double b = beta(i);
      const double saliency = increase ? ((a > 0.0 && b < 0.0) ? a * -b : 0.0)
                                       : ((a < 0.0 && b > 0.0) ? -a * b : 0.0);
      if (saliency > best_saliency) {
        best_saliency = saliency;
        best = i;
      }
      const double score = increase ? a - b : b - a;
      if (score > fallback_score) {
        fallback_score = score;
        fallback = i;
      }
    }
    const Eigen::Index pick = best >= 0 ? best : fallback;
    if (pick < 0) break;
    res.x(pick) = std::clamp(res.x(pick) + cfg.theta, 0.0, 1.0);
    touched[static_cast<std::size_t>(pick)] = true;
    ++res.features_changed;
  }
  res.fooled = predict_one(mut, res.x) != y_true;
  return res;
}

AdvSet jsma_set(const Network& mut, const LabeledSet& set, const AttackConfig& cfg) {
  cfg.validate(set.dim());
  require(set.has_labels(), ErrorCode::Domain, "JSMA needs ground-truth labels");
  Matrix adv = set.xs();
  std::vector<bool> fooled(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto r = jsma(mut, set.row(i), set.ys()[i], cfg);
    adv.row(static_cast<Eigen::Index>(i)) = r.x.transpose();
    fooled[i] = r.fooled;
  }
  return {set, std::move(adv), cfg, std::move(fooled)};
}

AdvSet generate(const Network& mut, const LabeledSet& set, const AttackConfig& cfg) {
  if (cfg.kind == AttackKind::FGSM) {
    auto adv = fgsm(mut, set, cfg.epsilon);
    adv.config = cfg;
    return adv;
  }
  return jsma_set(mut, set, cfg);
}

double adversarial_accuracy(const Network& mut, const AdvSet& adv) { return accuracy(mut, adv.as_labeled()); }

TuneResult tune_attack(const Network& mut, const LabeledSet& benign, const AttackConfig& base,
                       const AttackBand& band) {
  TuneResult res;
  res.benign_accuracy = accuracy(mut, benign);
  const double upper = res.benign_accuracy - band.drop;
  if (res.benign_accuracy < 0.70 || upper < band.floor) {
    std::ostringstream msg;
    msg << "attack band unattainable: benign accuracy " << res.benign_accuracy << " leaves ["
        << band.floor << ", " << upper << "]";
    fail(ErrorCode::Domain, msg.str());
  }
  const bool fgsm_kind = base.kind == AttackKind::FGSM;
  const int steps = fgsm_kind ? 20 : 10;
  const double direction = (!fgsm_kind && base.theta < 0.0) ? -1.0 : 1.0;
  const double grid_step = fgsm_kind ? 0.05 : 0.1;
  auto at_strength = [&](double magnitude) {
    AttackConfig cfg = base;
    if (fgsm_kind)
      cfg.epsilon = magnitude;
    else
      cfg.theta = direction * magnitude;
    return std::pair{cfg, adversarial_accuracy(mut, generate(mut, benign, cfg))};
  };
  auto in_band = [&](double acc) { return acc <= upper + 1e-12 && acc >= band.floor - 1e-12; };

  double prev_acc = res.benign_accuracy;
  for (int k = 1; k <= steps; ++k) {
    const double magnitude = grid_step * k;
    auto [cfg, acc] = at_strength(magnitude);
    res.frontier.push_back({fgsm_kind ? cfg.epsilon : cfg.theta, acc});
    if (in_band(acc)) {
      res.config = cfg;
      res.adv_accuracy = acc;
      return res;
    }
    // The band fell between two grid points: bisect that interval.
    if (prev_acc > upper && acc < band.floor) {
      double lo = magnitude - grid_step, hi = magnitude;
      for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (lo + hi);
        auto [mcfg, macc] = at_strength(mid);
        res.frontier.push_back({fgsm_kind ? mcfg.epsilon : mcfg.theta, macc});
        if (in_band(macc)) {
          res.config = mcfg;
          res.adv_accuracy = macc;
          return res;
        }
        (macc > upper ? lo : hi) = mid;
      }
      break;
    }
    prev_acc = acc;
  }
  std::ostringstream msg;
  msg << "no " << to_string(base.kind) << " strength puts adversarial accuracy in [" << band.floor << ", "
      << upper << "] (benign " << res.benign_accuracy << "); frontier:";
  for (const auto& p : res.frontier) msg << " (" << p.strength << ", " << p.adv_accuracy << ")";
  fail(ErrorCode::Tuning, msg.str());
}

void to_json(nlohmann::json& j, const AttackConfig& cfg) {
  j = {{"kind", to_string(cfg.kind)},
       {"epsilon", cfg.epsilon},
       {"theta", cfg.theta},
       {"gamma", cfg.gamma},
       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, AttackConfig& cfg) {
  if (j.contains("kind")) cfg.kind = attack_kind_from_string(j.at("kind").get<std::string>());
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.theta = j.value("theta", cfg.theta);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.seed = j.value("seed", cfg.seed);
}

void save_adv_set(const AdvSet& adv, const std::filesystem::path& dir, const std::string& prefix,
                  const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  write_idx_doubles(adv.originals.xs(), dir / (prefix + "-originals.idx"));
  write_idx_doubles(adv.adversarials, dir / (prefix + "-adversarials.idx"));
  write_idx_labels(adv.originals.ys(), dir / (prefix + "-labels.idx"));
  nlohmann::json side{{"config", adv.config},
                      {"num_classes", adv.originals.num_classes()},
                      {"ids", adv.originals.ids()},
                      {"fooled", adv.fooled}};
  if (!extra.is_null()) side["extra"] = extra;
  std::ofstream out(dir / (prefix + ".json"));
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + (dir / (prefix + ".json")).string());
  out << side.dump(2) << '\n';
}

AdvSet load_adv_set(const std::filesystem::path& dir, const std::string& prefix) {
  std::ifstream in(dir / (prefix + ".json"));
  require(static_cast<bool>(in), ErrorCode::MissingArtifact,
          "missing " + (dir / (prefix + ".json")).string() + " (run gen-adv first)");
  nlohmann::json side;
  try {
    in >> side;
    auto originals = read_idx_doubles(dir / (prefix + "-originals.idx"));
    auto adversarials = read_idx_doubles(dir / (prefix + "-adversarials.idx"));
    auto ys = read_idx_labels(dir / (prefix + "-labels.idx"));
    AdvSet adv{LabeledSet(std::move(originals), std::move(ys), side.at("num_classes").get<int>(),
                          side.at("ids").get<std::vector<std::size_t>>()),
               std::move(adversarials), side.at("config").get<AttackConfig>(),
               side.at("fooled").get<std::vector<bool>>()};
    require(adv.adversarials.rows() == static_cast<Eigen::Index>(adv.originals.size()) &&
                adv.fooled.size() == adv.originals.size(),
            ErrorCode::Format, "adversarial set files are not row-aligned");
    return adv;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed adversarial sidecar: ") + e.what());
  }
}

}  // namespace lbt
