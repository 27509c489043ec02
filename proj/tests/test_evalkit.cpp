#include "doctest.h"

#include <cmath>

#include "avatarcraft/evalkit.hpp"
#include "avatarcraft/rng.hpp"

using namespace avatarcraft;
using namespace avatarcraft::evalkit;

namespace {

Eigen::MatrixXd closed_form_a(int n, int d) {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = std::sin(0.37 * (i + 1) * (j + 1)) + 0.05 * j;
  return m;
}

Eigen::MatrixXd closed_form_b(int n, int d) {
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = std::cos(0.23 * (i + 2) * (j + 1)) + 0.3;
  return m;
}

translator::PairSamples tiny_pairs(int n, std::uint64_t seed) {
  translator::PairSamples d;
  for (int i = 0; i < n; ++i) {
    const auto p = engine::sample_params(Rng::derive(seed, i));
    d.images.push_back(engine::render(p));
    d.params.push_back(p);
  }
  d.dataset_hash = "tiny";
  d.schema_hash = engine::schema().hash;
  return d;
}

}  // namespace

TEST_CASE("recovery metrics") {
  std::vector<engine::CraftingParams> truth;
  for (int k = 0; k < 10000; ++k) truth.push_back(engine::sample_params(Rng::derive(3, k)));

  const auto perfect = recovery_metrics(truth, truth);
  CHECK(perfect.structure_mae == 0.0);
  CHECK(perfect.attribute_mae == 0.0);
  for (double acc : perfect.texture_accuracy) CHECK(acc == 1.0);

  auto constant = truth;
  for (auto& p : constant) p.s.fill(0.5);
  CHECK(recovery_metrics(constant, truth).structure_mae == doctest::Approx(0.25).epsilon(0.02));

  std::vector<engine::CraftingParams> guess(truth.begin(), truth.begin() + 1000);
  std::vector<engine::CraftingParams> gt(truth.begin(), truth.begin() + 1000);
  Rng rng(11);
  for (auto& p : guess) p.t[1] = static_cast<int>(rng.below(4));
  const double acc = recovery_metrics(guess, gt).texture_accuracy[1];
  CHECK(acc >= 0.22);
  CHECK(acc <= 0.28);

  CHECK_THROWS(recovery_metrics(guess, truth));
  CHECK(recovery_metrics({}, {}).n == 0);
}

TEST_CASE("attribute MAE counts only valid entries") {
  engine::CraftingParams gt = engine::CraftingParams::neutral();
  gt.t = {0, 0, engine::kLipMatte, 0};  // valid: a0, a4, a5, a6
  auto pred = gt;
  pred.a.fill(0.9);  // every entry off by 0.4
  pred.a[4] = 0.5;   // one valid entry exact
  const std::vector<engine::CraftingParams> p{pred}, t{gt};
  const auto m = recovery_metrics(p, t);
  CHECK(m.attribute_count == 4);
  CHECK(m.attribute_mae == doctest::Approx(0.3));
}

TEST_CASE("identity surrogate") {
  const encoder::EncoderModel enc(encoder::EncoderConfig{});
  const auto a = engine::render(engine::sample_params(1));
  const auto b = engine::render(engine::sample_params(2));
  CHECK(identity_surrogate(a, a, enc) == 1.0);
  CHECK(identity_surrogate(a, b, enc) == identity_surrogate(b, a, enc));
  const double c = identity_surrogate(a, b, enc);
  CHECK(c >= -1.0);
  CHECK(c <= 1.0);
}

TEST_CASE("frechet surrogate") {
  SUBCASE("identical sets") {
    const auto a = closed_form_a(200, 64);
    CHECK(frechet_surrogate(a, a) < 1e-6);
  }
  SUBCASE("1-D closed form") {
    // unbiased variance of {-h, h, -h, h} is 4h^2/3 = 1
    const double h = std::sqrt(3.0) / 2.0;
    Eigen::MatrixXd a(4, 1), b(4, 1);
    a << -h, h, -h, h;
    b << 3 - h, 3 + h, 3 - h, 3 + h;
    CHECK(std::abs(frechet_surrogate(a, b) - 9.0) < 1e-6);
  }
  SUBCASE("scipy oracle") {
    CHECK(std::abs(frechet_surrogate(closed_form_a(40, 4), closed_form_b(40, 4)) - 0.10731227433122192) < 1e-9);
    CHECK(std::abs(frechet_surrogate(closed_form_a(64, 8), closed_form_b(64, 8)) - 0.1807993786681032) < 1e-9);
  }
  SUBCASE("random gaussian sets vs fitted moments") {
    for (int trial = 0; trial < 10; ++trial) {
      Rng rng(Rng::derive(40, trial));
      const double mu_a = rng.uniform(-3, 3), mu_b = rng.uniform(-3, 3);
      const double sd_a = rng.uniform(0.5, 2), sd_b = rng.uniform(0.5, 2);
      Eigen::MatrixXd a(500, 1), b(500, 1);
      for (int i = 0; i < 500; ++i) {
        a(i, 0) = mu_a + sd_a * rng.normal();
        b(i, 0) = mu_b + sd_b * rng.normal();
      }
      auto fit = [](const Eigen::MatrixXd& x, double& mu, double& sd) {
        mu = x.mean();
        sd = std::sqrt((x.array() - mu).square().sum() / (x.rows() - 1));
      };
      double ma, sa, mb, sb;
      fit(a, ma, sa);
      fit(b, mb, sb);
      const double closed = (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb);
      CHECK(std::abs(frechet_surrogate(a, b) - closed) < 1e-6);
    }
  }
  SUBCASE("symmetry, sign and sample requirements") {
    const auto a = closed_form_a(64, 8), b = closed_form_b(64, 8);
    CHECK(frechet_surrogate(a, b) == doctest::Approx(frechet_surrogate(b, a)).epsilon(1e-9));
    CHECK(frechet_surrogate(a, b) >= 0.0);
    CHECK_THROWS_AS(frechet_surrogate(closed_form_a(15, 8), b), InsufficientSamples);
    CHECK_THROWS_AS(frechet_surrogate(a, closed_form_b(64, 4)), std::invalid_argument);
    // rank-deficient covariance still works
    Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(20, 4);
    CHECK(frechet_surrogate(flat, flat) < 1e-9);
  }
}

TEST_CASE("evaluate and style robustness") {
  const auto train = tiny_pairs(24, 50);
  const auto heldout = tiny_pairs(12, 51);
  translator::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  const auto model = translator::train_translator(train, encoder::EncoderModel(encoder::EncoderConfig{}), tc);
  EvalConfig ec;
  const auto report = evaluate(model, heldout, ec);
  REQUIRE(report.styles.size() == 5);
  CHECK(report.styles[0].style == corpus::StyleTag::kEngine);
  CHECK(report.styles[0].structure_mae == report.recovery.structure_mae);
  CHECK(report.recovery.n == 12);
  CHECK(report.identity_matched.has_value());
  CHECK_FALSE(report.frechet_predicted.has_value());  // 12 < 2 * 64
  CHECK(std::isfinite(report.recovery.structure_mae));
  CHECK(report.dataset_hash == "tiny");

  const auto again = evaluate(model, heldout, ec);
  CHECK(again.to_json() == report.to_json());
  const auto j = report.to_json();
  CHECK(j["frechet_predicted"].is_null());
  CHECK(j["styles"].size() == 5);
  CHECK(report.table().find("structure MAE") != std::string::npos);

  const auto rows = style_robustness(model, heldout, std::vector{corpus::StyleTag::kSketch}, 1);
  CHECK(rows.size() == 1);
  CHECK(EvalConfig::from_json(ec.to_json()).to_json() == ec.to_json());
}

TEST_CASE("ablation harness contract") {
  const auto train = tiny_pairs(16, 60);
  const auto heldout = tiny_pairs(8, 61);
  AblationConfig cfg;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 8;
  cfg.eval.surrogates = false;
  const auto report = ablation_harness(train, heldout, encoder::EncoderModel(encoder::EncoderConfig{}), cfg);
  REQUIRE(report.variants.size() == 2);
  CHECK(report.variants[0].name == "frozen-pretrained");
  CHECK(report.variants[1].name == "w/o-pretrain");
  CHECK(report.variants[0].train_dataset_hash == report.variants[1].train_dataset_hash);
  CHECK(report.variants[0].report.dataset_hash == report.variants[1].report.dataset_hash);
  CHECK(report.stylized_favors_pretrained.size() == 4);
  const auto j = report.to_json();
  CHECK(j["verdict"].contains("engine_within_20pct"));
}

TEST_CASE("compare_variants verdict") {
  AblationVariant a{"frozen-pretrained", {}, "h"}, b{"w/o-pretrain", {}, "h"};
  a.report.recovery.structure_mae = 0.10;
  b.report.recovery.structure_mae = 0.115;
  a.report.styles = {{corpus::StyleTag::kEngine, 0.10, {}, 0}, {corpus::StyleTag::kSketch, 0.12, {}, 0}};
  b.report.styles = {{corpus::StyleTag::kEngine, 0.115, {}, 0}, {corpus::StyleTag::kSketch, 0.12, {}, 0}};
  const auto r = compare_variants(a, b);
  CHECK(r.engine_relative_gap == doctest::Approx(0.15));
  CHECK(r.engine_within_20pct);
  REQUIRE(r.stylized_favors_pretrained.size() == 1);
  CHECK_FALSE(r.stylized_favors_pretrained[0].second);  // ties are not wins
}
