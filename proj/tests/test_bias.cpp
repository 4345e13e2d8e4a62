#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gloc/bias.hpp"
#include "gloc/rng.hpp"
#include "gloc/scene.hpp"

using namespace gloc;

namespace {

// Independent minimizer of L(f) = sum_k |w_k f + (1-w_k) B_k - y_k|^2 by
// plain gradient descent (the closed form under test never runs here).
Eigen::VectorXd gd_minimize(const std::vector<Eigen::VectorXd>& obs,
                            const Eigen::VectorXd& w,
                            const std::vector<Eigen::VectorXd>& bg,
                            int max_iters = 20000) {
  const int dim = static_cast<int>(obs[0].size());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dim);
  const double lipschitz = 2.0 * w.squaredNorm();
  const double step = 0.5 / lipschitz;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < w.size(); ++k)
      grad += 2.0 * w[k] * (w[k] * f + (1.0 - w[k]) * bg[k] - obs[k]);
    if (grad.norm() < 1e-12) break;
    f -= step * grad;
  }
  return f;
}

double loss(const Eigen::VectorXd& f, const std::vector<Eigen::VectorXd>& obs,
            const Eigen::VectorXd& w,
            const std::vector<Eigen::VectorXd>& bg) {
  double total = 0.0;
  for (int k = 0; k < w.size(); ++k)
    total += (w[k] * f + (1.0 - w[k]) * bg[k] - obs[k]).squaredNorm();
  return total;
}

struct Instance {
  std::vector<Eigen::VectorXd> obs;
  Eigen::VectorXd w;
  std::vector<Eigen::VectorXd> bg;
  Eigen::VectorXd mu;
};

Instance random_instance(std::mt19937_64& rng, int k_views, int dim,
                         double w_lo = 0.1, double w_hi = 0.95) {
  std::uniform_real_distribution<double> uw(w_lo, w_hi);
  Instance inst;
  inst.mu = random_unit_vector(rng, dim);
  inst.w.resize(k_views);
  for (int k = 0; k < k_views; ++k) {
    inst.w[k] = uw(rng);
    inst.bg.push_back(normal_vector(rng, dim));
    inst.obs.push_back(inst.mu + normal_vector(rng, dim, 0.1));
  }
  return inst;
}

}  // namespace

TEST_CASE("decompose_blend single opaque target") {
  const int dim = 3;
  const Eigen::VectorXd f = Eigen::VectorXd::Constant(dim, 2.0);
  const RayDecomposition d = decompose_blend({{f, 1.0}}, 0, dim);
  CHECK(d.weight == 1.0);
  CHECK(d.full_contribution);
}

TEST_CASE("decompose_blend front target with opaque background") {
  const int dim = 3;
  const Eigen::VectorXd f = Eigen::VectorXd::Constant(dim, 2.0);
  Eigen::VectorXd g(dim);
  g << 1.0, -1.0, 0.5;
  const RayDecomposition d = decompose_blend({{f, 0.5}, {g, 1.0}}, 0, dim);
  CHECK(d.weight == doctest::Approx(0.5));
  CHECK_FALSE(d.full_contribution);
  CHECK((d.background - g).norm() < 1e-15);
}

TEST_CASE("decompose_blend reconstruction identity") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> ua(0.05, 0.95);
  const int dim = 4;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RayEntry> entries;
    for (int i = 0; i < 5; ++i)
      entries.push_back(RayEntry{normal_vector(rng, dim), ua(rng)});
    const BlendResult blended = render_feature_ray(entries, dim);
    for (int t = 0; t < 5; ++t) {
      const RayDecomposition d = decompose_blend(entries, t, dim);
      if (d.full_contribution) continue;
      const Eigen::VectorXd recomposed =
          d.weight * entries[t].feature + (1.0 - d.weight) * d.background;
      CHECK((recomposed - blended.feature).norm() < 1e-12);
    }
  }
}

TEST_CASE("optimal_feature_joint trivial cases") {
  const int dim = 3;
  std::mt19937_64 rng(7);

  // All weights one: backgrounds vanish, optimum is the observation mean.
  std::vector<Eigen::VectorXd> obs;
  std::vector<Eigen::VectorXd> bg;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (int k = 0; k < 4; ++k) {
    obs.push_back(normal_vector(rng, dim));
    bg.push_back(normal_vector(rng, dim));
    mean += obs.back();
  }
  mean /= 4.0;
  const Eigen::VectorXd f =
      optimal_feature_joint(obs, Eigen::VectorXd::Ones(4), bg);
  CHECK((f - mean).norm() < 1e-12);

  // Single view, w = 0.5: exact fit f* = 2y - b.
  const Eigen::VectorXd y = normal_vector(rng, dim);
  const Eigen::VectorXd b = normal_vector(rng, dim);
  Eigen::VectorXd w1(1);
  w1 << 0.5;
  const Eigen::VectorXd f1 = optimal_feature_joint({y}, w1, {b});
  CHECK((f1 - (2.0 * y - b)).norm() < 1e-12);
}

TEST_CASE("optimal_feature_joint matches gradient descent") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance inst = random_instance(rng, 3, 4);
    const Eigen::VectorXd closed =
        optimal_feature_joint(inst.obs, inst.w, inst.bg);
    const Eigen::VectorXd gd = gd_minimize(inst.obs, inst.w, inst.bg);
    CHECK((closed - gd).norm() < 1e-8);
    // And the closed form never loses to the iterate.
    CHECK(loss(closed, inst.obs, inst.w, inst.bg) <=
          loss(gd, inst.obs, inst.w, inst.bg) + 1e-12);
  }
}

TEST_CASE("optimal_feature_joint gradient vanishes at the optimum") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> dir(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance inst = random_instance(rng, 5, 3);
    const Eigen::VectorXd f = optimal_feature_joint(inst.obs, inst.w, inst.bg);
    // Finite-difference directional derivatives at three random directions.
    for (int d = 0; d < 3; ++d) {
      const Eigen::VectorXd v = random_unit_vector(rng, 3);
      const double h = 1e-5;
      const double deriv = (loss(f + h * v, inst.obs, inst.w, inst.bg) -
                            loss(f - h * v, inst.obs, inst.w, inst.bg)) /
                           (2.0 * h);
      CHECK(std::abs(deriv) < 1e-9 * std::max(1.0, std::abs(loss(
                                                  f, inst.obs, inst.w,
                                                  inst.bg))));
    }
  }
}

TEST_CASE("degenerate weights are rejected") {
  const int dim = 2;
  const std::vector<Eigen::VectorXd> obs{Eigen::VectorXd::Zero(dim)};
  const std::vector<Eigen::VectorXd> bg{Eigen::VectorXd::Zero(dim)};
  Eigen::VectorXd w(1);
  w << 0.0;
  CHECK_THROWS_AS(optimal_feature_joint(obs, w, bg), DegenerateWeights);
  CHECK_THROWS_AS(analytic_bias(Eigen::VectorXd::Zero(dim), w, bg),
                  DegenerateWeights);
}

TEST_CASE("bias nullity conditions") {
  std::mt19937_64 rng(17);
  const int dim = 4;
  const Eigen::VectorXd mu = random_unit_vector(rng, dim);

  // Full contribution: w_k = 1 for all views.
  std::vector<Eigen::VectorXd> bg;
  for (int k = 0; k < 5; ++k) bg.push_back(normal_vector(rng, dim));
  CHECK(analytic_bias(mu, Eigen::VectorXd::Ones(5), bg).norm() == 0.0);

  // Background consistency: B_k = mu for all views.
  Eigen::VectorXd w(3);
  w << 0.2, 0.6, 0.9;
  const std::vector<Eigen::VectorXd> bg_mu{mu, mu, mu};
  CHECK(analytic_bias(mu, w, bg_mu).norm() == 0.0);

  // Constructed counterexample: w = 0.5, B = mu + 1 in every component
  // forces bias -1 per component (exact when mu = 0; within an ulp of the
  // (mu+1)-mu rounding otherwise).
  Eigen::VectorXd half = Eigen::VectorXd::Constant(4, 0.5);
  std::vector<Eigen::VectorXd> bg_off;
  for (int k = 0; k < 4; ++k)
    bg_off.push_back(mu + Eigen::VectorXd::Ones(dim));
  const Eigen::VectorXd bias = analytic_bias(mu, half, bg_off);
  for (int d = 0; d < dim; ++d) CHECK(std::abs(bias[d] + 1.0) <= 1e-15);

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dim);
  const std::vector<Eigen::VectorXd> ones_bg{
      Eigen::VectorXd::Ones(dim), Eigen::VectorXd::Ones(dim)};
  const Eigen::VectorXd exact =
      analytic_bias(zero, Eigen::VectorXd::Constant(2, 0.5), ones_bg);
  for (int d = 0; d < dim; ++d) CHECK(exact[d] == -1.0);
}

TEST_CASE("single-view bias reduction") {
  std::mt19937_64 rng(19);
  const int dim = 3;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd mu = random_unit_vector(rng, dim);
    const Eigen::VectorXd b = normal_vector(rng, dim);
    std::uniform_real_distribution<double> uw(0.05, 0.95);
    const double w = uw(rng);
    Eigen::VectorXd w_vec(1);
    w_vec << w;
    const Eigen::VectorXd joint = analytic_bias(mu, w_vec, {b});
    const Eigen::VectorXd single = analytic_bias_single_view(mu, w, b);
    CHECK((joint - single).norm() < 1e-12);
    CHECK((single - ((1.0 - w) / w) * (mu - b)).norm() < 1e-15);
  }
}

TEST_CASE("empirical bias agrees with the analytic formula") {
  std::mt19937_64 rng(23);
  const Instance inst = random_instance(rng, 4, 3);
  const Eigen::VectorXd noise_var = Eigen::VectorXd::Constant(3, 0.05 * 0.05);

  const BiasReport report =
      empirical_bias(inst.mu, noise_var, inst.w, inst.bg, 20000, 5);
  for (int d = 0; d < 3; ++d) {
    CHECK(std::abs(report.empirical[d] - report.analytic[d]) <=
          4.0 * report.standard_error[d]);
  }
}

TEST_CASE("empirical bias with zero noise equals analytic") {
  std::mt19937_64 rng(29);
  const Instance inst = random_instance(rng, 3, 4);
  const Eigen::VectorXd zero_var = Eigen::VectorXd::Zero(4);
  // Observations must be mu + eps with eps = 0.
  std::vector<Eigen::VectorXd> bg = inst.bg;
  const BiasReport report =
      empirical_bias(inst.mu, zero_var, inst.w, bg, 100, 1);
  CHECK((report.empirical - report.analytic).norm() < 1e-12);
  CHECK(report.standard_error.norm() < 1e-12);
}

TEST_CASE("empirical bias unbiased when weights are one") {
  std::mt19937_64 rng(31);
  const int dim = 3;
  const Eigen::VectorXd mu = random_unit_vector(rng, dim);
  std::vector<Eigen::VectorXd> bg;
  for (int k = 0; k < 5; ++k) bg.push_back(normal_vector(rng, dim));
  const BiasReport report =
      empirical_bias(mu, Eigen::VectorXd::Constant(dim, 0.01),
                     Eigen::VectorXd::Ones(5), bg, 5000, 7);
  for (int d = 0; d < dim; ++d)
    CHECK(std::abs(report.empirical[d]) <= 4.0 * report.standard_error[d]);
}

TEST_CASE("empirical bias requires enough trials") {
  CHECK_THROWS_AS(
      empirical_bias(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2),
                     Eigen::VectorXd::Ones(1),
                     {Eigen::VectorXd::Ones(2)}, 99, 1),
      InvalidParams);
}

TEST_CASE("feature_distance basics") {
  Eigen::VectorXd f(3);
  f << 1.0, 2.0, 3.0;
  CHECK(feature_distance(f, {f, f, f}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(feature_distance(f, {-f}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(feature_distance(Eigen::VectorXd::Zero(3), {f}), ZeroVector);
  CHECK_THROWS_AS(feature_distance(f, {Eigen::VectorXd::Zero(3)}), ZeroVector);
}

TEST_CASE("feature_distance matches per-view oracle and scale invariance") {
  std::mt19937_64 rng(37);
  const int dim = 6;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd f = normal_vector(rng, dim);
    std::vector<Eigen::VectorXd> obs;
    for (int k = 0; k < 7; ++k) obs.push_back(normal_vector(rng, dim));

    double acc = 0.0;
    for (const auto& o : obs)
      acc += f.normalized().dot(o.normalized());
    const double expected = 1.0 - acc / 7.0;
    const double got = feature_distance(f, obs);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 2.0);

    // Invariant to positive rescaling of any input.
    std::vector<Eigen::VectorXd> scaled = obs;
    scaled[3] *= 17.0;
    CHECK(feature_distance(3.5 * f, scaled) ==
          doctest::Approx(got).epsilon(1e-12));
  }
}

TEST_CASE("distance histogram: zero-noise fused is all zeros") {
  SceneConfig cfg;
  cfg.n_gaussians = 60;
  cfg.n_cameras = 8;
  cfg.feature_dim = 4;
  cfg.sigma = 0.0;
  const Scene scene = generate_scene(cfg, 77);
  const DistanceHistogram h =
      distance_histogram(scene, FeatureSource::kFused, 20, 3);
  CHECK(h.mean == doctest::Approx(0.0).epsilon(1e-9));
  int total = 0;
  for (int c : h.counts) total += c;
  CHECK(h.counts[0] == total);
  CHECK(total > 0);
}

TEST_CASE("distance histogram: fusion beats the blending optimum") {
  SceneConfig cfg;
  cfg.n_gaussians = 150;
  cfg.n_cameras = 10;
  cfg.feature_dim = 6;
  cfg.sigma = 0.05;
  cfg.overlap_fraction = 0.6;
  const Scene scene = generate_scene(cfg, 400);
  const DistanceHistogram fused =
      distance_histogram(scene, FeatureSource::kFused, 30, 9);
  const DistanceHistogram alpha =
      distance_histogram(scene, FeatureSource::kAlphaOptimum, 30, 9);
  CHECK(fused.mean < alpha.mean);

  int fused_total = 0, alpha_total = 0;
  for (int c : fused.counts) fused_total += c;
  for (int c : alpha.counts) alpha_total += c;
  CHECK(fused_total == alpha_total);
}
