#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "ped/errors.hpp"
#include "ped/repp.hpp"

using namespace ped;

namespace {

const LogisticCoefficients kAdult{-2.83, 1.41};

double normal_pdf(double v, double m, double s) {
  const double z = (v - m) / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
}

double mixture_pdf(double v, const MixtureComponentPair& m) {
  return m.p * normal_pdf(v, m.mu1, m.sigma1) + (1.0 - m.p) * normal_pdf(v, m.mu2, m.sigma2);
}

std::vector<ElicitedPoint> darunavir_points() {
  std::vector<ElicitedPoint> pts;
  const std::array<double, 3> xs{2.5, 3.125, 4.375};
  const std::array<double, 3> sign{-1.0, 1.0, 1.0};
  for (int i = 0; i < 3; ++i) {
    const double logodds = kAdult.intercept + kAdult.slope * xs[i];
    pts.push_back({xs[i], sign[i] * 0.05 * std::abs(logodds), 0.01});
  }
  return pts;
}

// Gauss-Newton least squares of y on expit(c + s x), started at the adult curve.
LogisticCoefficients gauss_newton(const SyntheticDataset& d) {
  double c = kAdult.intercept, s = kAdult.slope;
  for (int it = 0; it < 100; ++it) {
    double a11 = 0, a12 = 0, a22 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
      const double f = 1.0 / (1.0 + std::exp(-(c + s * d.x[i])));
      const double r = d.y[i] - f;
      const double j1 = f * (1 - f), j2 = j1 * d.x[i];
      a11 += j1 * j1;
      a12 += j1 * j2;
      a22 += j2 * j2;
      g1 += j1 * r;
      g2 += j2 * r;
    }
    const double det = a11 * a22 - a12 * a12;
    const double dc = (a22 * g1 - a12 * g2) / det;
    const double ds = (a11 * g2 - a12 * g1) / det;
    c += dc;
    s += ds;
    if (std::abs(dc) + std::abs(ds) < 1e-14) break;
  }
  return {c, s};
}

struct Moments {
  double mean_c = 0, mean_s = 0, sd_c = 0, sd_s = 0;
};

Moments moments(const std::vector<LogisticCoefficients>& draws) {
  Moments m;
  const double n = static_cast<double>(draws.size());
  for (const auto& d : draws) {
    m.mean_c += d.intercept / n;
    m.mean_s += d.slope / n;
  }
  for (const auto& d : draws) {
    m.sd_c += (d.intercept - m.mean_c) * (d.intercept - m.mean_c) / (n - 1);
    m.sd_s += (d.slope - m.mean_s) * (d.slope - m.mean_s) / (n - 1);
  }
  m.sd_c = std::sqrt(m.sd_c);
  m.sd_s = std::sqrt(m.sd_s);
  return m;
}

}  // namespace

TEST_CASE("normal from quartiles: exact cases") {
  const double z = 0.6744897501960817;
  auto p = fit_normal_from_quantiles({1.0, -z, 0.0, z});
  CHECK(p.mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.sd == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.x == 1.0);
  p = fit_normal_from_quantiles({2.0, 0.3 - 0.02 * z, 0.3, 0.3 + 0.02 * z});
  CHECK(p.mean == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(p.sd == doctest::Approx(0.02).epsilon(1e-10));
}

TEST_CASE("normal from asymmetric quartiles is the least-squares fit") {
  const QuantileElicitation q{3.0, -0.5, 0.0, 1.0};
  const auto p = fit_normal_from_quantiles(q);
  const double z = 0.6744897501960817;
  const auto sse = [&](double m, double s) {
    return std::pow(q.q25 - (m - s * z), 2) + std::pow(q.q50 - m, 2) +
           std::pow(q.q75 - (m + s * z), 2);
  };
  // 100 x 100 grid search around the candidate.
  double best = sse(p.mean, p.sd);
  double grid_best = 1e300;
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j)
      grid_best = std::min(grid_best, sse(-0.5 + i * 0.01, 0.5 + j * 0.01));
  CHECK(best <= grid_best + 1e-12);
  CHECK(p.mean == doctest::Approx(1.0 / 6.0));
  CHECK(p.sd == doctest::Approx(1.5 / (2 * z)));
}

TEST_CASE("inconsistent quartiles are rejected") {
  CHECK_THROWS_AS(fit_normal_from_quantiles({1.0, 0.5, 0.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(fit_normal_from_quantiles({1.0, 0.0, 0.0, 0.0}), ValidationError);
}

TEST_CASE("synthetic data: degenerate deviation reproduces the adult curve") {
  Rng rng(1);
  const std::vector<ElicitedPoint> pts{{2.5, 0.0, 1e-14}, {3.0, 0.0, 1e-14}, {4.0, 0.0, 1e-14}};
  const auto d = gen_synthetic(pts, kAdult, rng, 50);
  REQUIRE(d.x.size() == 150);
  for (std::size_t i = 0; i < d.x.size(); ++i)
    CHECK(d.y[i] == doctest::Approx(1.0 / (1.0 + std::exp(-(kAdult.intercept +
                                                              kAdult.slope * d.x[i]))))
                        .epsilon(1e-12));
}

TEST_CASE("synthetic data: deviations have the elicited mean") {
  Rng rng(2);
  const auto pts = darunavir_points();
  CHECK(pts[0].mean == doctest::Approx(-0.03475));
  CHECK(pts[1].mean == doctest::Approx(0.0788125));
  CHECK(pts[2].mean == doctest::Approx(0.1669375));
  const auto d = gen_synthetic(pts, kAdult, rng, 1000);
  for (int k = 0; k < 3; ++k) {
    double mean = 0.0;
    for (int j = 0; j < 1000; ++j) {
      const double y = d.y[static_cast<std::size_t>(k * 1000 + j)];
      mean += std::log(y / (1 - y)) - (kAdult.intercept + kAdult.slope * pts[k].x);
    }
    mean /= 1000.0;
    CHECK(std::abs(mean - pts[k].mean) <= 3 * 0.01 / std::sqrt(1000.0));
  }
  CHECK_THROWS_AS(gen_synthetic(std::vector<ElicitedPoint>(pts.begin(), pts.begin() + 2), kAdult,
                                rng),
                  ValidationError);
}

TEST_CASE("informative fit concentrates on the adult curve for exact data") {
  Rng rng(3);
  const std::vector<ElicitedPoint> pts{{2.5, 0.0, 1e-6}, {3.125, 0.0, 1e-6}, {4.375, 0.0, 1e-6}};
  const auto d = gen_synthetic(pts, kAdult, rng);
  const auto fit = fit_informative(d, rng);
  REQUIRE(fit.draws.size() == 4000);
  const Moments m = moments(fit.draws);
  CHECK(std::abs(m.mean_c - kAdult.intercept) < 0.05);
  CHECK(std::abs(m.mean_s - kAdult.slope) < 0.05);
  CHECK(m.sd_c < 1e-3);
}

TEST_CASE("informative fit centers on the least-squares curve") {
  Rng rng(4);
  const auto d = gen_synthetic(darunavir_points(), kAdult, rng);
  const auto gn = gauss_newton(d);
  const auto fit = fit_informative(d, rng);
  const Moments m = moments(fit.draws);
  CHECK(std::abs(m.mean_c - gn.intercept) <= 3 * m.sd_c);
  CHECK(std::abs(m.mean_s - gn.slope) <= 3 * m.sd_s);
  CHECK(m.mean_s > 0.0);
  CHECK(fit.acceptance_rate > 0.1);
  CHECK(fit.acceptance_rate < 0.6);
}

TEST_CASE("doubling the synthetic sample shrinks the posterior sd by about 1/sqrt(2)") {
  double ratio_sum = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    Rng r1(100 + rep), r2(200 + rep);
    const auto d1 = gen_synthetic(darunavir_points(), kAdult, r1, 1000);
    const auto d2 = gen_synthetic(darunavir_points(), kAdult, r2, 2000);
    const Moments m1 = moments(fit_informative(d1, r1).draws);
    const Moments m2 = moments(fit_informative(d2, r2).draws);
    ratio_sum += m2.sd_s / m1.sd_s;
  }
  const double ratio = ratio_sum / 3.0;
  CHECK(ratio >= 0.6);
  CHECK(ratio <= 0.82);
}

TEST_CASE("two-component EM on a single normal") {
  std::mt19937_64 g(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(20000);
  for (double& x : v) x = nd(g);
  const auto m = fit_mixture2(v);
  CHECK(m.mu1 <= m.mu2);
  // Kolmogorov distance between fitted CDF and the standard normal.
  double worst = 0.0;
  for (double t = -4.0; t <= 4.0; t += 0.01) {
    const double fitted = m.p * 0.5 * std::erfc(-(t - m.mu1) / (m.sigma1 * std::sqrt(2.0))) +
                          (1 - m.p) * 0.5 * std::erfc(-(t - m.mu2) / (m.sigma2 * std::sqrt(2.0)));
    const double truth = 0.5 * std::erfc(-t / std::sqrt(2.0));
    worst = std::max(worst, std::abs(fitted - truth));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("two-component EM separates a bimodal sample") {
  std::mt19937_64 g(6);
  std::normal_distribution<double> a(-3.0, 1.0), b(3.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> v(50000);
  for (double& x : v) x = coin(g) ? a(g) : b(g);
  const auto m = fit_mixture2(v);
  CHECK(m.p >= 0.4);
  CHECK(m.p <= 0.6);
  CHECK(std::abs(m.mu1 + 3.0) < 0.2);
  CHECK(std::abs(m.mu2 - 3.0) < 0.2);
}

TEST_CASE("two-component EM on identical draws floors the sd") {
  const std::vector<double> v(2000, 1.57);
  const auto m = fit_mixture2(v);
  CHECK(m.mu1 == doctest::Approx(1.57));
  CHECK(m.mu2 == doctest::Approx(1.57));
  CHECK(m.sigma1 == doctest::Approx(kMixtureSdFloor));
  CHECK(m.sigma2 == doctest::Approx(kMixtureSdFloor));
  CHECK_THROWS_AS(fit_mixture2(std::vector<double>(10, 1.0)), ValidationError);
}

TEST_CASE("robust prior densities") {
  const MixtureComponentPair ic{0.3, -3.3, 0.01, -3.2, 0.05};
  const MixtureComponentPair sl{0.6, 1.5, 0.02, 1.6, 0.03};
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);

  const ReppPrior p0 = build_repp(ic, sl, 0.0);
  const ReppPrior p1 = build_repp(ic, sl, 1.0);
  const ReppPrior p3 = build_repp(ic, sl, 0.3);
  for (int i = 0; i < 100; ++i) {
    const double v = u(g);
    CHECK(p0.coefficient_density(v, ic) == doctest::Approx(normal_pdf(v, 0, 100)).epsilon(1e-12));
    CHECK(p1.coefficient_density(v, ic) == doctest::Approx(mixture_pdf(v, ic)).epsilon(1e-12));
    CHECK(p3.coefficient_density(v, sl) ==
          doctest::Approx(0.7 * normal_pdf(v, 0, 100) + 0.3 * mixture_pdf(v, sl)).epsilon(1e-12));
  }
  CHECK(repp_log_density(p0, {0.0, 0.0}) ==
        doctest::Approx(2.0 * std::log(normal_pdf(0.0, 0.0, 100.0))).epsilon(1e-14));

  for (int i = 0; i < 1000; ++i) {
    const LogisticCoefficients c{u(g) - 3.0, u(g) * 0.2 + 1.5};
    const double direct = std::log(0.7 * normal_pdf(c.intercept, 0, 100) +
                                   0.3 * mixture_pdf(c.intercept, ic)) +
                          std::log(0.7 * normal_pdf(c.slope, 0, 100) +
                                   0.3 * mixture_pdf(c.slope, sl));
    CHECK(std::abs(repp_log_density(p3, c) - direct) < 1e-10);
  }
  double prev = repp_log_density(p0, {0.0, 0.0});
  for (double c = 10.0; c < 500.0; c += 10.0) {
    const double cur = repp_log_density(p0, {c, 0.0});
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK_THROWS_AS(build_repp(ic, sl, 1.5), ValidationError);
}

TEST_CASE("robust prior integrates to one") {
  // Spike components as tight as those produced by the darunavir elicitation.
  const MixtureComponentPair ic{0.04, -3.26646, 0.001, -3.2617, 0.0023};
  const MixtureComponentPair sl{0.77, 1.56999, 0.001, 1.57, 0.001};
  for (double w : {0.0, 0.1, 0.5, 1.0}) {
    const ReppPrior p = build_repp(ic, sl, w);
    for (const auto* mix : {&ic, &sl}) {
      std::vector<double> cuts{-1500.0, 1500.0};
      for (auto [m, s] : {std::pair{mix->mu1, mix->sigma1}, std::pair{mix->mu2, mix->sigma2}}) {
        cuts.push_back(m - 15 * s);
        cuts.push_back(m + 15 * s);
      }
      std::sort(cuts.begin(), cuts.end());
      long double total = 0.0L;
      for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const int m = 4000;
        const long double h = (cuts[k + 1] - cuts[k]) / m;
        long double acc = 0.0L;
        for (int i = 0; i <= m; ++i) {
          const double x = static_cast<double>(cuts[k] + h * i);
          const int wgt = (i == 0 || i == m) ? 1 : (i % 2 ? 4 : 2);
          acc += wgt * p.coefficient_density(x, *mix);
        }
        total += acc * h / 3.0L;
      }
      CHECK(std::abs(static_cast<double>(total) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("prior cache round trip") {
  const ReppPrior p = build_repp({0.3, -3.3, 0.01, -3.2, 0.05}, {0.6, 1.5, 0.02, 1.6, 0.03}, 0.2);
  std::stringstream buf;
  write_prior_cache(buf, p);
  const std::string text = buf.str();
  const ReppPrior q = read_prior_cache(buf);
  CHECK(q.w == p.w);
  CHECK(q.intercept.mu1 == p.intercept.mu1);
  CHECK(q.slope.sigma2 == p.slope.sigma2);
  std::stringstream again;
  write_prior_cache(again, q);
  CHECK(again.str() == text);
  std::stringstream bad("{\"w\": 2}");
  CHECK_THROWS_AS(read_prior_cache(bad), ValidationError);
}
