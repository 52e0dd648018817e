#include "ped/repp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include <json.hpp>

#include "ped/errors.hpp"

namespace ped {

namespace {

constexpr double kZ75 = 0.6744897501960817;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double normal_log_pdf(double v, double mu, double sd) {
  const double z = (v - mu) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

double normal_pdf(double v, double mu, double sd) { return std::exp(normal_log_pdf(v, mu, sd)); }

double log_sum_exp(std::span<const double> terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

void check_mixture(const MixtureComponentPair& m, const char* name) {
  if (!(m.p >= 0.0 && m.p <= 1.0) || !std::isfinite(m.mu1) || !std::isfinite(m.mu2) ||
      !(m.sigma1 > 0.0) || !(m.sigma2 > 0.0) || !std::isfinite(m.sigma1) ||
      !std::isfinite(m.sigma2))
    throw ValidationError(std::string("invalid mixture for ") + name);
}

}  // namespace

double MixtureComponentPair::density(double v) const {
  return p * normal_pdf(v, mu1, sigma1) + (1.0 - p) * normal_pdf(v, mu2, sigma2);
}

double ReppPrior::coefficient_log_density(double value, const MixtureComponentPair& mix) const {
  std::array<double, 3> terms{};
  std::size_t n = 0;
  if (w < 1.0) terms[n++] = std::log1p(-w) + normal_log_pdf(value, 0.0, noninformative_sd);
  if (w > 0.0 && mix.p > 0.0)
    terms[n++] = std::log(w * mix.p) + normal_log_pdf(value, mix.mu1, mix.sigma1);
  if (w > 0.0 && mix.p < 1.0)
    terms[n++] = std::log(w * (1.0 - mix.p)) + normal_log_pdf(value, mix.mu2, mix.sigma2);
  return log_sum_exp(std::span<const double>(terms.data(), n));
}

double ReppPrior::coefficient_density(double value, const MixtureComponentPair& mix) const {
  return (1.0 - w) * normal_pdf(value, 0.0, noninformative_sd) + w * mix.density(value);
}

ElicitedPoint fit_normal_from_quantiles(const QuantileElicitation& q) {
  if (!(q.q25 < q.q50 && q.q50 < q.q75))
    throw ValidationError("quantile elicitation at x=" + std::to_string(q.x) +
                          ": need q25 < q50 < q75");
  // Ordinary least squares of the elicited quantiles on the standard normal
  // quantiles: q = mu + sigma * z.
  const std::array<double, 3> z{-kZ75, 0.0, kZ75};
  const std::array<double, 3> v{q.q25, q.q50, q.q75};
  const double zbar = (z[0] + z[1] + z[2]) / 3.0;
  const double vbar = (v[0] + v[1] + v[2]) / 3.0;
  double szz = 0.0, szv = 0.0;
  for (int i = 0; i < 3; ++i) {
    szz += (z[i] - zbar) * (z[i] - zbar);
    szv += (z[i] - zbar) * (v[i] - vbar);
  }
  const double sigma = szv / szz;
  if (!(sigma > 0.0))
    throw ValidationError("quantile elicitation at x=" + std::to_string(q.x) +
                          ": fitted sd is not positive");
  return {q.x, vbar - sigma * zbar, sigma};
}

SyntheticDataset gen_synthetic(std::span<const ElicitedPoint> points,
                               const LogisticCoefficients& adult, Rng& rng,
                               int per_point_count) {
  if (points.size() != 3) throw ValidationError("synthetic data needs exactly 3 elicited points");
  if (per_point_count < 1) throw ValidationError("per_point_count must be >= 1");
  for (const auto& pt : points)
    if (!(pt.sd > 0.0) || !std::isfinite(pt.mean) || !std::isfinite(pt.x))
      throw ValidationError("elicited point at x=" + std::to_string(pt.x) + ": need sd > 0");
  SyntheticDataset data;
  data.per_point_count = per_point_count;
  const auto total = 3 * static_cast<std::size_t>(per_point_count);
  data.x.reserve(total);
  data.y.reserve(total);
  for (const auto& pt : points) {
    std::normal_distribution<double> dev(pt.mean, pt.sd);
    const double adult_logit = adult.intercept + adult.slope * pt.x;
    for (int j = 0; j < per_point_count; ++j) {
      data.x.push_back(pt.x);
      data.y.push_back(expit(adult_logit + dev(rng)));
    }
  }
  return data;
}

namespace {

// Per-exposure sufficient statistics; SSE(beta) = sum_i Q_i + n_i (ybar_i - f_i)^2.
struct GroupedData {
  std::vector<double> x, count, mean, within_ss;
  double total = 0.0;

  explicit GroupedData(const SyntheticDataset& d) {
    for (std::size_t r = 0; r < d.x.size(); ++r) {
      auto it = std::find(x.begin(), x.end(), d.x[r]);
      std::size_t g = static_cast<std::size_t>(it - x.begin());
      if (it == x.end()) {
        x.push_back(d.x[r]);
        count.push_back(0.0);
        mean.push_back(0.0);
        within_ss.push_back(0.0);
      }
      count[g] += 1.0;
      mean[g] += d.y[r];
    }
    for (std::size_t g = 0; g < x.size(); ++g) mean[g] /= count[g];
    for (std::size_t r = 0; r < d.x.size(); ++r) {
      const auto g = static_cast<std::size_t>(std::find(x.begin(), x.end(), d.x[r]) - x.begin());
      const double e = d.y[r] - mean[g];
      within_ss[g] += e * e;
    }
    total = static_cast<double>(d.x.size());
  }

  double sse(const LogisticCoefficients& b) const {
    double s = 0.0;
    for (std::size_t g = 0; g < x.size(); ++g) {
      const double r = mean[g] - expit(b.intercept + b.slope * x[g]);
      s += within_ss[g] + count[g] * r * r;
    }
    return s;
  }
};

// Gauss-Newton start for the chain; returns the minimizer and (J'J)^-1.
LogisticCoefficients gauss_newton(const GroupedData& g, std::array<double, 3>& inv_jtj) {
  // Linear fit on the logit of the group means as a starting point.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, sw = 0;
  for (std::size_t i = 0; i < g.x.size(); ++i) {
    const double m = std::clamp(g.mean[i], 1e-12, 1.0 - 1e-12);
    const double l = std::log(m / (1.0 - m));
    sw += 1;
    sx += g.x[i];
    sy += l;
    sxx += g.x[i] * g.x[i];
    sxy += g.x[i] * l;
  }
  LogisticCoefficients b{0.0, 0.0};
  const double den = sw * sxx - sx * sx;
  if (den > 0.0) {
    b.slope = (sw * sxy - sx * sy) / den;
    b.intercept = (sy - b.slope * sx) / sw;
  }
  for (int it = 0; it < 100; ++it) {
    double a11 = 0, a12 = 0, a22 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
      const double f = expit(b.intercept + b.slope * g.x[i]);
      const double d = f * (1.0 - f);
      const double r = g.mean[i] - f;
      a11 += g.count[i] * d * d;
      a12 += g.count[i] * d * d * g.x[i];
      a22 += g.count[i] * d * d * g.x[i] * g.x[i];
      g1 += g.count[i] * d * r;
      g2 += g.count[i] * d * r * g.x[i];
    }
    const double det = a11 * a22 - a12 * a12;
    if (!(det > 0.0)) break;
    const double step0 = (a22 * g1 - a12 * g2) / det;
    const double step1 = (a11 * g2 - a12 * g1) / det;
    // Halve until the SSE does not increase.
    const double base = g.sse(b);
    double t = 1.0;
    LogisticCoefficients next{b.intercept + step0, b.slope + step1};
    while (g.sse(next) > base && t > 1e-10) {
      t *= 0.5;
      next = {b.intercept + t * step0, b.slope + t * step1};
    }
    const double moved = std::abs(next.intercept - b.intercept) + std::abs(next.slope - b.slope);
    b = next;
    inv_jtj = {a22 / det, -a12 / det, a11 / det};
    if (moved < 1e-14) break;
  }
  return b;
}

}  // namespace

InformativeFit fit_informative(const SyntheticDataset& data, Rng& rng,
                               const InformativeFitOptions& options) {
  if (data.x.empty() || data.x.size() != data.y.size())
    throw ValidationError("synthetic dataset is empty or inconsistent");
  if (options.retained < 1 || options.burn_in < 0)
    throw ValidationError("informative fit: invalid chain lengths");
  const GroupedData g(data);
  if (g.x.size() < 2) throw ValidationError("synthetic dataset needs >= 2 distinct exposures");

  std::array<double, 3> inv{1.0, 0.0, 1.0};
  LogisticCoefficients beta = gauss_newton(g, inv);
  double sse = g.sse(beta);
  const double shape = 0.5 * g.total;
  double sigma2 = std::max(sse / g.total, std::numeric_limits<double>::min());

  // Proposal: Cholesky factor of scale * sigma2 * (J'J)^-1.
  double log_scale = std::log(2.38 * 2.38 / 2.0);
  auto chol = [&](double s2, double scale) {
    const double l11 = std::sqrt(scale * s2 * inv[0]);
    const double l21 = scale * s2 * inv[1] / l11;
    const double l22 = std::sqrt(std::max(scale * s2 * inv[2] - l21 * l21, 0.0));
    return std::array<double, 3>{l11, l21, l22};
  };
  const double proposal_sigma2 = sigma2;

  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  InformativeFit fit;
  fit.draws.reserve(static_cast<std::size_t>(options.retained));
  int accepted = 0, batch_accepted = 0;
  constexpr int kBatch = 50;
  const int total = options.burn_in + options.retained;
  for (int it = 0; it < total; ++it) {
    // sigma_F^2 | beta ~ InvGamma(N/2, SSE/2).
    std::gamma_distribution<double> gam(shape, 1.0);
    sigma2 = std::max(0.5 * sse / gam(rng), std::numeric_limits<double>::min());

    const auto L = chol(proposal_sigma2, std::exp(log_scale));
    const double z1 = std_normal(rng), z2 = std_normal(rng);
    const LogisticCoefficients prop{beta.intercept + L[0] * z1,
                                    beta.slope + L[1] * z1 + L[2] * z2};
    const double sse_prop = g.sse(prop);
    const double log_ratio = -(sse_prop - sse) / (2.0 * sigma2);
    const bool accept = std::log(unif(rng)) < log_ratio;
    if (accept) {
      beta = prop;
      sse = sse_prop;
    }
    if (it < options.burn_in) {
      batch_accepted += accept;
      if ((it + 1) % kBatch == 0) {
        const double rate = static_cast<double>(batch_accepted) / kBatch;
        if (rate < 0.2) log_scale -= 0.2;
        if (rate > 0.4) log_scale += 0.2;
        batch_accepted = 0;
      }
    } else {
      accepted += accept;
      fit.draws.push_back(beta);
    }
  }
  fit.acceptance_rate = static_cast<double>(accepted) / options.retained;
  if (fit.acceptance_rate < 0.1 || fit.acceptance_rate > 0.6)
    throw SamplerDiagnosticError("informative fit: acceptance rate " +
                                 std::to_string(fit.acceptance_rate) + " outside [0.1, 0.6]");
  return fit;
}

MixtureComponentPair fit_mixture2(std::span<const double> draws) {
  if (draws.size() < 1000) throw ValidationError("fit_mixture2 needs >= 1000 draws");
  const double n = static_cast<double>(draws.size());
  double mean = 0.0;
  for (double v : draws) {
    if (!std::isfinite(v)) throw ValidationError("fit_mixture2: non-finite draw");
    mean += v;
  }
  mean /= n;
  double var = 0.0;
  for (double v : draws) var += (v - mean) * (v - mean);
  var /= n;

  constexpr double kVarFloor = 1e-6;
  constexpr int kRestarts = 10;
  constexpr int kMaxIter = 500;
  Rng rng(0x5eed'0f'e3ULL);
  std::uniform_int_distribution<std::size_t> pick(0, draws.size() - 1);
  std::vector<double> resp(draws.size());

  bool any_converged = false;
  double best_ll = -std::numeric_limits<double>::infinity();
  MixtureComponentPair best;
  for (int r = 0; r < kRestarts; ++r) {
    double p = 0.5;
    double m1 = draws[pick(rng)], m2 = draws[pick(rng)];
    double v1 = std::max(var, kVarFloor), v2 = v1;
    double prev_ll = -std::numeric_limits<double>::infinity();
    bool converged = false;
    double ll = prev_ll;
    for (int it = 0; it < kMaxIter; ++it) {
      // E step
      ll = 0.0;
      double sr = 0.0;
      for (std::size_t i = 0; i < draws.size(); ++i) {
        const double a = std::log(p) + normal_log_pdf(draws[i], m1, std::sqrt(v1));
        const double b = std::log1p(-p) + normal_log_pdf(draws[i], m2, std::sqrt(v2));
        const double mx = std::max(a, b);
        const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
        resp[i] = std::exp(a - lse);
        ll += lse;
        sr += resp[i];
      }
      if (std::abs(ll - prev_ll) <= 1e-7 * n) {
        converged = true;
        break;
      }
      prev_ll = ll;
      // M step
      const double s1 = sr, s2 = n - sr;
      if (s1 <= 0.0 || s2 <= 0.0) break;
      double a1 = 0, a2 = 0;
      for (std::size_t i = 0; i < draws.size(); ++i) {
        a1 += resp[i] * draws[i];
        a2 += (1.0 - resp[i]) * draws[i];
      }
      m1 = a1 / s1;
      m2 = a2 / s2;
      double q1 = 0, q2 = 0;
      for (std::size_t i = 0; i < draws.size(); ++i) {
        q1 += resp[i] * (draws[i] - m1) * (draws[i] - m1);
        q2 += (1.0 - resp[i]) * (draws[i] - m2) * (draws[i] - m2);
      }
      v1 = std::max(q1 / s1, kVarFloor);
      v2 = std::max(q2 / s2, kVarFloor);
      p = std::clamp(s1 / n, 1e-12, 1.0 - 1e-12);
    }
    if (!converged) continue;
    any_converged = true;
    if (ll > best_ll) {
      best_ll = ll;
      best = {p, m1, std::sqrt(v1), m2, std::sqrt(v2)};
    }
  }
  if (!any_converged)
    throw NumericalError("fit_mixture2: EM did not converge in 500 iterations for any restart");
  if (best.mu1 > best.mu2) {
    std::swap(best.mu1, best.mu2);
    std::swap(best.sigma1, best.sigma2);
    best.p = 1.0 - best.p;
  }
  best.sigma1 = std::max(best.sigma1, kMixtureSdFloor);
  best.sigma2 = std::max(best.sigma2, kMixtureSdFloor);
  return best;
}

ReppPrior build_repp(const MixtureComponentPair& intercept_mix,
                     const MixtureComponentPair& slope_mix, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("borrowing weight w must lie in [0, 1]");
  check_mixture(intercept_mix, "intercept");
  check_mixture(slope_mix, "slope");
  ReppPrior prior;
  prior.w = w;
  prior.intercept = intercept_mix;
  prior.slope = slope_mix;
  return prior;
}

double repp_log_density(const ReppPrior& prior, const LogisticCoefficients& coeff) {
  return prior.coefficient_log_density(coeff.intercept, prior.intercept) +
         prior.coefficient_log_density(coeff.slope, prior.slope);
}

namespace {

nlohmann::json mixture_json(const MixtureComponentPair& m) {
  return {{"p", m.p}, {"mu1", m.mu1}, {"sigma1", m.sigma1}, {"mu2", m.mu2}, {"sigma2", m.sigma2}};
}

MixtureComponentPair mixture_from(const nlohmann::json& j) {
  MixtureComponentPair m;
  m.p = j.at("p").get<double>();
  m.mu1 = j.at("mu1").get<double>();
  m.sigma1 = j.at("sigma1").get<double>();
  m.mu2 = j.at("mu2").get<double>();
  m.sigma2 = j.at("sigma2").get<double>();
  return m;
}

}  // namespace

void write_prior_cache(std::ostream& out, const ReppPrior& prior) {
  nlohmann::ordered_json j;
  j["w"] = prior.w;
  j["noninformative_sd"] = prior.noninformative_sd;
  j["intercept"] = mixture_json(prior.intercept);
  j["slope"] = mixture_json(prior.slope);
  out << j.dump(2) << '\n';
}

ReppPrior read_prior_cache(std::istream& in) {
  try {
    const auto j = nlohmann::json::parse(in);
    ReppPrior prior = build_repp(mixture_from(j.at("intercept")), mixture_from(j.at("slope")),
                                 j.at("w").get<double>());
    prior.noninformative_sd = j.value("noninformative_sd", kNoninformativeSd);
    return prior;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("prior cache: ") + e.what());
  }
}

}  // namespace ped
