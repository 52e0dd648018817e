#include "ped/posterior.hpp"

#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <span>
#include <ostream>
#include <sstream>
#include <string>

#include "ped/errors.hpp"

namespace ped {

void TrialDataset::validate(const ExposureRange& range) const {
  if (exposures.empty()) throw ValidationError("trial dataset is empty");
  if (exposures.size() != outcomes.size())
    throw ValidationError("trial dataset: exposures and outcomes differ in length");
  for (std::size_t i = 0; i < exposures.size(); ++i) {
    if (outcomes[i] != 0 && outcomes[i] != 1)
      throw ValidationError("trial dataset: outcome at index " + std::to_string(i) +
                            " is not 0/1");
    if (!std::isfinite(exposures[i]) || exposures[i] < range.full_lo ||
        exposures[i] > range.full_hi)
      throw ValidationError("trial dataset: exposure at index " + std::to_string(i) +
                            " outside the full exposure range");
  }
}

namespace {

double log_likelihood(const TrialDataset& data, const LogisticCoefficients& b) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.exposures.size(); ++i) {
    const double u = b.intercept + b.slope * data.exposures[i];
    ll += data.outcomes[i] ? log_expit(u) : log_expit(-u);
  }
  return ll;
}

constexpr double kNewtonPriorPrecision = 1.0 / (kNoninformativeSd * kNoninformativeSd);

struct NewtonState {
  LogisticCoefficients mode;
  std::array<double, 3> neg_hessian;  // h11, h12, h22
};

NewtonState newton_mode(const TrialDataset& data) {
  auto objective = [&](const LogisticCoefficients& b) {
    return log_likelihood(data, b) -
           0.5 * kNewtonPriorPrecision * (b.intercept * b.intercept + b.slope * b.slope);
  };
  LogisticCoefficients b{0.0, 0.0};
  double f = objective(b);
  std::array<double, 3> h{};
  for (int it = 0; it < 200; ++it) {
    double g1 = -kNewtonPriorPrecision * b.intercept, g2 = -kNewtonPriorPrecision * b.slope;
    double h11 = kNewtonPriorPrecision, h12 = 0.0, h22 = kNewtonPriorPrecision;
    for (std::size_t i = 0; i < data.exposures.size(); ++i) {
      const double x = data.exposures[i];
      const double p = expit(b.intercept + b.slope * x);
      const double r = data.outcomes[i] - p;
      const double v = p * (1.0 - p);
      g1 += r;
      g2 += r * x;
      h11 += v;
      h12 += v * x;
      h22 += v * x * x;
    }
    h = {h11, h12, h22};
    const double det = h11 * h22 - h12 * h12;
    const double s1 = (h22 * g1 - h12 * g2) / det;
    const double s2 = (h11 * g2 - h12 * g1) / det;
    double t = 1.0;
    LogisticCoefficients next{b.intercept + s1, b.slope + s2};
    double fn = objective(next);
    while (!(fn >= f) && t > 1e-12) {
      t *= 0.5;
      next = {b.intercept + t * s1, b.slope + t * s2};
      fn = objective(next);
    }
    const double moved = std::abs(next.intercept - b.intercept) + std::abs(next.slope - b.slope);
    b = next;
    f = fn;
    if (moved < 1e-10) break;
  }
  // Curvature at the final point.
  double h11 = kNewtonPriorPrecision, h12 = 0.0, h22 = kNewtonPriorPrecision;
  for (std::size_t i = 0; i < data.exposures.size(); ++i) {
    const double x = data.exposures[i];
    const double p = expit(b.intercept + b.slope * x);
    const double v = p * (1.0 - p);
    h11 += v;
    h12 += v * x;
    h22 += v * x * x;
  }
  return {b, {h11, h12, h22}};
}

}  // namespace

double log_posterior(const TrialDataset& data, const ReppPrior& prior,
                     const LogisticCoefficients& coeff) {
  return log_likelihood(data, coeff) + repp_log_density(prior, coeff);
}

LogisticCoefficients penalized_mode(const TrialDataset& data) { return newton_mode(data).mode; }

namespace {

struct Normal1 {
  double log_weight;
  double mean;
  double var;
};

std::vector<Normal1> prior_components(const ReppPrior& prior, const MixtureComponentPair& mix) {
  std::vector<Normal1> out;
  if (prior.w < 1.0)
    out.push_back({std::log1p(-prior.w), 0.0, prior.noninformative_sd * prior.noninformative_sd});
  if (prior.w > 0.0 && mix.p > 0.0)
    out.push_back({std::log(prior.w * mix.p), mix.mu1, mix.sigma1 * mix.sigma1});
  if (prior.w > 0.0 && mix.p < 1.0)
    out.push_back({std::log(prior.w * (1.0 - mix.p)), mix.mu2, mix.sigma2 * mix.sigma2});
  return out;
}

double normal_log_pdf(double v, double mean, double var) {
  const double d = v - mean;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

// Symmetric 2x2 matrix (a, b; b, c).
struct Sym2 {
  double a, b, c;
  double det() const { return a * c - b * b; }
  Sym2 inverse() const {
    const double d = det();
    return {c / d, -b / d, a / d};
  }
};

// One prior regime: a choice of mixture component for each coefficient,
// with a Laplace approximation of the conditional posterior.
struct Regime {
  std::size_t int_comp, slope_comp;
  double m0, m1;        // approximate conditional posterior mean
  Sym2 cov;             // approximate conditional posterior covariance
  double l11, l21, l22; // Cholesky factor of cov
  double log_omega;     // log proposal weight
};

double gaussian2_log_pdf(double v0, double v1, double m0, double m1, const Sym2& cov) {
  const Sym2 p = cov.inverse();
  const double d0 = v0 - m0, d1 = v1 - m1;
  return -0.5 * (p.a * d0 * d0 + 2.0 * p.b * d0 * d1 + p.c * d1 * d1) -
         0.5 * std::log(cov.det()) - std::log(2.0 * std::numbers::pi);
}

}  // namespace

PosteriorDraws sample_posterior(const TrialDataset& data, const ReppPrior& prior,
                                const SamplerOptions& options, Rng& rng) {
  if (options.draws < 1000 || options.burn_in < 1000)
    throw ValidationError("sample_posterior: need draws >= 1000 and burn_in >= 1000");
  if (data.exposures.empty() || data.exposures.size() != data.outcomes.size())
    throw ValidationError("sample_posterior: empty or inconsistent dataset");

  const NewtonState start = newton_mode(data);
  if (!std::isfinite(log_posterior(data, prior, start.mode)))
    throw SamplerDiagnosticError("sample_posterior: non-finite log-posterior at initialization");

  // Gaussian approximation of the likelihood around the penalized mode.
  const Sym2 lik_prec{start.neg_hessian[0] - kNewtonPriorPrecision, start.neg_hessian[1],
                      start.neg_hessian[2] - kNewtonPriorPrecision};
  const auto int_comps = prior_components(prior, prior.intercept);
  const auto slope_comps = prior_components(prior, prior.slope);

  std::vector<Regime> regimes;
  for (std::size_t i = 0; i < int_comps.size(); ++i) {
    for (std::size_t j = 0; j < slope_comps.size(); ++j) {
      const Normal1& ci = int_comps[i];
      const Normal1& cj = slope_comps[j];
      const Sym2 prec{lik_prec.a + 1.0 / ci.var, lik_prec.b, lik_prec.c + 1.0 / cj.var};
      const Sym2 cov = prec.inverse();
      const double r0 = lik_prec.a * start.mode.intercept + lik_prec.b * start.mode.slope +
                        ci.mean / ci.var;
      const double r1 = lik_prec.b * start.mode.intercept + lik_prec.c * start.mode.slope +
                        cj.mean / cj.var;
      Regime g;
      g.int_comp = i;
      g.slope_comp = j;
      g.m0 = cov.a * r0 + cov.b * r1;
      g.m1 = cov.b * r0 + cov.c * r1;
      g.cov = cov;
      g.l11 = std::sqrt(cov.a);
      g.l21 = cov.b / g.l11;
      g.l22 = std::sqrt(std::max(cov.c - g.l21 * g.l21, 0.0));
      // Prior weight times the Gaussian marginal likelihood of this regime.
      const Sym2 marg = lik_prec.inverse();
      const Sym2 spread{marg.a + ci.var, marg.b, marg.c + cj.var};
      g.log_omega = ci.log_weight + cj.log_weight +
                    gaussian2_log_pdf(ci.mean, cj.mean, start.mode.intercept, start.mode.slope,
                                      spread);
      regimes.push_back(g);
    }
  }
  {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& g : regimes) mx = std::max(mx, g.log_omega);
    double total = 0.0;
    for (const auto& g : regimes) total += std::exp(g.log_omega - mx);
    // Every regime keeps some proposal mass.
    const double floor = 0.1 / static_cast<double>(regimes.size());
    for (auto& g : regimes) g.log_omega = std::log(0.9 * std::exp(g.log_omega - mx) / total + floor);
  }
  auto regime_index = [&](std::size_t i, std::size_t j) { return i * slope_comps.size() + j; };

  // Joint log density of (beta, components) up to a constant.
  auto log_prior_part = [&](const LogisticCoefficients& b, std::size_t i, std::size_t j) {
    return int_comps[i].log_weight +
           normal_log_pdf(b.intercept, int_comps[i].mean, int_comps[i].var) +
           slope_comps[j].log_weight + normal_log_pdf(b.slope, slope_comps[j].mean, slope_comps[j].var);
  };
  auto draw_component = [&](double v, const std::vector<Normal1>& comps) {
    std::array<double, 3> lw{};
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < comps.size(); ++k) {
      lw[k] = comps[k].log_weight + normal_log_pdf(v, comps[k].mean, comps[k].var);
      mx = std::max(mx, lw[k]);
    }
    std::array<double, 3> pw{};
    for (std::size_t k = 0; k < comps.size(); ++k) pw[k] = std::exp(lw[k] - mx);
    return sample_categorical(rng, std::span<const double>(pw.data(), comps.size()));
  };
  constexpr double kJumpInflation = 1.5;
  auto jump_log_density = [&](const LogisticCoefficients& b, const Regime& g) {
    const Sym2 c{g.cov.a * kJumpInflation * kJumpInflation, g.cov.b * kJumpInflation * kJumpInflation,
                 g.cov.c * kJumpInflation * kJumpInflation};
    return g.log_omega + gaussian2_log_pdf(b.intercept, b.slope, g.m0, g.m1, c);
  };
  std::vector<double> omega(regimes.size());
  for (std::size_t k = 0; k < regimes.size(); ++k) omega[k] = std::exp(regimes[k].log_omega);

  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  constexpr int kBatch = 50;
  constexpr double kJumpProbability = 0.2;
  const bool jumps = regimes.size() > 1;

  LogisticCoefficients beta = start.mode;
  std::size_t zi = draw_component(beta.intercept, int_comps);
  std::size_t zj = draw_component(beta.slope, slope_comps);
  double ll = log_likelihood(data, beta);
  double lj = ll + log_prior_part(beta, zi, zj);
  double scale = 2.38 / std::sqrt(2.0);

  PosteriorDraws out;
  out.draws.reserve(static_cast<std::size_t>(options.draws));
  int accepted = 0, batch_accepted = 0, batch_steps = 0;
  const int total = options.burn_in + options.draws;
  for (int it = 0; it < total; ++it) {
    // Random-walk step on beta with the covariance of the current regime.
    const Regime& g = regimes[regime_index(zi, zj)];
    const double z1 = std_normal(rng), z2 = std_normal(rng);
    const LogisticCoefficients prop{beta.intercept + scale * g.l11 * z1,
                                    beta.slope + scale * (g.l21 * z1 + g.l22 * z2)};
    const double ll_prop = log_likelihood(data, prop);
    const double lj_prop = ll_prop + log_prior_part(prop, zi, zj);
    const bool accept = std::log(unif(rng)) < lj_prop - lj;
    if (accept) {
      beta = prop;
      ll = ll_prop;
      lj = lj_prop;
    }
    if (jumps) {
      // Component labels given beta.
      zi = draw_component(beta.intercept, int_comps);
      zj = draw_component(beta.slope, slope_comps);
      lj = ll + log_prior_part(beta, zi, zj);
      // Independence jump across regimes.
      if (unif(rng) < kJumpProbability) {
        const std::size_t k = sample_categorical(rng, omega);
        const Regime& r = regimes[k];
        const double u1 = std_normal(rng), u2 = std_normal(rng);
        const LogisticCoefficients jump{r.m0 + kJumpInflation * r.l11 * u1,
                                        r.m1 + kJumpInflation * (r.l21 * u1 + r.l22 * u2)};
        const double ll_jump = log_likelihood(data, jump);
        const double lj_jump = ll_jump + log_prior_part(jump, r.int_comp, r.slope_comp);
        const double log_ratio = lj_jump - lj + jump_log_density(beta, regimes[regime_index(zi, zj)]) -
                                 jump_log_density(jump, r);
        if (std::log(unif(rng)) < log_ratio) {
          beta = jump;
          zi = r.int_comp;
          zj = r.slope_comp;
          ll = ll_jump;
          lj = lj_jump;
        }
      }
    }
    if (it < options.burn_in) {
      batch_accepted += accept;
      if (++batch_steps == kBatch) {
        const double rate = static_cast<double>(batch_accepted) / kBatch;
        if (rate < 0.2) scale *= 0.8;
        if (rate > 0.4) scale *= 1.25;
        batch_accepted = 0;
        batch_steps = 0;
      }
    } else {
      accepted += accept;
      out.draws.push_back(beta);
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / options.draws;
  if (out.acceptance_rate < 0.1 || out.acceptance_rate > 0.6)
    throw SamplerDiagnosticError("sample_posterior: acceptance rate " +
                                 std::to_string(out.acceptance_rate) + " outside [0.1, 0.6]");
  return out;
}

double prob_similarity(const PosteriorDraws& draws, const DeviationScanner& scanner,
                       double epsilon_h) {
  if (!(epsilon_h > 0.0 && epsilon_h < 1.0))
    throw ValidationError("prob_similarity: epsilon_h must lie in (0, 1)");
  if (draws.draws.empty()) return 0.0;
  // A rejected proposal repeats the previous draw; reuse its verdict.
  std::size_t hits = 0;
  const LogisticCoefficients* prev = nullptr;
  bool below = false;
  for (const auto& d : draws.draws) {
    if (!prev || !(d == *prev)) below = scanner.max_below(d, epsilon_h);
    hits += below;
    prev = &d;
  }
  return static_cast<double>(hits) / static_cast<double>(draws.draws.size());
}

double prob_similarity(const PosteriorDraws& draws, const LogisticCoefficients& adult,
                       const ExposureRange& range, double epsilon_h) {
  return prob_similarity(draws, DeviationScanner(adult, range.interest_lo, range.interest_hi),
                         epsilon_h);
}

TrialDataset read_trial_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trial CSV: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "exposure,response")
    throw ValidationError("trial CSV: expected header 'exposure,response', got '" + line + "'");
  TrialDataset data;
  // Header is line 1; data rows count from 1.
  for (std::size_t row = 1; std::getline(in, line); ++row) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    double x;
    char comma;
    int y;
    std::string rest;
    if (!(ls >> x >> comma >> y) || comma != ',' || (ls >> rest) || !std::isfinite(x) ||
        (y != 0 && y != 1))
      throw ValidationError("trial CSV: line " + std::to_string(row + 1) + " (data row " +
                            std::to_string(row) + ") is malformed: '" + line + "'");
    data.exposures.push_back(x);
    data.outcomes.push_back(y);
  }
  if (data.exposures.empty()) throw ValidationError("trial CSV: no data rows");
  return data;
}

void write_trial_csv(std::ostream& out, const TrialDataset& data) {
  out << "exposure,response\n";
  out.precision(17);
  for (std::size_t i = 0; i < data.exposures.size(); ++i)
    out << data.exposures[i] << ',' << data.outcomes[i] << '\n';
}

}  // namespace ped
