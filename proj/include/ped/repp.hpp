#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "ped/curves.hpp"
#include "ped/rng.hpp"

namespace ped {

// Elicited distribution of the pediatric-minus-adult log-odds deviation at one
// exposure point: deviation ~ Normal(mean, sd^2).
struct ElicitedPoint {
  double x = 0.0;
  double mean = 0.0;
  double sd = 1.0;
};

struct QuantileElicitation {
  double x = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
};

// Pseudo-observations y in (0, 1) at three exposure points.
struct SyntheticDataset {
  std::vector<double> x;
  std::vector<double> y;
  int per_point_count = 0;
};

// p N(mu1, sigma1^2) + (1 - p) N(mu2, sigma2^2), mu1 <= mu2.
struct MixtureComponentPair {
  double p = 0.5;
  double mu1 = 0.0;
  double sigma1 = 1.0;
  double mu2 = 0.0;
  double sigma2 = 1.0;

  double density(double v) const;
};

inline constexpr double kNoninformativeSd = 100.0;
inline constexpr double kMixtureSdFloor = 1e-3;

// Robust mixture prior, independent per coefficient:
// (1 - w) N(0, 100^2) + w [p N(mu1, s1^2) + (1 - p) N(mu2, s2^2)].
struct ReppPrior {
  double w = 0.0;
  MixtureComponentPair intercept;
  MixtureComponentPair slope;
  double noninformative_sd = kNoninformativeSd;

  double coefficient_log_density(double value, const MixtureComponentPair& mix) const;
  double coefficient_density(double value, const MixtureComponentPair& mix) const;
};

ElicitedPoint fit_normal_from_quantiles(const QuantileElicitation& q);

SyntheticDataset gen_synthetic(std::span<const ElicitedPoint> points,
                               const LogisticCoefficients& adult, Rng& rng,
                               int per_point_count = 1000);

struct InformativeFitOptions {
  int retained = 4000;
  int burn_in = 2000;
};

struct InformativeFit {
  std::vector<LogisticCoefficients> draws;
  double acceptance_rate = 0.0;
};

// Posterior of the pediatric coefficients under y ~ N(f(x; beta), sigma_F^2),
// flat priors on beta and a Jeffreys prior on sigma_F^2.
InformativeFit fit_informative(const SyntheticDataset& data, Rng& rng,
                               const InformativeFitOptions& options = {});

// Two-component univariate normal mixture by EM with 10 restarts.
MixtureComponentPair fit_mixture2(std::span<const double> draws);

ReppPrior build_repp(const MixtureComponentPair& intercept_mix,
                     const MixtureComponentPair& slope_mix, double w);

double repp_log_density(const ReppPrior& prior, const LogisticCoefficients& coeff);

// Human-readable JSON cache with w and the two mixtures.
void write_prior_cache(std::ostream& out, const ReppPrior& prior);
ReppPrior read_prior_cache(std::istream& in);

}  // namespace ped
