#pragma once

#include <iosfwd>
#include <vector>

#include "ped/curves.hpp"
#include "ped/repp.hpp"
#include "ped/rng.hpp"

namespace ped {

struct TrialDataset {
  std::vector<double> exposures;
  std::vector<int> outcomes;

  std::size_t n() const { return exposures.size(); }
  // Throws ValidationError on empty or mismatched data, outcomes outside
  // {0, 1}, or exposures outside [A, B].
  void validate(const ExposureRange& range) const;
};

struct PosteriorDraws {
  std::vector<LogisticCoefficients> draws;
  double acceptance_rate = 0.0;

  std::size_t size() const { return draws.size(); }
};

struct SamplerOptions {
  int draws = 2000;
  int burn_in = 2000;
};

// Bernoulli log-likelihood under the logistic curve plus the REPP log-prior.
double log_posterior(const TrialDataset& data, const ReppPrior& prior,
                     const LogisticCoefficients& coeff);

// Maximizer of the log-likelihood plus a N(0, 100^2) log-prior on each
// coefficient, by damped Newton ascent.
LogisticCoefficients penalized_mode(const TrialDataset& data);

// Adaptive random-walk Metropolis over (intercept, slope).
PosteriorDraws sample_posterior(const TrialDataset& data, const ReppPrior& prior,
                                const SamplerOptions& options, Rng& rng);

// Fraction of draws whose maximum deviation over [a, b] is strictly below epsilon_h.
double prob_similarity(const PosteriorDraws& draws, const DeviationScanner& scanner,
                       double epsilon_h);
double prob_similarity(const PosteriorDraws& draws, const LogisticCoefficients& adult,
                       const ExposureRange& range, double epsilon_h);

// Similarity is declared iff prob > epsilon_bayes.
inline bool decide(double prob, double epsilon_bayes) { return prob > epsilon_bayes; }

// CSV with header exposure,response.
TrialDataset read_trial_csv(std::istream& in);
void write_trial_csv(std::ostream& out, const TrialDataset& data);

}  // namespace ped
