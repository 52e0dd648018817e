#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ped/coeff_family.hpp"
#include "ped/curves.hpp"
#include "ped/posterior.hpp"
#include "ped/repp.hpp"
#include "ped/rng.hpp"

namespace ped {

enum class Hypothesis : int { H0 = 0, H1 = 1 };

const char* to_string(Hypothesis h);

struct DesignTuple {
  int n = 1;
  double w = 0.0;
  double epsilon_bayes = 0.5;

  void validate() const;
};

struct SimConfig {
  int T = 1000;
  SamplerOptions sampler;
  double epsilon_h = 0.2;
  double alpha = 0.2;
  double beta_target = 0.3;
  LogisticCoefficients adult{-2.83, 1.41};
  ExposureRange range{0.0, 5.0, 2.5, 5.0};
  WeightScheme scheme = WeightScheme::standard(0.2);
  std::uint64_t seed = 20240601;
  double interest_probability = 0.5;
  int threads = 1;

  void validate() const;
};

struct OCEstimate {
  DesignTuple tuple;
  double type1 = 0.0;
  double power = 0.0;
  int T = 0;
  int retries = 0;

  double type1_se() const;
  double power_se() const;
};

// Each draw falls in [a, b] with probability interest_probability (u <= p
// routes inside), otherwise uniformly on [A, B] \ [a, b]. When the complement
// is empty every draw is uniform on [a, b].
std::vector<double> gen_exposures(int n, const ExposureRange& range, Rng& rng,
                                  double interest_probability = 0.5);

std::vector<int> gen_outcomes(std::span<const double> x, const LogisticCoefficients& truth,
                              Rng& rng);

struct ReplicateRecord {
  int replicate = 0;
  Hypothesis hypothesis = Hypothesis::H0;
  FamilyMember truth;
  double prob = 0.0;
  int retries = 0;
};

struct ReplicateResult {
  bool decision = false;
  double prob = 0.0;
  FamilyMember truth;
  int retries = 0;
};

// Data substream keys are (seed, n, hypothesis, replicate); w and epsilon_bayes
// are deliberately excluded so that threshold and weight sweeps share trials.
ReplicateResult run_replicate(const DesignTuple& tuple, Hypothesis hypothesis,
                              const ReppPrior& prior, const CoeffTables& tables,
                              const SimConfig& config, int replicate_index);

// Posterior probabilities for T replicates of one (n, hypothesis); the basis of
// every threshold sweep.
std::vector<ReplicateRecord> simulate_replicates(int n, Hypothesis hypothesis,
                                                 const ReppPrior& prior,
                                                 const CoeffTables& tables,
                                                 const SimConfig& config);

// Same with the truth held fixed. Streams depend on (seed, n, replicate) only,
// so different truths see common random numbers.
std::vector<double> fixed_beta_probs(int n, const FamilyMember& truth, const ReppPrior& prior,
                                     const SimConfig& config, int* retries = nullptr);

double rejection_rate(std::span<const double> probs, double epsilon_bayes);
double rejection_rate(std::span<const ReplicateRecord> records, double epsilon_bayes);

OCEstimate average_oc(const DesignTuple& tuple, const SimConfig& config, const ReppPrior& prior,
                      const CoeffTables& tables);

// Re-aggregates stored replicate records into one estimate per threshold.
std::vector<OCEstimate> aggregate_oc(int n, double w, std::span<const double> epsilon_bayes_grid,
                                     std::span<const ReplicateRecord> h0,
                                     std::span<const ReplicateRecord> h1);

// Operating characteristics for every threshold in one pass.
std::vector<OCEstimate> average_oc_sweep(int n, double w,
                                         std::span<const double> epsilon_bayes_grid,
                                         const SimConfig& config, const ReppPrior& prior,
                                         const CoeffTables& tables);

double fixed_beta_oc(const DesignTuple& tuple, const FamilyMember& truth,
                     const SimConfig& config, const ReppPrior& prior);

// CSV: replicate,hypothesis,delta,eta,prob,decision
void write_replicate_log(std::ostream& out, std::span<const ReplicateRecord> records,
                         double epsilon_bayes);

// Runs body(i) for i in [0, count) on up to `threads` workers. The first
// exception thrown by any worker is rethrown after all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

}  // namespace ped
