#include "ped/simengine.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "ped/errors.hpp"

namespace ped {

namespace {

constexpr std::uint64_t kDataTag = 0xda7a;
constexpr std::uint64_t kSamplerTag = 0x5a3b;
constexpr std::uint64_t kFixedTag = 0xf1ed;

double binomial_se(double rate, int T) {
  return T > 0 ? std::sqrt(rate * (1.0 - rate) / T) : 0.0;
}

// Posterior probability for one simulated trial, retrying the sampler once on
// a fresh substream. The data are kept; only the chain is redrawn.
double posterior_prob(const TrialDataset& data, const ReppPrior& prior, const SimConfig& config,
                      const DeviationScanner& scanner,
                      std::initializer_list<std::uint64_t> base_keys, int& retries,
                      const std::string& context) {
  std::string first_failure;
  for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
    std::uint64_t seed = derive_seed(config.seed, base_keys);
    Rng rng(derive_seed(seed, {kSamplerTag, attempt}));
    try {
      PosteriorDraws draws = sample_posterior(data, prior, config.sampler, rng);
      return prob_similarity(draws, scanner, config.epsilon_h);
    } catch (const SamplerDiagnosticError& e) {
      if (attempt == 0) {
        first_failure = e.what();
        ++retries;
        continue;
      }
      throw SamplerDiagnosticError(context + ": sampler failed twice (" + first_failure +
                                   "; " + e.what() + ")");
    }
  }
  return 0.0;  // unreachable
}

TrialDataset simulate_trial(int n, const LogisticCoefficients& truth, const SimConfig& config,
                            Rng& rng) {
  TrialDataset data;
  data.exposures = gen_exposures(n, config.range, rng, config.interest_probability);
  data.outcomes = gen_outcomes(data.exposures, truth, rng);
  return data;
}

std::string replicate_context(int n, double w, Hypothesis h, int replicate) {
  std::ostringstream os;
  os << "n=" << n << " w=" << w << " " << to_string(h) << " replicate " << replicate;
  return os.str();
}

}  // namespace

const char* to_string(Hypothesis h) { return h == Hypothesis::H0 ? "H0" : "H1"; }

void DesignTuple::validate() const {
  if (n < 1) throw ValidationError("design tuple: n must be >= 1");
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("design tuple: w must lie in [0, 1]");
  if (!(epsilon_bayes > 0.0 && epsilon_bayes < 1.0))
    throw ValidationError("design tuple: epsilon_bayes must lie in (0, 1)");
}

void SimConfig::validate() const {
  if (T < 1) throw ValidationError("replicate count T must be >= 1");
  if (sampler.draws < 1000) throw ValidationError("posterior draw count must be >= 1000");
  if (sampler.burn_in < 1000) throw ValidationError("burn-in must be >= 1000");
  if (!(epsilon_h > 0.0 && epsilon_h < 1.0))
    throw ValidationError("epsilon_h must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (!(beta_target > 0.0 && beta_target < 1.0))
    throw ValidationError("beta must lie in (0, 1)");
  if (!std::isfinite(adult.intercept) || !std::isfinite(adult.slope))
    throw ValidationError("adult coefficients must be finite");
  if (!(interest_probability >= 0.0 && interest_probability <= 1.0))
    throw ValidationError("interest_probability must lie in [0, 1]");
  if (threads < 1) throw ValidationError("thread count must be >= 1");
  range.validate();
  scheme.validate();
}

double OCEstimate::type1_se() const { return binomial_se(type1, T); }
double OCEstimate::power_se() const { return binomial_se(power, T); }

std::vector<double> gen_exposures(int n, const ExposureRange& range, Rng& rng,
                                  double interest_probability) {
  if (n < 1) throw ValidationError("gen_exposures: n must be >= 1");
  range.validate();
  const double left_len = range.interest_lo - range.full_lo;
  const double right_len = range.full_hi - range.interest_hi;
  const double outside_len = left_len + right_len;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<double> x(static_cast<std::size_t>(n));
  for (double& xi : x) {
    const double route = unif(rng);
    const double v = unif(rng);
    if (route <= interest_probability || outside_len <= 0.0) {
      xi = range.interest_lo + v * (range.interest_hi - range.interest_lo);
    } else {
      // One uniform over the concatenated pieces is uniform on their union.
      const double s = v * outside_len;
      xi = s < left_len ? range.full_lo + s : range.interest_hi + (s - left_len);
    }
  }
  return x;
}

std::vector<int> gen_outcomes(std::span<const double> x, const LogisticCoefficients& truth,
                              Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = unif(rng) < logistic_prob(x[i], truth) ? 1 : 0;
  return y;
}

ReplicateResult run_replicate(const DesignTuple& tuple, Hypothesis hypothesis,
                              const ReppPrior& prior, const CoeffTables& tables,
                              const SimConfig& config, int replicate_index) {
  const auto h = static_cast<std::uint64_t>(hypothesis);
  const auto n = static_cast<std::uint64_t>(tuple.n);
  const auto r = static_cast<std::uint64_t>(replicate_index);

  Rng rng = make_rng(config.seed, {kDataTag, n, h, r});
  const FamilyMember& truth = hypothesis == Hypothesis::H0
                                  ? sample_beta_h0(rng, tables.h0, config.scheme)
                                  : sample_beta_h1(rng, tables.h1, config.scheme);
  TrialDataset data = simulate_trial(tuple.n, truth.coeff, config, rng);

  DeviationScanner scanner(config.adult, config.range.interest_lo, config.range.interest_hi);
  ReplicateResult out;
  out.truth = truth;
  out.prob = posterior_prob(data, prior, config, scanner, {kDataTag, n, h, r}, out.retries,
                            replicate_context(tuple.n, prior.w, hypothesis, replicate_index));
  out.decision = decide(out.prob, tuple.epsilon_bayes);
  return out;
}

std::vector<ReplicateRecord> simulate_replicates(int n, Hypothesis hypothesis,
                                                 const ReppPrior& prior,
                                                 const CoeffTables& tables,
                                                 const SimConfig& config) {
  std::vector<ReplicateRecord> records(static_cast<std::size_t>(config.T));
  const DesignTuple tuple{n, prior.w, 0.5};
  parallel_for(config.T, config.threads, [&](int r) {
    ReplicateResult res = run_replicate(tuple, hypothesis, prior, tables, config, r);
    records[static_cast<std::size_t>(r)] = {r, hypothesis, res.truth, res.prob, res.retries};
  });
  return records;
}

std::vector<double> fixed_beta_probs(int n, const FamilyMember& truth, const ReppPrior& prior,
                                     const SimConfig& config, int* retries) {
  const DeviationScanner scanner(config.adult, config.range.interest_lo,
                                 config.range.interest_hi);
  std::vector<double> probs(static_cast<std::size_t>(config.T));
  std::vector<int> tries(probs.size(), 0);
  const auto nn = static_cast<std::uint64_t>(n);
  parallel_for(config.T, config.threads, [&](int r) {
    const auto rr = static_cast<std::uint64_t>(r);
    Rng rng = make_rng(config.seed, {kFixedTag, nn, rr});
    TrialDataset data = simulate_trial(n, truth.coeff, config, rng);
    std::ostringstream ctx;
    ctx << "fixed truth (" << truth.coeff.intercept << ", " << truth.coeff.slope << ") n=" << n
        << " replicate " << r;
    probs[static_cast<std::size_t>(r)] =
        posterior_prob(data, prior, config, scanner, {kFixedTag, nn, rr},
                       tries[static_cast<std::size_t>(r)], ctx.str());
  });
  if (retries)
    for (int t : tries) *retries += t;
  return probs;
}

double rejection_rate(std::span<const double> probs, double epsilon_bayes) {
  if (probs.empty()) return 0.0;
  std::size_t count = 0;
  for (double p : probs) count += decide(p, epsilon_bayes) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(probs.size());
}

double rejection_rate(std::span<const ReplicateRecord> records, double epsilon_bayes) {
  if (records.empty()) return 0.0;
  std::size_t count = 0;
  for (const auto& rec : records) count += decide(rec.prob, epsilon_bayes) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(records.size());
}

std::vector<OCEstimate> average_oc_sweep(int n, double w,
                                         std::span<const double> epsilon_bayes_grid,
                                         const SimConfig& config, const ReppPrior& prior,
                                         const CoeffTables& tables) {
  config.validate();
  if (std::abs(prior.w - w) > 1e-12)
    throw ValidationError("average_oc: prior weight does not match the design tuple");
  for (double eps : epsilon_bayes_grid) DesignTuple{n, w, eps}.validate();

  const auto h0 = simulate_replicates(n, Hypothesis::H0, prior, tables, config);
  const auto h1 = simulate_replicates(n, Hypothesis::H1, prior, tables, config);
  return aggregate_oc(n, w, epsilon_bayes_grid, h0, h1);
}

std::vector<OCEstimate> aggregate_oc(int n, double w, std::span<const double> epsilon_bayes_grid,
                                     std::span<const ReplicateRecord> h0,
                                     std::span<const ReplicateRecord> h1) {
  if (h0.size() != h1.size() || h0.empty())
    throw ValidationError("aggregate_oc: need equal, non-empty H0 and H1 replicate sets");
  int retries = 0;
  for (const auto& r : h0) retries += r.retries;
  for (const auto& r : h1) retries += r.retries;

  std::vector<OCEstimate> out;
  out.reserve(epsilon_bayes_grid.size());
  for (double eps : epsilon_bayes_grid) {
    OCEstimate est;
    est.tuple = {n, w, eps};
    est.type1 = rejection_rate(h0, eps);
    est.power = rejection_rate(h1, eps);
    est.T = static_cast<int>(h0.size());
    est.retries = retries;
    out.push_back(est);
  }
  return out;
}

OCEstimate average_oc(const DesignTuple& tuple, const SimConfig& config, const ReppPrior& prior,
                      const CoeffTables& tables) {
  const double eps[] = {tuple.epsilon_bayes};
  return average_oc_sweep(tuple.n, tuple.w, eps, config, prior, tables).front();
}

double fixed_beta_oc(const DesignTuple& tuple, const FamilyMember& truth,
                     const SimConfig& config, const ReppPrior& prior) {
  config.validate();
  tuple.validate();
  const auto probs = fixed_beta_probs(tuple.n, truth, prior, config);
  return rejection_rate(std::span<const double>(probs), tuple.epsilon_bayes);
}

void write_replicate_log(std::ostream& out, std::span<const ReplicateRecord> records,
                         double epsilon_bayes) {
  const auto old_precision = out.precision(17);
  out << "replicate,hypothesis,delta,eta,prob,decision\n";
  for (const auto& rec : records) {
    out << rec.replicate << ',' << to_string(rec.hypothesis) << ',' << rec.truth.delta << ','
        << rec.truth.eta << ',' << rec.prob << ',' << (decide(rec.prob, epsilon_bayes) ? 1 : 0)
        << '\n';
  }
  out.precision(old_precision);
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  if (count <= 0) return;
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace ped
