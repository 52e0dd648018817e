#include "ped/design_search.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "ped/errors.hpp"

namespace ped {

namespace {

// Rates are multiples of 1/T; this only absorbs rounding in 1 - beta and friends.
constexpr double kCompareTol = 1e-9;

int status_rank(const TupleResult& r) {
  const bool stable = r.stability && r.stability->stable;
  const bool qualified = r.classification.status == DesignStatus::Qualified;
  if (stable) return qualified ? 0 : 1;
  return qualified ? 2 : 3;
}

std::string describe(const TupleResult& r) {
  std::ostringstream os;
  const bool stable = r.stability && r.stability->stable;
  os << (stable ? "stable " : "unstable ") << to_string(r.classification.status);
  if (r.classification.status == DesignStatus::Admissible)
    os << " (" << to_string(r.classification.violated) << " misses by "
       << r.classification.margin << ")";
  if (r.stability)
    os << "; stability proportions (" << r.stability->prop_type1_ok << ", "
       << r.stability->prop_power_ok << ")";
  return os.str();
}

}  // namespace

const char* to_string(DesignStatus s) {
  switch (s) {
    case DesignStatus::Qualified: return "qualified";
    case DesignStatus::Admissible: return "admissible";
    case DesignStatus::Rejected: return "rejected";
  }
  return "rejected";
}

const char* to_string(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::Type1: return "type1";
    case Violation::Power: return "power";
    case Violation::Both: return "both";
  }
  return "none";
}

Classification classify(double type1, double power, double alpha, double beta_target) {
  const double type1_excess = type1 - alpha;
  const double power_shortfall = (1.0 - beta_target) - power;
  const bool type1_bad = type1_excess > kCompareTol;
  const bool power_bad = power_shortfall > kCompareTol;

  Classification c;
  if (!type1_bad && !power_bad) {
    c.status = DesignStatus::Qualified;
    return c;
  }
  if (type1_bad && power_bad) {
    c.violated = Violation::Both;
    c.margin = std::max(type1_excess, power_shortfall);
    return c;
  }
  c.violated = type1_bad ? Violation::Type1 : Violation::Power;
  c.margin = type1_bad ? type1_excess : power_shortfall;
  c.status = c.margin <= kAdmissibleMargin + kCompareTol ? DesignStatus::Admissible
                                                         : DesignStatus::Rejected;
  return c;
}

Classification classify(const OCEstimate& oc, double alpha, double beta_target) {
  return classify(oc.type1, oc.power, alpha, beta_target);
}

CoeffTable stability_h1_table(const SimConfig& config, const CoeffTables& tables,
                              const StabilityOptions& options,
                              std::span<const double> slope_grid) {
  if (!(options.delta_fraction > 0.0 && options.delta_fraction < 1.0))
    throw ValidationError("stability delta fraction must lie in (0, 1)");
  const double delta = options.delta_fraction * config.epsilon_h;
  for (const auto& t : tables.h1)
    if (std::abs(t.delta - delta) <= 1e-12 * config.epsilon_h) return t;
  return build_table(delta, config.scheme.h1_eta_grid, config.adult, config.range, slope_grid);
}

FixedScenarioProbs fixed_scenario_probs(int n, const ReppPrior& prior, const SimConfig& config,
                                        const CoeffTable& h0_table,
                                        const CoeffTable& h1_table) {
  FixedScenarioProbs out;
  for (const auto& m : h0_table.members)
    out.h0.push_back(fixed_beta_probs(n, m, prior, config, &out.retries));
  for (const auto& m : h1_table.members)
    out.h1.push_back(fixed_beta_probs(n, m, prior, config, &out.retries));
  return out;
}

StabilityScore score_stability(const FixedScenarioProbs& probs, double epsilon_bayes,
                               const SimConfig& config, const StabilityOptions& options) {
  if (probs.h0.empty() || probs.h1.empty())
    throw ValidationError("stability: empty scenario table");
  StabilityScore s;
  int h0_ok = 0;
  for (const auto& p : probs.h0) {
    const double rate = rejection_rate(std::span<const double>(p), epsilon_bayes);
    s.h0_rates.push_back(rate);
    h0_ok += rate <= config.alpha + kCompareTol ? 1 : 0;
  }
  int h1_ok = 0;
  for (const auto& p : probs.h1) {
    const double rate = rejection_rate(std::span<const double>(p), epsilon_bayes);
    s.h1_rates.push_back(rate);
    h1_ok += rate >= 1.0 - config.beta_target - kCompareTol ? 1 : 0;
  }
  s.prop_type1_ok = static_cast<double>(h0_ok) / static_cast<double>(probs.h0.size());
  s.prop_power_ok = static_cast<double>(h1_ok) / static_cast<double>(probs.h1.size());
  s.stable = s.prop_type1_ok >= options.threshold - kCompareTol &&
             s.prop_power_ok >= options.threshold - kCompareTol;
  return s;
}

StabilityScore stability(const DesignTuple& tuple, const SimConfig& config,
                         const ReppPrior& prior, const CoeffTables& tables,
                         const CoeffTable& h1_stability_table,
                         const StabilityOptions& options) {
  config.validate();
  tuple.validate();
  const auto probs = fixed_scenario_probs(tuple.n, prior, config, tables.h0, h1_stability_table);
  return score_stability(probs, tuple.epsilon_bayes, config, options);
}

void SearchGrid::validate() const {
  if (n.empty() || w.empty() || epsilon_bayes.empty())
    throw ValidationError("search grid: every axis must be non-empty");
  for (int v : n)
    if (v < 1) throw ValidationError("search grid: n values must be >= 1");
  for (double v : w)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("search grid: w values must lie in [0, 1]");
  for (double v : epsilon_bayes)
    if (!(v > 0.0 && v < 1.0))
      throw ValidationError("search grid: epsilon_bayes values must lie in (0, 1)");
}

std::vector<RankedEntry> rank_results(std::span<const TupleResult> results) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < results.size(); ++i)
    if (results[i].classification.status != DesignStatus::Rejected) idx.push_back(i);

  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = results[a];
    const auto& rb = results[b];
    const auto key = [](const TupleResult& r) {
      return std::make_tuple(status_rank(r), r.oc.tuple.n, r.oc.tuple.w, -r.oc.power,
                             r.oc.tuple.epsilon_bayes);
    };
    return key(ra) < key(rb);
  });

  std::vector<RankedEntry> out;
  for (std::size_t i : idx) out.push_back({i, describe(results[i])});
  return out;
}

SearchReport search(const SearchGrid& grid, const SimConfig& config,
                    const PriorForWeight& prior_for_w, const CoeffTables& tables,
                    const CoeffTable& h1_stability_table, const StabilityOptions& options,
                    const ReplicateSink& sink) {
  grid.validate();
  config.validate();

  SearchReport report;
  for (int n : grid.n) {
    for (double w : grid.w) {
      const ReppPrior prior = prior_for_w(w);
      std::vector<OCEstimate> sweep;
      try {
        if (std::abs(prior.w - w) > 1e-12)
          throw ValidationError("search: prior weight does not match the grid value");
        const auto h0 = simulate_replicates(n, Hypothesis::H0, prior, tables, config);
        const auto h1 = simulate_replicates(n, Hypothesis::H1, prior, tables, config);
        if (sink) sink(n, w, h0, h1);
        sweep = aggregate_oc(n, w, grid.epsilon_bayes, h0, h1);
      } catch (const NumericalError& e) {
        std::ostringstream os;
        os << "tuple n=" << n << " w=" << w << ": " << e.what();
        throw NumericalError(os.str());
      }

      std::optional<FixedScenarioProbs> fixed;
      for (const auto& oc : sweep) {
        TupleResult r{oc, classify(oc, config.alpha, config.beta_target), std::nullopt};
        if (r.classification.status != DesignStatus::Rejected) {
          if (!fixed)
            fixed = fixed_scenario_probs(n, prior, config, tables.h0, h1_stability_table);
          r.stability = score_stability(*fixed, oc.tuple.epsilon_bayes, config, options);
        }
        report.results.push_back(std::move(r));
      }
    }
  }

  report.ranking = rank_results(report.results);
  if (report.ranking.empty())
    report.findings.push_back("no qualified or admissible tuple in the grid");
  else if (status_rank(report.results[report.ranking.front().index]) > 1)
    report.findings.push_back("no stable candidate; ranking lists unstable tuples only");
  return report;
}

}  // namespace ped
