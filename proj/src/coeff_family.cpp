#include "ped/coeff_family.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "ped/errors.hpp"

namespace ped {

std::vector<double> standard_h0_eta_grid() {
  return {0.1, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95};
}

std::vector<double> standard_h1_eta_grid() {
  auto g = standard_h0_eta_grid();
  g.push_back(1.0);
  return g;
}

std::vector<double> delta_grid_for(double epsilon_h) {
  std::vector<double> g(10);
  for (int k = 0; k < 10; ++k) g[static_cast<std::size_t>(k)] = k * epsilon_h / 10.0;
  return g;
}

WeightScheme WeightScheme::standard(double epsilon_h) {
  WeightScheme s;
  s.h0_eta_grid = standard_h0_eta_grid();
  s.h0_weights = {8, 4, 2, 2, 2, 1, 1, 1, 1, 1};
  s.h1_eta_grid = standard_h1_eta_grid();
  s.h1_weights = {1, 1, 1, 1, 1, 1, 2, 2, 2, 4, 8};
  s.delta_grid = delta_grid_for(epsilon_h);
  s.delta_weights = {1, 2, 4, 8, 4, 2, 1, 1, 1, 1};
  return s;
}

namespace {

void check_weights(std::span<const double> grid, std::span<const double> weights,
                   const char* name) {
  if (grid.empty()) throw ValidationError(std::string(name) + ": empty grid");
  if (grid.size() != weights.size())
    throw ValidationError(std::string(name) + ": weight count does not match grid length");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0)
      throw ValidationError(std::string(name) + ": weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError(std::string(name) + ": weights sum to zero");
}

void check_eta_grid(std::span<const double> grid, const char* name) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || grid[i] > 1.0)
      throw ValidationError(std::string(name) + ": eta values must lie in [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw ValidationError(std::string(name) + ": eta grid must be strictly increasing");
  }
}

}  // namespace

void WeightScheme::validate() const {
  check_eta_grid(h0_eta_grid, "h0 eta grid");
  check_eta_grid(h1_eta_grid, "h1 eta grid");
  check_weights(h0_eta_grid, h0_weights, "h0 eta weights");
  check_weights(h1_eta_grid, h1_weights, "h1 eta weights");
  check_weights(delta_grid, delta_weights, "delta weights");
  for (std::size_t i = 1; i < delta_grid.size(); ++i)
    if (!(delta_grid[i] > delta_grid[i - 1]))
      throw ValidationError("delta grid must be strictly increasing");
}

std::vector<double> normalized(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= total;
  return out;
}

std::vector<double> default_slope_grid(double adult_slope, std::size_t count, double lo_factor,
                                       double hi_factor) {
  if (!(adult_slope > 0.0)) throw ValidationError("slope grid: adult slope must be positive");
  if (count < 2 || !(lo_factor > 0.0) || !(hi_factor > lo_factor))
    throw ValidationError("slope grid: need count >= 2 and 0 < lo_factor < hi_factor");
  const double lo = std::log(lo_factor * adult_slope);
  const double hi = std::log(hi_factor * adult_slope);
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i)
    grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  return grid;
}

std::optional<LogisticCoefficients> solve_intercept(double slope, double delta,
                                                    const LogisticCoefficients& adult,
                                                    const ExposureRange& range) {
  range.validate();
  return solve_intercept(slope, delta,
                         DeviationScanner(adult, range.interest_lo, range.interest_hi));
}

std::optional<LogisticCoefficients> solve_intercept(double slope, double delta,
                                                    const DeviationScanner& scanner) {
  if (!(slope > 0.0) || !std::isfinite(slope))
    throw ValidationError("solve_intercept: slope must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    throw ValidationError("solve_intercept: delta must lie in (0, 1)");

  const LogisticCoefficients& adult = scanner.adult();
  const double mid = 0.5 * (scanner.lo() + scanner.hi());
  // Start from the intercept that makes both curves cross at the midpoint.
  const double c0 = adult.intercept + (adult.slope - slope) * mid;
  auto gap = [&](double c) { return scanner.max_value({c, slope}) - delta; };

  // Max deviation is strictly decreasing in the pediatric intercept.
  double lo = c0 - 1.0;
  double hi = c0 + 1.0;
  for (double step = 1.0; gap(lo) <= 0.0; step *= 2.0) {
    lo -= step;
    if (step > 1e6) return std::nullopt;  // delta above the adult curve's reach
  }
  for (double step = 1.0; gap(hi) >= 0.0; step *= 2.0) {
    hi += step;
    if (step > 1e6) return std::nullopt;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double c = 0.5 * (lo + hi);
    if (gap(c) > 0.0)
      lo = c;
    else
      hi = c;
  }
  // Keep the end with max >= delta so a member at delta = eps_H is never
  // counted as similar.
  const LogisticCoefficients ped{lo, slope};
  if (std::abs(gap(ped.intercept)) > kFeasibilityTolerance) return std::nullopt;
  if (scanner.min_node_value(ped) < -kFeasibilityTolerance) return std::nullopt;
  return ped;
}

namespace {

std::vector<FamilyMember> feasible_members(double delta, const DeviationScanner& scanner,
                                           std::span<const double> slope_grid) {
  std::vector<FamilyMember> members;
  for (double slope : slope_grid) {
    auto coeff = solve_intercept(slope, delta, scanner);
    if (!coeff) continue;
    FamilyMember m;
    m.coeff = *coeff;
    m.delta = delta;
    m.summary = scanner.summarize(*coeff);
    members.push_back(m);
  }
  return members;
}

void assign_eta(std::vector<FamilyMember>& members, double delta) {
  if (members.size() < kMinFamilySize) {
    std::ostringstream msg;
    msg << "insufficient family at delta=" << delta << ": " << members.size()
        << " feasible members (need " << kMinFamilySize << "); widen or densify the slope grid";
    throw InsufficientFamilyError(msg.str());
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& m : members) {
    const double p = m.summary.area * m.summary.left_value;
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  if (!(hi > lo)) {
    std::ostringstream msg;
    msg << "insufficient family at delta=" << delta << ": area x left value is constant";
    throw InsufficientFamilyError(msg.str());
  }
  for (auto& m : members) {
    const double p = m.summary.area * m.summary.left_value;
    m.eta = (p == lo) ? 0.0 : (p == hi) ? 1.0 : (p - lo) / (hi - lo);
  }
  std::stable_sort(members.begin(), members.end(),
                   [](const FamilyMember& a, const FamilyMember& b) { return a.eta < b.eta; });
}

}  // namespace

std::vector<FamilyMember> build_family(double delta, const LogisticCoefficients& adult,
                                       const ExposureRange& range,
                                       std::span<const double> slope_grid) {
  range.validate();
  for (std::size_t i = 0; i < slope_grid.size(); ++i) {
    if (!(slope_grid[i] > 0.0)) throw ValidationError("slope grid must be positive");
    if (i > 0 && !(slope_grid[i] > slope_grid[i - 1]))
      throw ValidationError("slope grid must be strictly increasing");
  }
  const DeviationScanner scanner(adult, range.interest_lo, range.interest_hi);
  auto members = feasible_members(delta, scanner, slope_grid);
  assign_eta(members, delta);
  return members;
}

const FamilyMember& coeff_for_eta(std::span<const FamilyMember> family, double eta_target) {
  if (family.empty()) throw ValidationError("coeff_for_eta: empty family");
  if (!(eta_target >= 0.0 && eta_target <= 1.0))
    throw ValidationError("coeff_for_eta: eta target must lie in [0, 1]");
  std::size_t best = 0;
  double best_gap = std::abs(family[0].eta - eta_target);
  for (std::size_t i = 1; i < family.size(); ++i) {
    const double g = std::abs(family[i].eta - eta_target);
    if (g < best_gap) {
      best_gap = g;
      best = i;
    }
  }
  if (best_gap > kEtaMatchTolerance) {
    std::ostringstream msg;
    msg << "no family member within " << kEtaMatchTolerance << " of eta=" << eta_target
        << " (nearest gap " << best_gap << ")";
    throw EtaResolutionError(msg.str());
  }
  return family[best];
}

namespace {

CoeffTable fill_table(double delta, std::span<const double> eta_grid,
                      std::span<const FamilyMember> family) {
  CoeffTable t;
  t.delta = delta;
  t.eta_grid.assign(eta_grid.begin(), eta_grid.end());
  for (double e : eta_grid) t.members.push_back(coeff_for_eta(family, e));
  return t;
}

// 4x as many log-spaced slopes, restricted to one original step either side
// of the feasible slope bracket.
std::vector<double> densified_grid(std::span<const double> slope_grid,
                                   std::span<const FamilyMember> family) {
  double smin = std::numeric_limits<double>::infinity();
  double smax = 0.0;
  for (const auto& m : family) {
    smin = std::min(smin, m.coeff.slope);
    smax = std::max(smax, m.coeff.slope);
  }
  auto lower = std::lower_bound(slope_grid.begin(), slope_grid.end(), smin);
  auto upper = std::upper_bound(slope_grid.begin(), slope_grid.end(), smax);
  const double lo = (lower == slope_grid.begin()) ? slope_grid.front() : *(lower - 1);
  const double hi = (upper == slope_grid.end()) ? slope_grid.back() : *upper;
  const std::size_t count = 4 * slope_grid.size();
  std::vector<double> grid(count);
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    grid[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(count - 1));
  return grid;
}

}  // namespace

CoeffTable build_table(double delta, std::span<const double> eta_grid,
                       const LogisticCoefficients& adult, const ExposureRange& range,
                       std::span<const double> slope_grid) {
  auto family = build_family(delta, adult, range, slope_grid);
  try {
    return fill_table(delta, eta_grid, family);
  } catch (const EtaResolutionError&) {
    const auto dense = densified_grid(slope_grid, family);
    auto refined = build_family(delta, adult, range, dense);
    try {
      return fill_table(delta, eta_grid, refined);
    } catch (const EtaResolutionError& e) {
      std::ostringstream msg;
      msg << "delta=" << delta << ": " << e.what() << " after densifying the slope grid";
      throw EtaResolutionError(msg.str());
    }
  }
}

CoeffTable adult_table(std::span<const double> eta_grid, const LogisticCoefficients& adult,
                       const ExposureRange& range) {
  FamilyMember m;
  m.coeff = adult;
  m.delta = 0.0;
  m.summary = max_deviation(adult, adult, range);
  m.eta = 0.0;
  CoeffTable t;
  t.delta = 0.0;
  t.eta_grid.assign(eta_grid.begin(), eta_grid.end());
  t.members.assign(eta_grid.size(), m);
  return t;
}

CoeffTables build_tables(double epsilon_h, const WeightScheme& scheme,
                         const LogisticCoefficients& adult, const ExposureRange& range,
                         std::span<const double> slope_grid) {
  if (!(epsilon_h > 0.0 && epsilon_h < 1.0))
    throw ValidationError("epsilon_h must lie in (0, 1)");
  scheme.validate();
  range.validate();
  CoeffTables out;
  out.h0 = build_table(epsilon_h, scheme.h0_eta_grid, adult, range, slope_grid);
  for (double delta : scheme.delta_grid) {
    if (delta == 0.0)
      out.h1.push_back(adult_table(scheme.h1_eta_grid, adult, range));
    else
      out.h1.push_back(build_table(delta, scheme.h1_eta_grid, adult, range, slope_grid));
  }
  return out;
}

const FamilyMember& sample_beta_h0(Rng& rng, const CoeffTable& h0_table,
                                   const WeightScheme& scheme) {
  const std::size_t i = sample_categorical(rng, scheme.h0_weights);
  return h0_table.members.at(i);
}

const FamilyMember& sample_beta_h1(Rng& rng, const std::vector<CoeffTable>& h1_tables,
                                   const WeightScheme& scheme) {
  const std::size_t k = sample_categorical(rng, scheme.delta_weights);
  const std::size_t i = sample_categorical(rng, scheme.h1_weights);
  return h1_tables.at(k).members.at(i);
}

void verify_member(const FamilyMember& m, const DeviationScanner& scanner) {
  std::ostringstream msg;
  msg << "family member (" << m.coeff.intercept << ", " << m.coeff.slope << ") at delta "
      << m.delta << ": ";
  if (std::abs(m.summary.max_value - m.delta) > 1e-4) {
    msg << "max deviation " << m.summary.max_value << " differs from delta";
    throw NumericalError(msg.str());
  }
  if (scanner.min_node_value(m.coeff) < -kFeasibilityTolerance) {
    msg << "deviation drops below zero on [a, b]";
    throw NumericalError(msg.str());
  }
  if (!(m.eta >= 0.0 && m.eta <= 1.0)) {
    msg << "eta " << m.eta << " outside [0, 1]";
    throw NumericalError(msg.str());
  }
}

void write_table_cache(std::ostream& out, const CoeffTables& tables) {
  out << "delta,eta,intercept,slope,area,left_value\n";
  auto emit = [&](const CoeffTable& t) {
    for (const auto& m : t.members) {
      out << std::setprecision(17) << t.delta << ',' << m.eta << ',' << m.coeff.intercept << ','
          << m.coeff.slope << ',' << m.summary.area << ',' << m.summary.left_value << '\n';
    }
  };
  emit(tables.h0);
  for (const auto& t : tables.h1) emit(t);
}

CoeffTables read_table_cache(std::istream& in, const WeightScheme& scheme,
                             const LogisticCoefficients& adult, const ExposureRange& range) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("table cache: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "delta,eta,intercept,slope,area,left_value")
    throw ValidationError("table cache: unexpected header '" + line + "'");

  struct Row {
    double delta, eta, intercept, slope, area, left;
  };
  std::vector<Row> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    Row r{};
    char c1, c2, c3, c4, c5;
    if (!(ls >> r.delta >> c1 >> r.eta >> c2 >> r.intercept >> c3 >> r.slope >> c4 >> r.area >>
          c5 >> r.left) ||
        c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',')
      throw ValidationError("table cache: malformed row at line " + std::to_string(lineno));
    rows.push_back(r);
  }

  const DeviationScanner scanner(adult, range.interest_lo, range.interest_hi);
  std::size_t pos = 0;
  auto take = [&](std::span<const double> grid, double expected_delta) {
    CoeffTable t;
    t.delta = expected_delta;
    t.eta_grid.assign(grid.begin(), grid.end());
    for (std::size_t i = 0; i < grid.size(); ++i, ++pos) {
      if (pos >= rows.size()) throw ValidationError("table cache: too few rows");
      const Row& r = rows[pos];
      if (std::abs(r.delta - expected_delta) > 1e-12)
        throw ValidationError("table cache: row " + std::to_string(pos + 2) +
                              " has an unexpected delta");
      FamilyMember m;
      m.coeff = {r.intercept, r.slope};
      m.delta = r.delta;
      m.eta = r.eta;
      m.summary = scanner.summarize(m.coeff);
      m.summary.area = r.area;
      m.summary.left_value = r.left;
      t.members.push_back(m);
    }
    return t;
  };
  CoeffTables out;
  out.h0 = take(scheme.h0_eta_grid, rows.empty() ? 0.0 : rows.front().delta);
  for (double d : scheme.delta_grid) out.h1.push_back(take(scheme.h1_eta_grid, d));
  if (pos != rows.size()) throw ValidationError("table cache: trailing rows");
  return out;
}

}  // namespace ped
