#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ped/curves.hpp"
#include "ped/rng.hpp"

namespace ped {

// One pediatric scenario: coefficients whose maximum deviation from the adult
// curve over [a, b] equals delta, with deviation >= 0 everywhere on [a, b].
struct FamilyMember {
  LogisticCoefficients coeff;
  double delta = 0.0;
  DeviationSummary summary;
  double eta = 0.0;
};

// Members stored at each slot of an eta grid for one delta.
struct CoeffTable {
  double delta = 0.0;
  std::vector<double> eta_grid;
  std::vector<FamilyMember> members;
};

// Discretized scenario weights. The H1 delta grid is k * eps_H / 10, k = 0..9.
struct WeightScheme {
  std::vector<double> h0_eta_grid;
  std::vector<double> h0_weights;
  std::vector<double> h1_eta_grid;
  std::vector<double> h1_weights;
  std::vector<double> delta_grid;
  std::vector<double> delta_weights;

  // Weights used in the darunavir design: largest weight eight times the smallest.
  static WeightScheme standard(double epsilon_h);

  void validate() const;
};

std::vector<double> standard_h0_eta_grid();
std::vector<double> standard_h1_eta_grid();
std::vector<double> delta_grid_for(double epsilon_h);

// Normalized copy of a weight vector.
std::vector<double> normalized(std::span<const double> weights);

struct CoeffTables {
  CoeffTable h0;
  std::vector<CoeffTable> h1;  // one per delta_grid entry, delta ascending
};

inline constexpr double kEtaMatchTolerance = 0.02;
inline constexpr double kFeasibilityTolerance = 1e-6;
inline constexpr std::size_t kMinFamilySize = 12;

// Log-spaced slopes in [lo_factor * adult_slope, hi_factor * adult_slope].
std::vector<double> default_slope_grid(double adult_slope, std::size_t count = 400,
                                       double lo_factor = 0.2, double hi_factor = 5.0);

// Pediatric intercept for a given slope so that the maximum deviation equals delta.
// Empty when the resulting curve crosses above the adult curve inside [a, b].
std::optional<LogisticCoefficients> solve_intercept(double slope, double delta,
                                                    const LogisticCoefficients& adult,
                                                    const ExposureRange& range);
std::optional<LogisticCoefficients> solve_intercept(double slope, double delta,
                                                    const DeviationScanner& scanner);

// Feasible members for every slope in the grid, sorted by eta.
std::vector<FamilyMember> build_family(double delta, const LogisticCoefficients& adult,
                                       const ExposureRange& range,
                                       std::span<const double> slope_grid);

// Nearest member by eta; throws EtaResolutionError if the gap exceeds 0.02.
const FamilyMember& coeff_for_eta(std::span<const FamilyMember> family, double eta_target);

// Table for one delta > 0 over an eta grid. Densifies the slope grid 4x once
// (inside the feasible slope bracket) when some slot is not resolved.
CoeffTable build_table(double delta, std::span<const double> eta_grid,
                       const LogisticCoefficients& adult, const ExposureRange& range,
                       std::span<const double> slope_grid);

// Table holding the adult curve itself in every slot (delta = 0).
CoeffTable adult_table(std::span<const double> eta_grid, const LogisticCoefficients& adult,
                       const ExposureRange& range);

CoeffTables build_tables(double epsilon_h, const WeightScheme& scheme,
                         const LogisticCoefficients& adult, const ExposureRange& range,
                         std::span<const double> slope_grid);

const FamilyMember& sample_beta_h0(Rng& rng, const CoeffTable& h0_table,
                                   const WeightScheme& scheme);
const FamilyMember& sample_beta_h1(Rng& rng, const std::vector<CoeffTable>& h1_tables,
                                   const WeightScheme& scheme);

// Throws NumericalError naming the first violated member invariant.
void verify_member(const FamilyMember& member, const DeviationScanner& scanner);

// CSV cache: header delta,eta,intercept,slope,area,left_value; the H0 table
// first, then the H1 tables in delta order, rows in eta-grid order.
void write_table_cache(std::ostream& out, const CoeffTables& tables);
CoeffTables read_table_cache(std::istream& in, const WeightScheme& scheme,
                             const LogisticCoefficients& adult, const ExposureRange& range);

}  // namespace ped
