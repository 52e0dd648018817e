#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ped/coeff_family.hpp"
#include "ped/design_search.hpp"

namespace ped {

// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

// n,w,eps_bayes,type1,power,status
void write_oc_table(std::ostream& out, const SearchReport& report);
// n,w,eps_bayes,type1,type1_se,power,power_se,status,violated,margin,retries
void write_oc_detail(std::ostream& out, const SearchReport& report);
// n,w,eps_bayes,prop_type1_ok,prop_power_ok,stable (evaluated tuples only)
void write_stability(std::ostream& out, const SearchReport& report);
// n,w,eps_bayes,hypothesis,slot,eta,rate
void write_stability_rates(std::ostream& out, const SearchReport& report,
                           std::span<const double> h0_eta, std::span<const double> h1_eta);
void write_ranking_json(std::ostream& out, const SearchReport& report);
// n,eps_bayes,w,type1,power
void write_oc_vs_w(std::ostream& out, const SearchReport& report);

struct EtaTrendPoint {
  int n = 0;
  double w = 0.0;
  double epsilon_bayes = 0.0;
  FamilyMember truth;
  double rate = 0.0;
};

// n,w,eps_bayes,delta,eta,intercept,slope,rate
void write_eta_trend(std::ostream& out, std::span<const EtaTrendPoint> points);

struct FamilyDiagnostics {
  double delta = 0.0;
  std::size_t family_size = 0;
  double slope_min = 0.0;
  double slope_max = 0.0;
  double max_eta_gap = 0.0;
};

void write_family_diagnostics(std::ostream& out, std::span<const FamilyDiagnostics> diags);

}  // namespace ped
