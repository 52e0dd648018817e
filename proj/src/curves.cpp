#include "ped/curves.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "ped/errors.hpp"

namespace ped {

namespace {

constexpr double kExpitBranch = 35.0;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw ValidationError(std::string(what) + " must be finite");
}

}  // namespace

void ExposureRange::validate() const {
  for (double v : {full_lo, full_hi, interest_lo, interest_hi}) require_finite(v, "exposure bound");
  if (!(full_lo < full_hi)) throw ValidationError("exposure range: full_lo must be < full_hi");
  if (!(interest_lo < interest_hi))
    throw ValidationError("exposure range: interest_lo must be < interest_hi");
  if (interest_lo < full_lo || interest_hi > full_hi)
    throw ValidationError("exposure range: interest interval must lie inside the full range");
}

double expit(double u) {
  if (u > kExpitBranch) return 1.0 - std::exp(-u);
  if (u < -kExpitBranch) return std::exp(u);
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double log_expit(double u) {
  if (u > kExpitBranch) return -std::exp(-u);
  if (u < -kExpitBranch) return u;
  if (u >= 0.0) return -std::log1p(std::exp(-u));
  return u - std::log1p(std::exp(u));
}

double logistic_prob(double x, const LogisticCoefficients& coeff) {
  require_finite(x, "exposure");
  require_finite(coeff.intercept, "intercept");
  require_finite(coeff.slope, "slope");
  return expit(coeff.intercept + coeff.slope * x);
}

double deviation(double x, const LogisticCoefficients& adult, const LogisticCoefficients& ped) {
  return logistic_prob(x, adult) - logistic_prob(x, ped);
}

DeviationSummary max_deviation(const LogisticCoefficients& adult, const LogisticCoefficients& ped,
                               const ExposureRange& range) {
  if (!(range.interest_lo < range.interest_hi))
    throw ValidationError("max_deviation: degenerate interval (a >= b)");
  return DeviationScanner(adult, range.interest_lo, range.interest_hi).summarize(ped);
}

namespace {

// Logistic probabilities at lo + k * step, k = 0..count-1. Away from the
// saturated branches exp(-u) follows a geometric progression in k, carried in
// four interleaved chains; otherwise each node is evaluated directly.
void node_probabilities(const LogisticCoefficients& c, double lo, double step, int count,
                        double* out) {
  const double u_first = c.intercept + c.slope * lo;
  const double u_last = c.intercept + c.slope * (lo + step * (count - 1));
  if (std::abs(u_first) > kExpitBranch || std::abs(u_last) > kExpitBranch) {
    for (int k = 0; k < count; ++k) out[k] = expit(c.intercept + c.slope * (lo + step * k));
    return;
  }
  const double r4 = std::exp(-4.0 * c.slope * step);
  double e[4];
  for (int j = 0; j < 4; ++j) e[j] = std::exp(-(c.intercept + c.slope * (lo + step * j)));
  int k = 0;
  for (; k + 4 <= count; k += 4) {
    for (int j = 0; j < 4; ++j) {
      out[k + j] = 1.0 / (1.0 + e[j]);
      e[j] *= r4;
    }
  }
  for (int j = 0; k < count; ++k, ++j) out[k] = 1.0 / (1.0 + e[j]);
}

}  // namespace

DeviationScanner::DeviationScanner(const LogisticCoefficients& adult, double lo, double hi)
    : adult_(adult), lo_(lo), hi_(hi) {
  require_finite(lo, "interval bound");
  require_finite(hi, "interval bound");
  require_finite(adult.intercept, "intercept");
  require_finite(adult.slope, "slope");
  if (!(lo < hi)) throw ValidationError("deviation scan: degenerate interval (a >= b)");
  step_ = (hi - lo) / (kNodes - 1);
  nodes_.resize(kNodes);
  adult_values_.resize(kNodes);
  for (int k = 0; k < kNodes; ++k)
    nodes_[static_cast<std::size_t>(k)] = (k == kNodes - 1) ? hi : lo + step_ * k;
  node_probabilities(adult, lo_, step_, kNodes, adult_values_.data());
}

DeviationScanner::Peak DeviationScanner::refine(const LogisticCoefficients& ped, int best,
                                                double node_value) const {
  double a = nodes_[static_cast<std::size_t>(best > 0 ? best - 1 : 0)];
  double b = nodes_[static_cast<std::size_t>(best < kNodes - 1 ? best + 1 : kNodes - 1)];
  auto d = [&](double x) {
    return expit(adult_.intercept + adult_.slope * x) - expit(ped.intercept + ped.slope * x);
  };
  while (b - a > kRefineTol) {
    const double m1 = a + (b - a) / 3.0;
    const double m2 = b - (b - a) / 3.0;
    if (d(m1) < d(m2))
      a = m1;
    else
      b = m2;
  }
  const double xm = 0.5 * (a + b);
  const double vm = d(xm);
  if (vm > node_value) return {vm, xm};
  return {node_value, nodes_[static_cast<std::size_t>(best)]};
}

DeviationSummary DeviationScanner::summarize(const LogisticCoefficients& ped) const {
  require_finite(ped.intercept, "intercept");
  require_finite(ped.slope, "slope");
  std::array<double, kNodes> p;
  node_probabilities(ped, lo_, step_, kNodes, p.data());
  int best = 0;
  double best_value = -2.0;
  double simpson = 0.0;
  for (int k = 0; k < kNodes; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double v = adult_values_[i] - p[i];
    if (v > best_value) {
      best_value = v;
      best = k;
    }
    const double coef = (k == 0 || k == kNodes - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    simpson += coef * v;
  }
  const Peak peak = refine(ped, best, best_value);
  DeviationSummary s;
  s.max_value = peak.value;
  s.argmax_x = peak.x;
  s.area = simpson * step_ / 3.0;
  s.left_value = expit(ped.intercept + ped.slope * lo_);
  return s;
}

double DeviationScanner::max_value(const LogisticCoefficients& ped) const {
  std::array<double, kNodes> p;
  node_probabilities(ped, lo_, step_, kNodes, p.data());
  int best = 0;
  double best_value = -2.0;
  for (int k = 0; k < kNodes; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double v = adult_values_[i] - p[i];
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return refine(ped, best, best_value).value;
}

bool DeviationScanner::max_below(const LogisticCoefficients& ped, double threshold) const {
  std::array<double, kNodes> p;
  node_probabilities(ped, lo_, step_, kNodes, p.data());
  int best = 0;
  double best_value = -2.0;
  for (int k = 0; k < kNodes; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double v = adult_values_[i] - p[i];
    if (v >= threshold) return false;
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return refine(ped, best, best_value).value < threshold;
}

double DeviationScanner::min_node_value(const LogisticCoefficients& ped) const {
  std::array<double, kNodes> p;
  node_probabilities(ped, lo_, step_, kNodes, p.data());
  double lowest = 2.0;
  for (int k = 0; k < kNodes; ++k) {
    const auto i = static_cast<std::size_t>(k);
    lowest = std::min(lowest, adult_values_[i] - p[i]);
  }
  return lowest;
}

}  // namespace ped
