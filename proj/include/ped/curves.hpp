#pragma once

#include <vector>

namespace ped {

// Intercept/slope of a logistic exposure-response curve on the log-odds scale.
struct LogisticCoefficients {
  double intercept = 0.0;
  double slope = 0.0;

  friend bool operator==(const LogisticCoefficients&, const LogisticCoefficients&) = default;
};

// Full observed exposure range [full_lo, full_hi] and the sub-interval of
// clinical interest [interest_lo, interest_hi] where similarity is judged.
struct ExposureRange {
  double full_lo = 0.0;
  double full_hi = 0.0;
  double interest_lo = 0.0;
  double interest_hi = 0.0;

  // Throws ValidationError when the intervals are empty, inverted or nested wrongly.
  void validate() const;
};

struct DeviationSummary {
  double max_value = 0.0;  // max of adult - ped over [a, b]
  double argmax_x = 0.0;
  double area = 0.0;        // integral of adult - ped over [a, b]
  double left_value = 0.0;  // ped probability at a
};

// Overflow-safe logistic function.
double expit(double u);

// log(expit(u)) without cancellation for large |u|.
double log_expit(double u);

double logistic_prob(double x, const LogisticCoefficients& coeff);

// adult(x) - ped(x).
double deviation(double x, const LogisticCoefficients& adult, const LogisticCoefficients& ped);

// Maximum deviation over the interest interval via a 2001-node scan plus
// ternary refinement on the bracket around the best node. Also fills the
// Simpson area and the pediatric value at the left endpoint.
DeviationSummary max_deviation(const LogisticCoefficients& adult, const LogisticCoefficients& ped,
                               const ExposureRange& range);

// Reusable evaluator for many pediatric curves against one adult curve on a
// fixed interval. The adult curve is tabulated once on the scan nodes;
// every query runs the same scan and refinement as max_deviation().
class DeviationScanner {
 public:
  static constexpr int kNodes = 2001;
  static constexpr double kRefineTol = 1e-8;

  DeviationScanner(const LogisticCoefficients& adult, double lo, double hi);

  const LogisticCoefficients& adult() const { return adult_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double node(int k) const { return nodes_[static_cast<std::size_t>(k)]; }

  DeviationSummary summarize(const LogisticCoefficients& ped) const;
  double max_value(const LogisticCoefficients& ped) const;

  // Equivalent to max_value(ped) < threshold, with an early exit as soon
  // as a scan node reaches the threshold.
  bool max_below(const LogisticCoefficients& ped, double threshold) const;

  // Smallest deviation over the scan nodes.
  double min_node_value(const LogisticCoefficients& ped) const;

 private:
  struct Peak {
    double value;
    double x;
  };
  Peak refine(const LogisticCoefficients& ped, int best, double node_value) const;

  LogisticCoefficients adult_;
  double lo_;
  double hi_;
  double step_;
  std::vector<double> nodes_;
  std::vector<double> adult_values_;
};

}  // namespace ped
