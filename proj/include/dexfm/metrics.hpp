#pragma once

#include <span>
#include <vector>

namespace dexfm {

inline constexpr double kDefaultClip = 1e-7;

// Negated mean binary cross-entropy; scores are clipped to
// [clip, 1 - clip] first.
double log_loss(std::span<const double> scores, std::span<const int> labels,
                double clip = kDefaultClip);

// Probability that a random positive outranks a random negative, ties
// credited 0.5. Rank-statistic implementation, O(n log n). Throws when only
// one class is present (the value is undefined).
double auc(std::span<const double> scores, std::span<const int> labels);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool significant = false;
  bool degenerate = false;  // all per-fold differences equal
};

// Two-sided paired t-test on per-fold differences (a - b), k-1 degrees of
// freedom.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                          double alpha = 0.05);

namespace detail {
// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);
// P(T <= t) for Student's t with nu degrees of freedom.
double student_t_cdf(double t, double nu);
}  // namespace detail

}  // namespace dexfm
