#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace avp::metrics {

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Counts with label 1 as the positive class; score >= threshold predicts 1.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold = 0.5);

struct ClassificationMetrics {
  double accuracy = 0, sensitivity = 0, specificity = 0, mcc = 0, f1 = 0, gmean = 0;
};

/// Any metric whose denominator is zero is reported as 0.
ClassificationMetrics classification_metrics(const ConfusionCounts& c);

/// Probability that a random positive outscores a random negative, ties ½.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Non-interpolated area under the precision-recall curve: descending-score
/// sweep with tied scores taken as one block, Σ (R_k - R_{k-1}) P_k.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct Report {
  ClassificationMetrics cls;
  double auroc = 0;
  double auprc = 0;
  ConfusionCounts counts;
};

Report evaluate(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Column order used in every tabular metrics output.
inline constexpr const char* kReportColumns[] = {"Accuracy", "Sensitivity", "Specificity", "MCC",
                                                 "G-mean",   "AUROC",       "AUPRC"};
std::vector<double> report_row(const Report& r);

}  // namespace avp::metrics
