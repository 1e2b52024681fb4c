#pragma once

#include <array>
#include <string>
#include <vector>

#include "avpfusion/seqcore.hpp"

namespace avp::stats {

inline constexpr double kFoldEpsilon = 1e-6;

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of Student's t with `df` degrees of freedom.
double t_two_sided_p(double t, double df);

struct WelchResult {
  double t = 0;
  double df = 0;
  double p = 1;
};

/// Welch's unequal-variance two-sample t-test. Both samples need >= 2
/// values. Two constant samples give p = 1 if their means agree, else 0.
WelchResult welch_test(const std::vector<double>& a, const std::vector<double>& b);

/// "***" (p < 0.001), "**" (< 0.01), "*" (< 0.05), else "ns".
std::string stars(double p);

/// Per-peptide residue frequencies (rows sum to 1).
std::vector<std::array<double, kNumResidues>> residue_frequencies(const LabeledDataset& ds);

struct ResidueComparison {
  char residue = 'A';
  double mean_a = 0, mean_b = 0;
  double log2fc = 0;  // log2((mean_a + ε) / (mean_b + ε))
  double t = 0, p = 1;
  std::string stars;
};

struct CompositionReport {
  std::vector<ResidueComparison> rows;  // kAlphabet order
  std::string to_tsv() const;
};

CompositionReport composition_compare(const LabeledDataset& a, const LabeledDataset& b);

/// log2 fold change of each subclass against `background`: one row per
/// subclass (sorted by name), one column per residue.
struct FoldChangeMatrix {
  std::vector<std::string> subclasses;
  std::vector<std::array<double, kNumResidues>> values;
  std::string to_tsv() const;
};

FoldChangeMatrix subclass_fold_changes(const LabeledDataset& subclassed, const LabeledDataset& background);

}  // namespace avp::stats
