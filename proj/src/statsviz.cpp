#include "avpfusion/statsviz.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "avpfusion/errors.hpp"

namespace avp::stats {

namespace {

// Lentz's method for the continued fraction of I_x(a, b).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 1000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ValidationError("incomplete_beta: a and b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete_beta: x must be in [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // Use the symmetry relation where the fraction converges faster.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("t_two_sided_p: df must be > 0");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::min(1.0, incomplete_beta(0.5 * df, 0.5, x));
}

WelchResult welch_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("welch_test: each sample needs at least 2 values");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_var(a, ma) / static_cast<double>(a.size());
  const double vb = sample_var(b, mb) / static_cast<double>(b.size());
  WelchResult r;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.t = ma == mb ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
    r.df = static_cast<double>(a.size() + b.size() - 2);
    r.p = ma == mb ? 1.0 : 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

std::string stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "ns";
}

std::vector<std::array<double, kNumResidues>> residue_frequencies(const LabeledDataset& ds) {
  std::vector<std::array<double, kNumResidues>> out;
  for (const auto& r : ds.records()) {
    std::array<double, kNumResidues> f{};
    for (std::size_t i = 0; i < r.peptide.size(); ++i) f[static_cast<std::size_t>(r.peptide.index(i))] += 1.0;
    for (double& x : f) x /= static_cast<double>(r.peptide.size());
    out.push_back(f);
  }
  return out;
}

CompositionReport composition_compare(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError("composition_compare: each dataset needs at least 2 peptides");
  }
  const auto fa = residue_frequencies(a);
  const auto fb = residue_frequencies(b);
  CompositionReport report;
  for (std::size_t k = 0; k < kNumResidues; ++k) {
    std::vector<double> xa, xb;
    for (const auto& f : fa) xa.push_back(f[k]);
    for (const auto& f : fb) xb.push_back(f[k]);
    ResidueComparison row;
    row.residue = kAlphabet[k];
    row.mean_a = mean_of(xa);
    row.mean_b = mean_of(xb);
    row.log2fc = std::log2((row.mean_a + kFoldEpsilon) / (row.mean_b + kFoldEpsilon));
    const WelchResult w = welch_test(xa, xb);
    row.t = w.t;
    row.p = w.p;
    row.stars = stars(w.p);
    report.rows.push_back(row);
  }
  return report;
}

std::string CompositionReport::to_tsv() const {
  std::string out = "residue\tmean_a\tmean_b\tlog2fc\tp\tstars\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%c\t%.10g\t%.10g\t%.10g\t%.6g\t%s\n", r.residue, r.mean_a, r.mean_b, r.log2fc, r.p,
                  r.stars.c_str());
    out += buf;
  }
  return out;
}

FoldChangeMatrix subclass_fold_changes(const LabeledDataset& subclassed, const LabeledDataset& background) {
  if (background.empty()) throw ValidationError("subclass_fold_changes: empty background");
  std::array<double, kNumResidues> bg{};
  for (const auto& f : residue_frequencies(background)) {
    for (std::size_t k = 0; k < kNumResidues; ++k) bg[k] += f[k] / static_cast<double>(background.size());
  }
  std::map<std::string, std::pair<std::array<double, kNumResidues>, std::size_t>> groups;
  const auto freqs = residue_frequencies(subclassed);
  for (std::size_t i = 0; i < subclassed.size(); ++i) {
    const std::string& tag = subclassed[i].subclass;
    if (tag.empty()) continue;
    auto& [sum, count] = groups[tag];
    for (std::size_t k = 0; k < kNumResidues; ++k) sum[k] += freqs[i][k];
    ++count;
  }
  if (groups.empty()) throw ValidationError("subclass_fold_changes: no record carries a subclass tag");
  FoldChangeMatrix m;
  for (const auto& [tag, agg] : groups) {
    std::array<double, kNumResidues> row{};
    for (std::size_t k = 0; k < kNumResidues; ++k) {
      const double mean = agg.first[k] / static_cast<double>(agg.second);
      row[k] = std::log2((mean + kFoldEpsilon) / (bg[k] + kFoldEpsilon));
    }
    m.subclasses.push_back(tag);
    m.values.push_back(row);
  }
  return m;
}

std::string FoldChangeMatrix::to_tsv() const {
  std::string out = "subclass";
  for (char c : kAlphabet) out += std::string("\t") + c;
  out += "\n";
  char buf[64];
  for (std::size_t i = 0; i < subclasses.size(); ++i) {
    out += subclasses[i];
    for (double v : values[i]) {
      std::snprintf(buf, sizeof buf, "\t%.10g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace avp::stats
