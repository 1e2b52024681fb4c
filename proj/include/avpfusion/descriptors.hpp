#pragma once

#include <memory>
#include <string>
#include <vector>

#include "avpfusion/seqcore.hpp"

namespace avp::descriptors {

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t dim = 0;
};

/// Names every dimension of a descriptor vector; blocks are only populated
/// for the concatenated vector produced by encode_all.
struct Schema {
  std::vector<std::string> names;
  std::vector<Block> blocks;
};

struct FeatureVector {
  std::vector<double> values;
  std::shared_ptr<const Schema> schema;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

struct DescriptorConfig {
  int cksaagp_max_gap = 3;          // k >= 0
  int distancepair_max_distance = 2;  // D >= 1
  int paac_lambda = 2;              // >= 1
  double paac_weight = 0.05;        // > 0
  int qso_nlag = 2;                 // >= 1
  double qso_weight = 0.1;          // > 0
  int binary_pad_len = 100;         // >= 1

  /// Throws ValidationError if any bound is violated.
  void validate() const;
  /// Dimension of encode_all under this configuration.
  std::size_t total_dim() const;
  /// Shortest peptide accepted by every sub-encoder.
  std::size_t min_length() const;
  bool operator==(const DescriptorConfig&) const = default;
};

FeatureVector aac(const Peptide& p);
FeatureVector dpc(const Peptide& p);
FeatureVector dde(const Peptide& p);
FeatureVector cksaagp(const Peptide& p, int max_gap);
FeatureVector gtpc(const Peptide& p);
FeatureVector paac(const Peptide& p, int lambda, double weight);
FeatureVector qsorder(const Peptide& p, int nlag, double weight);
FeatureVector zscale(const Peptide& p);
FeatureVector distance_pair(const Peptide& p, int max_distance);
FeatureVector binary(const Peptide& p, int pad_len);

/// Concatenation in the fixed order aac, dpc, cksaagp, distance_pair, paac,
/// qsorder, zscale, gtpc, binary, dde. Errors from a sub-encoder are rethrown
/// with the descriptor name prefixed.
FeatureVector encode_all(const Peptide& p, const DescriptorConfig& cfg);

/// Schema of encode_all (cached per configuration).
std::shared_ptr<const Schema> encode_all_schema(const DescriptorConfig& cfg);

}  // namespace avp::descriptors
