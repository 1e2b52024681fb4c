#pragma once

#include <string>
#include <vector>

#include "avpfusion/rng.hpp"
#include "avpfusion/seqcore.hpp"

namespace avp::augment {

struct AugmentConfig {
  int n_segments = 3;        // N >= 1
  int n_steps = 2;           // M >= 0
  double p_insert = 0.1;
  double p_delete = 0.1;
  std::size_t min_len_after = 5;
  std::size_t max_len_after = kDefaultMaxLength;  // insertions stop at this length
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

/// Highest-scoring BLOSUM62 substitute different from `residue`; ties go to
/// the alphabetically first residue. Throws ValidationError for
/// non-canonical input.
char second_best(char residue);

/// Splits `p` into min(N, len) contiguous, non-empty, nearly equal segments.
std::vector<std::string> segment(const Peptide& p, int n_segments, Rng& rng);

/// Segment, M rounds of per-segment mutation/insertion/deletion (strategy
/// (segment + step) mod 3), recombine. The result keeps p's id.
Peptide augment(const Peptide& p, const AugmentConfig& cfg, Rng& rng);

/// [p] followed by n_aug single second-best substitution variants.
std::vector<Peptide> tta_batch(const Peptide& p, int n_aug, Rng& rng);

/// BLOSUM62 as TSV for audit.
std::string dump_blosum();

}  // namespace avp::augment
