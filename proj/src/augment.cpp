#include "avpfusion/augment.hpp"

#include <algorithm>
#include <array>

#include "avpfusion/errors.hpp"
#include "avpfusion/tables.hpp"

namespace avp::augment {

namespace {

std::array<char, 20> build_second_best() {
  const auto& m = tables::blosum62();
  std::array<char, 20> out{};
  for (std::size_t r = 0; r < 20; ++r) {
    int best_score = 0;
    int best = -1;
    // kAlphabet is alphabetical, so a strict comparison keeps the first tie.
    for (std::size_t c = 0; c < 20; ++c) {
      if (c == r) continue;
      if (best < 0 || m[r][c] > best_score) {
        best = static_cast<int>(c);
        best_score = m[r][c];
      }
    }
    out[r] = kAlphabet[static_cast<std::size_t>(best)];
  }
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  if (n_segments < 1) throw ValidationError("augment: n_segments must be >= 1");
  if (n_steps < 0) throw ValidationError("augment: n_steps must be >= 0");
  if (!(p_insert >= 0.0 && p_insert <= 1.0)) throw ValidationError("augment: p_insert must be in [0,1]");
  if (!(p_delete >= 0.0 && p_delete <= 1.0)) throw ValidationError("augment: p_delete must be in [0,1]");
  if (min_len_after < 1) throw ValidationError("augment: min_len_after must be >= 1");
  if (max_len_after < min_len_after) throw ValidationError("augment: max_len_after < min_len_after");
}

char second_best(char residue) {
  static const std::array<char, 20> table = build_second_best();
  const int idx = residue_index(residue);
  if (idx < 0) {
    throw ValidationError("second_best: non-canonical residue '" + std::string(1, residue) + "'");
  }
  return table[static_cast<std::size_t>(idx)];
}

std::vector<std::string> segment(const Peptide& p, int n_segments, Rng& rng) {
  if (n_segments < 1) throw ValidationError("segment: N must be >= 1");
  const std::size_t len = p.size();
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(n_segments), len);

  // Base lengths differ by at most one; the longer ones are placed randomly.
  std::vector<std::size_t> lengths(n, len / n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < len % n; ++i) ++lengths[order[i]];

  // Jitter each interior cut by -1/0/+1 while segments stay non-empty and
  // within the length-spread bound.
  const std::size_t spread_bound = std::max<std::size_t>(1, (len + n - 1) / n);
  for (std::size_t cut = 0; cut + 1 < n; ++cut) {
    const int shift = static_cast<int>(uniform_index(rng, 3)) - 1;
    if (shift == 0) continue;
    auto trial = lengths;
    std::size_t& left = trial[cut];
    std::size_t& right = trial[cut + 1];
    if (shift < 0) {
      if (left <= 1) continue;
      --left;
      ++right;
    } else {
      if (right <= 1) continue;
      ++left;
      --right;
    }
    const auto [lo, hi] = std::minmax_element(trial.begin(), trial.end());
    if (*hi - *lo <= spread_bound) lengths = trial;
  }

  std::vector<std::string> segments;
  segments.reserve(n);
  std::size_t pos = 0;
  for (std::size_t l : lengths) {
    segments.push_back(p.residues().substr(pos, l));
    pos += l;
  }
  return segments;
}

Peptide augment(const Peptide& p, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (p.size() < cfg.min_len_after) {
    throw ValidationError("augment: '" + p.id() + "' is shorter than min_len_after=" +
                          std::to_string(cfg.min_len_after));
  }
  auto segments = segment(p, cfg.n_segments, rng);
  std::size_t total = p.size();
  for (int step = 1; step <= cfg.n_steps; ++step) {
    for (std::size_t s = 0; s < segments.size(); ++s) {
      std::string& seg = segments[s];
      switch ((s + static_cast<std::size_t>(step)) % 3) {
        case 0: {
          if (seg.empty()) break;
          const std::size_t pos = uniform_index(rng, seg.size());
          seg[pos] = second_best(seg[pos]);
          break;
        }
        case 1: {
          if (uniform01(rng) >= cfg.p_insert) break;
          const std::size_t pos = uniform_index(rng, seg.size() + 1);
          const char residue = kAlphabet[uniform_index(rng, kNumResidues)];
          if (total >= cfg.max_len_after) break;
          seg.insert(seg.begin() + static_cast<std::ptrdiff_t>(pos), residue);
          ++total;
          break;
        }
        default: {
          if (uniform01(rng) >= cfg.p_delete) break;
          const std::size_t pos = uniform_index(rng, std::max<std::size_t>(seg.size(), 1));
          if (seg.size() <= 1 || total <= cfg.min_len_after) break;
          seg.erase(seg.begin() + static_cast<std::ptrdiff_t>(pos));
          --total;
          break;
        }
      }
    }
  }
  std::string joined;
  joined.reserve(total);
  for (const auto& seg : segments) joined += seg;
  return Peptide(p.id(), std::move(joined), std::max(cfg.max_len_after, p.size()));
}

std::vector<Peptide> tta_batch(const Peptide& p, int n_aug, Rng& rng) {
  if (n_aug < 0) throw ValidationError("tta_batch: n_aug must be >= 0");
  std::vector<Peptide> out;
  out.reserve(static_cast<std::size_t>(n_aug) + 1);
  out.push_back(p);
  for (int k = 0; k < n_aug; ++k) {
    std::string residues = p.residues();
    const std::size_t pos = uniform_index(rng, residues.size());
    residues[pos] = second_best(residues[pos]);
    out.emplace_back(p.id(), std::move(residues), p.size());
  }
  return out;
}

std::string dump_blosum() {
  const auto& m = tables::blosum62();
  std::string out = "#";
  for (char c : kAlphabet) {
    out += '\t';
    out += c;
  }
  out += '\n';
  for (std::size_t r = 0; r < 20; ++r) {
    out += kAlphabet[r];
    for (std::size_t c = 0; c < 20; ++c) out += '\t' + std::to_string(m[r][c]);
    out += '\n';
  }
  return out;
}

}  // namespace avp::augment
