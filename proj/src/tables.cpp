#include "avpfusion/tables.hpp"

#include <cstdio>

#include "avpfusion/seqcore.hpp"

namespace avp::tables {

namespace {

constexpr std::array<std::array<int, 20>, 20> kBlosum62{{
    {{ 4,  0, -2, -1, -2,  0, -2, -1, -1, -1, -1, -2, -1, -1, -1,  1,  0,  0, -3, -2}},  // A
    {{ 0,  9, -3, -4, -2, -3, -3, -1, -3, -1, -1, -3, -3, -3, -3, -1, -1, -1, -2, -2}},  // C
    {{-2, -3,  6,  2, -3, -1, -1, -3, -1, -4, -3,  1, -1,  0, -2,  0, -1, -3, -4, -3}},  // D
    {{-1, -4,  2,  5, -3, -2,  0, -3,  1, -3, -2,  0, -1,  2,  0,  0, -1, -2, -3, -2}},  // E
    {{-2, -2, -3, -3,  6, -3, -1,  0, -3,  0,  0, -3, -4, -3, -3, -2, -2, -1,  1,  3}},  // F
    {{ 0, -3, -1, -2, -3,  6, -2, -4, -2, -4, -3,  0, -2, -2, -2,  0, -2, -3, -2, -3}},  // G
    {{-2, -3, -1,  0, -1, -2,  8, -3, -1, -3, -2,  1, -2,  0,  0, -1, -2, -3, -2,  2}},  // H
    {{-1, -1, -3, -3,  0, -4, -3,  4, -3,  2,  1, -3, -3, -3, -3, -2, -1,  3, -3, -1}},  // I
    {{-1, -3, -1,  1, -3, -2, -1, -3,  5, -2, -1,  0, -1,  1,  2,  0, -1, -2, -3, -2}},  // K
    {{-1, -1, -4, -3,  0, -4, -3,  2, -2,  4,  2, -3, -3, -2, -2, -2, -1,  1, -2, -1}},  // L
    {{-1, -1, -3, -2,  0, -3, -2,  1, -1,  2,  5, -2, -2,  0, -1, -1, -1,  1, -1, -1}},  // M
    {{-2, -3,  1,  0, -3,  0,  1, -3,  0, -3, -2,  6, -2,  0,  0,  1,  0, -3, -4, -2}},  // N
    {{-1, -3, -1, -1, -4, -2, -2, -3, -1, -3, -2, -2,  7, -1, -2, -1, -1, -2, -4, -3}},  // P
    {{-1, -3,  0,  2, -3, -2,  0, -3,  1, -2,  0,  0, -1,  5,  1,  0, -1, -2, -2, -1}},  // Q
    {{-1, -3, -2,  0, -3, -2,  0, -3,  2, -2, -1,  0, -2,  1,  5, -1, -1, -3, -3, -2}},  // R
    {{ 1, -1,  0,  0, -2,  0, -1, -2,  0, -2, -1,  1, -1,  0, -1,  4,  1, -2, -3, -2}},  // S
    {{ 0, -1, -1, -1, -2, -2, -2, -1, -1, -1, -1,  0, -1, -1, -1,  1,  5,  0, -2, -2}},  // T
    {{ 0, -1, -3, -2, -1, -3, -3,  3, -2,  1,  1, -3, -2, -2, -3, -2,  0,  4, -3, -1}},  // V
    {{-3, -2, -4, -3,  1, -2, -2, -3, -3, -2, -1, -4, -4, -2, -3, -3, -2, -3, 11,  2}},  // W
    {{-2, -2, -3, -2,  3, -3,  2, -1, -2, -1, -1, -2, -3, -1, -2, -2, -2, -1,  2,  7}},  // Y
}};

constexpr std::array<std::array<double, 20>, 20> kSchneiderWrede{{
    {{0.000, 0.112, 0.819, 0.827, 0.540, 0.208, 0.696, 0.407, 0.891, 0.406, 0.379, 0.318, 0.191, 0.372, 1.000, 0.094, 0.220, 0.273, 0.739, 0.552}},  // A
    {{0.114, 0.000, 0.847, 0.838, 0.437, 0.320, 0.660, 0.304, 0.887, 0.301, 0.277, 0.324, 0.157, 0.341, 1.000, 0.176, 0.233, 0.167, 0.639, 0.457}},  // C
    {{0.729, 0.742, 0.000, 0.124, 0.924, 0.697, 0.435, 0.847, 0.249, 0.841, 0.819, 0.560, 0.657, 0.584, 0.295, 0.667, 0.649, 0.797, 1.000, 0.836}},  // D
    {{0.790, 0.788, 0.133, 0.000, 0.932, 0.779, 0.406, 0.860, 0.143, 0.854, 0.830, 0.599, 0.688, 0.598, 0.234, 0.726, 0.682, 0.824, 1.000, 0.837}},  // E
    {{0.508, 0.405, 0.977, 0.918, 0.000, 0.690, 0.663, 0.128, 0.903, 0.131, 0.169, 0.541, 0.420, 0.459, 1.000, 0.548, 0.499, 0.252, 0.207, 0.179}},  // F
    {{0.206, 0.312, 0.776, 0.807, 0.727, 0.000, 0.769, 0.592, 0.894, 0.591, 0.557, 0.381, 0.323, 0.467, 1.000, 0.158, 0.272, 0.464, 0.923, 0.728}},  // G
    {{0.896, 0.836, 0.629, 0.547, 0.907, 1.000, 0.000, 0.848, 0.566, 0.842, 0.825, 0.754, 0.777, 0.716, 0.697, 0.865, 0.834, 0.831, 0.981, 0.821}},  // H
    {{0.403, 0.296, 0.942, 0.891, 0.134, 0.592, 0.652, 0.000, 0.892, 0.013, 0.057, 0.457, 0.311, 0.383, 1.000, 0.443, 0.396, 0.133, 0.339, 0.213}},  // I
    {{0.889, 0.871, 0.279, 0.149, 0.957, 0.900, 0.438, 0.899, 0.000, 0.892, 0.871, 0.667, 0.757, 0.639, 0.154, 0.825, 0.759, 0.882, 1.000, 0.848}},  // K
    {{0.405, 0.296, 0.944, 0.892, 0.139, 0.596, 0.653, 0.013, 0.893, 0.000, 0.062, 0.452, 0.309, 0.376, 1.000, 0.443, 0.397, 0.133, 0.341, 0.205}},  // L
    {{0.383, 0.276, 0.932, 0.879, 0.182, 0.569, 0.648, 0.058, 0.884, 0.062, 0.000, 0.447, 0.285, 0.372, 1.000, 0.417, 0.358, 0.120, 0.391, 0.255}},  // M
    {{0.424, 0.425, 0.838, 0.835, 0.766, 0.512, 0.780, 0.615, 0.891, 0.603, 0.588, 0.000, 0.266, 0.175, 1.000, 0.361, 0.368, 0.503, 0.945, 0.641}},  // N
    {{0.220, 0.179, 0.852, 0.831, 0.515, 0.376, 0.696, 0.363, 0.875, 0.357, 0.326, 0.231, 0.000, 0.228, 1.000, 0.196, 0.161, 0.244, 0.720, 0.481}},  // P
    {{0.512, 0.462, 0.903, 0.861, 0.671, 0.648, 0.765, 0.532, 0.881, 0.518, 0.505, 0.181, 0.272, 0.000, 1.000, 0.461, 0.389, 0.464, 0.831, 0.522}},  // Q
    {{0.919, 0.905, 0.305, 0.225, 0.977, 0.928, 0.498, 0.929, 0.141, 0.920, 0.908, 0.690, 0.796, 0.668, 0.000, 0.860, 0.808, 0.914, 1.000, 0.859}},  // R
    {{0.100, 0.185, 0.801, 0.812, 0.622, 0.170, 0.718, 0.478, 0.883, 0.474, 0.440, 0.289, 0.181, 0.358, 1.000, 0.000, 0.174, 0.342, 0.827, 0.615}},  // S
    {{0.251, 0.261, 0.830, 0.812, 0.604, 0.312, 0.737, 0.455, 0.866, 0.453, 0.403, 0.315, 0.159, 0.322, 1.000, 0.185, 0.000, 0.345, 0.816, 0.596}},  // T
    {{0.275, 0.165, 0.900, 0.867, 0.269, 0.471, 0.649, 0.135, 0.889, 0.134, 0.120, 0.380, 0.212, 0.339, 1.000, 0.322, 0.305, 0.000, 0.472, 0.310}},  // V
    {{0.658, 0.560, 1.000, 0.931, 0.196, 0.829, 0.678, 0.305, 0.892, 0.304, 0.344, 0.631, 0.555, 0.538, 0.968, 0.689, 0.638, 0.418, 0.000, 0.204}},  // W
    {{0.587, 0.478, 1.000, 0.932, 0.202, 0.782, 0.678, 0.230, 0.904, 0.219, 0.268, 0.512, 0.444, 0.404, 0.995, 0.612, 0.557, 0.328, 0.244, 0.000}},  // Y
}};

constexpr std::array<double, 20> kHydrophobicity{0.62, 0.29, -0.9, -0.74, 1.19, 0.48, -0.4, 1.38, -1.5, 1.06, 0.64, -0.78, 0.12, -0.85, -2.53, -0.18, -0.05, 1.08, 0.81, 0.26};
constexpr std::array<double, 20> kHydrophilicity{-0.5, -1.0, 3.0, 3.0, -2.5, 0.0, -0.5, -1.8, 3.0, -1.8, -1.3, 0.2, 0.0, 0.2, 3.0, 0.3, -0.4, -1.5, -3.4, -2.3};
constexpr std::array<double, 20> kSideChainMass{15.0, 47.0, 59.0, 73.0, 91.0, 1.0, 82.0, 57.0, 73.0, 57.0, 75.0, 58.0, 42.0, 72.0, 101.0, 31.0, 45.0, 43.0, 130.0, 107.0};

constexpr std::array<std::array<double, 5>, 20> kZScale{{
    {{0.24, -2.32, 0.60, -0.14, 1.30}},  // A
    {{0.84, -1.67, 3.75, 0.18, -2.65}},  // C
    {{3.98, 0.93, 1.93, -2.46, 0.75}},  // D
    {{3.11, 0.26, -0.11, -3.04, -0.25}},  // E
    {{-4.22, 1.94, 1.06, 0.54, -0.62}},  // F
    {{2.05, -4.06, 0.36, -0.82, -0.38}},  // G
    {{2.47, 1.95, 0.26, 3.90, 0.09}},  // H
    {{-3.89, -1.73, -1.71, -0.84, 0.26}},  // I
    {{2.29, 0.89, -2.49, 1.49, 0.31}},  // K
    {{-4.28, -1.30, -1.49, -0.72, 0.84}},  // L
    {{-2.85, -0.22, 0.47, 1.94, -0.98}},  // M
    {{3.05, 1.62, 1.04, -1.15, 1.61}},  // N
    {{-1.66, 0.27, 1.84, 0.70, 2.00}},  // P
    {{1.75, 0.50, -1.44, -1.34, 0.66}},  // Q
    {{3.52, 2.50, -3.50, 1.99, -0.17}},  // R
    {{2.39, -1.07, 1.15, -1.39, 0.67}},  // S
    {{0.75, -2.18, -1.12, -1.46, -0.40}},  // T
    {{-2.59, -2.64, -1.54, -0.85, -0.02}},  // V
    {{-4.36, 3.94, 0.59, 3.44, -1.59}},  // W
    {{-2.54, 2.44, 0.43, 0.04, -1.47}},  // Y
}};

constexpr std::array<int, 20> kCodonCounts{4, 2, 2, 2, 2, 4, 2, 3, 2, 6,
                                           1, 2, 4, 2, 6, 6, 4, 4, 1, 2};

// A C D E F G H I K L M N P Q R S T V W Y
constexpr std::array<int, 20> kGroups{0, 4, 3, 3, 1, 0, 2, 0, 2, 0,
                                      0, 4, 4, 4, 2, 4, 4, 0, 1, 1};

void append_row(std::string& out, char residue, const double* values, std::size_t n) {
  out += residue;
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "\t%g", values[i]);
    out += buf;
  }
  out += '\n';
}

std::string header_row() {
  std::string out = "#";
  for (char c : kAlphabet) {
    out += '\t';
    out += c;
  }
  return out + '\n';
}

}  // namespace

const std::array<std::array<int, 20>, 20>& blosum62() { return kBlosum62; }
const std::array<std::array<double, 20>, 20>& schneider_wrede() { return kSchneiderWrede; }
const std::array<double, 20>& hydrophobicity() { return kHydrophobicity; }
const std::array<double, 20>& hydrophilicity() { return kHydrophilicity; }
const std::array<double, 20>& side_chain_mass() { return kSideChainMass; }
const std::array<std::array<double, 5>, 20>& zscales() { return kZScale; }
const std::array<int, 20>& codon_counts() { return kCodonCounts; }
const std::array<int, 20>& residue_groups() { return kGroups; }

std::string dump() {
  std::string out = "# ";
  out += kVersion;
  out += "\n\n[blosum62]\n" + header_row();
  for (std::size_t r = 0; r < 20; ++r) {
    std::array<double, 20> row{};
    for (std::size_t c = 0; c < 20; ++c) row[c] = kBlosum62[r][c];
    append_row(out, kAlphabet[r], row.data(), 20);
  }
  out += "\n[schneider_wrede]\n" + header_row();
  for (std::size_t r = 0; r < 20; ++r) append_row(out, kAlphabet[r], kSchneiderWrede[r].data(), 20);
  out += "\n[paac_properties]\n#\thydrophobicity\thydrophilicity\tside_chain_mass\n";
  for (std::size_t r = 0; r < 20; ++r) {
    const double row[3] = {kHydrophobicity[r], kHydrophilicity[r], kSideChainMass[r]};
    append_row(out, kAlphabet[r], row, 3);
  }
  out += "\n[zscales]\n#\tz1\tz2\tz3\tz4\tz5\n";
  for (std::size_t r = 0; r < 20; ++r) append_row(out, kAlphabet[r], kZScale[r].data(), 5);
  out += "\n[codons_and_groups]\n#\tcodons\tgroup\n";
  for (std::size_t r = 0; r < 20; ++r) {
    out += kAlphabet[r];
    out += '\t' + std::to_string(kCodonCounts[r]) + '\t' +
           std::string(kGroupNames[static_cast<std::size_t>(kGroups[r])]) + '\n';
  }
  return out;
}

}  // namespace avp::tables
