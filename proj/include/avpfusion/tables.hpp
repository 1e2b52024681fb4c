#pragma once

#include <array>
#include <string>
#include <string_view>

namespace avp::tables {

// All residue-indexed tables follow kAlphabet order (ACDEFGHIKLMNPQRSTVWY).

inline constexpr std::string_view kVersion = "avp-tables-1";

const std::array<std::array<int, 20>, 20>& blosum62();

/// Schneider-Wrede physicochemical distance; row = first residue, column =
/// second. Not symmetric; zero diagonal.
const std::array<std::array<double, 20>, 20>& schneider_wrede();

/// Raw (unstandardized) residue properties used by pseudo amino acid
/// composition: hydrophobicity, hydrophilicity, side-chain mass.
const std::array<double, 20>& hydrophobicity();
const std::array<double, 20>& hydrophilicity();
const std::array<double, 20>& side_chain_mass();

/// Sandberg et al. (1998) z1..z5 scales.
const std::array<std::array<double, 5>, 20>& zscales();

/// Number of standard-code codons per residue; sums to 61.
const std::array<int, 20>& codon_counts();

inline constexpr std::size_t kNumGroups = 5;
inline constexpr std::array<std::string_view, kNumGroups> kGroupNames = {
    "aliphatic", "aromatic", "positive", "negative", "uncharged"};

/// Physicochemical group (index into kGroupNames) of each residue:
/// aliphatic GAVLMI, aromatic FYW, positive KRH, negative DE, uncharged STCPNQ.
const std::array<int, 20>& residue_groups();

/// Human-readable dump of every bundled table, prefixed by kVersion.
std::string dump();

}  // namespace avp::tables
