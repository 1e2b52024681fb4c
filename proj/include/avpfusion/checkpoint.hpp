#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avpfusion/config.hpp"
#include "avpfusion/network.hpp"
#include "avpfusion/objective.hpp"

namespace avp {

inline constexpr char kCheckpointMagic[4] = {'P', 'F', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Per-dimension affine map fitted on training descriptors: (x - mean) / scale.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  /// Identity scaler when `enabled` is false; otherwise population mean/std
  /// per column (std 0 -> scale 1).
  static FeatureScaler fit(const std::vector<std::vector<double>>& rows, bool enabled);
  std::vector<double> apply(std::vector<double> x) const;
  bool operator==(const FeatureScaler&) const = default;
};

struct AdamState {
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
  std::uint64_t step = 0;
  bool operator==(const AdamState&) const = default;
};

struct Checkpoint {
  RunConfig config;
  std::size_t epoch = 0;  // epochs completed when the snapshot was taken
  double best_val = 0.0;  // best validation metric seen so far
  nn::ModelParams params;
  ad::Parameter log_tau;
  AdamState adam;  // one (m, v) pair per trainable parameter, in trainable order
  objective::OhemState ohem;
  FeatureScaler scaler;
};

/// Trainable parameters in optimizer order: model parameters then log_tau.
std::vector<ad::Parameter*> trainable(Checkpoint& ckpt);

/// Header (magic, u16 version, u32 config length, config text, 32-byte
/// SHA-256 of the config text, u32 record count) followed by named records:
/// u16 name length, name, u8 dtype (1 = float64, 2 = uint64), u8 rank,
/// rank x u64 extents, little-endian payload.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace avp
