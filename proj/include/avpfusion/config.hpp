#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "avpfusion/augment.hpp"
#include "avpfusion/descriptors.hpp"
#include "avpfusion/network.hpp"
#include "avpfusion/objective.hpp"

namespace avp {

enum class Stage { kPretrain, kFinetune };
std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view s);

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  double lr = 1.2e-4;
  double weight_decay = 1e-2;
  double lr_min_ratio = 0.01;  // lr_min = lr * ratio
  double warmup_epochs = 5;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  std::size_t accumulation_steps = 2;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  double threshold = 0.5;
  std::uint64_t embed_seed = 0;  // hash-embedding seed
  bool standardize_features = true;

  static TrainConfig pretrain_defaults() { return {}; }
  static TrainConfig finetune_defaults();
  double lr_min() const { return lr * lr_min_ratio; }
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Everything needed to reproduce a run. model.descriptor_dim is derived
/// from the descriptor configuration by finalize().
struct RunConfig {
  nn::ModelConfig model;
  descriptors::DescriptorConfig descriptors;
  objective::LossConfig loss;
  augment::AugmentConfig augment;
  TrainConfig train;

  static RunConfig pretrain_defaults();
  static RunConfig finetune_defaults();

  void finalize();
  void validate() const;

  /// Sorted `key = value` lines covering every setting; parse_config of the
  /// output reproduces the configuration exactly.
  std::string to_text() const;
  /// Applies `key = value` lines (and optional `[section]` headers) on top of
  /// the current values. Unknown keys and malformed values are errors.
  void apply_text(std::string_view text);
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  bool operator==(const RunConfig&) const = default;
};

RunConfig load_config(const std::filesystem::path& path, RunConfig base);

/// Round-trippable decimal formatting of a double.
std::string format_double(double v);

}  // namespace avp
