#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "avpfusion/checkpoint.hpp"
#include "avpfusion/config.hpp"
#include "avpfusion/embedstore.hpp"
#include "avpfusion/seqcore.hpp"

namespace avp::train {

using ad::Parameter;
using ad::Tensor;

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW update over `params` using their accumulated gradients. Weight
/// decay is applied directly to the weights (skipped for indices listed in
/// `no_decay`). Returns false, leaving everything untouched, if any gradient
/// is non-finite.
bool adamw_step(const std::vector<Parameter*>& params, AdamState& state, double lr, double weight_decay,
                const std::vector<std::size_t>& no_decay = {}, const AdamHyper& hyper = {});

/// Zero moments matching `params`.
AdamState fresh_adam_state(const std::vector<Parameter*>& params);

/// Linear warm-up from 0 to lr over warmup_epochs, then cosine decay to
/// lr_min at max_epochs (held there afterwards). `epoch` may be fractional.
double lr_schedule(double epoch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Sample encoding

struct Sample {
  std::string id;
  int label = kUnlabeled;
  Tensor embedding;             // L x d_e
  std::vector<double> features;  // standardized descriptors
};

/// Turns peptides into network inputs (descriptors + embeddings).
class Encoder {
 public:
  Encoder(descriptors::DescriptorConfig cfg, FeatureScaler scaler, const embed::EmbeddingProvider& provider);
  Sample encode(const Peptide& p, int label, bool prefer_hash = false) const;
  std::vector<double> raw_features(const Peptide& p) const;
  const FeatureScaler& scaler() const { return scaler_; }
  const embed::EmbeddingProvider& provider() const { return *provider_; }

 private:
  descriptors::DescriptorConfig cfg_;
  FeatureScaler scaler_;
  const embed::EmbeddingProvider* provider_;
};

/// Shortest peptide the configured pipeline accepts.
std::size_t min_peptide_length(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Batch objective

/// One element of a training batch. Positives carry an (anchor, augmented)
/// pair; for stores the anchor uses the hash channel like its augmentation.
struct BatchItem {
  Sample original;
  std::optional<Sample> anchor;     // set only when the pair channel differs from `original`
  std::optional<Sample> augmented;  // set for label-1 items
};

/// Denominators for the three loss means, taken from the whole batch so that
/// summing micro-batch losses reproduces the full-batch loss exactly.
struct BatchNorm {
  std::size_t n_samples = 0;
  std::size_t n_anchors = 0;
};
BatchNorm batch_norm_of(const std::vector<BatchItem>& batch);

struct LossParts {
  double total = 0, con = 0, cls = 0, cons = 0;
  double pos_sim_sum = 0, neg_sim_sum = 0;
  std::size_t n_pos_pairs = 0, n_neg_pairs = 0;
  std::vector<std::vector<double>> embeddings;  // detached E_final per original
  std::vector<int> labels;
};

struct BatchContext {
  const objective::LossConfig* loss = nullptr;
  std::vector<double> alpha;
  const objective::OhemState* ohem = nullptr;
  Rng* mining_rng = nullptr;
  bool training = true;
  std::uint64_t dropout_seed = 0;
  std::uint64_t dropout_offset = 0;  // stream index of the first item
};

/// Forward + backward of `scale` × (loss over `items` with `norm`
/// denominators); parameter gradients accumulate.
LossParts accumulate_batch_loss(nn::ModelParams& params, Parameter& log_tau, const std::vector<BatchItem>& items,
                                const BatchNorm& norm, const BatchContext& ctx, double scale);

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double loss_total = 0, loss_con = 0, loss_cls = 0, loss_cons = 0;
  double pos_sim = 0, neg_sim = 0;
  double tau = 0;
  double val_acc = 0, val_mcc = 0, val_metric = 0;
  std::size_t skipped_steps = 0;
};

std::string epoch_log_header();
std::string epoch_log_row(const EpochLog& e);

struct TrainHooks {
  /// Replaces the monitored validation metric (epoch is 1-based).
  std::function<double(std::size_t epoch, double mcc)> metric_override;
  /// Called after every epoch; return false to stop training.
  std::function<bool(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> history;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
};

/// Splits off a stratified validation set of cfg.val_fraction.
std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& ds, const TrainConfig& cfg);

/// Fresh stage-1 state: initialized model, scaler fitted on `train`.
Checkpoint initial_checkpoint(const RunConfig& cfg, const LabeledDataset& train, const embed::EmbeddingProvider& provider);

/// Runs the training loop from `start` (its optimizer/queue state included).
TrainResult fit(Checkpoint start, const LabeledDataset& train, const LabeledDataset& val,
                const embed::EmbeddingProvider& provider, const TrainHooks& hooks = {});

TrainResult train_stage1(const LabeledDataset& train, const LabeledDataset& val, const RunConfig& cfg,
                         const embed::EmbeddingProvider& provider, const TrainHooks& hooks = {});

/// Stage-2 start state: feature extractor and scaler from `base`, classifier
/// head re-initialized, fresh optimizer and queues, `cfg.train` hyperparameters.
/// Architecture, descriptor and embedding settings must match the base.
Checkpoint transfer_checkpoint(const Checkpoint& base, const RunConfig& cfg);

TrainResult finetune_stage2(const Checkpoint& base, const LabeledDataset& train, const LabeledDataset& val,
                            const RunConfig& cfg, const embed::EmbeddingProvider& provider,
                            const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Inference

struct Prediction {
  std::vector<double> probs;
  double lambda = 0;
  std::vector<double> attn_cnn;   // per residue
  std::vector<double> attn_lstm;  // per residue
};

class Predictor {
 public:
  Predictor(Checkpoint ckpt, const embed::EmbeddingProvider& provider);
  Prediction predict(const Peptide& p) const;
  /// Mean class distribution over p and n_aug single-substitution variants.
  std::vector<double> predict_tta(const Peptide& p, int n_aug, Rng& rng) const;
  std::vector<double> predict_sample(const Sample& s) const;
  const Checkpoint& checkpoint() const { return ckpt_; }
  const Encoder& encoder() const { return encoder_; }

 private:
  mutable Checkpoint ckpt_;
  Encoder encoder_;
};

/// Validation scores (probability of class 1) and labels.
std::pair<std::vector<double>, std::vector<int>> score_dataset(const Predictor& predictor, const LabeledDataset& ds);

}  // namespace avp::train
