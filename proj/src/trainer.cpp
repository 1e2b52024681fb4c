#include "avpfusion/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "avpfusion/augment.hpp"
#include "avpfusion/errors.hpp"
#include "avpfusion/metrics.hpp"

namespace avp::train {

namespace {

// Independent RNG streams per purpose.
enum StreamTag : std::uint64_t { kShuffle = 1, kAugment = 2, kMining = 3, kDropout = 4, kInit = 5, kHead = 6 };

Rng stream(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  return derive_stream(seed ^ (static_cast<std::uint64_t>(tag) << 56), index);
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimizer and schedule

AdamState fresh_adam_state(const std::vector<Parameter*>& params) {
  AdamState s;
  for (const Parameter* p : params) {
    s.m.emplace_back(p->value.shape());
    s.v.emplace_back(p->value.shape());
  }
  return s;
}

bool adamw_step(const std::vector<Parameter*>& params, AdamState& state, double lr, double weight_decay,
                const std::vector<std::size_t>& no_decay, const AdamHyper& hyper) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ValidationError("adamw_step: optimizer state does not match parameters");
  }
  for (const Parameter* p : params) {
    if (p->grad.size() != p->value.size()) throw ValidationError("adamw_step: gradient shape mismatch for " + p->name);
    if (!p->grad.all_finite()) return false;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    const bool decay = std::find(no_decay.begin(), no_decay.end(), k) == no_decay.end();
    ad::Tensor& m = state.m[k];
    ad::Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      if (decay) p.value[i] -= lr * weight_decay * p.value[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      p.value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + hyper.eps);
    }
  }
  return true;
}

double lr_schedule(double epoch, const TrainConfig& cfg) {
  if (epoch < 0.0) throw ValidationError("lr_schedule: epoch must be >= 0");
  const double warm = cfg.warmup_epochs;
  if (epoch < warm) return cfg.lr * epoch / warm;
  const double span = static_cast<double>(cfg.max_epochs) - warm;
  const double progress = span > 0.0 ? std::min(1.0, (epoch - warm) / span) : 1.0;
  const double lr_min = cfg.lr_min();
  return lr_min + 0.5 * (cfg.lr - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// Encoding

Encoder::Encoder(descriptors::DescriptorConfig cfg, FeatureScaler scaler, const embed::EmbeddingProvider& provider)
    : cfg_(cfg), scaler_(std::move(scaler)), provider_(&provider) {}

std::vector<double> Encoder::raw_features(const Peptide& p) const {
  return descriptors::encode_all(p, cfg_).values;
}

Sample Encoder::encode(const Peptide& p, int label, bool prefer_hash) const {
  return {p.id(), label, provider_->embed(p, prefer_hash), scaler_.apply(raw_features(p))};
}

std::size_t min_peptide_length(const RunConfig& cfg) {
  return std::max(cfg.descriptors.min_length(), cfg.model.conv_width);
}

// ---------------------------------------------------------------------------
// Batch objective

BatchNorm batch_norm_of(const std::vector<BatchItem>& batch) {
  BatchNorm n;
  n.n_samples = batch.size();
  for (const auto& item : batch) n.n_anchors += item.augmented ? 1 : 0;
  return n;
}

LossParts accumulate_batch_loss(nn::ModelParams& params, Parameter& log_tau, const std::vector<BatchItem>& items,
                                const BatchNorm& norm, const BatchContext& ctx, double scale) {
  using ad::Var;
  if (items.empty()) return {};
  if (norm.n_samples < items.size()) throw ValidationError("batch loss: normalizer smaller than the batch");
  ad::Tape tape;
  const nn::ModelVars vars = nn::bind(tape, params);
  const Var lt = tape.param(log_tau);
  const objective::LossConfig& lc = *ctx.loss;

  auto run = [&](const Sample& s, Rng& drop) {
    nn::FusedInput in{tape.constant(s.embedding), tape.constant(ad::Tensor::vector(s.features))};
    nn::ForwardOptions opt{ctx.training, &drop};
    return nn::forward(vars, in, opt);
  };

  LossParts parts;
  std::vector<Var> probs, anchors, positives, probs_anchor, probs_aug;
  std::vector<std::vector<Var>> negatives;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const BatchItem& item = items[i];
    Rng drop = derive_stream(ctx.dropout_seed, ctx.dropout_offset + i);
    const nn::ForwardOutput out = run(item.original, drop);
    probs.push_back(out.probs);
    parts.embeddings.push_back(out.embedding.value().vec());
    parts.labels.push_back(item.original.label);
    if (!item.augmented) continue;

    Var anchor = out.embedding, anchor_probs = out.probs;
    if (item.anchor) {
      const nn::ForwardOutput a = run(*item.anchor, drop);
      anchor = a.embedding;
      anchor_probs = a.probs;
    }
    const nn::ForwardOutput aug = run(*item.augmented, drop);
    anchors.push_back(anchor);
    positives.push_back(aug.embedding);
    probs_anchor.push_back(anchor_probs);
    probs_aug.push_back(aug.probs);
    parts.pos_sim_sum += objective::cosine_sim(anchor.value().vec(), aug.embedding.value().vec());
    ++parts.n_pos_pairs;

    std::vector<Var> negs;
    if (ctx.ohem && lc.k_negatives > 0) {
      for (std::size_t idx : ctx.ohem->mine_hard_negatives(lc.k_negatives, *ctx.mining_rng)) {
        const auto& n = ctx.ohem->q_neg()[idx];
        negs.push_back(tape.constant(ad::Tensor::vector(n)));  // detached history
        parts.neg_sim_sum += objective::cosine_sim(anchor.value().vec(), n);
        ++parts.n_neg_pairs;
      }
    }
    negatives.push_back(std::move(negs));
  }

  const double n_items = static_cast<double>(items.size());
  const double n_pairs = static_cast<double>(anchors.size());
  const Var zero = tape.constant(ad::Tensor::scalar(0.0));
  const Var l_cls =
      ad::scale(objective::focal_loss(probs, parts.labels, lc.gamma, ctx.alpha), n_items / static_cast<double>(norm.n_samples));
  Var l_con = zero, l_cons = zero;
  if (!anchors.empty()) {
    const double w = n_pairs / static_cast<double>(norm.n_anchors);
    l_con = ad::scale(objective::contrastive_loss(anchors, positives, negatives, lt), w);
    l_cons = ad::scale(objective::consistency_loss(probs_anchor, probs_aug), w);
  }
  const Var total = objective::total_loss(l_con, l_cls, l_cons, lc.lambda_con, lc.lambda_cons);
  tape.backward(ad::scale(total, scale));
  parts.total = total.item();
  parts.con = l_con.item();
  parts.cls = l_cls.item();
  parts.cons = l_cons.item();
  return parts;
}

// ---------------------------------------------------------------------------
// Logging

std::string epoch_log_header() {
  return "epoch,lr,loss_total,loss_con,loss_cls,loss_cons,pos_sim,neg_sim,tau,val_acc,val_mcc,val_metric,skipped_steps";
}

std::string epoch_log_row(const EpochLog& e) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%zu", e.epoch,
                e.lr, e.loss_total, e.loss_con, e.loss_cls, e.loss_cons, e.pos_sim, e.neg_sim, e.tau, e.val_acc,
                e.val_mcc, e.val_metric, e.skipped_steps);
  return buf;
}

// ---------------------------------------------------------------------------
// Training

std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& ds, const TrainConfig& cfg) {
  return split_train_test(ds, 1.0 - cfg.val_fraction, cfg.seed);
}

namespace {

void check_dataset(const LabeledDataset& ds, const RunConfig& cfg, const char* what, bool need_both) {
  if (ds.empty()) throw ValidationError(std::string(what) + " set is empty");
  if (!ds.fully_labeled()) throw ValidationError(std::string(what) + " set has unlabeled records");
  if (need_both && (ds.count_label(0) == 0 || ds.count_label(1) == 0)) {
    throw ValidationError(std::string(what) + " set must contain both classes");
  }
  const std::size_t min_len = min_peptide_length(cfg);
  for (const auto& r : ds.records()) {
    if (r.peptide.size() < min_len) {
      throw ValidationError(std::string(what) + " record '" + r.peptide.id() + "' is shorter than " +
                            std::to_string(min_len) + " residues");
    }
  }
}

void check_provider(const RunConfig& cfg, const embed::EmbeddingProvider& provider) {
  if (provider.dim() != cfg.model.embed_dim) {
    throw ValidationError("embedding dimension " + std::to_string(provider.dim()) + " does not match model.embed_dim " +
                          std::to_string(cfg.model.embed_dim));
  }
}

Checkpoint snapshot(const Checkpoint& c) { return c; }

}  // namespace

Checkpoint initial_checkpoint(const RunConfig& config, const LabeledDataset& train,
                              const embed::EmbeddingProvider& provider) {
  RunConfig cfg = config;
  cfg.model.embed_dim = provider.dim();  // dictated by the embedding source
  cfg.finalize();
  cfg.validate();
  check_dataset(train, cfg, "training", true);
  Checkpoint c;
  c.config = cfg;
  Rng init = stream(cfg.train.seed, kInit, 0);
  c.params = nn::ModelParams::init(cfg.model, init);
  c.log_tau = Parameter("loss.log_tau", ad::Tensor::scalar(std::log(cfg.loss.tau_init)));
  c.adam = fresh_adam_state(trainable(c));
  c.ohem = objective::OhemState(cfg.loss.q_pos_capacity, cfg.loss.q_neg_capacity, cfg.loss.tau_sampling);
  std::vector<std::vector<double>> rows;
  for (const auto& r : train.records()) rows.push_back(descriptors::encode_all(r.peptide, cfg.descriptors).values);
  c.scaler = FeatureScaler::fit(rows, cfg.train.standardize_features);
  return c;
}

TrainResult fit(Checkpoint state, const LabeledDataset& train, const LabeledDataset& val,
                const embed::EmbeddingProvider& provider, const TrainHooks& hooks) {
  const RunConfig& cfg = state.config;
  cfg.validate();
  check_provider(cfg, provider);
  check_dataset(train, cfg, "training", true);
  check_dataset(val, cfg, "validation", false);
  const TrainConfig& tc = cfg.train;

  const Encoder encoder(cfg.descriptors, state.scaler, provider);
  std::vector<Sample> originals;
  for (const auto& r : train.records()) originals.push_back(encoder.encode(r.peptide, r.label));
  std::vector<Sample> val_samples;
  for (const auto& r : val.records()) val_samples.push_back(encoder.encode(r.peptide, r.label));

  std::vector<double> alpha = cfg.loss.alpha;
  if (alpha.empty()) alpha = objective::inverse_frequency_weights({train.count_label(0), train.count_label(1)});

  augment::AugmentConfig aug_cfg = cfg.augment;
  aug_cfg.min_len_after = std::max(aug_cfg.min_len_after, min_peptide_length(cfg));
  aug_cfg.max_len_after = std::min(aug_cfg.max_len_after, static_cast<std::size_t>(cfg.descriptors.binary_pad_len));

  auto params = trainable(state);
  const std::vector<std::size_t> no_decay = {params.size() - 1};  // log_tau
  if (state.adam.m.empty()) state.adam = fresh_adam_state(params);

  TrainResult result;
  bool have_best = false;
  std::size_t since_best = 0;
  std::size_t nonfinite_run = 0;
  const std::size_t n = originals.size();
  const std::size_t n_batches = (n + tc.batch_size - 1) / tc.batch_size;

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = stream(tc.seed, kShuffle, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng mining_rng = stream(tc.seed, kMining, epoch);

    EpochLog log;
    log.epoch = epoch;
    double pos_sim = 0, neg_sim = 0;
    std::size_t n_pos = 0, n_neg = 0, n_steps = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t begin = b * tc.batch_size;
      const std::size_t end = std::min(n, begin + tc.batch_size);
      std::vector<BatchItem> batch;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        const Record& rec = train[idx];
        BatchItem item{originals[idx], std::nullopt, std::nullopt};
        if (rec.label == 1) {
          Rng aug_rng = stream(tc.seed, kAugment, epoch * n + idx);
          item.augmented = encoder.encode(augment::augment(rec.peptide, aug_cfg, aug_rng), 1, true);
          if (provider.has_store()) item.anchor = encoder.encode(rec.peptide, 1, true);
        }
        batch.push_back(std::move(item));
      }
      const BatchNorm norm = batch_norm_of(batch);
      for (Parameter* p : params) p->zero_grad();

      // Near-equal contiguous micro-batches.
      const std::size_t s = std::min(tc.accumulation_steps, batch.size());
      LossParts sum;
      bool finite = true;
      std::size_t offset = 0;
      for (std::size_t m = 0; m < s && finite; ++m) {
        const std::size_t size = batch.size() / s + (m < batch.size() % s ? 1 : 0);
        std::vector<BatchItem> micro(batch.begin() + static_cast<std::ptrdiff_t>(offset),
                                     batch.begin() + static_cast<std::ptrdiff_t>(offset + size));
        BatchContext ctx;
        ctx.loss = &cfg.loss;
        ctx.alpha = alpha;
        ctx.ohem = &state.ohem;
        ctx.mining_rng = &mining_rng;
        ctx.training = true;
        ctx.dropout_seed = tc.seed ^ (static_cast<std::uint64_t>(kDropout) << 56);
        ctx.dropout_offset = epoch * n + begin + offset;
        try {
          const LossParts part = accumulate_batch_loss(state.params, state.log_tau, micro, norm, ctx, 1.0);
          sum.total += part.total;
          sum.con += part.con;
          sum.cls += part.cls;
          sum.cons += part.cons;
          pos_sim += part.pos_sim_sum;
          neg_sim += part.neg_sim_sum;
          n_pos += part.n_pos_pairs;
          n_neg += part.n_neg_pairs;
          sum.embeddings.insert(sum.embeddings.end(), part.embeddings.begin(), part.embeddings.end());
          sum.labels.insert(sum.labels.end(), part.labels.begin(), part.labels.end());
        } catch (const ad::NumericError&) {
          finite = false;
        }
        offset += size;
      }
      if (!finite || !std::isfinite(sum.total)) {
        if (++nonfinite_run >= 2) {
          throw ad::NumericError("training aborted: non-finite loss in two consecutive steps (epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(b + 1) + ")");
        }
        ++log.skipped_steps;
        continue;
      }
      nonfinite_run = 0;
      const double lr = lr_schedule(static_cast<double>(epoch - 1) + static_cast<double>(b) / static_cast<double>(n_batches), tc);
      if (!adamw_step(params, state.adam, lr, tc.weight_decay, no_decay)) ++log.skipped_steps;
      state.ohem.update(sum.embeddings, sum.labels);
      log.loss_total += sum.total;
      log.loss_con += sum.con;
      log.loss_cls += sum.cls;
      log.loss_cons += sum.cons;
      log.lr = lr;
      ++n_steps;
    }
    if (n_steps > 0) {
      const double d = static_cast<double>(n_steps);
      log.loss_total /= d;
      log.loss_con /= d;
      log.loss_cls /= d;
      log.loss_cons /= d;
    }
    log.pos_sim = n_pos ? pos_sim / static_cast<double>(n_pos) : 0.0;
    log.neg_sim = n_neg ? neg_sim / static_cast<double>(n_neg) : 0.0;
    log.tau = std::exp(state.log_tau.value.item());

    std::vector<double> scores;
    std::vector<int> labels;
    for (const Sample& s : val_samples) {
      scores.push_back(nn::predict_probs(state.params, s.embedding, s.features)[1]);
      labels.push_back(s.label);
    }
    const auto cls = metrics::classification_metrics(metrics::confusion(scores, labels, tc.threshold));
    log.val_acc = cls.accuracy;
    log.val_mcc = cls.mcc;
    log.val_metric = hooks.metric_override ? hooks.metric_override(epoch, cls.mcc) : cls.mcc;
    result.history.push_back(log);
    result.epochs_run = epoch;

    state.epoch = epoch;
    if (!have_best || log.val_metric > result.best.best_val) {
      have_best = true;
      since_best = 0;
      state.best_val = log.val_metric;
      result.best = snapshot(state);
    } else {
      state.best_val = result.best.best_val;
      ++since_best;
    }
    const bool keep_going = !hooks.on_epoch || hooks.on_epoch(log);
    if (since_best >= tc.patience) {
      result.early_stopped = true;
      break;
    }
    if (!keep_going) break;
  }
  return result;
}

TrainResult train_stage1(const LabeledDataset& train, const LabeledDataset& val, const RunConfig& cfg,
                         const embed::EmbeddingProvider& provider, const TrainHooks& hooks) {
  if (cfg.train.stage != Stage::kPretrain) throw ValidationError("train_stage1 needs train.stage = pretrain");
  return fit(initial_checkpoint(cfg, train, provider), train, val, provider, hooks);
}

Checkpoint transfer_checkpoint(const Checkpoint& base, const RunConfig& config) {
  if (base.config.train.stage != Stage::kPretrain) {
    throw ValidationError("fine-tuning needs a stage-1 (pretrain) base checkpoint");
  }
  if (config.train.stage != Stage::kFinetune) throw ValidationError("finetune needs train.stage = finetune");
  RunConfig cfg = config;
  cfg.finalize();
  const nn::ModelConfig& a = base.config.model;
  const nn::ModelConfig& b = cfg.model;
  if (a.embed_dim != b.embed_dim || a.conv_kernels != b.conv_kernels || a.conv_width != b.conv_width ||
      a.lstm_hidden != b.lstm_hidden || a.attention_dim != b.attention_dim || a.gate_hidden != b.gate_hidden ||
      !(base.config.descriptors == cfg.descriptors)) {
    throw ValidationError("fine-tuning config does not match the base checkpoint architecture");
  }
  cfg.validate();
  Checkpoint c;
  c.config = cfg;
  c.params = base.params;
  c.params.config = cfg.model;
  Rng head = stream(cfg.train.seed, kHead, 0);
  c.params.reinit_classifier(cfg.model.n_classes, head);
  c.params.zero_grad();
  c.log_tau = Parameter("loss.log_tau", ad::Tensor::scalar(std::log(cfg.loss.tau_init)));
  c.adam = fresh_adam_state(trainable(c));
  c.ohem = objective::OhemState(cfg.loss.q_pos_capacity, cfg.loss.q_neg_capacity, cfg.loss.tau_sampling);
  c.scaler = base.scaler;
  return c;
}

TrainResult finetune_stage2(const Checkpoint& base, const LabeledDataset& train, const LabeledDataset& val,
                            const RunConfig& cfg, const embed::EmbeddingProvider& provider, const TrainHooks& hooks) {
  return fit(transfer_checkpoint(base, cfg), train, val, provider, hooks);
}

// ---------------------------------------------------------------------------
// Inference

Predictor::Predictor(Checkpoint ckpt, const embed::EmbeddingProvider& provider)
    : ckpt_(std::move(ckpt)), encoder_(ckpt_.config.descriptors, ckpt_.scaler, provider) {
  check_provider(ckpt_.config, provider);
}

std::vector<double> Predictor::predict_sample(const Sample& s) const {
  return nn::predict_probs(ckpt_.params, s.embedding, s.features);
}

Prediction Predictor::predict(const Peptide& p) const {
  const Sample s = encoder_.encode(p, kUnlabeled);
  ad::Tape tape;
  const nn::ModelVars vars = nn::bind(tape, ckpt_.params);
  const nn::FusedInput in{tape.constant(s.embedding), tape.constant(ad::Tensor::vector(s.features))};
  const nn::ForwardOutput out = nn::forward(vars, in);
  Prediction pred;
  pred.probs = out.probs.value().vec();
  pred.lambda = out.lambda.item();
  pred.attn_cnn = nn::windows_to_residues(out.attn_cnn.value().vec(), p.size(), ckpt_.config.model.conv_width);
  pred.attn_lstm = out.attn_lstm.value().vec();
  return pred;
}

std::vector<double> Predictor::predict_tta(const Peptide& p, int n_aug, Rng& rng) const {
  const auto variants = augment::tta_batch(p, n_aug, rng);
  std::vector<double> mean;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    // Variants have no stored embedding; they use the hash channel.
    const auto probs = predict_sample(encoder_.encode(variants[v], kUnlabeled, v > 0));
    if (mean.empty()) mean.assign(probs.size(), 0.0);
    for (std::size_t c = 0; c < probs.size(); ++c) mean[c] += probs[c];
  }
  for (double& m : mean) m /= static_cast<double>(variants.size());
  return mean;
}

std::pair<std::vector<double>, std::vector<int>> score_dataset(const Predictor& predictor, const LabeledDataset& ds) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : ds.records()) {
    scores.push_back(predictor.predict_sample(predictor.encoder().encode(r.peptide, r.label))[1]);
    labels.push_back(r.label);
  }
  return {scores, labels};
}

}  // namespace avp::train
