#pragma once

#include <vector>

#include "avpfusion/autodiff.hpp"
#include "avpfusion/rng.hpp"

namespace avp::nn {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

struct ModelConfig {
  std::size_t embed_dim = 32;
  std::size_t descriptor_dim = 3914;
  std::size_t conv_kernels = 64;
  std::size_t conv_width = 3;
  std::size_t lstm_hidden = 64;
  std::size_t attention_dim = 32;
  std::size_t gate_hidden = 32;
  std::vector<std::size_t> mlp_hidden = {128};
  std::size_t n_classes = 2;
  double dropout = 0.2;

  void validate() const;
  std::size_t input_dim() const { return embed_dim + descriptor_dim; }
  bool operator==(const ModelConfig&) const = default;
};

/// Gate order in every LSTM direction: forget, input, candidate, output.
enum LstmGate { kForget = 0, kInput = 1, kCandidate = 2, kOutput = 3 };

struct LstmParams {
  // W[g] is [hidden x (hidden + input)] acting on [h_{t-1}, x_t].
  Parameter W[4];
  Parameter b[4];
};

struct AttentionParams {
  Parameter W;  // [attention_dim x d]
  Parameter u;  // [attention_dim]
};

struct GateParams {
  Parameter W1;  // [gate_hidden x (kernels + 2*hidden)]
  Parameter b1;
  Parameter w2;  // [gate_hidden]
  Parameter b2;  // scalar
};

struct ModelParams {
  ModelConfig config;
  Parameter conv_W;  // [kernels x width x input_dim]
  Parameter conv_b;
  LstmParams fwd;
  LstmParams bwd;
  AttentionParams attn_cnn;
  AttentionParams attn_lstm;
  GateParams gate;
  Parameter match_W;  // f_match: [2*hidden x kernels]
  Parameter match_b;
  std::vector<Parameter> mlp_W;
  std::vector<Parameter> mlp_b;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  static ModelParams init(const ModelConfig& config, Rng& rng);
  /// Fresh random classifier head (MLP layers) for `n_classes` outputs.
  void reinit_classifier(std::size_t n_classes, Rng& rng);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> classifier();
  std::vector<Parameter*> feature_extractor();
  void zero_grad();
};

struct LstmVars {
  Var W[4];
  Var b[4];
};

struct ModelVars {
  const ModelConfig* config = nullptr;
  Var conv_W, conv_b;
  LstmVars fwd, bwd;
  Var attn_cnn_W, attn_cnn_u;
  Var attn_lstm_W, attn_lstm_u;
  Var gate_W1, gate_b1, gate_w2, gate_b2;
  Var match_W, match_b;
  std::vector<Var> mlp_W, mlp_b;
};

/// Places every parameter on `tape`.
ModelVars bind(Tape& tape, ModelParams& params);

/// Per-residue embedding rows and the (broadcast) descriptor vector.
struct FusedInput {
  Var embedding;   // [L x embed_dim]
  Var descriptor;  // [descriptor_dim]
  std::size_t length() const { return embedding.value().dim(0); }
};

/// Materialized fused matrix: row i = emb[i] ++ feat.
Tensor fuse_inputs(const Tensor& embedding, const std::vector<double>& features);

struct LstmState {
  Var h;
  Var c;
};

/// One LSTM transition computed literally as W·[h_{t-1}, x_t] + b.
LstmState lstm_step(const Var& x_t, const LstmState& prev, const LstmVars& p);

/// Bidirectional LSTM over the fused rows: row t = h_fwd[t] ++ h_bwd[t].
Var bilstm(const FusedInput& input, const LstmVars& fwd, const LstmVars& bwd);

struct AttentionOutput {
  Var pooled;   // [d]
  Var weights;  // [L], a probability distribution over positions
};

/// Additive attention pooling: alpha = softmax(tanh(seq·W^T)·u), pooled = alpha·seq.
AttentionOutput attention_pool(const Var& seq, const Var& W, const Var& u);

struct GateOutput {
  Var fused;   // E_final
  Var lambda;  // scalar in (0, 1)
};

/// E = lambda * f_match(v_cnn) + (1 - lambda) * v_lstm with
/// lambda = sigmoid(w2·tanh(W1·[v_cnn, v_lstm] + b1) + b2).
GateOutput gated_fusion(const Var& v_cnn, const Var& v_lstm, const ModelVars& vars);

/// Classifier head: ReLU hidden layers, linear output logits.
Var mlp(const Var& x, const ModelVars& vars);

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
};

struct ForwardOutput {
  Var logits;
  Var probs;
  Var embedding;  // E_final
  Var lambda;
  Var attn_cnn;   // over conv windows, length L - width + 1
  Var attn_lstm;  // over residues, length L
};

ForwardOutput forward(const ModelVars& vars, const FusedInput& input,
                      const ForwardOptions& options = {});

/// Eval-mode convenience: builds a private tape and returns the class
/// probabilities for one sample.
std::vector<double> predict_probs(ModelParams& params, const Tensor& embedding,
                                  const std::vector<double>& features);

/// Spreads window attention (L-width+1 entries) evenly over the residues of
/// each window, giving a length-L distribution.
std::vector<double> windows_to_residues(const std::vector<double>& window_weights,
                                        std::size_t length, std::size_t width);

}  // namespace avp::nn
