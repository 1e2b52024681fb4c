#include "avpfusion/network.hpp"

#include <cmath>
#include <string>

#include "avpfusion/errors.hpp"

namespace avp::nn {

namespace {

constexpr const char* kGateNames[4] = {"f", "i", "C", "O"};

Parameter uniform_param(std::string name, ad::Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  return Parameter(std::move(name), std::move(t));
}

LstmParams init_lstm(const std::string& prefix, std::size_t hidden, std::size_t input, Rng& rng) {
  LstmParams p;
  for (int g = 0; g < 4; ++g) {
    p.W[g] = uniform_param(prefix + ".W_" + kGateNames[g], {hidden, hidden + input}, hidden, rng);
    p.b[g] = uniform_param(prefix + ".b_" + kGateNames[g], {hidden}, hidden, rng);
  }
  return p;
}

LstmVars bind_lstm(Tape& tape, LstmParams& p) {
  LstmVars v;
  for (int g = 0; g < 4; ++g) {
    v.W[g] = tape.param(p.W[g]);
    v.b[g] = tape.param(p.b[g]);
  }
  return v;
}

Var gate_activation(int gate, const Var& pre) {
  return gate == kCandidate ? ad::tanh(pre) : ad::sigmoid(pre);
}

// One direction over precomputed input projections proj[g] ([L x hidden]).
Var run_direction(const Var (&proj)[4], const Var (&W_h)[4], std::size_t length) {
  std::vector<Var> outputs;
  outputs.reserve(length);
  Var h, c;
  for (std::size_t t = 0; t < length; ++t) {
    Var gates[4];
    for (int g = 0; g < 4; ++g) {
      Var pre = ad::row(proj[g], t);
      if (t > 0) pre = ad::add(pre, ad::matmul(W_h[g], h));  // h_{-1} = 0
      gates[g] = gate_activation(g, pre);
    }
    Var fresh = ad::mul(gates[kInput], gates[kCandidate]);
    c = t > 0 ? ad::add(ad::mul(gates[kForget], c), fresh) : fresh;  // C_{-1} = 0
    h = ad::mul(gates[kOutput], ad::tanh(c));
    outputs.push_back(h);
  }
  return ad::stack_rows(outputs);
}

Var direction(const Var& emb, const Var& desc, const LstmVars& p) {
  const std::size_t hidden = p.b[0].size();
  const std::size_t length = emb.value().dim(0);
  Var proj[4];
  Var W_h[4];
  for (int g = 0; g < 4; ++g) {
    W_h[g] = ad::slice_cols(p.W[g], 0, hidden);
    // Input part of W·[h, x] + b for every step at once; the descriptor
    // block is identical for all rows.
    proj[g] = ad::fused_affine(emb, desc, p.W[g], p.b[g], hidden);
  }
  return run_direction(proj, W_h, length);
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim < 1 || descriptor_dim < 1 || conv_kernels < 1 || conv_width < 1 ||
      lstm_hidden < 1 || attention_dim < 1 || gate_hidden < 1 || n_classes < 2) {
    throw ValidationError("model config: all dimensions must be >= 1 and n_classes >= 2");
  }
  for (auto h : mlp_hidden) {
    if (h < 1) throw ValidationError("model config: MLP hidden sizes must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model config: dropout must be in [0,1)");
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  const std::size_t in = config.input_dim();
  const std::size_t K = config.conv_kernels, H = config.conv_width, dh = config.lstm_hidden;
  const std::size_t da = config.attention_dim, dg = config.gate_hidden;
  p.conv_W = uniform_param("conv.W", {K, H, in}, H * in, rng);
  p.conv_b = uniform_param("conv.b", {K}, H * in, rng);
  p.fwd = init_lstm("bilstm.fwd", dh, in, rng);
  p.bwd = init_lstm("bilstm.bwd", dh, in, rng);
  p.attn_cnn.W = uniform_param("attn_cnn.W", {da, K}, K, rng);
  p.attn_cnn.u = uniform_param("attn_cnn.u", {da}, da, rng);
  p.attn_lstm.W = uniform_param("attn_lstm.W", {da, 2 * dh}, 2 * dh, rng);
  p.attn_lstm.u = uniform_param("attn_lstm.u", {da}, da, rng);
  p.gate.W1 = uniform_param("gate.W1", {dg, K + 2 * dh}, K + 2 * dh, rng);
  p.gate.b1 = uniform_param("gate.b1", {dg}, K + 2 * dh, rng);
  p.gate.w2 = uniform_param("gate.w2", {dg}, dg, rng);
  p.gate.b2 = uniform_param("gate.b2", {}, dg, rng);
  p.match_W = uniform_param("match.W", {2 * dh, K}, K, rng);
  p.match_b = uniform_param("match.b", {2 * dh}, K, rng);
  p.reinit_classifier(config.n_classes, rng);
  return p;
}

void ModelParams::reinit_classifier(std::size_t n_classes, Rng& rng) {
  config.n_classes = n_classes;
  config.validate();
  mlp_W.clear();
  mlp_b.clear();
  std::size_t in = 2 * config.lstm_hidden;
  std::vector<std::size_t> sizes = config.mlp_hidden;
  sizes.push_back(n_classes);
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const std::string prefix = "mlp." + std::to_string(l);
    mlp_W.push_back(uniform_param(prefix + ".W", {sizes[l], in}, in, rng));
    mlp_b.push_back(uniform_param(prefix + ".b", {sizes[l]}, in, rng));
    in = sizes[l];
  }
}

std::vector<Parameter*> ModelParams::feature_extractor() {
  std::vector<Parameter*> out = {&conv_W, &conv_b};
  for (LstmParams* d : {&fwd, &bwd}) {
    for (int g = 0; g < 4; ++g) out.push_back(&d->W[g]);
    for (int g = 0; g < 4; ++g) out.push_back(&d->b[g]);
  }
  for (AttentionParams* a : {&attn_cnn, &attn_lstm}) {
    out.push_back(&a->W);
    out.push_back(&a->u);
  }
  out.insert(out.end(), {&gate.W1, &gate.b1, &gate.w2, &gate.b2, &match_W, &match_b});
  return out;
}

std::vector<Parameter*> ModelParams::classifier() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < mlp_W.size(); ++l) {
    out.push_back(&mlp_W[l]);
    out.push_back(&mlp_b[l]);
  }
  return out;
}

std::vector<Parameter*> ModelParams::all() {
  auto out = feature_extractor();
  auto head = classifier();
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  auto mutable_ptrs = const_cast<ModelParams*>(this)->all();
  return {mutable_ptrs.begin(), mutable_ptrs.end()};
}

void ModelParams::zero_grad() {
  for (Parameter* p : all()) p->zero_grad();
}

ModelVars bind(Tape& tape, ModelParams& params) {
  ModelVars v;
  v.config = &params.config;
  v.conv_W = tape.param(params.conv_W);
  v.conv_b = tape.param(params.conv_b);
  v.fwd = bind_lstm(tape, params.fwd);
  v.bwd = bind_lstm(tape, params.bwd);
  v.attn_cnn_W = tape.param(params.attn_cnn.W);
  v.attn_cnn_u = tape.param(params.attn_cnn.u);
  v.attn_lstm_W = tape.param(params.attn_lstm.W);
  v.attn_lstm_u = tape.param(params.attn_lstm.u);
  v.gate_W1 = tape.param(params.gate.W1);
  v.gate_b1 = tape.param(params.gate.b1);
  v.gate_w2 = tape.param(params.gate.w2);
  v.gate_b2 = tape.param(params.gate.b2);
  v.match_W = tape.param(params.match_W);
  v.match_b = tape.param(params.match_b);
  for (std::size_t l = 0; l < params.mlp_W.size(); ++l) {
    v.mlp_W.push_back(tape.param(params.mlp_W[l]));
    v.mlp_b.push_back(tape.param(params.mlp_b[l]));
  }
  return v;
}

Tensor fuse_inputs(const Tensor& embedding, const std::vector<double>& features) {
  if (embedding.rank() != 2 || embedding.dim(0) < 1) {
    throw ValidationError("fuse_inputs: embedding must be [L x d_e] with L >= 1");
  }
  const std::size_t L = embedding.dim(0), de = embedding.dim(1), df = features.size();
  Tensor out({L, de + df});
  for (std::size_t r = 0; r < L; ++r) {
    for (std::size_t c = 0; c < de; ++c) out.at(r, c) = embedding.at(r, c);
    for (std::size_t c = 0; c < df; ++c) out.at(r, de + c) = features[c];
  }
  return out;
}

LstmState lstm_step(const Var& x_t, const LstmState& prev, const LstmVars& p) {
  const Var hx = ad::concat({prev.h, x_t});
  Var gates[4];
  for (int g = 0; g < 4; ++g) {
    if (p.W[g].value().dim(1) != hx.size()) {
      throw ValidationError("lstm_step: weight width does not match [h, x]");
    }
    gates[g] = gate_activation(g, ad::add(ad::matmul(p.W[g], hx), p.b[g]));
  }
  const Var c = ad::add(ad::mul(gates[kForget], prev.c), ad::mul(gates[kInput], gates[kCandidate]));
  const Var h = ad::mul(gates[kOutput], ad::tanh(c));
  return {h, c};
}

Var bilstm(const FusedInput& input, const LstmVars& fwd, const LstmVars& bwd) {
  const Var forward_out = direction(input.embedding, input.descriptor, fwd);
  const Var backward_out =
      ad::reverse_rows(direction(ad::reverse_rows(input.embedding), input.descriptor, bwd));
  return ad::concat_cols(forward_out, backward_out);
}

AttentionOutput attention_pool(const Var& seq, const Var& W, const Var& u) {
  const Var scores = ad::matmul(ad::tanh(ad::matmul(seq, ad::transpose(W))), u);
  const Var alpha = ad::softmax(scores);
  return {ad::matmul(alpha, seq), alpha};
}

GateOutput gated_fusion(const Var& v_cnn, const Var& v_lstm, const ModelVars& vars) {
  const Var joint = ad::concat({v_cnn, v_lstm});
  const Var hidden = ad::tanh(ad::add(ad::matmul(vars.gate_W1, joint), vars.gate_b1));
  const Var lambda = ad::sigmoid(ad::add(ad::dot(vars.gate_w2, hidden), vars.gate_b2));
  const Var matched = ad::add(ad::matmul(vars.match_W, v_cnn), vars.match_b);
  const Var complement = ad::add_scalar(ad::scale(lambda, -1.0), 1.0);
  const Var fused = ad::add(ad::mul_scalar(matched, lambda), ad::mul_scalar(v_lstm, complement));
  return {fused, lambda};
}

Var mlp(const Var& x, const ModelVars& vars) {
  Var h = x;
  for (std::size_t l = 0; l < vars.mlp_W.size(); ++l) {
    h = ad::add(ad::matmul(vars.mlp_W[l], h), vars.mlp_b[l]);
    if (l + 1 < vars.mlp_W.size()) h = ad::relu(h);
  }
  return h;
}

ForwardOutput forward(const ModelVars& vars, const FusedInput& input, const ForwardOptions& options) {
  const ModelConfig& cfg = *vars.config;
  if (input.embedding.value().rank() != 2 || input.embedding.value().dim(1) != cfg.embed_dim ||
      input.descriptor.size() != cfg.descriptor_dim) {
    throw ValidationError("forward: input dims " + ad::shape_str(input.embedding.shape()) + " + [" +
                          std::to_string(input.descriptor.size()) + "] do not match the model (" +
                          std::to_string(cfg.embed_dim) + " + " + std::to_string(cfg.descriptor_dim) + ")");
  }
  if (input.length() < cfg.conv_width) {
    throw ValidationError("forward: sequence length " + std::to_string(input.length()) +
                          " is shorter than the convolution width " + std::to_string(cfg.conv_width));
  }
  Tape& tape = *input.embedding.tape();

  const Var conv = ad::relu(ad::fused_conv1d(input.embedding, input.descriptor, vars.conv_W, vars.conv_b));
  const AttentionOutput cnn = attention_pool(conv, vars.attn_cnn_W, vars.attn_cnn_u);

  const Var states = bilstm(input, vars.fwd, vars.bwd);
  const AttentionOutput rnn = attention_pool(states, vars.attn_lstm_W, vars.attn_lstm_u);

  const GateOutput gate = gated_fusion(cnn.pooled, rnn.pooled, vars);

  Var head_input = gate.fused;
  if (options.training && cfg.dropout > 0.0) {
    if (!options.dropout_rng) throw ValidationError("forward: training with dropout needs an RNG");
    Tensor mask(gate.fused.shape());
    const double keep = 1.0 - cfg.dropout;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = uniform01(*options.dropout_rng) < keep ? 1.0 / keep : 0.0;
    }
    head_input = ad::mul(head_input, tape.constant(std::move(mask)));
  }
  const Var logits = mlp(head_input, vars);
  return {logits, ad::softmax(logits), gate.fused, gate.lambda, cnn.weights, rnn.weights};
}

std::vector<double> predict_probs(ModelParams& params, const Tensor& embedding,
                                  const std::vector<double>& features) {
  Tape tape;
  const ModelVars vars = bind(tape, params);
  const FusedInput input{tape.constant(embedding), tape.constant(Tensor::vector(features))};
  return forward(vars, input).probs.value().vec();
}

std::vector<double> windows_to_residues(const std::vector<double>& window_weights,
                                        std::size_t length, std::size_t width) {
  if (length < width || window_weights.size() != length - width + 1) {
    throw ValidationError("windows_to_residues: inconsistent lengths");
  }
  std::vector<double> out(length, 0.0);
  for (std::size_t j = 0; j < window_weights.size(); ++j) {
    for (std::size_t i = 0; i < width; ++i) out[j + i] += window_weights[j] / static_cast<double>(width);
  }
  return out;
}

}  // namespace avp::nn
