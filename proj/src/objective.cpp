#include "avpfusion/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "avpfusion/errors.hpp"

namespace avp::objective {

void LossConfig::validate() const {
  if (!(lambda_con >= 0.0) || !(lambda_cons >= 0.0)) {
    throw ValidationError("loss config: lambda weights must be >= 0");
  }
  if (!(gamma >= 0.0)) throw ValidationError("loss config: gamma must be >= 0");
  if (!(tau_init > 0.0) || !(tau_sampling > 0.0)) {
    throw ValidationError("loss config: temperatures must be > 0");
  }
  if (q_pos_capacity < 1 || q_neg_capacity < 1) {
    throw ValidationError("loss config: queue capacities must be >= 1");
  }
  for (double a : alpha) {
    if (!(a > 0.0)) throw ValidationError("loss config: alpha components must be > 0");
  }
}

std::vector<double> inverse_frequency_weights(const std::vector<std::size_t>& class_counts) {
  if (class_counts.empty()) throw ValidationError("class weights: no classes");
  std::vector<double> w;
  for (std::size_t n : class_counts) {
    if (n == 0) throw ValidationError("class weights: a class has no samples");
    w.push_back(1.0 / static_cast<double>(n));
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  for (double& x : w) x /= mean;
  return w;
}

double cosine_sim(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("cosine_sim: length mismatch");
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw ValidationError("cosine_sim: zero-norm vector");
  return std::clamp(xy / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
}

OhemState::OhemState(std::size_t pos_capacity, std::size_t neg_capacity, double tau_sampling)
    : pos_capacity_(pos_capacity), neg_capacity_(neg_capacity), tau_sampling_(tau_sampling) {
  if (pos_capacity < 1 || neg_capacity < 1) throw ValidationError("OHEM: capacities must be >= 1");
  if (!(tau_sampling > 0.0)) throw ValidationError("OHEM: sampling temperature must be > 0");
}

void OhemState::push(int label, std::vector<double> embedding) {
  auto& q = label == 1 ? q_pos_ : q_neg_;
  const std::size_t cap = label == 1 ? pos_capacity_ : neg_capacity_;
  if (label != 0 && label != 1) throw ValidationError("OHEM: label must be 0 or 1");
  q.push_back(std::move(embedding));
  while (q.size() > cap) q.pop_front();
}

void OhemState::update(const std::vector<std::vector<double>>& embeddings,
                       const std::vector<int>& labels) {
  if (embeddings.size() != labels.size()) throw ValidationError("OHEM: embeddings/labels size mismatch");
  for (std::size_t i = 0; i < embeddings.size(); ++i) push(labels[i], embeddings[i]);
}

void OhemState::clear() {
  q_pos_.clear();
  q_neg_.clear();
}

std::optional<std::vector<double>> OhemState::positive_prototype() const {
  if (q_pos_.empty()) return std::nullopt;
  std::vector<double> mean(q_pos_.front().size(), 0.0);
  for (const auto& v : q_pos_) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  double norm2 = 0.0;
  for (double& m : mean) {
    m /= static_cast<double>(q_pos_.size());
    norm2 += m * m;
  }
  if (norm2 == 0.0) return std::nullopt;
  return mean;
}

std::vector<double> OhemState::sampling_weights(std::span<const double> prototype) const {
  std::vector<double> w;
  w.reserve(q_neg_.size());
  for (const auto& n : q_neg_) w.push_back(cosine_sim(n, prototype) / tau_sampling_);
  if (w.empty()) return w;
  const double top = *std::max_element(w.begin(), w.end());
  double total = 0.0;
  for (double& x : w) total += (x = std::exp(x - top));
  for (double& x : w) x /= total;
  return w;
}

std::vector<std::size_t> OhemState::mine_hard_negatives(std::size_t k, Rng& rng) const {
  const auto proto = positive_prototype();
  if (!proto || q_neg_.empty() || k == 0) return {};
  std::vector<double> w = sampling_weights(*proto);
  std::vector<std::size_t> remaining(w.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  k = std::min(k, w.size());
  std::vector<std::size_t> picked;
  picked.reserve(k);
  while (picked.size() < k) {
    double total = 0.0;
    for (std::size_t idx : remaining) total += w[idx];
    const double target = uniform01(rng) * total;
    std::size_t chosen = remaining.size() - 1;  // guards against rounding at the top end
    double acc = 0.0;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      acc += w[remaining[j]];
      if (target < acc) {
        chosen = j;
        break;
      }
    }
    picked.push_back(remaining[chosen]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
  }
  return picked;
}

Var contrastive_loss(const std::vector<Var>& anchors, const std::vector<Var>& positives,
                     const std::vector<std::vector<Var>>& negatives, const Var& log_tau) {
  if (anchors.empty()) throw ValidationError("contrastive_loss: no anchors");
  if (positives.size() != anchors.size() || negatives.size() != anchors.size()) {
    throw ValidationError("contrastive_loss: anchors/positives/negatives size mismatch");
  }
  const Var inv_tau = ad::exp(ad::scale(log_tau, -1.0));
  std::vector<Var> terms;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (negatives[a].empty()) continue;  // ratio is exactly 1
    std::vector<Var> sims = {ad::cosine_similarity(anchors[a], positives[a])};
    for (const Var& n : negatives[a]) sims.push_back(ad::cosine_similarity(anchors[a], n));
    const Var z = ad::mul_scalar(ad::concat(sims), inv_tau);
    terms.push_back(ad::sub(ad::logsumexp(z), ad::element(z, 0)));
  }
  Tape& tape = *log_tau.tape();
  if (terms.empty()) return tape.constant(ad::Tensor::scalar(0.0));
  return ad::scale(ad::sum(ad::concat(terms)), 1.0 / static_cast<double>(anchors.size()));
}

Var focal_loss(const std::vector<Var>& probs, const std::vector<int>& labels, double gamma,
               const std::vector<double>& alpha) {
  if (probs.empty()) throw ValidationError("focal_loss: empty batch");
  if (labels.size() != probs.size()) throw ValidationError("focal_loss: probs/labels size mismatch");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::size_t n_classes = probs[i].size();
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw ValidationError("focal_loss: label " + std::to_string(labels[i]) + " out of range");
    }
    if (alpha.size() != n_classes) throw ValidationError("focal_loss: alpha size must equal class count");
    const Var p = ad::clamp(ad::element(probs[i], static_cast<std::size_t>(labels[i])), kProbEpsilon,
                            1.0 - kProbEpsilon);
    Var term = ad::scale(ad::log(p), -alpha[static_cast<std::size_t>(labels[i])]);
    if (gamma != 0.0) term = ad::mul(term, ad::pow_scalar(ad::add_scalar(ad::scale(p, -1.0), 1.0), gamma));
    terms.push_back(term);
  }
  return ad::scale(ad::sum(ad::concat(terms)), 1.0 / static_cast<double>(terms.size()));
}

namespace {

Var clip_renormalize(const Var& p) {
  const Var c = ad::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  return ad::mul_scalar(c, ad::pow_scalar(ad::sum(c), -1.0));
}

}  // namespace

Var consistency_loss(const Var& p, const Var& q) {
  if (p.shape() != q.shape() || p.value().rank() != 1) {
    throw ValidationError("consistency_loss: distributions must be vectors of equal length");
  }
  const Var pc = clip_renormalize(p);
  const Var qc = clip_renormalize(q);
  // KL(P‖Q) + KL(Q‖P) = Σ (P - Q)(log P - log Q)
  return ad::scale(ad::sum(ad::mul(ad::sub(pc, qc), ad::sub(ad::log(pc), ad::log(qc)))), 0.5);
}

Var consistency_loss(const std::vector<Var>& p, const std::vector<Var>& q) {
  if (p.empty() || p.size() != q.size()) throw ValidationError("consistency_loss: batch size mismatch");
  std::vector<Var> terms;
  for (std::size_t i = 0; i < p.size(); ++i) terms.push_back(consistency_loss(p[i], q[i]));
  return ad::scale(ad::sum(ad::concat(terms)), 1.0 / static_cast<double>(terms.size()));
}

Var total_loss(const Var& l_con, const Var& l_cls, const Var& l_cons, double lambda_con,
               double lambda_cons) {
  for (const Var* v : {&l_con, &l_cls, &l_cons}) {
    if (!std::isfinite(v->item())) throw ad::NumericError("total_loss: non-finite loss term");
  }
  return ad::add(ad::add(ad::scale(l_con, lambda_con), l_cls), ad::scale(l_cons, lambda_cons));
}

}  // namespace avp::objective
