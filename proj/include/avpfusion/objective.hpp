#pragma once

#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "avpfusion/autodiff.hpp"
#include "avpfusion/rng.hpp"

namespace avp::objective {

using ad::Tape;
using ad::Var;

inline constexpr double kProbEpsilon = 1e-12;

struct LossConfig {
  double lambda_con = 0.5;   // λ1
  double lambda_cons = 0.2;  // λ2
  double gamma = 2.0;
  std::size_t k_negatives = 8;
  std::size_t q_pos_capacity = 512;
  std::size_t q_neg_capacity = 512;
  double tau_init = 0.1;
  double tau_sampling = 0.1;  // τ_s, fixed
  /// Per-class focal weights; empty means inverse class frequency of the
  /// training set, normalized to mean 1.
  std::vector<double> alpha;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// α_c ∝ 1/n_c, scaled to mean 1. Every count must be > 0.
std::vector<double> inverse_frequency_weights(const std::vector<std::size_t>& class_counts);

/// x·y/(|x||y|); throws ValidationError on a zero-norm vector.
double cosine_sim(std::span<const double> x, std::span<const double> y);

/// Bounded FIFO queues of detached embeddings.
class OhemState {
 public:
  OhemState() = default;
  OhemState(std::size_t pos_capacity, std::size_t neg_capacity, double tau_sampling);

  /// Appends label-1 rows to Q+ and label-0 rows to Q-, evicting oldest first.
  void update(const std::vector<std::vector<double>>& embeddings, const std::vector<int>& labels);
  void push(int label, std::vector<double> embedding);

  const std::deque<std::vector<double>>& q_pos() const { return q_pos_; }
  const std::deque<std::vector<double>>& q_neg() const { return q_neg_; }
  std::size_t pos_capacity() const { return pos_capacity_; }
  std::size_t neg_capacity() const { return neg_capacity_; }
  double tau_sampling() const { return tau_sampling_; }
  void clear();

  /// Mean of Q+, or nullopt when Q+ is empty or the mean has zero norm.
  std::optional<std::vector<double>> positive_prototype() const;
  /// Sampling weights ∝ exp(cos(n_i, prototype)/τ_s) over Q-, normalized.
  std::vector<double> sampling_weights(std::span<const double> prototype) const;
  /// K indices into Q- drawn without replacement by weighted sampling
  /// (K clamped to |Q-|). Empty when Q- is empty or no prototype exists.
  std::vector<std::size_t> mine_hard_negatives(std::size_t k, Rng& rng) const;

  bool operator==(const OhemState&) const = default;

 private:
  std::size_t pos_capacity_ = 512;
  std::size_t neg_capacity_ = 512;
  double tau_sampling_ = 0.1;
  std::deque<std::vector<double>> q_pos_;
  std::deque<std::vector<double>> q_neg_;
};

/// -(1/N_a) Σ_a log[e^{s_ap/τ} / (e^{s_ap/τ} + Σ_k e^{s_an_k/τ})] with
/// τ = exp(log_tau). negatives[a] may be empty (term is then 0).
Var contrastive_loss(const std::vector<Var>& anchors, const std::vector<Var>& positives,
                     const std::vector<std::vector<Var>>& negatives, const Var& log_tau);

/// -(1/N) Σ α_y (1-p_y)^γ log p_y with p clipped to [ε, 1-ε].
Var focal_loss(const std::vector<Var>& probs, const std::vector<int>& labels, double gamma,
               const std::vector<double>& alpha);

/// ½(KL(P‖P') + KL(P'‖P)) after clipping to [ε, 1-ε] and renormalizing.
Var consistency_loss(const Var& p, const Var& q);
/// Mean of consistency_loss over pairs.
Var consistency_loss(const std::vector<Var>& p, const std::vector<Var>& q);

/// λ1·l_con + l_cls + λ2·l_cons; throws NumericError on a non-finite term.
Var total_loss(const Var& l_con, const Var& l_cls, const Var& l_cons, double lambda_con,
               double lambda_cons);

}  // namespace avp::objective
