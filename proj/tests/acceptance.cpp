// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "avpfusion/augment.hpp"
#include "avpfusion/descriptors.hpp"
#include "avpfusion/errors.hpp"
#include "avpfusion/metrics.hpp"
#include "avpfusion/objective.hpp"
#include "avpfusion/statsviz.hpp"
#include "avpfusion/tables.hpp"
#include "avpfusion/trainer.hpp"
#include "support/blosum_ncbi.hpp"
#include "support/descriptor_oracles.hpp"
#include "support/layer_checks.hpp"
#include "support/loss_oracles.hpp"
#include "support/metric_oracles.hpp"
#include "support/toy.hpp"

using namespace avp;
using ad::Tensor;
using ad::Var;
using Clock = std::chrono::steady_clock;

namespace {

/// Collects failed expectations and a short summary for one criterion.
class Outcome {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failed_ == 0; }
  std::string summary() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + ("failed: " + f);
    if (failed_ > failures_.size()) out += "; +" + std::to_string(failed_ - failures_.size()) + " more";
    return out;
  }

 private:
  std::vector<std::string> notes_, failures_;
  std::size_t failed_ = 0;
};

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void criterion(const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = seconds_since(t0);
  std::cout << (o.passed() ? "PASS " : "FAIL ") << name << " [" << num(secs, 3) << " s] " << o.summary() << std::endl;
  if (!o.passed()) ++failures;
}

Peptide pep(const std::string& s) { return Peptide("t", s, std::max<std::size_t>(s.size(), 1)); }

double sum_of(const descriptors::FeatureVector& fv) { return std::accumulate(fv.values.begin(), fv.values.end(), 0.0); }

template <typename F>
bool throws_validation(F&& f) {
  try {
    f();
  } catch (const ValidationError&) {
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Shared smoke run: 200+200 toy peptides, hash embeddings of width 16.

struct SmokeRun {
  train::TrainResult result;
  double seconds = 0;
};

const LabeledDataset& smoke_data() {
  static const LabeledDataset ds = testing::toy_dataset(200, 200, 7);
  return ds;
}

const embed::EmbeddingProvider& hash_provider() {
  static const embed::EmbeddingProvider p(16, 0);
  return p;
}

SmokeRun run_smoke() {
  const auto [tr, va] = train::split_validation(smoke_data(), testing::desk_config().train);
  const auto t0 = Clock::now();
  SmokeRun r;
  r.result = train::train_stage1(tr, va, testing::desk_config(), hash_provider());
  r.seconds = seconds_since(t0);
  return r;
}

const SmokeRun& smoke() {
  static const SmokeRun r = run_smoke();
  return r;
}

// ---------------------------------------------------------------------------
// Criteria

void descriptor_suite(Outcome& o) {
  using namespace descriptors;
  const auto t0 = Clock::now();
  Rng rng(42);

  // Dimensions.
  const auto p12 = pep(testing::random_sequence(rng, 12));
  for (int k = 0; k <= 5; ++k) o.expect(cksaagp(p12, k).size() == std::size_t(25 * (k + 1)), "cksaagp dim");
  for (int d = 1; d <= 4; ++d) o.expect(distance_pair(p12, d).size() == std::size_t(20 + 400 * d), "distance_pair dim");
  for (int l = 1; l <= 5; ++l) {
    o.expect(paac(p12, l, 0.05).size() == std::size_t(20 + l), "paac dim");
    o.expect(qsorder(p12, l, 0.1).size() == std::size_t(20 + l), "qsorder dim");
  }
  o.expect(aac(p12).size() == 20 && dpc(p12).size() == 400 && dde(p12).size() == 400, "aac/dpc/dde dim");
  o.expect(gtpc(p12).size() == 125 && zscale(p12).size() == 5 && binary(p12, 30).size() == 600, "gtpc/zscale/binary dim");
  DescriptorConfig defaults;
  o.expect(defaults.total_dim() == 3914, "default total dimension 3914");

  // Normalization.
  double worst_sum = 0;
  for (int t = 0; t < 50; ++t) {
    const auto p = pep(testing::random_sequence(rng, 3 + uniform_index(rng, 60)));
    for (double s : {sum_of(aac(p)), sum_of(dpc(p)), sum_of(gtpc(p)), sum_of(paac(p, 2, 0.05)), sum_of(qsorder(p, 2, 0.1))}) {
      worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
    }
    for (int g = 0; g <= 2 && p.size() >= 4; ++g) {
      const auto c = cksaagp(p, 3);
      double s = 0;
      for (int i = 0; i < 25; ++i) s += c.values[g * 25 + i];
      worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
    }
  }
  o.expect(worst_sum < 1e-9, "sum-to-1 within 1e-9");
  o.note("max |sum-1| " + num(worst_sum, 2));

  // Determinism.
  bool same = true;
  for (int t = 0; t < 10; ++t) {
    const auto p = pep(testing::random_sequence(rng, 10 + uniform_index(rng, 40)));
    const auto a = encode_all(p, defaults), b = encode_all(p, defaults);
    same = same && a.values.size() == b.values.size() &&
           std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0;
  }
  o.expect(same, "bitwise determinism");

  // Preconditions.
  o.expect(throws_validation([] { dpc(pep("A")); }), "dpc length 1");
  o.expect(throws_validation([] { dde(pep("A")); }), "dde length 1");
  o.expect(throws_validation([] { gtpc(pep("AA")); }), "gtpc length 2");
  o.expect(throws_validation([] { cksaagp(pep("GG"), -1); }), "cksaagp negative gap");
  o.expect(throws_validation([] { paac(pep("AA"), 2, 0.05); }), "paac length <= lambda");
  o.expect(throws_validation([] { paac(pep("AAA"), 2, 0.0); }), "paac weight 0");
  o.expect(throws_validation([] { qsorder(pep("AA"), 2, 0.1); }), "qsorder length <= nlag");
  o.expect(throws_validation([] { distance_pair(pep("AC"), 0); }), "distance_pair distance 0");
  o.expect(throws_validation([] { binary(pep("ACDE"), 3); }), "binary overlong");

  // PAAC / QSOrder against the brute-force oracles.
  double worst_oracle = 0;
  for (int t = 0; t < 50; ++t) {
    const auto s = testing::random_sequence(rng, 5 + uniform_index(rng, 40));
    const int lam = 1 + static_cast<int>(uniform_index(rng, 4));
    const double w = 0.01 + uniform01(rng);
    const auto p1 = paac(pep(s), lam, w);
    const auto o1 = testing::paac_oracle(s, lam, w);
    const auto p2 = qsorder(pep(s), lam, w);
    const auto o2 = testing::qsorder_oracle(s, lam, w);
    o.expect(p1.size() == o1.size() && p2.size() == o2.size(), "oracle dimension");
    for (std::size_t i = 0; i < o1.size(); ++i) worst_oracle = std::max(worst_oracle, std::fabs(p1.values[i] - o1[i]));
    for (std::size_t i = 0; i < o2.size(); ++i) worst_oracle = std::max(worst_oracle, std::fabs(p2.values[i] - o2[i]));
  }
  o.expect(worst_oracle < 1e-9, "PAAC/QSOrder oracle within 1e-9");
  o.note("max oracle error " + num(worst_oracle, 2));

  const double secs = seconds_since(t0);
  o.expect(secs < 10.0, "runtime < 10 s");
}

void blosum_second_best(Outcome& o) {
  const auto t0 = Clock::now();
  int matches = 0;
  for (char r : kAlphabet) {
    const char got = augment::second_best(r);
    o.expect(got == testing::scan_second_best(r), std::string("second_best(") + r + ")");
    o.expect(got != r, std::string("fixed point at ") + r);
    matches += got == testing::scan_second_best(r) && got != r;
  }
  bool table_ok = true;
  for (std::size_t i = 0; i < kNumResidues; ++i) {
    for (std::size_t j = 0; j < kNumResidues; ++j) {
      table_ok = table_ok && tables::blosum62()[i][j] == testing::ncbi_blosum62(kAlphabet[i], kAlphabet[j]);
    }
  }
  o.expect(table_ok, "bundled BLOSUM62 equals the NCBI matrix");
  o.note(std::to_string(matches) + "/20 residues match the scan");
  o.expect(seconds_since(t0) < 1.0, "runtime < 1 s");
}

void gradient_checks(Outcome& o) {
  const auto t0 = Clock::now();
  const std::vector<std::pair<std::string, std::function<double()>>> checks = {
      {"conv1d", [] { return testing::check_conv(20, 101); }},
      {"lstm_step", [] { return testing::check_lstm_step(20, 102); }},
      {"bilstm", [] { return testing::check_bilstm(20, 103); }},
      {"attention_pool", [] { return testing::check_attention(20, 104); }},
      {"gated_fusion", [] { return testing::check_gate(20, 105); }},
      {"mlp", [] { return testing::check_mlp(20, 106); }},
      {"contrastive", [] { return testing::check_contrastive(20, 107); }},
      {"focal", [] { return testing::check_focal(20, 108); }},
      {"consistency", [] { return testing::check_consistency(20, 109); }},
      {"total", [] { return testing::check_total(20, 110); }},
  };
  double worst = 0;
  for (const auto& [name, run] : checks) {
    const double err = run();
    worst = std::max(worst, err);
    o.expect(err < 1e-4, name + " max rel error " + num(err, 3));
  }
  o.note("10 checks x 20 configs, worst rel error " + num(worst, 3));
  o.expect(seconds_since(t0) < 60.0, "runtime < 60 s");
}

void loss_oracles(Outcome& o) {
  using namespace objective;
  Rng rng(201);
  double worst_con = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t A = 1 + uniform_index(rng, 8), d = 2 + uniform_index(rng, 6);
    const double tau = 0.05 + uniform01(rng);
    ad::Tape t;
    std::vector<Var> anchors, positives;
    std::vector<std::vector<Var>> negatives;
    std::vector<testing::Vec> ra, rp;
    std::vector<std::vector<testing::Vec>> rn;
    for (std::size_t i = 0; i < A; ++i) {
      const auto x = testing::random_tensor(rng, {d}), y = testing::random_tensor(rng, {d});
      anchors.push_back(t.constant(x));
      positives.push_back(t.constant(y));
      ra.push_back(x.vec());
      rp.push_back(y.vec());
      negatives.emplace_back();
      rn.emplace_back();
      const std::size_t K = uniform_index(rng, 5);
      for (std::size_t k = 0; k < K; ++k) {
        const auto n = testing::random_tensor(rng, {d});
        negatives.back().push_back(t.constant(n));
        rn.back().push_back(n.vec());
      }
    }
    const double got = contrastive_loss(anchors, positives, negatives, t.constant(Tensor::scalar(std::log(tau)))).item();
    worst_con = std::max(worst_con, std::fabs(got - testing::naive_contrastive(ra, rp, rn, tau)));
  }
  o.expect(worst_con < 1e-9, "contrastive vs enumeration within 1e-9");

  double worst_ce = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = 1 + uniform_index(rng, 10), C = 2 + uniform_index(rng, 3);
    ad::Tape t;
    std::vector<Var> probs;
    std::vector<testing::Vec> raw;
    std::vector<int> labels;
    for (std::size_t i = 0; i < N; ++i) {
      const auto p = ad::softmax(t.constant(testing::random_tensor(rng, {C}, 3.0)));
      probs.push_back(p);
      raw.push_back(p.value().vec());
      labels.push_back(static_cast<int>(uniform_index(rng, C)));
    }
    const double got = focal_loss(probs, labels, 0.0, std::vector<double>(C, 1.0)).item();
    worst_ce = std::max(worst_ce, std::fabs(got - testing::naive_cross_entropy(raw, labels)));
  }
  o.expect(worst_ce < 1e-10, "focal(gamma=0, alpha=1) vs cross-entropy within 1e-10");

  bool symmetric = true, zero_at_equality = true;
  for (int trial = 0; trial < 100; ++trial) {
    ad::Tape t;
    const std::size_t C = 2 + uniform_index(rng, 4);
    const auto a = ad::softmax(t.constant(testing::random_tensor(rng, {C}, 3.0)));
    const auto b = ad::softmax(t.constant(testing::random_tensor(rng, {C}, 3.0)));
    symmetric = symmetric && consistency_loss(a, b).item() == consistency_loss(b, a).item();
    zero_at_equality = zero_at_equality && consistency_loss(a, a).item() == 0.0;
  }
  o.expect(symmetric, "consistency symmetric");
  o.expect(zero_at_equality, "consistency zero at equality");

  ad::Tape t;
  auto v = [&](std::vector<double> x) { return t.constant(Tensor::vector(std::move(x))); };
  const double con = contrastive_loss({v({1, 0})}, {v({2, 0})}, {{v({-1, 0})}}, t.constant(Tensor::scalar(0.0))).item();
  const double foc = focal_loss({v({0.5, 0.5})}, {1}, 2.0, {1.0, 1.0}).item();
  const double cons = consistency_loss(v({0.9, 0.1}), v({0.1, 0.9})).item();
  o.expect(std::fabs(con - 0.126928) < 1e-5, "contrastive hand value 0.126928, got " + num(con, 8));
  o.expect(std::fabs(foc - 0.173287) < 1e-5, "focal hand value 0.173287, got " + num(foc, 8));
  o.expect(std::fabs(cons - 1.75778) < 1e-5, "consistency hand value 1.75778, got " + num(cons, 8));
  o.note("contrastive err " + num(worst_con, 2) + ", focal/CE err " + num(worst_ce, 2) + ", hand values " + num(con, 7) +
         " / " + num(foc, 7) + " / " + num(cons, 7));
}

void ohem_behavior(Outcome& o) {
  using objective::OhemState;
  OhemState fifo(2, 3, 0.1);
  fifo.update({{1.0}, {-1.0}, {2.0}, {-2.0}, {3.0}}, {1, 0, 1, 0, 1});
  for (int i = 0; i < 4; ++i) fifo.push(0, {double(10 + i)});
  o.expect(fifo.q_pos() == std::deque<std::vector<double>>{{2.0}, {3.0}}, "Q+ keeps the newest two");
  o.expect(fifo.q_neg() == std::deque<std::vector<double>>{{11.0}, {12.0}, {13.0}}, "Q- keeps the newest three");

  OhemState s(4, 8, 0.05);
  s.push(1, {1, 0, 0, 0});
  s.push(0, {2, 0, 0, 0});
  s.push(0, {0, 1, 0, 0});
  s.push(0, {0, 0, 1, 0});
  s.push(0, {0, 0, 0, 1});
  s.push(0, {0, -1, 0, 0});
  Rng rng(301);
  std::vector<int> counts(5, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[s.mine_hard_negatives(1, rng).at(0)];
  const auto top = std::max_element(counts.begin(), counts.end()) - counts.begin();
  const double aligned = double(counts[0]) / draws;
  o.expect(top == 0, "hardest negative is the most frequent draw");
  o.expect(aligned > 0.99, "aligned-negative frequency > 0.99");

  const auto& h = smoke().result.history;
  const auto& last = h.back();
  o.expect(last.pos_sim > 0.8, "final positive-pair similarity > 0.8");
  o.expect(last.neg_sim < 0.8 && last.neg_sim < last.pos_sim, "final hard-negative similarity below it");
  o.expect(last.pos_sim > h.front().pos_sim, "positive-pair similarity rises");
  o.note("aligned freq " + num(aligned) + "; pos_sim " + num(h.front().pos_sim, 3) + " -> " + num(last.pos_sim, 3) +
         ", neg_sim " + num(h.front().neg_sim, 3) + " -> " + num(last.neg_sim, 3));
}

void metric_checks(Outcome& o) {
  using namespace metrics;
  ConfusionCounts c;
  c.tp = 90;
  c.fn = 10;
  c.tn = 80;
  c.fp = 20;
  const auto m = classification_metrics(c);
  o.expect(std::fabs(m.accuracy - 0.85) < 1e-12, "ACC 0.85");
  o.expect(std::fabs(m.sensitivity - 0.9) < 1e-12, "SN 0.9");
  o.expect(std::fabs(m.specificity - 0.8) < 1e-12, "SP 0.8");
  o.expect(std::fabs(m.mcc - 0.70353) < 1e-5, "MCC 0.70353");

  Rng rng(401);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 80);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(uniform01(rng) * 12) / 12;
      y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(uniform_index(rng, 2));
    }
    exact += auroc(s, y) == testing::pair_count_auroc(s, y);
  }
  o.expect(exact == 100, "AUROC equals pair counting on all 100 sets");
  const double ap = auprc(std::vector<double>{0.9, 0.3, 0.7}, std::vector<int>{1, 1, 0});
  o.expect(std::fabs(ap - 5.0 / 6.0) < 1e-12, "AUPRC sweep example 5/6");
  o.note("MCC " + num(m.mcc, 7) + ", AUROC exact " + std::to_string(exact) + "/100, AUPRC " + num(ap, 7));
}

void smoke_task(Outcome& o) {
  const auto& a = smoke();
  double best_acc = 0;
  std::size_t first = 0;
  for (const auto& e : a.result.history) {
    if (e.epoch > 30) break;
    best_acc = std::max(best_acc, e.val_acc);
    if (!first && e.val_acc >= 0.95) first = e.epoch;
  }
  o.expect(best_acc >= 0.95, "validation ACC >= 0.95 within 30 epochs");
  o.expect(a.seconds < 60.0, "runtime < 60 s");

  const SmokeRun b = run_smoke();
  bool identical = a.result.history.size() == b.result.history.size();
  for (std::size_t i = 0; identical && i < a.result.history.size(); ++i) {
    const auto& x = a.result.history[i];
    const auto& y = b.result.history[i];
    identical = x.loss_total == y.loss_total && x.loss_con == y.loss_con && x.loss_cls == y.loss_cls &&
                x.loss_cons == y.loss_cons && x.val_acc == y.val_acc;
  }
  o.expect(identical, "same-seed runs give identical loss curves");
  o.note("best val ACC " + num(best_acc) + (first ? " (>= 0.95 first at epoch " + std::to_string(first) + ")" : "") +
         ", " + num(a.seconds, 3) + " s per run, curves identical: " + (identical ? "yes" : "no"));
}

std::size_t epochs_to(const std::vector<train::EpochLog>& h, double target) {
  for (const auto& e : h) {
    if (e.val_acc >= target) return e.epoch;
  }
  return std::numeric_limits<std::size_t>::max();
}

void transfer_effect(Outcome& o) {
  const Checkpoint& base = smoke().result.best;
  std::vector<double> ratios;
  int positive_gaps = 0;
  std::string detail;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto task = testing::toy_dataset(40, 40, 1000 + s, 10, 30, 'K', 'D', 0.3, "s");
    const auto val = testing::toy_dataset(100, 100, 2000 + s, 10, 30, 'K', 'D', 0.3, "t");
    RunConfig cfg = testing::desk_config();
    cfg.train = TrainConfig::finetune_defaults();
    cfg.train.lr = 2e-3;
    cfg.train.warmup_epochs = 1;
    cfg.train.max_epochs = 30;
    cfg.train.patience = 100;
    cfg.train.seed = s;
    cfg.finalize();

    RunConfig scratch_cfg = cfg;
    scratch_cfg.train.stage = Stage::kPretrain;
    const auto scratch = train::train_stage1(task, val, scratch_cfg, hash_provider());
    double target = 0;
    for (const auto& e : scratch.history) target = std::max(target, e.val_acc);
    const std::size_t scratch_epochs = epochs_to(scratch.history, target);

    train::TrainHooks hooks;
    hooks.on_epoch = [&](const train::EpochLog& e) { return !(e.epoch >= 3 && e.val_acc >= target); };
    const auto transfer = train::finetune_stage2(base, task, val, cfg, hash_provider(), hooks);
    const std::size_t transfer_epochs = epochs_to(transfer.history, target);

    const double ratio = transfer_epochs == std::numeric_limits<std::size_t>::max()
                             ? std::numeric_limits<double>::infinity()
                             : double(transfer_epochs) / double(scratch_epochs);
    ratios.push_back(ratio);
    const double gap = transfer.history.at(2).val_mcc - scratch.history.at(2).val_mcc;
    positive_gaps += gap > 0;
    detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(s) + ": " +
              std::to_string(transfer_epochs) + "/" + std::to_string(scratch_epochs) + " epochs to " + num(target, 3) +
              ", MCC@3 gap " + num(gap, 3);
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[2];
  o.expect(median <= 0.25, "median epochs-to-target ratio <= 0.25, got " + num(median, 3));
  o.expect(positive_gaps >= 4, "MCC gap > 0 in >= 4/5 seeds, got " + std::to_string(positive_gaps));
  o.note("median ratio " + num(median, 3) + ", positive MCC gaps " + std::to_string(positive_gaps) + "/5 (" + detail + ")");
}

void tta_checks(Outcome& o) {
  const train::Predictor pred(smoke().result.best, hash_provider());
  Rng seqs(501);
  std::size_t n = 0;
  double worst_mean = 0;
  for (int t = 0; t < 10; ++t) {
    const Peptide p("q" + std::to_string(t), testing::random_sequence(seqs, 12 + uniform_index(seqs, 18)));
    Rng r0(t);
    o.expect(pred.predict_tta(p, 0, r0) == pred.predict(p).probs, "n_aug=0 equals plain prediction");

    Rng r8(100 + t), replay(100 + t);
    const auto mean = pred.predict_tta(p, 8, r8);
    const auto variants = augment::tta_batch(p, 8, replay);
    o.expect(variants.size() == 9, "8 variants plus the original");
    std::vector<double> lo(2, 1.0), hi(2, 0.0), avg(2, 0.0);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto probs = pred.predict_sample(pred.encoder().encode(variants[v], kUnlabeled, v > 0));
      for (int c = 0; c < 2; ++c) {
        lo[c] = std::min(lo[c], probs[c]);
        hi[c] = std::max(hi[c], probs[c]);
        avg[c] += probs[c] / double(variants.size());
      }
    }
    for (int c = 0; c < 2; ++c) {
      worst_mean = std::max(worst_mean, std::fabs(mean[c] - avg[c]));
      o.expect(mean[c] >= lo[c] - 1e-15 && mean[c] <= hi[c] + 1e-15, "inside the hull of member predictions");
    }
    ++n;
  }
  o.expect(worst_mean < 1e-12, "equal-weight average of member predictions");
  o.note(std::to_string(n) + " peptides, max deviation from equal-weight mean " + num(worst_mean, 2));
}

void stats_checks(Outcome& o) {
  Rng rng(601);
  auto with_w = [&](std::size_t length, std::size_t w) {
    std::string s;
    for (std::size_t i = 0; i < length; ++i) {
      if (i < w) {
        s += 'W';
      } else {
        char c;
        do {
          c = kAlphabet[uniform_index(rng, kNumResidues)];
        } while (c == 'W');
        s += c;
      }
    }
    std::shuffle(s.begin(), s.end(), rng);
    return s;
  };
  LabeledDataset a, b;
  for (int i = 0; i < 40; ++i) {
    a.add({Peptide("a" + std::to_string(i), with_w(20, 2 + (i % 3 == 0))), 1, ""});
    b.add({Peptide("b" + std::to_string(i), with_w(20, 1 + (i % 3 == 0))), 0, ""});
  }
  const auto report = stats::composition_compare(a, b);
  const auto& w = report.rows[kAlphabet.find('W')];
  o.expect(w.p < 0.001 && w.stars == "***", "3-sigma W shift flagged ***");

  const auto self = stats::composition_compare(a, a);
  bool identity = true;
  for (const auto& r : self.rows) identity = identity && r.log2fc == 0.0 && r.p == 1.0 && r.stars == "ns";
  o.expect(identity, "identity comparison is all zero fold change, p = 1");

  int hits = 0, tests = 0;
  for (int rep = 0; rep < 25; ++rep) {
    LabeledDataset x, y;
    for (int i = 0; i < 30; ++i) {
      x.add({Peptide("x" + std::to_string(i), testing::random_sequence(rng, 20 + uniform_index(rng, 11))), 1, ""});
      y.add({Peptide("y" + std::to_string(i), testing::random_sequence(rng, 20 + uniform_index(rng, 11))), 1, ""});
    }
    for (const auto& r : stats::composition_compare(x, y).rows) {
      hits += r.p < 0.05;
      ++tests;
    }
  }
  const double rate = double(hits) / tests;
  o.expect(rate > 0.01 && rate < 0.10, "null false-positive rate near 0.05");
  o.note("W shift t " + num(w.t, 3) + " p " + num(w.p, 3) + "; null rate " + num(rate, 3) + " over " +
         std::to_string(tests) + " tests");
}

}  // namespace

int main() {
  criterion("descriptor-suite", descriptor_suite);
  criterion("blosum62-second-best", blosum_second_best);
  criterion("gradient-checks", gradient_checks);
  criterion("loss-oracles", loss_oracles);
  criterion("ohem-behavior", ohem_behavior);
  criterion("metrics", metric_checks);
  criterion("end-to-end-smoke", smoke_task);
  criterion("transfer-effect", transfer_effect);
  criterion("tta", tta_checks);
  criterion("stats", stats_checks);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
