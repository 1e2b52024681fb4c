#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "avpfusion/augment.hpp"
#include "avpfusion/checkpoint.hpp"
#include "avpfusion/config.hpp"
#include "avpfusion/descriptors.hpp"
#include "avpfusion/embedstore.hpp"
#include "avpfusion/errors.hpp"
#include "avpfusion/metrics.hpp"
#include "avpfusion/seqcore.hpp"
#include "avpfusion/statsviz.hpp"
#include "avpfusion/tables.hpp"
#include "avpfusion/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace avp;

namespace {

constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Shared helpers

std::string file_digest(const fs::path& path) { return embed::to_hex(embed::sequence_digest(read_text_file(path))); }

std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// Writes `text` to `out`, or stdout when `out` is empty.
void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

/// Run record written next to the primary output as `<out>.manifest.json`.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void config(const std::string& text) { config_digest_ = embed::to_hex(embed::sequence_digest(text)); }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const std::string& path) {
    if (!path.empty()) inputs_[path] = file_digest(path);
  }
  void artifact(const std::string& path) { artifacts_.push_back(path); }

  void write(const std::string& out) const {
    if (out.empty()) return;
    json j;
    j["command"] = command_;
    j["config_digest"] = config_digest_;
    j["seed"] = seed_ ? json(*seed_) : json(nullptr);
    j["inputs"] = inputs_;
    j["artifacts"] = artifacts_;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j["version"] = kVersion;
    write_text_file(out + ".manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string config_digest_;
  std::optional<std::uint64_t> seed_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> artifacts_;
  std::chrono::steady_clock::time_point start_;
};

/// Calls fn(i) for i in [0, n) on `threads` workers; results must be written
/// to per-index slots so the output order does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Labels from a FASTA file with `label=` headers or a two-column TSV.
std::map<std::string, int> read_labels(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::map<std::string, int> out;
  if (!text.empty() && text.front() == '>') {
    const LabeledDataset ds = parse_fasta(text);
    for (const auto& r : ds.records()) out[r.peptide.id()] = r.label;
    return out;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": expected id<TAB>label");
    const std::string id = line.substr(0, tab), value = line.substr(tab + 1);
    if (value == "0" || value == "1") {
      out[id] = value == "1";
    } else if (line_no != 1) {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration from config file and flags

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  bool print_config = false;

  void add_to(CLI::App* cmd, const RunConfig& defaults) {
    const TrainConfig& t = defaults.train;
    cmd->add_option("--config", config_path, "key = value config file (applied before flags)");
    cmd->add_option("--set", sets, "Override one config key, e.g. --set train.patience=5 (repeatable)");
    cmd->add_option("--seed", seed, "Training seed (train.seed)")->default_str(std::to_string(t.seed));
    cmd->add_option("--epochs", epochs, "Maximum epochs (train.max_epochs)")->default_str(std::to_string(t.max_epochs));
    cmd->add_option("--lr", lr, "Peak learning rate (train.lr)")->default_str(fmt(t.lr, "%g"));
    cmd->add_option("--batch-size", batch_size, "Batch size (train.batch_size)")
        ->default_str(std::to_string(t.batch_size));
    cmd->add_flag("--print-config", print_config, "Print the effective configuration and exit");
  }

  /// defaults < config file < --set < named flags.
  RunConfig resolve(RunConfig cfg) const {
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.train.seed = *seed;
    if (epochs) cfg.train.max_epochs = *epochs;
    if (lr) cfg.train.lr = *lr;
    if (batch_size) cfg.train.batch_size = *batch_size;
    cfg.finalize();
    return cfg;
  }
};

struct EmbeddingSource {
  std::unique_ptr<embed::EmbeddingStore> store;  // heap-held so the provider's pointer survives moves
  std::unique_ptr<embed::EmbeddingProvider> provider;
};

/// Stored embeddings when a path is given, hash embeddings otherwise.
EmbeddingSource open_embeddings(const std::string& path, std::size_t hash_dim, std::uint64_t seed) {
  EmbeddingSource src;
  if (path.empty()) {
    src.provider = std::make_unique<embed::EmbeddingProvider>(hash_dim, seed);
  } else {
    src.store = std::make_unique<embed::EmbeddingStore>(embed::EmbeddingStore::open(path));
    src.provider = std::make_unique<embed::EmbeddingProvider>(src.store.get(), seed);
  }
  return src;
}

LabeledDataset read_labeled(const std::string& path, const std::string& labels) {
  LabeledDataset ds = read_fasta(path);
  if (!labels.empty()) apply_label_manifest(ds, read_text_file(labels));
  return ds;
}

void write_epoch_log(const std::string& path, const std::vector<train::EpochLog>& history) {
  std::string text = train::epoch_log_header() + "\n";
  for (const auto& e : history) text += train::epoch_log_row(e) + "\n";
  write_text_file(path, text);
}

train::TrainHooks progress_hooks() {
  train::TrainHooks hooks;
  hooks.on_epoch = [](const train::EpochLog& e) {
    std::cerr << "epoch " << e.epoch << " loss " << fmt(e.loss_total, "%.4f") << " val_acc " << fmt(e.val_acc, "%.4f")
              << " val_mcc " << fmt(e.val_mcc, "%.4f") << "\n";
    return true;
  };
  return hooks;
}

// ---------------------------------------------------------------------------
// Subcommands

struct EncodeArgs {
  std::string fasta, out, format = "tsv", config_path;
  std::size_t threads = default_threads();
  bool dump_tables = false;
};

int run_encode(const EncodeArgs& a) {
  if (a.dump_tables) {
    emit(a.out, tables::dump());
    return 0;
  }
  if (a.fasta.empty()) throw ValidationError("encode: a FASTA input is required");
  if (a.out.empty()) throw ValidationError("encode: --out is required");
  RunConfig cfg = RunConfig::pretrain_defaults();
  if (!a.config_path.empty()) cfg = load_config(a.config_path, cfg);
  cfg.descriptors.validate();
  const LabeledDataset ds = read_fasta(a.fasta);
  std::vector<descriptors::FeatureVector> rows(ds.size());
  parallel_for(ds.size(), a.threads, [&](std::size_t i) { rows[i] = descriptors::encode_all(ds[i].peptide, cfg.descriptors); });

  const auto schema = descriptors::encode_all_schema(cfg.descriptors);
  if (a.format == "bin") {
    std::vector<embed::EmbeddingRecord> records;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      embed::EmbeddingRecord rec;
      rec.id = ds[i].peptide.id();
      rec.digest = embed::sequence_digest(ds[i].peptide.residues());
      rec.length = 1;
      for (double v : rows[i].values) rec.values.push_back(static_cast<float>(v));
      records.push_back(std::move(rec));
    }
    embed::write_store(a.out, static_cast<std::uint32_t>(schema->names.size()), records);
  } else {
    const char sep = a.format == "csv" ? ',' : '\t';
    std::string text = "id";
    for (const auto& name : schema->names) text += sep + name;
    text += "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      text += ds[i].peptide.id();
      for (double v : rows[i].values) text += sep + fmt(v, "%.17g");
      text += "\n";
    }
    write_text_file(a.out, text);
  }
  Manifest m("encode");
  m.config(cfg.to_text());
  m.input(a.fasta);
  m.artifact(a.out);
  m.write(a.out);
  return 0;
}

struct AugmentArgs {
  std::string fasta, out, config_path;
  std::uint64_t seed = 0;
  std::size_t copies = 1;
  std::size_t threads = default_threads();
  bool dump_blosum = false;
};

int run_augment(const AugmentArgs& a) {
  if (a.dump_blosum) {
    emit(a.out, augment::dump_blosum());
    return 0;
  }
  if (a.fasta.empty()) throw ValidationError("augment: a FASTA input is required");
  if (a.copies < 1) throw ValidationError("augment: --copies must be >= 1");
  RunConfig cfg = RunConfig::pretrain_defaults();
  if (!a.config_path.empty()) cfg = load_config(a.config_path, cfg);
  cfg.augment.validate();
  const LabeledDataset ds = read_fasta(a.fasta);
  std::vector<std::string> blocks(ds.size() * a.copies);
  // One stream per (record, copy), so the output does not depend on --threads.
  parallel_for(blocks.size(), a.threads, [&](std::size_t k) {
    const Record& r = ds[k / a.copies];
    Rng rng = derive_stream(a.seed, k);
    const Peptide variant = augment::augment(r.peptide, cfg.augment, rng);
    std::string header = ">" + r.peptide.id() + "_aug" + std::to_string(k % a.copies);
    if (r.label != kUnlabeled) header += "|label=" + std::to_string(r.label);
    if (!r.subclass.empty()) header += "|subclass=" + r.subclass;
    header += "|src=" + r.peptide.id() + "|seed=" + std::to_string(a.seed);
    blocks[k] = header + "\n" + variant.residues() + "\n";
  });
  std::string text;
  for (const auto& b : blocks) text += b;
  emit(a.out, text);
  Manifest m("augment");
  m.config(cfg.to_text());
  m.seed(a.seed);
  m.input(a.fasta);
  m.artifact(a.out);
  m.write(a.out);
  return 0;
}

int run_inspect(const std::string& path, bool as_json) {
  const auto store = embed::EmbeddingStore::open(path);
  if (as_json) {
    json j;
    j["magic"] = "PEMB";
    j["version"] = store.version();
    j["dim"] = store.dim();
    j["records"] = json::array();
    for (const auto& r : store.records()) {
      j["records"].push_back({{"id", r.id}, {"length", r.length}, {"sha256", embed::to_hex(r.digest)}});
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << "# magic PEMB version " << store.version() << " dim " << store.dim() << " records " << store.size()
            << "\n";
  std::cout << "id\tlength\tsha256\n";
  for (const auto& r : store.records()) std::cout << r.id << "\t" << r.length << "\t" << embed::to_hex(r.digest) << "\n";
  return 0;
}

struct TrainArgs {
  ConfigFlags flags;
  std::string train, val, labels, embeddings, out_ckpt, log;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = a.flags.resolve(RunConfig::pretrain_defaults());
  if (a.flags.print_config) {
    std::cout << cfg.to_text();
    return 0;
  }
  if (a.train.empty()) throw ValidationError("train: --train is required");
  if (a.out_ckpt.empty()) throw ValidationError("train: --out-ckpt is required");
  if (cfg.train.stage != Stage::kPretrain) throw ValidationError("train: train.stage must be pretrain (use finetune)");
  auto src = open_embeddings(a.embeddings, cfg.model.embed_dim, cfg.train.embed_seed);
  cfg.model.embed_dim = src.provider->dim();
  cfg.finalize();

  LabeledDataset train_set = read_labeled(a.train, a.labels);
  LabeledDataset val_set;
  if (a.val.empty()) {
    std::tie(train_set, val_set) = train::split_validation(train_set, cfg.train);
  } else {
    val_set = read_labeled(a.val, a.labels);
  }
  const auto result = train::train_stage1(train_set, val_set, cfg, *src.provider, progress_hooks());
  save_checkpoint(a.out_ckpt, result.best);
  const std::string log = a.log.empty() ? a.out_ckpt + ".log.csv" : a.log;
  write_epoch_log(log, result.history);

  Manifest m("train");
  m.config(cfg.to_text());
  m.seed(cfg.train.seed);
  for (const auto* p : {&a.train, &a.val, &a.labels, &a.embeddings}) m.input(*p);
  m.artifact(a.out_ckpt);
  m.artifact(log);
  m.write(a.out_ckpt);
  std::cerr << "best epoch " << result.best.epoch << " val_metric " << fmt(result.best.best_val, "%.4f")
            << (result.early_stopped ? " (early stop)" : "") << "\n";
  return 0;
}

struct FinetuneArgs {
  ConfigFlags flags;
  std::string base_ckpt, task, val, labels, embeddings, out_ckpt, log;
};

int run_finetune(const FinetuneArgs& a) {
  if (a.base_ckpt.empty()) throw ValidationError("finetune: --base-ckpt is required");
  const Checkpoint base = load_checkpoint(a.base_ckpt);
  RunConfig start = base.config;
  start.train = TrainConfig::finetune_defaults();
  start.train.embed_seed = base.config.train.embed_seed;
  start.train.standardize_features = base.config.train.standardize_features;
  RunConfig cfg = a.flags.resolve(start);
  if (a.flags.print_config) {
    std::cout << cfg.to_text();
    return 0;
  }
  if (a.task.empty()) throw ValidationError("finetune: --task is required");
  if (a.out_ckpt.empty()) throw ValidationError("finetune: --out-ckpt is required");
  auto src = open_embeddings(a.embeddings, base.config.model.embed_dim, cfg.train.embed_seed);

  LabeledDataset task = read_labeled(a.task, a.labels);
  LabeledDataset val_set;
  if (a.val.empty()) {
    std::tie(task, val_set) = train::split_validation(task, cfg.train);
  } else {
    val_set = read_labeled(a.val, a.labels);
  }
  const auto result = train::finetune_stage2(base, task, val_set, cfg, *src.provider, progress_hooks());
  save_checkpoint(a.out_ckpt, result.best);
  const std::string log = a.log.empty() ? a.out_ckpt + ".log.csv" : a.log;
  write_epoch_log(log, result.history);

  Manifest m("finetune");
  m.config(cfg.to_text());
  m.seed(cfg.train.seed);
  for (const auto* p : {&a.base_ckpt, &a.task, &a.val, &a.labels, &a.embeddings}) m.input(*p);
  m.artifact(a.out_ckpt);
  m.artifact(log);
  m.write(a.out_ckpt);
  return 0;
}

struct PredictArgs {
  std::string ckpt, fasta, embeddings, out;
  int tta = 0;
  std::uint64_t seed = 0;
  bool dump_gates = false, dump_attention = false;
};

int run_predict(const PredictArgs& a) {
  if (a.ckpt.empty()) throw ValidationError("predict: --ckpt is required");
  if (a.fasta.empty()) throw ValidationError("predict: a FASTA input is required");
  if (a.tta < 0) throw ValidationError("predict: --tta must be >= 0");
  if (a.out.empty() && a.dump_gates && a.dump_attention) {
    throw ValidationError("predict: --dump-gates with --dump-attention needs --out");
  }
  Checkpoint ckpt = load_checkpoint(a.ckpt);
  const auto cfg = ckpt.config;
  auto src = open_embeddings(a.embeddings, cfg.model.embed_dim, cfg.train.embed_seed);
  const train::Predictor predictor(std::move(ckpt), *src.provider);
  const LabeledDataset ds = read_fasta(a.fasta);

  std::string preds = "id\tscore\tprediction\n";
  std::string gates = "id\tlambda\n";
  std::string attention = "id\tposition\tresidue\talpha_cnn\talpha_lstm\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Peptide& p = ds[i].peptide;
    const auto full = predictor.predict(p);
    std::vector<double> probs = full.probs;
    if (a.tta > 0) {
      Rng rng = derive_stream(a.seed, i);
      probs = predictor.predict_tta(p, a.tta, rng);
    }
    preds += p.id() + "\t" + fmt(probs[1]) + "\t" + (probs[1] >= cfg.train.threshold ? "1" : "0") + "\n";
    gates += p.id() + "\t" + fmt(full.lambda) + "\n";
    for (std::size_t k = 0; k < p.size(); ++k) {
      attention += p.id() + "\t" + std::to_string(k + 1) + "\t" + p[k] + "\t" + fmt(full.attn_cnn[k]) + "\t" +
                   fmt(full.attn_lstm[k]) + "\n";
    }
  }

  Manifest m("predict");
  m.config(cfg.to_text());
  if (a.tta > 0) m.seed(a.seed);
  for (const auto* p : {&a.ckpt, &a.fasta, &a.embeddings}) m.input(*p);
  if (a.out.empty()) {
    emit("", a.dump_gates ? gates : a.dump_attention ? attention : preds);
    return 0;
  }
  write_text_file(a.out, preds);
  m.artifact(a.out);
  if (a.dump_gates) {
    write_text_file(a.out + ".gates.tsv", gates);
    m.artifact(a.out + ".gates.tsv");
  }
  if (a.dump_attention) {
    write_text_file(a.out + ".attention.tsv", attention);
    m.artifact(a.out + ".attention.tsv");
  }
  m.write(a.out);
  return 0;
}

struct EvaluateArgs {
  std::string pred, labels, out;
  double threshold = 0.5;
  bool as_json = false;
};

int run_evaluate(const EvaluateArgs& a) {
  if (a.pred.empty() || a.labels.empty()) throw ValidationError("evaluate: --pred and --labels are required");
  const auto labels = read_labels(a.labels);
  std::istringstream in(read_text_file(a.pred));
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  std::istringstream hs(line);
  for (std::string cell; std::getline(hs, cell, '\t');) header.push_back(cell);
  const auto score_col = std::find(header.begin(), header.end(), "score") - header.begin();
  if (header.empty() || header[0] != "id" || static_cast<std::size_t>(score_col) == header.size()) {
    throw ValidationError(a.pred + ": expected a header with 'id' and 'score' columns");
  }
  std::vector<double> scores;
  std::vector<int> ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, '\t');) cells.push_back(cell);
    if (cells.size() <= static_cast<std::size_t>(score_col)) {
      throw ValidationError(a.pred + " line " + std::to_string(line_no) + ": missing score");
    }
    const auto it = labels.find(cells[0]);
    if (it == labels.end() || it->second == kUnlabeled) {
      throw ValidationError(a.pred + " line " + std::to_string(line_no) + ": no label for '" + cells[0] + "'");
    }
    try {
      std::size_t used = 0;
      scores.push_back(std::stod(cells[score_col], &used));
      if (used != cells[score_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError(a.pred + " line " + std::to_string(line_no) + ": bad score '" + cells[score_col] + "'");
    }
    ys.push_back(it->second);
  }
  const auto report = metrics::evaluate(scores, ys, a.threshold);
  const auto row = metrics::report_row(report);
  json j;
  for (std::size_t k = 0; k < row.size(); ++k) j[metrics::kReportColumns[k]] = row[k];
  j["TP"] = report.counts.tp;
  j["TN"] = report.counts.tn;
  j["FP"] = report.counts.fp;
  j["FN"] = report.counts.fn;
  j["threshold"] = a.threshold;
  if (a.as_json) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::string text;
    for (std::size_t k = 0; k < row.size(); ++k) text += std::string(k ? "\t" : "") + metrics::kReportColumns[k];
    text += "\n";
    for (std::size_t k = 0; k < row.size(); ++k) text += (k ? "\t" : "") + fmt(row[k], "%.4f");
    std::cout << text << "\n";
  }
  if (!a.out.empty()) {
    write_text_file(a.out, j.dump(2) + "\n");
    Manifest m("evaluate");
    m.input(a.pred);
    m.input(a.labels);
    m.artifact(a.out);
    m.write(a.out);
  }
  return 0;
}

struct StatsArgs {
  std::string a, b, out, matrix;
  bool as_json = false;
};

int run_stats(const StatsArgs& s) {
  if (s.a.empty() || s.b.empty()) throw ValidationError("stats: --a and --b are required");
  const LabeledDataset a = read_fasta(s.a);
  const LabeledDataset b = read_fasta(s.b);
  const auto report = stats::composition_compare(a, b);
  if (s.as_json) {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"residue", std::string(1, r.residue)}, {"mean_a", r.mean_a}, {"mean_b", r.mean_b},
                      {"log2fc", r.log2fc}, {"t", r.t}, {"p", r.p}, {"stars", r.stars}});
    }
    emit(s.out, rows.dump(2) + "\n");
  } else {
    emit(s.out, report.to_tsv());
  }
  Manifest m("stats");
  m.input(s.a);
  m.input(s.b);
  if (!s.out.empty()) m.artifact(s.out);
  if (!s.matrix.empty()) {
    write_text_file(s.matrix, stats::subclass_fold_changes(a, b).to_tsv());
    m.artifact(s.matrix);
  }
  m.write(s.out.empty() ? s.matrix : s.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avpfusion: antiviral peptide classification with descriptor/embedding gated fusion"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", kVersion);
  bool print_defaults = false;
  app.add_flag("--print-config", print_defaults, "Print the default stage-1 configuration and exit");

  EncodeArgs enc;
  auto* encode = app.add_subcommand("encode", "Compute descriptor vectors for a FASTA file");
  encode->add_option("fasta", enc.fasta, "Input FASTA");
  encode->add_option("--out", enc.out, "Output matrix path");
  encode->add_option("--format", enc.format, "tsv, csv or bin (PEMB container, one row per peptide)")
      ->check(CLI::IsMember({"tsv", "csv", "bin"}));
  encode->add_option("--config", enc.config_path, "key = value config file (descriptors.* keys)");
  encode->add_option("--threads", enc.threads, "Worker threads")->check(CLI::PositiveNumber);
  encode->add_flag("--dump-tables", enc.dump_tables, "Write the bundled property tables and exit");

  AugmentArgs aug;
  auto* augment_cmd = app.add_subcommand("augment", "Write BLOSUM62-guided augmentations of a FASTA file");
  augment_cmd->add_option("fasta", aug.fasta, "Input FASTA");
  augment_cmd->add_option("--seed", aug.seed, "Augmentation seed");
  augment_cmd->add_option("--copies", aug.copies, "Augmented copies per peptide");
  augment_cmd->add_option("--out", aug.out, "Output FASTA (stdout when empty)");
  augment_cmd->add_option("--config", aug.config_path, "key = value config file (augment.* keys)");
  augment_cmd->add_option("--threads", aug.threads, "Worker threads")->check(CLI::PositiveNumber);
  augment_cmd->add_flag("--dump-blosum", aug.dump_blosum, "Write the bundled BLOSUM62 matrix and exit");

  std::string inspect_path;
  bool inspect_json = false;
  auto* store_cmd = app.add_subcommand("embedstore", "Embedding store utilities");
  store_cmd->require_subcommand(1);
  auto* inspect = store_cmd->add_subcommand("inspect", "Print the header and record table of a PEMB file");
  inspect->add_option("file", inspect_path, "PEMB file")->required();
  inspect->add_flag("--json", inspect_json, "JSON output");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Stage-1 training");
  tr.flags.add_to(train_cmd, RunConfig::pretrain_defaults());
  train_cmd->add_option("--train", tr.train, "Labeled training FASTA");
  train_cmd->add_option("--val", tr.val, "Labeled validation FASTA (split from --train when empty)");
  train_cmd->add_option("--labels", tr.labels, "Two-column id/label TSV applied to the FASTA inputs");
  train_cmd->add_option("--embeddings", tr.embeddings, "PEMB embedding store (hash embeddings when empty)");
  train_cmd->add_option("--out-ckpt", tr.out_ckpt, "Checkpoint output path");
  train_cmd->add_option("--log", tr.log, "Epoch CSV log (default <out-ckpt>.log.csv)");

  FinetuneArgs ft;
  auto* finetune_cmd = app.add_subcommand("finetune", "Stage-2 transfer fine-tuning from a stage-1 checkpoint");
  ft.flags.add_to(finetune_cmd, RunConfig::finetune_defaults());
  finetune_cmd->add_option("--base-ckpt", ft.base_ckpt, "Stage-1 checkpoint");
  finetune_cmd->add_option("--task", ft.task, "Labeled subclass-task FASTA");
  finetune_cmd->add_option("--val", ft.val, "Labeled validation FASTA (split from --task when empty)");
  finetune_cmd->add_option("--labels", ft.labels, "Two-column id/label TSV applied to the FASTA inputs");
  finetune_cmd->add_option("--embeddings", ft.embeddings, "PEMB embedding store (hash embeddings when empty)");
  finetune_cmd->add_option("--out-ckpt", ft.out_ckpt, "Checkpoint output path");
  finetune_cmd->add_option("--log", ft.log, "Epoch CSV log (default <out-ckpt>.log.csv)");

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Score peptides with a checkpoint");
  predict_cmd->add_option("fasta", pr.fasta, "Input FASTA");
  predict_cmd->add_option("--ckpt", pr.ckpt, "Checkpoint");
  predict_cmd->add_option("--embeddings", pr.embeddings, "PEMB embedding store (hash embeddings when empty)");
  predict_cmd->add_option("--tta", pr.tta, "Test-time augmentation variants per peptide");
  predict_cmd->add_option("--seed", pr.seed, "Test-time augmentation seed");
  predict_cmd->add_option("--out", pr.out, "Prediction TSV (stdout when empty)");
  predict_cmd->add_flag("--dump-gates", pr.dump_gates, "Per-peptide gate value (<out>.gates.tsv, or stdout)");
  predict_cmd->add_flag("--dump-attention", pr.dump_attention,
                        "Per-residue attention of both branches (<out>.attention.tsv, or stdout)");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Metrics for a prediction TSV against labels");
  evaluate_cmd->add_option("--pred", ev.pred, "Prediction TSV with id and score columns");
  evaluate_cmd->add_option("--labels", ev.labels, "Labeled FASTA or two-column id/label TSV");
  evaluate_cmd->add_option("--threshold", ev.threshold, "Decision threshold on the score");
  evaluate_cmd->add_option("--out", ev.out, "JSON output path");
  evaluate_cmd->add_flag("--json", ev.as_json, "Print JSON instead of the table");

  StatsArgs st;
  auto* stats_cmd = app.add_subcommand("stats", "Per-residue composition comparison of two FASTA files");
  stats_cmd->add_option("--a", st.a, "First FASTA");
  stats_cmd->add_option("--b", st.b, "Second FASTA (background for --matrix)");
  stats_cmd->add_option("--out", st.out, "Comparison TSV (stdout when empty)");
  stats_cmd->add_option("--matrix", st.matrix, "Subclass log2 fold-change matrix TSV (subclasses of --a vs --b)");
  stats_cmd->add_flag("--json", st.as_json, "JSON instead of TSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (print_defaults) {
      std::cout << RunConfig::pretrain_defaults().to_text();
      return 0;
    }
    if (encode->parsed()) return run_encode(enc);
    if (augment_cmd->parsed()) return run_augment(aug);
    if (inspect->parsed()) return run_inspect(inspect_path, inspect_json);
    if (train_cmd->parsed()) return run_train(tr);
    if (finetune_cmd->parsed()) return run_finetune(ft);
    if (predict_cmd->parsed()) return run_predict(pr);
    if (evaluate_cmd->parsed()) return run_evaluate(ev);
    if (stats_cmd->parsed()) return run_stats(st);
    std::cerr << app.help();
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ad::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
