#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "avpfusion/augment.hpp"
#include "avpfusion/config.hpp"
#include "avpfusion/descriptors.hpp"
#include "avpfusion/embedstore.hpp"
#include "avpfusion/seqcore.hpp"
#include "support/toy.hpp"

namespace fs = std::filesystem;
using namespace avp;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "avp_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_of(const std::string& name) { return (work_dir() / name).string(); }

Run cli(const std::string& args) {
  const std::string out = path_of("stdout.txt"), err = path_of("stderr.txt");
  const std::string cmd = std::string(AVP_CLI) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out);
  r.err = read_text_file(err);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> cells_of(const std::string& line, char sep = '\t') {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, sep);) out.push_back(cell);
  return out;
}

/// Toy train/val FASTA files and a desk-scale config, written once.
struct Fixture {
  std::string train, val, config, query;
  Fixture() {
    train = path_of("train.fasta");
    val = path_of("val.fasta");
    config = path_of("desk.cfg");
    query = path_of("query.fasta");
    write_text_file(train, write_fasta(testing::toy_dataset(12, 12, 41)));
    write_text_file(val, write_fasta(testing::toy_dataset(6, 6, 42, 10, 30, 'K', 'D', 0.3, "v")));
    RunConfig cfg = testing::desk_config();
    cfg.train.max_epochs = 2;
    cfg.train.warmup_epochs = 1;
    cfg.train.batch_size = 8;
    write_text_file(config, cfg.to_text());
    write_text_file(query, ">fig_peptide\nILPWKWPWWPWR\n");
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

/// Stage-1 checkpoint trained through the CLI, shared by later cases.
const std::string& trained_ckpt() {
  static const std::string ckpt = [] {
    const auto& f = fixture();
    const std::string path = path_of("stage1.ckpt");
    const Run r = cli("train --config " + f.config + " --train " + f.train + " --val " + f.val + " --out-ckpt " + path);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return path;
  }();
  return ckpt;
}

}  // namespace

TEST_CASE("help, version and argument errors") {
  auto help = cli("--help");
  CHECK(help.code == 0);
  for (const char* sub : {"encode", "augment", "embedstore", "train", "finetune", "predict", "evaluate", "stats"}) {
    CHECK(help.out.find(sub) != std::string::npos);
  }
  auto train_help = cli("train --help");
  CHECK(train_help.code == 0);
  CHECK(train_help.out.find("--lr FLOAT [0.00012]") != std::string::npos);
  CHECK(train_help.out.find("--batch-size UINT [32]") != std::string::npos);
  CHECK(cli("predict --help").out.find("--tta INT [0]") != std::string::npos);
  CHECK(cli("--version").code == 0);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("train --no-such-flag").code == 1);
  CHECK(cli("encode --format xml x.fasta --out y").code == 1);
}

TEST_CASE("print-config and precedence of config file and flags") {
  auto r = cli("--print-config");
  REQUIRE(r.code == 0);
  RunConfig parsed;
  parsed.apply_text(r.out);
  CHECK(parsed == RunConfig::pretrain_defaults());

  const std::string cfg = path_of("prec.cfg");
  write_text_file(cfg, "[train]\nseed = 3\nlr = 0.004\n");
  auto layered = cli("train --config " + cfg + " --seed 5 --set train.patience=7 --print-config");
  REQUIRE(layered.code == 0);
  RunConfig got;
  got.apply_text(layered.out);
  CHECK(got.train.seed == 5);
  CHECK(got.train.lr == 0.004);
  CHECK(got.train.patience == 7);

  auto bad = cli("train --set train.bogus=1 --print-config");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("train.bogus") != std::string::npos);
  CHECK(cli("train --config " + path_of("absent.cfg") + " --print-config").code == 2);
}

TEST_CASE("encode writes the descriptor matrix") {
  const auto& f = fixture();
  const std::string out = path_of("features.tsv");
  auto r = cli("encode " + f.train + " --out " + out + " --threads 3");
  REQUIRE(r.code == 0);
  const auto lines = lines_of(read_text_file(out));
  const auto ds = read_fasta(f.train);
  REQUIRE(lines.size() == ds.size() + 1);
  const auto schema = descriptors::encode_all_schema(RunConfig::pretrain_defaults().descriptors);
  const auto header = cells_of(lines[0]);
  REQUIRE(header.size() == schema->names.size() + 1);
  CHECK(header[0] == "id");
  CHECK(header[1] == schema->names[0]);
  CHECK(header.back() == schema->names.back());
  const auto row = cells_of(lines[5]);
  const auto want = descriptors::encode_all(ds[4].peptide, RunConfig::pretrain_defaults().descriptors);
  CHECK(row[0] == ds[4].peptide.id());
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::stod(row[k + 1]) == want[k]);

  const auto manifest = nlohmann::json::parse(read_text_file(out + ".manifest.json"));
  CHECK(manifest["command"] == "encode");
  CHECK(manifest["inputs"].contains(f.train));
  CHECK(manifest["inputs"][f.train] == embed::to_hex(embed::sequence_digest(read_text_file(f.train))));
  CHECK(manifest["artifacts"][0] == out);
  CHECK(manifest.contains("config_digest"));
  CHECK(manifest.contains("wall_clock_seconds"));
  CHECK(manifest.contains("version"));

  CHECK(cli("encode " + f.train + " --out " + path_of("features.csv") + " --format csv").code == 0);
  CHECK(cells_of(lines_of(read_text_file(path_of("features.csv")))[0], ',').size() == header.size());

  const std::string bin = path_of("features.pemb");
  REQUIRE(cli("encode " + f.train + " --out " + bin + " --format bin").code == 0);
  const auto store = embed::EmbeddingStore::open(bin);
  CHECK(store.dim() == schema->names.size());
  CHECK(store.size() == ds.size());

  auto tables = cli("encode --dump-tables");
  CHECK(tables.code == 0);
  CHECK(tables.out.find("[blosum62]") != std::string::npos);
  CHECK(cli("encode " + path_of("missing.fasta") + " --out " + out).code == 2);
}

TEST_CASE("augment is reproducible and records provenance") {
  const auto& f = fixture();
  auto a = cli("augment " + f.train + " --seed 11 --copies 2 --threads 1");
  auto b = cli("augment " + f.train + " --seed 11 --copies 2 --threads 4");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(cli("augment " + f.train + " --seed 12 --copies 2").out != a.out);
  const auto parsed = parse_fasta(a.out);
  CHECK(parsed.size() == 2 * read_fasta(f.train).size());
  const auto first = lines_of(a.out)[0];
  CHECK(first.find("|src=pos0") != std::string::npos);
  CHECK(first.find("|seed=11") != std::string::npos);
  CHECK(first.find("|label=1") != std::string::npos);

  auto blosum = cli("augment --dump-blosum");
  CHECK(blosum.code == 0);
  CHECK(blosum.out == augment::dump_blosum());
}

TEST_CASE("embedstore inspect prints header and records") {
  const std::string golden = std::string(AVP_TEST_DATA) + "/golden.pemb";
  auto r = cli("embedstore inspect " + golden);
  REQUIRE(r.code == 0);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "# magic PEMB version 1 dim 4 records 3");
  CHECK(lines[1] == "id\tlength\tsha256");
  CHECK(lines[2] == "p1\t12\t1b326e68b321a203d4b26a26052b1d62b916725e6dddf54928099055f824a336");
  auto j = nlohmann::json::parse(cli("embedstore inspect --json " + golden).out);
  CHECK(j["records"].size() == 3);
  CHECK(j["records"][2]["id"] == "short");

  const std::string broken = path_of("broken.pemb");
  write_text_file(broken, "NOPE");
  auto bad = cli("embedstore inspect " + broken);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("byte offset 0") != std::string::npos);
}

TEST_CASE("train with a missing embeddings file exits 2 naming the path") {
  const auto& f = fixture();
  const std::string missing = path_of("no_such_store.pemb");
  auto r = cli("train --config " + f.config + " --train " + f.train + " --embeddings " + missing + " --out-ckpt " +
               path_of("never.ckpt"));
  CHECK(r.code == 2);
  CHECK(r.err.find(missing) != std::string::npos);
  CHECK_FALSE(fs::exists(path_of("never.ckpt")));
}

TEST_CASE("train writes a checkpoint, epoch log and manifest") {
  const std::string& ckpt = trained_ckpt();
  CHECK(fs::exists(ckpt));
  const auto log = lines_of(read_text_file(ckpt + ".log.csv"));
  REQUIRE(log.size() == 3);
  CHECK(log[0].rfind("epoch,lr,loss_total", 0) == 0);
  const auto manifest = nlohmann::json::parse(read_text_file(ckpt + ".manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["seed"] == 0);
  CHECK(manifest["inputs"].size() == 2);

  // Same inputs and seed give the same checkpoint bytes.
  const auto& f = fixture();
  const std::string again = path_of("stage1_again.ckpt");
  REQUIRE(cli("train --config " + f.config + " --train " + f.train + " --val " + f.val + " --out-ckpt " + again).code ==
          0);
  CHECK(read_text_file(again) == read_text_file(ckpt));
}

TEST_CASE("predict dumps twelve per-position attention rows") {
  const auto& f = fixture();
  auto r = cli("predict --ckpt " + trained_ckpt() + " --dump-attention " + f.query);
  REQUIRE(r.code == 0);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 13);
  CHECK(lines[0] == "id\tposition\tresidue\talpha_cnn\talpha_lstm");
  const std::string seq = "ILPWKWPWWPWR";
  double cnn = 0, lstm = 0;
  for (std::size_t k = 0; k < 12; ++k) {
    const auto cells = cells_of(lines[k + 1]);
    REQUIRE(cells.size() == 5);
    CHECK(cells[0] == "fig_peptide");
    CHECK(cells[1] == std::to_string(k + 1));
    CHECK(cells[2] == std::string(1, seq[k]));
    cnn += std::stod(cells[3]);
    lstm += std::stod(cells[4]);
  }
  CHECK(lstm == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(cnn > 0.0);

  auto gates = cli("predict --ckpt " + trained_ckpt() + " --dump-gates " + f.query);
  REQUIRE(gates.code == 0);
  const auto g = lines_of(gates.out);
  REQUIRE(g.size() == 2);
  const double lambda = std::stod(cells_of(g[1])[1]);
  CHECK(lambda > 0.0);
  CHECK(lambda < 1.0);

  const std::string out = path_of("query.pred.tsv");
  REQUIRE(cli("predict --ckpt " + trained_ckpt() + " --out " + out + " --dump-gates --dump-attention " + f.query).code ==
          0);
  CHECK(lines_of(read_text_file(out + ".attention.tsv")).size() == 13);
  CHECK(lines_of(read_text_file(out + ".gates.tsv")).size() == 2);
  CHECK(fs::exists(out + ".manifest.json"));
  CHECK(cli("predict --ckpt " + trained_ckpt() + " --dump-gates --dump-attention " + f.query).code == 1);
  CHECK(cli("predict --ckpt " + path_of("nope.ckpt") + " " + f.query).code == 2);
}

TEST_CASE("predict with tta is seeded, evaluate reads its output") {
  const auto& f = fixture();
  const std::string pred = path_of("val.pred.tsv");
  REQUIRE(cli("predict --ckpt " + trained_ckpt() + " --tta 4 --seed 3 --out " + pred + " " + f.val).code == 0);
  const std::string first = read_text_file(pred);
  REQUIRE(cli("predict --ckpt " + trained_ckpt() + " --tta 4 --seed 3 --out " + pred + " " + f.val).code == 0);
  CHECK(read_text_file(pred) == first);
  CHECK(lines_of(first).size() == 13);
  CHECK(lines_of(first)[0] == "id\tscore\tprediction");

  auto ev = cli("evaluate --pred " + pred + " --labels " + f.val + " --json");
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(ev.out);
  for (const char* key : {"Accuracy", "Sensitivity", "Specificity", "MCC", "G-mean", "AUROC", "AUPRC"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["TP"].get<int>() + j["TN"].get<int>() + j["FP"].get<int>() + j["FN"].get<int>() == 12);
}

TEST_CASE("evaluate on a perfect prediction file gives an all-ones row") {
  const std::string pred = path_of("perfect.tsv");
  const std::string labels = path_of("perfect_labels.tsv");
  write_text_file(pred, "id\tscore\tprediction\na\t0.9\t1\nb\t0.8\t1\nc\t0.2\t0\nd\t0.1\t0\n");
  write_text_file(labels, "id\tlabel\na\t1\nb\t1\nc\t0\nd\t0\n");
  const std::string json_out = path_of("perfect.json");
  auto r = cli("evaluate --pred " + pred + " --labels " + labels + " --out " + json_out);
  REQUIRE(r.code == 0);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "Accuracy\tSensitivity\tSpecificity\tMCC\tG-mean\tAUROC\tAUPRC");
  CHECK(lines[1] == "1.0000\t1.0000\t1.0000\t1.0000\t1.0000\t1.0000\t1.0000");
  CHECK(nlohmann::json::parse(read_text_file(json_out))["MCC"] == 1.0);

  write_text_file(labels, "a\t1\nb\t1\nc\t0\n");
  CHECK(cli("evaluate --pred " + pred + " --labels " + labels).code == 1);
}

TEST_CASE("finetune starts from the stage-1 checkpoint") {
  const auto& f = fixture();
  auto printed = cli("finetune --base-ckpt " + trained_ckpt() + " --print-config");
  REQUIRE(printed.code == 0);
  RunConfig cfg;
  cfg.apply_text(printed.out);
  CHECK(cfg.train.stage == Stage::kFinetune);
  CHECK(cfg.train.lr == 8e-5);
  CHECK(cfg.train.weight_decay == 0.0);
  CHECK(cfg.model.lstm_hidden == 16);

  const std::string out = path_of("stage2.ckpt");
  auto r = cli("finetune --base-ckpt " + trained_ckpt() + " --task " + f.train + " --val " + f.val +
               " --epochs 1 --set train.warmup_epochs=0 --set train.batch_size=8 --out-ckpt " + out);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(lines_of(read_text_file(out + ".log.csv")).size() == 2);
  CHECK(nlohmann::json::parse(read_text_file(out + ".manifest.json"))["command"] == "finetune");
  CHECK(cli("finetune --base-ckpt " + out + " --task " + f.train + " --out-ckpt " + path_of("x.ckpt")).code == 1);
}

TEST_CASE("stats writes the composition table and subclass matrix") {
  const std::string a = path_of("a.fasta"), b = path_of("b.fasta");
  write_text_file(a, ">a1|subclass=HIV\nKKKKAAAAAA\n>a2|subclass=FLU\nAAAAAAAAKW\n>a3|subclass=HIV\nKKAAAAAAAA\n");
  write_text_file(b, ">b1\nKAAAAAAAAA\n>b2\nKKKAAAAAAA\n>b3\nAAAAWAAAAA\n");
  const std::string out = path_of("stats.tsv"), matrix = path_of("matrix.tsv");
  auto r = cli("stats --a " + a + " --b " + b + " --out " + out + " --matrix " + matrix);
  REQUIRE(r.code == 0);
  const auto lines = lines_of(read_text_file(out));
  REQUIRE(lines.size() == 21);
  CHECK(lines[0] == "residue\tmean_a\tmean_b\tlog2fc\tp\tstars");
  const auto m = lines_of(read_text_file(matrix));
  REQUIRE(m.size() == 3);
  CHECK(cells_of(m[1])[0] == "FLU");
  CHECK(cells_of(m[2])[0] == "HIV");
  CHECK(fs::exists(out + ".manifest.json"));
  auto j = nlohmann::json::parse(cli("stats --a " + a + " --b " + b + " --json").out);
  CHECK(j.size() == 20);
}
