#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace avp {

inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr std::size_t kNumResidues = 20;
inline constexpr std::size_t kDefaultMaxLength = 100;

/// Index of `c` in kAlphabet, or -1 for anything that is not one of the
/// 20 canonical uppercase one-letter codes.
constexpr int residue_index(char c) {
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) {
    if (kAlphabet[i] == c) return static_cast<int>(i);
  }
  return -1;
}

/// Validated peptide: 1..max_length residues over the canonical alphabet.
class Peptide {
 public:
  Peptide(std::string id, std::string residues,
          std::size_t max_length = kDefaultMaxLength);

  const std::string& id() const { return id_; }
  const std::string& residues() const { return residues_; }
  std::size_t size() const { return residues_.size(); }
  char operator[](std::size_t i) const { return residues_[i]; }
  /// Alphabet index of residue i (0..19).
  int index(std::size_t i) const { return codes_[i]; }
  const std::vector<std::uint8_t>& codes() const { return codes_; }

  bool operator==(const Peptide& other) const {
    return id_ == other.id_ && residues_ == other.residues_;
  }

 private:
  std::string id_;
  std::string residues_;
  std::vector<std::uint8_t> codes_;
};

inline constexpr int kUnlabeled = -1;

struct Record {
  Peptide peptide;
  int label = kUnlabeled;  // 0, 1, or kUnlabeled
  std::string subclass;    // optional tag, empty when absent
};

class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::string task_name) : task_name_(std::move(task_name)) {}

  /// Throws ValidationError on duplicate id or a label outside {0, 1, unlabeled}.
  void add(Record record);

  const std::vector<Record>& records() const { return records_; }
  std::vector<Record>& mutable_records() { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const Record& operator[](std::size_t i) const { return records_[i]; }

  const std::string& task_name() const { return task_name_; }
  void set_task_name(std::string name) { task_name_ = std::move(name); }

  std::size_t count_label(int label) const;
  bool fully_labeled() const;
  /// Records whose label equals `label`, order preserved.
  LabeledDataset filter_label(int label) const;

 private:
  std::string task_name_;
  std::vector<Record> records_;
  std::vector<std::string> sorted_ids_;
};

struct FastaOptions {
  std::string label_key = "label";
  std::string subclass_key = "subclass";
  std::size_t max_length = kDefaultMaxLength;
};

/// Parses FASTA text. Headers look like `>id|label=1|subclass=HIV`; fields
/// other than the label and subclass keys are accepted and ignored.
/// Multi-line sequences and CRLF line endings are accepted.
LabeledDataset parse_fasta(std::string_view text, const FastaOptions& options = {});
LabeledDataset read_fasta(const std::filesystem::path& path,
                          const FastaOptions& options = {});

/// Inverse of parse_fasta for datasets produced by it.
std::string write_fasta(const LabeledDataset& dataset, const FastaOptions& options = {});

/// Applies a two-column TSV manifest (id, label; optional header row) to the
/// dataset's records. Every dataset id must appear in the manifest.
void apply_label_manifest(LabeledDataset& dataset, std::string_view tsv);

/// Stratified, seeded split. Each class contributes round(ratio * n) records
/// (clamped to [1, n-1]) to train; within-partition order follows the input.
std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& dataset,
                                                           double ratio,
                                                           std::uint64_t seed);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace avp
