#include "avpfusion/seqcore.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "avpfusion/errors.hpp"
#include "avpfusion/rng.hpp"

namespace avp {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view s, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

int parse_label(std::string_view value, std::string_view context) {
  if (value == "0") return 0;
  if (value == "1") return 1;
  throw ValidationError("invalid label '" + std::string(value) + "' for " +
                        std::string(context) + " (expected 0 or 1)");
}

}  // namespace

Peptide::Peptide(std::string id, std::string residues, std::size_t max_length)
    : id_(std::move(id)), residues_(std::move(residues)) {
  if (residues_.empty()) {
    throw ValidationError("peptide '" + id_ + "' is empty");
  }
  if (residues_.size() > max_length) {
    throw ValidationError("peptide '" + id_ + "' has length " +
                          std::to_string(residues_.size()) + " > maximum " +
                          std::to_string(max_length));
  }
  codes_.reserve(residues_.size());
  for (std::size_t i = 0; i < residues_.size(); ++i) {
    const int idx = residue_index(residues_[i]);
    if (idx < 0) {
      throw ValidationError("peptide '" + id_ + "': non-canonical residue '" +
                            std::string(1, residues_[i]) + "' at position " +
                            std::to_string(i + 1));
    }
    codes_.push_back(static_cast<std::uint8_t>(idx));
  }
}

void LabeledDataset::add(Record record) {
  if (record.label != 0 && record.label != 1 && record.label != kUnlabeled) {
    throw ValidationError("label for '" + record.peptide.id() + "' must be 0 or 1");
  }
  const std::string& id = record.peptide.id();
  auto it = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(), id);
  if (it != sorted_ids_.end() && *it == id) {
    throw ValidationError("duplicate peptide id '" + id + "'");
  }
  sorted_ids_.insert(it, id);
  records_.push_back(std::move(record));
}

std::size_t LabeledDataset::count_label(int label) const {
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(), [label](const Record& r) { return r.label == label; }));
}

bool LabeledDataset::fully_labeled() const { return count_label(kUnlabeled) == 0; }

LabeledDataset LabeledDataset::filter_label(int label) const {
  LabeledDataset out(task_name_);
  for (const auto& r : records_) {
    if (r.label == label) out.add(r);
  }
  return out;
}

LabeledDataset parse_fasta(std::string_view text, const FastaOptions& options) {
  LabeledDataset ds;
  std::string header;
  std::string sequence;
  bool in_record = false;
  std::size_t line_no = 0;

  auto flush = [&]() {
    if (!in_record) return;
    const auto fields = split(header, '|');
    const std::string id(trim(fields[0]));
    if (id.empty()) {
      throw ValidationError("malformed FASTA header '>" + header + "': empty id");
    }
    Record rec{Peptide(id, sequence, options.max_length), kUnlabeled, {}};
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const std::string_view field = trim(fields[i]);
      if (field.empty()) continue;
      const std::size_t eq = field.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ValidationError("malformed FASTA header '>" + header + "': field '" +
                              std::string(field) + "' is not key=value");
      }
      const std::string_view key = field.substr(0, eq);
      const std::string_view value = field.substr(eq + 1);
      if (key == options.label_key) {
        rec.label = parse_label(value, "'" + id + "'");
      } else if (key == options.subclass_key) {
        rec.subclass = std::string(value);
      }
    }
    ds.add(std::move(rec));
    header.clear();
    sequence.clear();
  };

  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '>') {
      flush();
      header = std::string(line.substr(1));
      in_record = true;
    } else if (line.front() == ';') {
      continue;
    } else {
      if (!in_record) {
        throw ValidationError("sequence data before first FASTA header at line " +
                              std::to_string(line_no));
      }
      sequence.append(line);
    }
  }
  flush();
  if (ds.empty()) throw ValidationError("FASTA input contains no records");
  return ds;
}

LabeledDataset read_fasta(const std::filesystem::path& path, const FastaOptions& options) {
  LabeledDataset ds = parse_fasta(read_text_file(path), options);
  ds.set_task_name(path.stem().string());
  return ds;
}

std::string write_fasta(const LabeledDataset& dataset, const FastaOptions& options) {
  std::string out;
  for (const auto& r : dataset.records()) {
    out += '>';
    out += r.peptide.id();
    if (r.label != kUnlabeled) out += "|" + options.label_key + "=" + std::to_string(r.label);
    if (!r.subclass.empty()) out += "|" + options.subclass_key + "=" + r.subclass;
    out += '\n';
    out += r.peptide.residues();
    out += '\n';
  }
  return out;
}

void apply_label_manifest(LabeledDataset& dataset, std::string_view tsv) {
  std::vector<std::pair<std::string, int>> labels;
  std::size_t line_no = 0;
  for (std::string_view line : split(tsv, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 2) {
      throw ValidationError("label manifest line " + std::to_string(line_no) +
                            ": expected 2 tab-separated columns");
    }
    if (line_no == 1 && trim(cols[1]) == "label") continue;
    labels.emplace_back(std::string(trim(cols[0])),
                        parse_label(trim(cols[1]), "manifest line " + std::to_string(line_no)));
  }
  std::sort(labels.begin(), labels.end());
  for (auto& r : dataset.mutable_records()) {
    auto it = std::lower_bound(labels.begin(), labels.end(), r.peptide.id(),
                               [](const auto& a, const std::string& id) { return a.first < id; });
    if (it == labels.end() || it->first != r.peptide.id()) {
      throw ValidationError("label manifest has no entry for '" + r.peptide.id() + "'");
    }
    r.label = it->second;
  }
}

std::pair<LabeledDataset, LabeledDataset> split_train_test(const LabeledDataset& dataset,
                                                           double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ValidationError("split ratio must lie in (0, 1)");
  }
  std::vector<bool> in_train(dataset.size(), false);
  Rng rng(seed);
  for (int label : {0, 1, kUnlabeled}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset[i].label == label) members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < 2) {
      throw ValidationError("class " + std::to_string(label) +
                            " has fewer than 2 members; cannot stratify");
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<double>(members.size());
    auto n_train = static_cast<std::size_t>(std::llround(ratio * n));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    for (std::size_t k = 0; k < n_train; ++k) in_train[members[k]] = true;
  }
  LabeledDataset train(dataset.task_name());
  LabeledDataset test(dataset.task_name());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (in_train[i] ? train : test).add(dataset[i]);
  }
  return {std::move(train), std::move(test)};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

}  // namespace avp
