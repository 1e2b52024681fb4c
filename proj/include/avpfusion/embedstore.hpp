#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "avpfusion/autodiff.hpp"
#include "avpfusion/seqcore.hpp"

namespace avp::embed {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of the residue string.
Digest sequence_digest(std::string_view residues);
std::string to_hex(const Digest& d);

inline constexpr char kMagic[4] = {'P', 'E', 'M', 'B'};
inline constexpr std::uint16_t kFormatVersion = 1;

struct EmbeddingRecord {
  std::string id;
  Digest digest{};
  std::uint32_t length = 0;
  std::vector<float> values;  // length x dim, row-major

  bool operator==(const EmbeddingRecord&) const = default;
};

/// Builds a record for `p` from an L x d matrix (values rounded to float32).
EmbeddingRecord make_record(const Peptide& p, const ad::Tensor& matrix);

/// Serialized PEMB bytes for `records` (written in the given order).
std::string serialize_store(std::uint32_t dim, const std::vector<EmbeddingRecord>& records);
void write_store(const std::filesystem::path& path, std::uint32_t dim,
                 const std::vector<EmbeddingRecord>& records);

/// In-memory, read-only embedding store.
class EmbeddingStore {
 public:
  /// Parses PEMB bytes; throws binio::FormatError (bad magic, version,
  /// truncation, duplicate id, trailing bytes) naming the byte offset.
  static EmbeddingStore parse(std::string_view bytes);
  /// Reads and parses a file; IoError if it cannot be read.
  static EmbeddingStore open(const std::filesystem::path& path);

  std::uint32_t dim() const { return dim_; }
  std::uint16_t version() const { return kFormatVersion; }
  std::size_t size() const { return records_.size(); }
  /// Records in file order.
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord* find(const std::string& id) const;
  bool contains(const Peptide& p) const;

  /// L x dim matrix for `p`. ValidationError if the id is absent or the
  /// stored digest/length does not match p's residues.
  ad::Tensor lookup(const Peptide& p) const;

 private:
  std::uint32_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic stand-in for language-model embeddings: row i is a
/// standard-normal vector keyed only by (residue identity, seed).
ad::Tensor hash_embed(const Peptide& p, std::size_t dim, std::uint64_t seed);

/// Supplies per-residue embeddings to the trainer and predictor. With a store,
/// stored matrices are used for original peptides; hash embeddings are used
/// whenever `prefer_hash` is set (augmentation pairs) or no store is attached.
class EmbeddingProvider {
 public:
  EmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  explicit EmbeddingProvider(const EmbeddingStore* store, std::uint64_t seed = 0)
      : dim_(store->dim()), seed_(seed), store_(store) {}

  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  bool has_store() const { return store_ != nullptr; }
  ad::Tensor embed(const Peptide& p, bool prefer_hash = false) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  const EmbeddingStore* store_ = nullptr;
};

}  // namespace avp::embed
