#include "avpfusion/embedstore.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "avpfusion/binio.hpp"
#include "avpfusion/errors.hpp"
#include "avpfusion/rng.hpp"

namespace avp::embed {

Digest sequence_digest(std::string_view residues) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(residues.data(), residues.size(), d.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.size()) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  return d;
}

std::string to_hex(const Digest& d) {
  std::string out;
  char buf[3];
  for (auto b : d) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    out += buf;
  }
  return out;
}

EmbeddingRecord make_record(const Peptide& p, const ad::Tensor& matrix) {
  if (matrix.rank() != 2 || matrix.dim(0) != p.size()) {
    throw ValidationError("embedding for '" + p.id() + "' must have one row per residue");
  }
  EmbeddingRecord r;
  r.id = p.id();
  r.digest = sequence_digest(p.residues());
  r.length = static_cast<std::uint32_t>(p.size());
  r.values.reserve(matrix.size());
  for (double v : matrix.data()) r.values.push_back(static_cast<float>(v));
  return r;
}

std::string serialize_store(std::uint32_t dim, const std::vector<EmbeddingRecord>& records) {
  if (dim < 1) throw ValidationError("embedding store: dimension must be >= 1");
  binio::Writer w;
  w.bytes({kMagic, 4});
  w.put<std::uint16_t>(kFormatVersion);
  w.put<std::uint32_t>(dim);
  w.put<std::uint64_t>(records.size());
  for (const auto& r : records) {
    if (r.id.empty() || r.id.size() > 0xFFFF) throw ValidationError("embedding store: bad id length");
    if (r.values.size() != static_cast<std::size_t>(r.length) * dim) {
      throw ValidationError("embedding store: record '" + r.id + "' has wrong value count");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.id.size()));
    w.bytes(r.id);
    w.bytes({reinterpret_cast<const char*>(r.digest.data()), r.digest.size()});
    w.put<std::uint32_t>(r.length);
    for (float v : r.values) w.put<float>(v);
  }
  return w.take();
}

void write_store(const std::filesystem::path& path, std::uint32_t dim,
                 const std::vector<EmbeddingRecord>& records) {
  write_text_file(path, serialize_store(dim, records));
}

EmbeddingStore EmbeddingStore::parse(std::string_view bytes) {
  binio::Reader r(bytes);
  EmbeddingStore s;
  if (r.bytes(4, "magic") != std::string_view(kMagic, 4)) throw binio::FormatError("bad magic (expected PEMB)", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kFormatVersion) {
    throw binio::FormatError("unsupported version " + std::to_string(version), version_at);
  }
  const std::size_t dim_at = r.offset();
  s.dim_ = r.get<std::uint32_t>("dimension");
  if (s.dim_ < 1) throw binio::FormatError("dimension must be >= 1", dim_at);
  const auto count = r.get<std::uint64_t>("record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t record_at = r.offset();
    EmbeddingRecord rec;
    const auto id_len = r.get<std::uint16_t>("id length");
    rec.id = std::string(r.bytes(id_len, "id"));
    const auto digest = r.bytes(32, "digest");
    std::memcpy(rec.digest.data(), digest.data(), 32);
    const std::size_t len_at = r.offset();
    rec.length = r.get<std::uint32_t>("sequence length");
    const std::uint64_t n = static_cast<std::uint64_t>(rec.length) * s.dim_;
    if (n * sizeof(float) > r.remaining()) {
      throw binio::FormatError("truncated file: record '" + rec.id + "' declares " +
                                   std::to_string(rec.length) + " rows",
                               len_at);
    }
    rec.values.resize(n);
    const auto payload = r.bytes(n * sizeof(float), "embedding values");
    std::memcpy(rec.values.data(), payload.data(), payload.size());
    if (!s.index_.emplace(rec.id, s.records_.size()).second) {
      throw binio::FormatError("duplicate id '" + rec.id + "'", record_at);
    }
    s.records_.push_back(std::move(rec));
  }
  if (!r.done()) throw binio::FormatError("trailing bytes after last record", r.offset());
  return s;
}

EmbeddingStore EmbeddingStore::open(const std::filesystem::path& path) {
  try {
    return parse(read_text_file(path));
  } catch (const binio::FormatError& e) {
    throw binio::FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

const EmbeddingRecord* EmbeddingStore::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

bool EmbeddingStore::contains(const Peptide& p) const {
  const auto* rec = find(p.id());
  return rec && rec->length == p.size() && rec->digest == sequence_digest(p.residues());
}

ad::Tensor EmbeddingStore::lookup(const Peptide& p) const {
  const auto* rec = find(p.id());
  if (!rec) throw ValidationError("embedding store: no record for id '" + p.id() + "'");
  if (rec->digest != sequence_digest(p.residues()) || rec->length != p.size()) {
    throw ValidationError("embedding store: digest mismatch for id '" + p.id() +
                          "' (sequence differs from the one embedded)");
  }
  ad::Tensor out({rec->length, dim_});
  for (std::size_t i = 0; i < rec->values.size(); ++i) out[i] = rec->values[i];
  return out;
}

ad::Tensor hash_embed(const Peptide& p, std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw ValidationError("hash_embed: dimension must be >= 1");
  std::array<std::vector<double>, kNumResidues> rows;
  ad::Tensor out({p.size(), dim});
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& row = rows[static_cast<std::size_t>(p.index(i))];
    if (row.empty()) {
      Rng rng = derive_stream(seed, static_cast<std::uint64_t>(p.index(i)));
      row.resize(dim);
      for (std::size_t j = 0; j < dim; j += 2) {
        // Box-Muller; 1 - u keeps the log argument in (0, 1].
        const double u1 = 1.0 - uniform01(rng);
        const double u2 = uniform01(rng);
        const double r = std::sqrt(-2.0 * std::log(u1));
        row[j] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (j + 1 < dim) row[j + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
      }
    }
    for (std::size_t j = 0; j < dim; ++j) out.at(i, j) = row[j];
  }
  return out;
}

ad::Tensor EmbeddingProvider::embed(const Peptide& p, bool prefer_hash) const {
  if (store_ && !prefer_hash) return store_->lookup(p);
  return hash_embed(p, dim_, seed_);
}

}  // namespace avp::embed
