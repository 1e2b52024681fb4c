#include "avpfusion/checkpoint.hpp"

#include <cmath>
#include <map>

#include "avpfusion/binio.hpp"
#include "avpfusion/embedstore.hpp"
#include "avpfusion/errors.hpp"

namespace avp {

FeatureScaler FeatureScaler::fit(const std::vector<std::vector<double>>& rows, bool enabled) {
  if (rows.empty()) throw ValidationError("feature scaler: no rows");
  const std::size_t d = rows.front().size();
  FeatureScaler s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (!enabled) return s;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  for (double& m : s.mean) m /= n;
  std::vector<double> var(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::vector<double> FeatureScaler::apply(std::vector<double> x) const {
  if (x.size() != mean.size()) throw ValidationError("feature scaler: dimension mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean[j]) / scale[j];
  return x;
}

std::vector<ad::Parameter*> trainable(Checkpoint& ckpt) {
  auto out = ckpt.params.all();
  out.push_back(&ckpt.log_tau);
  return out;
}

namespace {

enum : std::uint8_t { kFloat64 = 1, kUint64 = 2 };

struct TensorRecord {
  std::uint8_t dtype = kFloat64;
  ad::Shape shape;
  std::vector<double> f64;
  std::vector<std::uint64_t> u64;
};

void put_record(binio::Writer& w, const std::string& name, const TensorRecord& r) {
  w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.put<std::uint8_t>(r.dtype);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(r.shape.size()));
  for (std::size_t e : r.shape) w.put<std::uint64_t>(e);
  if (r.dtype == kFloat64) {
    for (double v : r.f64) w.put<double>(v);
  } else {
    for (std::uint64_t v : r.u64) w.put<std::uint64_t>(v);
  }
}

TensorRecord tensor_record(const ad::Tensor& t) { return {kFloat64, t.shape(), t.vec(), {}}; }

TensorRecord rows_record(const std::deque<std::vector<double>>& rows, std::size_t width) {
  TensorRecord r{kFloat64, {rows.size(), width}, {}, {}};
  for (const auto& row : rows) r.f64.insert(r.f64.end(), row.begin(), row.end());
  return r;
}

std::string meta_text(const Checkpoint& c) {
  return c.config.to_text() + "meta.best_val = " + format_double(c.best_val) + "\n" +
         "meta.epoch = " + std::to_string(c.epoch) + "\n";
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Checkpoint& c = const_cast<Checkpoint&>(ckpt);
  const auto params = trainable(c);
  if (c.adam.m.size() != params.size() || c.adam.v.size() != params.size()) {
    throw ValidationError("checkpoint: optimizer state does not match the parameter list");
  }
  std::vector<std::pair<std::string, TensorRecord>> records;
  for (std::size_t i = 0; i < params.size(); ++i) {
    records.emplace_back("param." + params[i]->name, tensor_record(params[i]->value));
    records.emplace_back("adam.m." + params[i]->name, tensor_record(c.adam.m[i]));
    records.emplace_back("adam.v." + params[i]->name, tensor_record(c.adam.v[i]));
  }
  records.emplace_back("adam.step", TensorRecord{kUint64, {1}, {}, {c.adam.step}});
  const std::size_t width = 2 * c.config.model.lstm_hidden;
  records.emplace_back("ohem.q_pos", rows_record(c.ohem.q_pos(), width));
  records.emplace_back("ohem.q_neg", rows_record(c.ohem.q_neg(), width));
  records.emplace_back("ohem.meta", TensorRecord{kFloat64,
                                           {3},
                                           {static_cast<double>(c.ohem.pos_capacity()),
                                            static_cast<double>(c.ohem.neg_capacity()), c.ohem.tau_sampling()},
                                           {}});
  records.emplace_back("norm.mean", TensorRecord{kFloat64, {c.scaler.mean.size()}, c.scaler.mean, {}});
  records.emplace_back("norm.scale", TensorRecord{kFloat64, {c.scaler.scale.size()}, c.scaler.scale, {}});

  const std::string text = meta_text(c);
  const auto digest = embed::sequence_digest(text);
  binio::Writer w;
  w.bytes({kCheckpointMagic, 4});
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  w.bytes({reinterpret_cast<const char*>(digest.data()), digest.size()});
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, r] : records) put_record(w, name, r);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  binio::Reader r(bytes);
  if (r.bytes(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    throw binio::FormatError("bad magic (expected PFCK)", 0);
  }
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw binio::FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto text_len = r.get<std::uint32_t>("config length");
  const std::size_t text_at = r.offset();
  const std::string text(r.bytes(text_len, "config text"));
  const auto stored_digest = r.bytes(32, "config digest");
  const auto digest = embed::sequence_digest(text);
  if (stored_digest != std::string_view(reinterpret_cast<const char*>(digest.data()), 32)) {
    throw binio::FormatError("config digest mismatch", text_at);
  }

  Checkpoint c;
  // Split meta.* lines from the run configuration.
  std::string config_text;
  std::map<std::string, std::string> meta;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.rfind("meta.", 0) == 0) {
      const auto eq = line.find(" = ");
      meta[line.substr(0, eq)] = line.substr(eq + 3);
    } else {
      config_text += line + "\n";
    }
  }
  try {
    c.config.apply_text(config_text);
    c.config.validate();
    c.epoch = std::stoull(meta.at("meta.epoch"));
    c.best_val = std::stod(meta.at("meta.best_val"));
  } catch (const std::exception& e) {
    throw binio::FormatError(std::string("invalid checkpoint configuration: ") + e.what(), text_at);
  }

  std::map<std::string, TensorRecord> records;
  const auto count = r.get<std::uint32_t>("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const auto name_len = r.get<std::uint16_t>("record name length");
    std::string name(r.bytes(name_len, "record name"));
    TensorRecord rec;
    rec.dtype = r.get<std::uint8_t>("dtype");
    if (rec.dtype != kFloat64 && rec.dtype != kUint64) {
      throw binio::FormatError("unknown dtype " + std::to_string(rec.dtype) + " in record '" + name + "'", at);
    }
    const auto rank = r.get<std::uint8_t>("rank");
    std::uint64_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      rec.shape.push_back(r.get<std::uint64_t>("extent"));
      n *= rec.shape.back();
    }
    r.require(n * 8, "record payload");
    if (rec.dtype == kFloat64) {
      rec.f64.resize(n);
      for (auto& v : rec.f64) v = r.get<double>("value");
    } else {
      rec.u64.resize(n);
      for (auto& v : rec.u64) v = r.get<std::uint64_t>("value");
    }
    if (!records.emplace(name, std::move(rec)).second) {
      throw binio::FormatError("duplicate record '" + name + "'", at);
    }
  }
  if (!r.done()) throw binio::FormatError("trailing bytes after last record", r.offset());

  auto take = [&](const std::string& name, std::uint8_t dtype) -> TensorRecord& {
    const auto it = records.find(name);
    if (it == records.end()) throw binio::FormatError("missing record '" + name + "'", r.offset());
    if (it->second.dtype != dtype) throw binio::FormatError("wrong dtype for record '" + name + "'", r.offset());
    return it->second;
  };
  auto tensor = [&](const std::string& name, const ad::Shape& expected) {
    TensorRecord& rec = take(name, kFloat64);
    if (rec.shape != expected) {
      throw binio::FormatError("record '" + name + "' has shape " + ad::shape_str(rec.shape) + ", expected " +
                                   ad::shape_str(expected),
                               r.offset());
    }
    return ad::Tensor(rec.shape, std::move(rec.f64));
  };

  Rng scratch(0);
  c.params = nn::ModelParams::init(c.config.model, scratch);
  c.log_tau = ad::Parameter("loss.log_tau", ad::Tensor::scalar(0.0));
  const auto params = trainable(c);
  for (ad::Parameter* p : params) {
    p->value = tensor("param." + p->name, p->value.shape());
    p->grad = ad::Tensor(p->value.shape());
    c.adam.m.push_back(tensor("adam.m." + p->name, p->value.shape()));
    c.adam.v.push_back(tensor("adam.v." + p->name, p->value.shape()));
  }
  const TensorRecord& step = take("adam.step", kUint64);
  if (step.u64.size() != 1) throw binio::FormatError("adam.step must hold one value", r.offset());
  c.adam.step = step.u64[0];

  const ad::Tensor ometa = tensor("ohem.meta", {3});
  c.ohem = objective::OhemState(static_cast<std::size_t>(ometa[0]), static_cast<std::size_t>(ometa[1]), ometa[2]);
  const std::size_t width = 2 * c.config.model.lstm_hidden;
  for (const auto& [name, label] : {std::pair{"ohem.q_pos", 1}, std::pair{"ohem.q_neg", 0}}) {
    TensorRecord& rec = take(name, kFloat64);
    if (rec.shape.size() != 2 || rec.shape[1] != width) {
      throw binio::FormatError(std::string("record '") + name + "' has wrong width", r.offset());
    }
    for (std::size_t i = 0; i < rec.shape[0]; ++i) {
      c.ohem.push(label, std::vector<double>(rec.f64.begin() + static_cast<std::ptrdiff_t>(i * width),
                                             rec.f64.begin() + static_cast<std::ptrdiff_t>((i + 1) * width)));
    }
  }
  const std::size_t d = c.config.model.descriptor_dim;
  c.scaler.mean = tensor("norm.mean", {d}).vec();
  c.scaler.scale = tensor("norm.scale", {d}).vec();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_text_file(path));
  } catch (const binio::FormatError& e) {
    throw binio::FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

}  // namespace avp
