#include "avpfusion/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

#include "avpfusion/errors.hpp"

namespace avp {

std::string_view stage_name(Stage s) { return s == Stage::kPretrain ? "pretrain" : "finetune"; }

Stage parse_stage(std::string_view s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "finetune") return Stage::kFinetune;
  throw ValidationError("unknown stage '" + std::string(s) + "' (expected pretrain or finetune)");
}

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.stage = Stage::kFinetune;
  c.lr = 8.0e-5;
  c.weight_decay = 0.0;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("train.lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be >= 0");
  if (!(lr_min_ratio >= 0.0 && lr_min_ratio <= 1.0)) throw ValidationError("train.lr_min_ratio must be in [0,1]");
  if (!(warmup_epochs >= 0.0)) throw ValidationError("train.warmup_epochs must be >= 0");
  if (max_epochs < 1) throw ValidationError("train.max_epochs must be >= 1");
  if (static_cast<double>(max_epochs) < warmup_epochs) {
    throw ValidationError("train.max_epochs must be >= train.warmup_epochs");
  }
  if (patience < 1) throw ValidationError("train.patience must be >= 1");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (accumulation_steps < 1) throw ValidationError("train.accumulation_steps must be >= 1");
  if (accumulation_steps > batch_size) {
    throw ValidationError("train.accumulation_steps must not exceed train.batch_size");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("train.val_fraction must be in (0,1)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("train.threshold must be in (0,1)");
}

RunConfig RunConfig::pretrain_defaults() {
  RunConfig c;
  c.finalize();
  return c;
}

RunConfig RunConfig::finetune_defaults() {
  RunConfig c;
  c.train = TrainConfig::finetune_defaults();
  c.finalize();
  return c;
}

void RunConfig::finalize() { model.descriptor_dim = descriptors.total_dim(); }

void RunConfig::validate() const {
  model.validate();
  descriptors.validate();
  loss.validate();
  augment.validate();
  train.validate();
  if (model.descriptor_dim != descriptors.total_dim()) {
    throw ValidationError("model.descriptor_dim does not match the descriptor configuration");
  }
  if (!loss.alpha.empty() && loss.alpha.size() != model.n_classes) {
    throw ValidationError("loss.alpha must have one entry per class");
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError("config: bad value '" + value + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError("config: bad boolean '" + value + "' for " + key);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  if (trim(value).empty()) return out;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t end = value.find(',', start);
    if (end == std::string::npos) end = value.size();
    out.push_back(parse_number<T>(key, trim(std::string_view(value).substr(start, end - start))));
    start = end + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define AVP_INT_FIELD(section, member)                                                                \
  Field {                                                                                             \
    [](const RunConfig& c) { return std::to_string(c.section.member); },                             \
        [](RunConfig& c, const std::string& k, const std::string& v) {                                \
          c.section.member = parse_number<decltype(c.section.member)>(k, v);                          \
        }                                                                                             \
  }
#define AVP_REAL_FIELD(section, member)                                                               \
  Field {                                                                                             \
    [](const RunConfig& c) { return format_double(c.section.member); },                              \
        [](RunConfig& c, const std::string& k, const std::string& v) {                                \
          c.section.member = parse_number<double>(k, v);                                              \
        }                                                                                             \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"model.embed_dim", AVP_INT_FIELD(model, embed_dim)},
      {"model.conv_kernels", AVP_INT_FIELD(model, conv_kernels)},
      {"model.conv_width", AVP_INT_FIELD(model, conv_width)},
      {"model.lstm_hidden", AVP_INT_FIELD(model, lstm_hidden)},
      {"model.attention_dim", AVP_INT_FIELD(model, attention_dim)},
      {"model.gate_hidden", AVP_INT_FIELD(model, gate_hidden)},
      {"model.mlp_hidden",
       {[](const RunConfig& c) { return join(c.model.mlp_hidden); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.model.mlp_hidden = parse_list<std::size_t>(k, v);
        }}},
      {"model.n_classes", AVP_INT_FIELD(model, n_classes)},
      {"model.dropout", AVP_REAL_FIELD(model, dropout)},
      {"descriptors.cksaagp_max_gap", AVP_INT_FIELD(descriptors, cksaagp_max_gap)},
      {"descriptors.distancepair_max_distance", AVP_INT_FIELD(descriptors, distancepair_max_distance)},
      {"descriptors.paac_lambda", AVP_INT_FIELD(descriptors, paac_lambda)},
      {"descriptors.paac_weight", AVP_REAL_FIELD(descriptors, paac_weight)},
      {"descriptors.qso_nlag", AVP_INT_FIELD(descriptors, qso_nlag)},
      {"descriptors.qso_weight", AVP_REAL_FIELD(descriptors, qso_weight)},
      {"descriptors.binary_pad_len", AVP_INT_FIELD(descriptors, binary_pad_len)},
      {"loss.lambda_con", AVP_REAL_FIELD(loss, lambda_con)},
      {"loss.lambda_cons", AVP_REAL_FIELD(loss, lambda_cons)},
      {"loss.gamma", AVP_REAL_FIELD(loss, gamma)},
      {"loss.k_negatives", AVP_INT_FIELD(loss, k_negatives)},
      {"loss.q_pos_capacity", AVP_INT_FIELD(loss, q_pos_capacity)},
      {"loss.q_neg_capacity", AVP_INT_FIELD(loss, q_neg_capacity)},
      {"loss.tau_init", AVP_REAL_FIELD(loss, tau_init)},
      {"loss.tau_sampling", AVP_REAL_FIELD(loss, tau_sampling)},
      {"loss.alpha",
       {[](const RunConfig& c) { return join(c.loss.alpha); },
        [](RunConfig& c, const std::string& k, const std::string& v) { c.loss.alpha = parse_list<double>(k, v); }}},
      {"augment.n_segments", AVP_INT_FIELD(augment, n_segments)},
      {"augment.n_steps", AVP_INT_FIELD(augment, n_steps)},
      {"augment.p_insert", AVP_REAL_FIELD(augment, p_insert)},
      {"augment.p_delete", AVP_REAL_FIELD(augment, p_delete)},
      {"augment.min_len_after", AVP_INT_FIELD(augment, min_len_after)},
      {"augment.max_len_after", AVP_INT_FIELD(augment, max_len_after)},
      {"train.stage",
       {[](const RunConfig& c) { return std::string(stage_name(c.train.stage)); },
        [](RunConfig& c, const std::string&, const std::string& v) { c.train.stage = parse_stage(v); }}},
      {"train.lr", AVP_REAL_FIELD(train, lr)},
      {"train.weight_decay", AVP_REAL_FIELD(train, weight_decay)},
      {"train.lr_min_ratio", AVP_REAL_FIELD(train, lr_min_ratio)},
      {"train.warmup_epochs", AVP_REAL_FIELD(train, warmup_epochs)},
      {"train.max_epochs", AVP_INT_FIELD(train, max_epochs)},
      {"train.patience", AVP_INT_FIELD(train, patience)},
      {"train.batch_size", AVP_INT_FIELD(train, batch_size)},
      {"train.accumulation_steps", AVP_INT_FIELD(train, accumulation_steps)},
      {"train.seed", AVP_INT_FIELD(train, seed)},
      {"train.val_fraction", AVP_REAL_FIELD(train, val_fraction)},
      {"train.threshold", AVP_REAL_FIELD(train, threshold)},
      {"train.embed_seed", AVP_INT_FIELD(train, embed_seed)},
      {"train.standardize_features",
       {[](const RunConfig& c) { return std::string(c.train.standardize_features ? "true" : "false"); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.train.standardize_features = parse_bool(k, v);
        }}},
  };
  return table;
}

#undef AVP_INT_FIELD
#undef AVP_REAL_FIELD

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, f] : fields()) out.push_back(k);
  return out;
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ValidationError("config: unknown key '" + key + "'");
  return it->second.get(*this);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ValidationError("config: unknown key '" + key + "'");
  it->second.set(*this, key, trim(value));
  finalize();
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::apply_text(std::string_view text) {
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      set(key, line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  base.apply_text(read_text_file(path));
  return base;
}

}  // namespace avp
