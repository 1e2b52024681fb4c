#include "avpfusion/descriptors.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <mutex>

#include "avpfusion/errors.hpp"
#include "avpfusion/tables.hpp"

namespace avp::descriptors {

namespace {

constexpr std::size_t N = kNumResidues;
constexpr std::size_t G = tables::kNumGroups;

std::shared_ptr<const Schema> cached_schema(const std::string& key,
                                            const std::function<Schema()>& build) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const Schema>> cache;
  {
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  // Built unlocked: composite schemas recurse into this function.
  auto schema = std::make_shared<const Schema>(build());
  std::lock_guard lock(mutex);
  return cache.emplace(key, std::move(schema)).first->second;
}

std::string aa(std::size_t i) { return std::string(1, kAlphabet[i]); }
std::string group(std::size_t g) { return std::string(tables::kGroupNames[g]); }

void require_length(const Peptide& p, std::size_t min_len, const char* what) {
  if (p.size() < min_len) {
    throw ValidationError(std::string(what) + " requires length >= " + std::to_string(min_len) +
                          ", got " + std::to_string(p.size()) + " for '" + p.id() + "'");
  }
}

std::vector<double> composition(const Peptide& p) {
  std::vector<double> f(N, 0.0);
  for (auto c : p.codes()) f[c] += 1.0;
  for (auto& v : f) v /= static_cast<double>(p.size());
  return f;
}

std::vector<double> dipeptide_counts(const Peptide& p, std::size_t distance) {
  std::vector<double> counts(N * N, 0.0);
  for (std::size_t i = 0; i + distance < p.size(); ++i) {
    counts[p.index(i) * N + p.index(i + distance)] += 1.0;
  }
  return counts;
}

std::array<double, 20> standardized(const std::array<double, 20>& raw) {
  double mean = 0.0;
  for (double v : raw) mean += v;
  mean /= 20.0;
  double var = 0.0;
  for (double v : raw) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 20.0);
  std::array<double, 20> out{};
  for (std::size_t i = 0; i < 20; ++i) out[i] = (raw[i] - mean) / sd;
  return out;
}

struct PaacProperties {
  std::array<std::array<double, 20>, 3> values;
};

const PaacProperties& paac_properties() {
  static const PaacProperties props{{standardized(tables::hydrophobicity()),
                                     standardized(tables::hydrophilicity()),
                                     standardized(tables::side_chain_mass())}};
  return props;
}

double paac_theta(int a, int b) {
  const auto& props = paac_properties().values;
  double sum = 0.0;
  for (const auto& prop : props) {
    const double d = prop[static_cast<std::size_t>(b)] - prop[static_cast<std::size_t>(a)];
    sum += d * d;
  }
  return sum / static_cast<double>(props.size());
}

std::vector<std::string> pair_names(const std::string& prefix) {
  std::vector<std::string> names;
  names.reserve(N * N);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) names.push_back(prefix + aa(i) + aa(j));
  }
  return names;
}

// Composition block plus `tail.size()` correlation factors, normalized as
// f_r / (1 + w * sum(tail)) and w * t_j / (1 + w * sum(tail)).
std::vector<double> order_coupled(const Peptide& p, const std::vector<double>& tail,
                                  double weight) {
  const auto freq = composition(p);
  double tail_sum = 0.0;
  for (double t : tail) tail_sum += t;
  double freq_sum = 0.0;
  for (double f : freq) freq_sum += f;
  const double denom = freq_sum + weight * tail_sum;
  std::vector<double> out;
  out.reserve(N + tail.size());
  for (double f : freq) out.push_back(f / denom);
  for (double t : tail) out.push_back(weight * t / denom);
  return out;
}

}  // namespace

void DescriptorConfig::validate() const {
  if (cksaagp_max_gap < 0) throw ValidationError("cksaagp_max_gap must be >= 0");
  if (distancepair_max_distance < 1) throw ValidationError("distancepair_max_distance must be >= 1");
  if (paac_lambda < 1) throw ValidationError("paac_lambda must be >= 1");
  if (!(paac_weight > 0.0)) throw ValidationError("paac_weight must be > 0");
  if (qso_nlag < 1) throw ValidationError("qso_nlag must be >= 1");
  if (!(qso_weight > 0.0)) throw ValidationError("qso_weight must be > 0");
  if (binary_pad_len < 1) throw ValidationError("binary_pad_len must be >= 1");
}

std::size_t DescriptorConfig::total_dim() const {
  const auto k = static_cast<std::size_t>(cksaagp_max_gap);
  const auto d = static_cast<std::size_t>(distancepair_max_distance);
  return N + N * N + G * G * (k + 1) + (N + N * N * d) + (N + paac_lambda) + (N + qso_nlag) + 5 +
         G * G * G + N * static_cast<std::size_t>(binary_pad_len) + N * N;
}

std::size_t DescriptorConfig::min_length() const {
  return std::max<std::size_t>(
      {3, static_cast<std::size_t>(paac_lambda) + 1, static_cast<std::size_t>(qso_nlag) + 1});
}

FeatureVector aac(const Peptide& p) {
  auto schema = cached_schema("aac", [] {
    Schema s;
    for (std::size_t i = 0; i < N; ++i) s.names.push_back("AAC." + aa(i));
    return s;
  });
  return {composition(p), schema};
}

FeatureVector dpc(const Peptide& p) {
  require_length(p, 2, "DPC");
  auto schema = cached_schema("dpc", [] { return Schema{pair_names("DPC."), {}}; });
  auto counts = dipeptide_counts(p, 1);
  const auto denom = static_cast<double>(p.size() - 1);
  for (auto& v : counts) v /= denom;
  return {std::move(counts), schema};
}

FeatureVector dde(const Peptide& p) {
  require_length(p, 2, "DDE");
  auto schema = cached_schema("dde", [] { return Schema{pair_names("DDE."), {}}; });
  const auto& codons = tables::codon_counts();
  const auto pairs = static_cast<double>(p.size() - 1);
  auto values = dipeptide_counts(p, 1);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const double tm = (codons[i] / 61.0) * (codons[j] / 61.0);
      const double tv = tm * (1.0 - tm) / pairs;
      double& v = values[i * N + j];
      v = (v / pairs - tm) / std::sqrt(tv);
    }
  }
  return {std::move(values), schema};
}

FeatureVector cksaagp(const Peptide& p, int max_gap) {
  if (max_gap < 0) throw ValidationError("CKSAAGP max gap must be >= 0");
  require_length(p, 2, "CKSAAGP");
  const auto k = static_cast<std::size_t>(max_gap);
  auto schema = cached_schema("cksaagp." + std::to_string(k), [k] {
    Schema s;
    for (std::size_t g = 0; g <= k; ++g) {
      for (std::size_t a = 0; a < G; ++a) {
        for (std::size_t b = 0; b < G; ++b) {
          s.names.push_back("CKSAAGP." + group(a) + "." + group(b) + ".gap" + std::to_string(g));
        }
      }
    }
    return s;
  });
  const auto& groups = tables::residue_groups();
  std::vector<double> values(G * G * (k + 1), 0.0);
  const std::size_t len = p.size();
  for (std::size_t g = 0; g <= k; ++g) {
    if (len <= g + 1) continue;  // no pairs at this gap
    double* block = values.data() + g * G * G;
    const std::size_t npairs = len - g - 1;
    for (std::size_t i = 0; i < npairs; ++i) {
      block[groups[p.index(i)] * G + groups[p.index(i + g + 1)]] += 1.0;
    }
    for (std::size_t c = 0; c < G * G; ++c) block[c] /= static_cast<double>(npairs);
  }
  return {std::move(values), schema};
}

FeatureVector gtpc(const Peptide& p) {
  require_length(p, 3, "GTPC");
  auto schema = cached_schema("gtpc", [] {
    Schema s;
    for (std::size_t a = 0; a < G; ++a) {
      for (std::size_t b = 0; b < G; ++b) {
        for (std::size_t c = 0; c < G; ++c) {
          s.names.push_back("GTPC." + group(a) + "." + group(b) + "." + group(c));
        }
      }
    }
    return s;
  });
  const auto& groups = tables::residue_groups();
  std::vector<double> values(G * G * G, 0.0);
  const std::size_t triples = p.size() - 2;
  for (std::size_t i = 0; i < triples; ++i) {
    values[(groups[p.index(i)] * G + groups[p.index(i + 1)]) * G + groups[p.index(i + 2)]] += 1.0;
  }
  for (auto& v : values) v /= static_cast<double>(triples);
  return {std::move(values), schema};
}

FeatureVector paac(const Peptide& p, int lambda, double weight) {
  if (lambda < 1) throw ValidationError("PAAC lambda must be >= 1");
  if (!(weight > 0.0)) throw ValidationError("PAAC weight must be > 0");
  const auto lam = static_cast<std::size_t>(lambda);
  if (p.size() <= lam) {
    throw ValidationError("PAAC requires length > lambda (" + std::to_string(lam) + "), got " +
                          std::to_string(p.size()) + " for '" + p.id() + "'");
  }
  auto schema = cached_schema("paac." + std::to_string(lam), [lam] {
    Schema s;
    for (std::size_t i = 0; i < N; ++i) s.names.push_back("PAAC." + aa(i));
    for (std::size_t j = 1; j <= lam; ++j) s.names.push_back("PAAC.lambda" + std::to_string(j));
    return s;
  });
  std::vector<double> theta(lam, 0.0);
  for (std::size_t j = 1; j <= lam; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i + j < p.size(); ++i) sum += paac_theta(p.index(i), p.index(i + j));
    theta[j - 1] = sum / static_cast<double>(p.size() - j);
  }
  return {order_coupled(p, theta, weight), schema};
}

FeatureVector qsorder(const Peptide& p, int nlag, double weight) {
  if (nlag < 1) throw ValidationError("QSOrder nlag must be >= 1");
  if (!(weight > 0.0)) throw ValidationError("QSOrder weight must be > 0");
  const auto lag = static_cast<std::size_t>(nlag);
  if (p.size() <= lag) {
    throw ValidationError("QSOrder requires length > nlag (" + std::to_string(lag) + "), got " +
                          std::to_string(p.size()) + " for '" + p.id() + "'");
  }
  auto schema = cached_schema("qsorder." + std::to_string(lag), [lag] {
    Schema s;
    for (std::size_t i = 0; i < N; ++i) s.names.push_back("QSOrder." + aa(i));
    for (std::size_t d = 1; d <= lag; ++d) s.names.push_back("QSOrder.lag" + std::to_string(d));
    return s;
  });
  const auto& dist = tables::schneider_wrede();
  std::vector<double> tau(lag, 0.0);
  for (std::size_t d = 1; d <= lag; ++d) {
    for (std::size_t i = 0; i + d < p.size(); ++i) {
      const double v = dist[p.index(i)][p.index(i + d)];
      tau[d - 1] += v * v;
    }
  }
  return {order_coupled(p, tau, weight), schema};
}

FeatureVector zscale(const Peptide& p) {
  auto schema = cached_schema("zscale", [] {
    Schema s;
    for (int z = 1; z <= 5; ++z) s.names.push_back("ZScale.z" + std::to_string(z));
    return s;
  });
  const auto& table = tables::zscales();
  std::vector<double> values(5, 0.0);
  for (auto c : p.codes()) {
    for (std::size_t z = 0; z < 5; ++z) values[z] += table[c][z];
  }
  for (auto& v : values) v /= static_cast<double>(p.size());
  return {std::move(values), schema};
}

FeatureVector distance_pair(const Peptide& p, int max_distance) {
  if (max_distance < 1) throw ValidationError("DistancePair max distance must be >= 1");
  require_length(p, 2, "DistancePair");
  const auto dmax = static_cast<std::size_t>(max_distance);
  auto schema = cached_schema("distancepair." + std::to_string(dmax), [dmax] {
    Schema s;
    for (std::size_t i = 0; i < N; ++i) s.names.push_back("DistancePair." + aa(i));
    for (std::size_t d = 1; d <= dmax; ++d) {
      auto names = pair_names("DistancePair.d" + std::to_string(d) + ".");
      s.names.insert(s.names.end(), names.begin(), names.end());
    }
    return s;
  });
  std::vector<double> values = composition(p);
  values.reserve(N + N * N * dmax);
  for (std::size_t d = 1; d <= dmax; ++d) {
    auto counts = dipeptide_counts(p, d);
    if (p.size() > d) {
      const auto denom = static_cast<double>(p.size() - d);
      for (auto& v : counts) v /= denom;
    }
    values.insert(values.end(), counts.begin(), counts.end());
  }
  return {std::move(values), schema};
}

FeatureVector binary(const Peptide& p, int pad_len) {
  if (pad_len < 1) throw ValidationError("Binary pad length must be >= 1");
  const auto pad = static_cast<std::size_t>(pad_len);
  if (p.size() > pad) {
    throw ValidationError("Binary encoding requires length <= " + std::to_string(pad) +
                          ", got " + std::to_string(p.size()) + " for '" + p.id() + "'");
  }
  auto schema = cached_schema("binary." + std::to_string(pad), [pad] {
    Schema s;
    for (std::size_t pos = 1; pos <= pad; ++pos) {
      for (std::size_t i = 0; i < N; ++i) {
        s.names.push_back("Binary.p" + std::to_string(pos) + "." + aa(i));
      }
    }
    return s;
  });
  std::vector<double> values(pad * N, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) values[i * N + p.index(i)] = 1.0;
  return {std::move(values), schema};
}

std::shared_ptr<const Schema> encode_all_schema(const DescriptorConfig& cfg) {
  cfg.validate();
  const std::string key = "all." + std::to_string(cfg.cksaagp_max_gap) + "." +
                          std::to_string(cfg.distancepair_max_distance) + "." +
                          std::to_string(cfg.paac_lambda) + "." + std::to_string(cfg.qso_nlag) +
                          "." + std::to_string(cfg.binary_pad_len);
  return cached_schema(key, [&cfg] {
    // A long enough probe peptide yields every sub-schema.
    const std::size_t probe_len =
        std::max<std::size_t>(cfg.min_length(), 1);
    const Peptide probe("schema-probe", std::string(probe_len, 'A'),
                        std::max<std::size_t>(probe_len, static_cast<std::size_t>(cfg.binary_pad_len)));
    const std::vector<std::pair<std::string, FeatureVector>> parts = {
        {"AAC", aac(probe)},
        {"DPC", dpc(probe)},
        {"CKSAAGP", cksaagp(probe, cfg.cksaagp_max_gap)},
        {"DistancePair", distance_pair(probe, cfg.distancepair_max_distance)},
        {"PAAC", paac(probe, cfg.paac_lambda, cfg.paac_weight)},
        {"QSOrder", qsorder(probe, cfg.qso_nlag, cfg.qso_weight)},
        {"ZScale", zscale(probe)},
        {"GTPC", gtpc(probe)},
        {"Binary", binary(probe, cfg.binary_pad_len)},
        {"DDE", dde(probe)},
    };
    Schema s;
    for (const auto& [name, fv] : parts) {
      s.blocks.push_back({name, s.names.size(), fv.size()});
      s.names.insert(s.names.end(), fv.schema->names.begin(), fv.schema->names.end());
    }
    return s;
  });
}

FeatureVector encode_all(const Peptide& p, const DescriptorConfig& cfg) {
  auto schema = encode_all_schema(cfg);
  std::vector<double> values;
  values.reserve(schema->names.size());
  auto append = [&](const char* name, auto&& encode) {
    try {
      const FeatureVector fv = encode();
      values.insert(values.end(), fv.values.begin(), fv.values.end());
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(name) + ": " + e.what());
    }
  };
  append("AAC", [&] { return aac(p); });
  append("DPC", [&] { return dpc(p); });
  append("CKSAAGP", [&] { return cksaagp(p, cfg.cksaagp_max_gap); });
  append("DistancePair", [&] { return distance_pair(p, cfg.distancepair_max_distance); });
  append("PAAC", [&] { return paac(p, cfg.paac_lambda, cfg.paac_weight); });
  append("QSOrder", [&] { return qsorder(p, cfg.qso_nlag, cfg.qso_weight); });
  append("ZScale", [&] { return zscale(p); });
  append("GTPC", [&] { return gtpc(p); });
  append("Binary", [&] { return binary(p, cfg.binary_pad_len); });
  append("DDE", [&] { return dde(p); });
  return {std::move(values), std::move(schema)};
}

}  // namespace avp::descriptors
