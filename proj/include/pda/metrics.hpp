#pragma once

// Line-delimited metrics records, model snapshots, and plot-ready tables.
//
// Each metrics line is one JSON object carrying "schema" = "MAJOR.MINOR".
// Readers accept any minor revision of the major version they know. Doubles
// are written in shortest round-trip form, so every value reads back exactly.

#include <cstddef>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pda/data.hpp"
#include "pda/errors.hpp"
#include "pda/experiment.hpp"
#include "pda/nets.hpp"
#include "pda/theory.hpp"

namespace pda {

inline constexpr int kMetricsSchemaMajor = 1;
inline constexpr int kMetricsSchemaMinor = 0;

inline nlohmann::ordered_json to_json(const LossBreakdown& l) {
  return {{"l_sup", l.l_sup}, {"l_self", l.l_self}, {"l_adv", l.l_adv}, {"objective", l.objective}, {"l_ent", l.l_ent}};
}

inline nlohmann::ordered_json to_json(const BoundReport& b) {
  nlohmann::ordered_json j;
  j["epoch"] = b.epoch;
  j["w_error_l1"] = b.w_error_l1;
  j["delta_bar"] = b.delta_bar;
  j["e_type1"] = b.e_type1;
  j["e_src_shared"] = b.e_src_shared;
  j["e_tgt_shared"] = b.e_tgt_shared;
  j["d_hdh_proxy"] = b.d_hdh_proxy;
  j["rhs_intermediate"] = b.rhs_intermediate;
  j["rhs_full"] = b.rhs_full;
  return j;
}

inline nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["schema"] = std::to_string(kMetricsSchemaMajor) + "." + std::to_string(kMetricsSchemaMinor);
  j["epoch"] = r.epoch;
  j["target_accuracy"] = r.target_accuracy ? nlohmann::ordered_json(*r.target_accuracy) : nlohmann::ordered_json();
  j["source_accuracy"] = r.source_accuracy;
  j["w"] = r.w;
  j["loss"] = to_json(r.loss);
  j["bound"] = r.bound ? to_json(*r.bound) : nlohmann::ordered_json();
  j["simplex_deviation"] = r.simplex_deviation;
  if (r.wall_seconds) j["wall_seconds"] = *r.wall_seconds;
  return j;
}

inline std::string serialize_record(const MetricsRecord& r) { return to_json(r).dump(); }

namespace detail {

template <class T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("metrics: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics: field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline MetricsRecord record_from_json(const nlohmann::json& j) {
  const std::string schema = detail::field<std::string>(j, "schema");
  const auto dot = schema.find('.');
  int major = -1;
  if (dot == std::string::npos || !detail::parse_number(std::string_view(schema).substr(0, dot), major))
    throw FormatError("metrics: malformed schema version '" + schema + "'");
  if (major != kMetricsSchemaMajor)
    throw FormatError("metrics: unsupported schema major version " + std::to_string(major));

  MetricsRecord r;
  r.epoch = detail::field<long>(j, "epoch");
  if (!j.contains("target_accuracy")) throw FormatError("metrics: missing field 'target_accuracy'");
  if (!j.at("target_accuracy").is_null()) r.target_accuracy = detail::field<double>(j, "target_accuracy");
  r.source_accuracy = detail::field<double>(j, "source_accuracy");
  r.w = detail::field<std::vector<double>>(j, "w");
  const auto& l = j.at("loss");
  r.loss.l_sup = detail::field<double>(l, "l_sup");
  r.loss.l_self = detail::field<double>(l, "l_self");
  r.loss.l_adv = detail::field<double>(l, "l_adv");
  r.loss.objective = detail::field<double>(l, "objective");
  r.loss.l_ent = detail::field<double>(l, "l_ent");
  if (!j.contains("bound")) throw FormatError("metrics: missing field 'bound'");
  if (!j.at("bound").is_null()) {
    const auto& b = j.at("bound");
    BoundReport br;
    br.epoch = detail::field<long>(b, "epoch");
    br.w_error_l1 = detail::field<double>(b, "w_error_l1");
    br.delta_bar = detail::field<double>(b, "delta_bar");
    br.e_type1 = detail::field<double>(b, "e_type1");
    br.e_src_shared = detail::field<double>(b, "e_src_shared");
    br.e_tgt_shared = detail::field<double>(b, "e_tgt_shared");
    br.d_hdh_proxy = detail::field<double>(b, "d_hdh_proxy");
    br.rhs_intermediate = detail::field<double>(b, "rhs_intermediate");
    br.rhs_full = detail::field<double>(b, "rhs_full");
    r.bound = br;
  }
  r.simplex_deviation = detail::field<double>(j, "simplex_deviation");
  if (j.contains("wall_seconds")) r.wall_seconds = detail::field<double>(j, "wall_seconds");
  return r;
}

inline MetricsRecord parse_record(const std::string& line) {
  try {
    return record_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics: ") + e.what());
  }
}

inline std::vector<MetricsRecord> read_metrics(std::istream& is) {
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(parse_record(line));
  return out;
}

inline std::vector<MetricsRecord> load_metrics(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open metrics file " + path);
  return read_metrics(is);
}

// Columns of the bound-trace table, in order.
inline const std::vector<std::string>& bound_trace_columns() {
  static const std::vector<std::string> cols{"epoch",        "w_error_l1",   "delta_bar",
                                             "e_type1",      "e_src_shared", "d_hdh_proxy",
                                             "rhs_full",     "e_tgt_shared", "rhs_intermediate"};
  return cols;
}

// One row per record; records without a bound report are an error.
inline void write_bound_trace(std::ostream& os, const std::vector<MetricsRecord>& records) {
  const auto& cols = bound_trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const MetricsRecord& r : records) {
    if (!r.bound) throw FormatError("bound-trace: epoch " + std::to_string(r.epoch) + " has no bound report");
    const BoundReport& b = *r.bound;
    os << r.epoch << ',' << format_double(b.w_error_l1) << ',' << format_double(b.delta_bar) << ','
       << format_double(b.e_type1) << ',' << format_double(b.e_src_shared) << ',' << format_double(b.d_hdh_proxy)
       << ',' << format_double(b.rhs_full) << ',' << format_double(b.e_tgt_shared) << ','
       << format_double(b.rhs_intermediate) << '\n';
  }
}

inline void write_confusion_csv(std::ostream& os, const std::vector<std::vector<std::size_t>>& confusion) {
  os << "true";
  for (std::size_t j = 0; j < confusion.size(); ++j) os << ",pred" << j;
  os << '\n';
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    os << i;
    for (std::size_t v : confusion[i]) os << ',' << v;
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Model snapshots
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json mlp_to_json(const Mlp& m) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const DenseLayer& l : m.layers()) {
    nlohmann::ordered_json lj;
    lj["in"] = l.in_dim();
    lj["out"] = l.out_dim();
    lj["activation"] = l.activation == Activation::relu ? "relu" : "none";
    lj["weight"] = l.weight.value().values();
    lj["bias"] = l.bias.value().values();
    layers.push_back(lj);
  }
  return {{"in_dim", m.in_dim()}, {"layers", layers}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  const std::size_t in_dim = j.at("in_dim").get<std::size_t>();
  std::vector<DenseLayer> layers;
  for (const auto& lj : j.at("layers")) {
    const std::size_t in = lj.at("in").get<std::size_t>(), out = lj.at("out").get<std::size_t>();
    const std::string act = lj.at("activation").get<std::string>();
    if (act != "relu" && act != "none") throw FormatError("model: unknown activation " + act);
    DenseLayer l{Tensor(Matrix(in, out, lj.at("weight").get<std::vector<double>>()), true),
                 Tensor(Matrix(1, out, lj.at("bias").get<std::vector<double>>()), true),
                 act == "relu" ? Activation::relu : Activation::none};
    layers.push_back(std::move(l));
  }
  return Mlp(in_dim, std::move(layers));
}

}  // namespace detail

inline nlohmann::ordered_json model_to_json(const ModelBundle& b) {
  nlohmann::ordered_json j;
  j["schema"] = "1.0";
  j["feature"] = detail::mlp_to_json(b.feature);
  j["classifier"] = detail::mlp_to_json(b.classifier);
  const auto& d = b.discriminator;
  nlohmann::ordered_json dj;
  dj["shared_trunk"] = d.shared_trunk();
  if (d.shared_trunk()) {
    dj["trunk"] = detail::mlp_to_json(d.trunk());
  } else {
    nlohmann::ordered_json trunks = nlohmann::ordered_json::array();
    for (const Mlp& t : d.private_trunks()) trunks.push_back(detail::mlp_to_json(t));
    dj["private_trunks"] = trunks;
  }
  nlohmann::ordered_json heads = nlohmann::ordered_json::array();
  for (const Mlp& h : d.heads()) heads.push_back(detail::mlp_to_json(h));
  dj["heads"] = heads;
  j["discriminator"] = dj;
  return j;
}

inline ModelBundle model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>().rfind("1.", 0) != 0) throw FormatError("model: unsupported schema");
    ModelBundle b;
    b.feature = detail::mlp_from_json(j.at("feature"));
    b.classifier = detail::mlp_from_json(j.at("classifier"));
    const auto& dj = j.at("discriminator");
    std::vector<Mlp> heads;
    for (const auto& h : dj.at("heads")) heads.push_back(detail::mlp_from_json(h));
    if (dj.at("shared_trunk").get<bool>()) {
      b.discriminator = MultiTaskDiscriminator(detail::mlp_from_json(dj.at("trunk")), std::move(heads));
    } else {
      std::vector<Mlp> trunks;
      for (const auto& t : dj.at("private_trunks")) trunks.push_back(detail::mlp_from_json(t));
      b.discriminator = MultiTaskDiscriminator(std::move(trunks), std::move(heads));
    }
    b.validate();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

inline void save_model(const ModelBundle& b, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << model_to_json(b).dump() << '\n';
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open model " + path);
  try {
    return model_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

}  // namespace pda
