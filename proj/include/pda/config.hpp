#pragma once

// Run configuration: strict JSON with every default written back out.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pda/data.hpp"
#include "pda/errors.hpp"
#include "pda/experiment.hpp"
#include "pda/trainer.hpp"

namespace pda {

struct CsvPaths {
  std::string source;
  std::string target;
  std::string metadata;

  friend bool operator==(const CsvPaths&, const CsvPaths&) = default;
};

struct DataConfig {
  enum class Kind { synthetic, csv };
  Kind kind = Kind::synthetic;
  SyntheticSpec synthetic;
  CsvPaths csv;

  friend bool operator==(const DataConfig& a, const DataConfig& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == Kind::csv) return a.csv == b.csv;
    const SyntheticSpec &x = a.synthetic, &y = b.synthetic;
    return x.dim == y.dim && x.num_source_classes == y.num_source_classes && x.shared_classes == y.shared_classes &&
           x.samples_per_class == y.samples_per_class && x.cluster_means == y.cluster_means &&
           x.cluster_std == y.cluster_std && x.target_rotation == y.target_rotation &&
           x.target_translation == y.target_translation && x.seed == y.seed;
  }
};

struct ArchitectureConfig {
  std::vector<std::size_t> feature_widths{16, 16};
  std::vector<std::size_t> classifier_hidden{};
  std::vector<std::size_t> discriminator_trunk{};

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

struct VariantConfig {
  std::string preset = "san_pp";  // empty: explicit flags
  VariantFlags flags = VariantFlags::san_pp();

  friend bool operator==(const VariantConfig&, const VariantConfig&) = default;
};

struct RunConfig {
  DataConfig data;
  ArchitectureConfig architecture;
  VariantConfig variant;
  Schedule schedule;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool record_wall_clock = false;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline VariantConfig variant_from_preset(const std::string& name) {
  return VariantConfig{name, VariantFlags::from_preset(name)};
}

inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::read_opt;
  RunConfig c;
  detail::reject_unknown(j, {"data", "architecture", "variant", "schedule", "seed", "output_dir", "record_wall_clock"},
                         "config");
  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::reject_unknown(d, {"kind", "synthetic", "csv"}, "data");
    std::string kind = "synthetic";
    read_opt(d, "kind", kind, "data");
    if (kind == "synthetic") {
      c.data.kind = DataConfig::Kind::synthetic;
      if (d.contains("csv")) throw ConfigError("data: 'csv' given with kind synthetic");
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        detail::reject_unknown(s, {"dim", "num_source_classes", "shared_classes", "samples_per_class", "cluster_means",
                                   "cluster_std", "target_rotation", "target_translation", "seed"},
                               "data.synthetic");
        auto& sp = c.data.synthetic;
        read_opt(s, "dim", sp.dim, "data.synthetic");
        read_opt(s, "num_source_classes", sp.num_source_classes, "data.synthetic");
        read_opt(s, "shared_classes", sp.shared_classes, "data.synthetic");
        read_opt(s, "samples_per_class", sp.samples_per_class, "data.synthetic");
        read_opt(s, "cluster_means", sp.cluster_means, "data.synthetic");
        read_opt(s, "cluster_std", sp.cluster_std, "data.synthetic");
        read_opt(s, "target_rotation", sp.target_rotation, "data.synthetic");
        read_opt(s, "target_translation", sp.target_translation, "data.synthetic");
        read_opt(s, "seed", sp.seed, "data.synthetic");
      }
    } else if (kind == "csv") {
      c.data.kind = DataConfig::Kind::csv;
      if (d.contains("synthetic")) throw ConfigError("data: 'synthetic' given with kind csv");
      if (!d.contains("csv")) throw ConfigError("data: kind csv requires a 'csv' section");
      const auto& s = d.at("csv");
      detail::reject_unknown(s, {"source", "target", "metadata"}, "data.csv");
      read_opt(s, "source", c.data.csv.source, "data.csv");
      read_opt(s, "target", c.data.csv.target, "data.csv");
      read_opt(s, "metadata", c.data.csv.metadata, "data.csv");
      if (c.data.csv.source.empty() || c.data.csv.target.empty() || c.data.csv.metadata.empty())
        throw ConfigError("data.csv: source, target and metadata paths are required");
    } else {
      throw ConfigError("data.kind must be 'synthetic' or 'csv'");
    }
  }
  if (c.data.kind == DataConfig::Kind::synthetic) {
    c.data.synthetic.validate();
    c.data.synthetic.cluster_means = c.data.synthetic.resolved_means();
  }
  if (j.contains("architecture")) {
    const auto& a = j.at("architecture");
    detail::reject_unknown(a, {"feature_widths", "classifier_hidden", "discriminator_trunk"}, "architecture");
    read_opt(a, "feature_widths", c.architecture.feature_widths, "architecture");
    read_opt(a, "classifier_hidden", c.architecture.classifier_hidden, "architecture");
    read_opt(a, "discriminator_trunk", c.architecture.discriminator_trunk, "architecture");
    for (auto* v : {&c.architecture.feature_widths, &c.architecture.classifier_hidden, &c.architecture.discriminator_trunk})
      for (std::size_t w : *v)
        if (w == 0) throw ConfigError("architecture: layer widths must be positive");
  }
  if (j.contains("variant")) {
    const auto& v = j.at("variant");
    if (v.is_string()) {
      c.variant = variant_from_preset(v.get<std::string>());
    } else {
      detail::reject_unknown(v, {"adversary", "instance_sel", "class_sel", "self_training", "entropy_min", "shared_trunk"},
                             "variant");
      c.variant.preset.clear();
      VariantFlags f{};
      for (const char* key : {"adversary", "instance_sel", "class_sel", "self_training", "entropy_min", "shared_trunk"})
        if (!v.contains(key)) throw ConfigError(std::string("variant: explicit flags need '") + key + "'");
      read_opt(v, "adversary", f.adversary, "variant");
      read_opt(v, "instance_sel", f.instance_sel, "variant");
      read_opt(v, "class_sel", f.class_sel, "variant");
      read_opt(v, "self_training", f.self_training, "variant");
      read_opt(v, "entropy_min", f.entropy_min, "variant");
      read_opt(v, "shared_trunk", f.shared_trunk, "variant");
      c.variant.flags = f;
    }
    c.variant.flags.validate();
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    detail::reject_unknown(s, {"eta0", "alpha", "beta", "momentum", "total_epochs", "warmup_epochs",
                               "selection_warmup_epochs", "log_interval", "batch_size", "ramp_gamma", "lambda_max",
                               "entropy_coef"},
                           "schedule");
    auto& sc = c.schedule;
    read_opt(s, "eta0", sc.eta0, "schedule");
    read_opt(s, "alpha", sc.alpha, "schedule");
    read_opt(s, "beta", sc.beta, "schedule");
    read_opt(s, "momentum", sc.momentum, "schedule");
    read_opt(s, "total_epochs", sc.total_epochs, "schedule");
    read_opt(s, "warmup_epochs", sc.warmup_epochs, "schedule");
    read_opt(s, "selection_warmup_epochs", sc.selection_warmup_epochs, "schedule");
    read_opt(s, "log_interval", sc.log_interval, "schedule");
    read_opt(s, "batch_size", sc.batch_size, "schedule");
    read_opt(s, "ramp_gamma", sc.ramp_gamma, "schedule");
    read_opt(s, "lambda_max", sc.lambda_max, "schedule");
    read_opt(s, "entropy_coef", sc.entropy_coef, "schedule");
  }
  c.schedule.validate();
  detail::read_opt(j, "seed", c.seed, "config");
  detail::read_opt(j, "output_dir", c.output_dir, "config");
  detail::read_opt(j, "record_wall_clock", c.record_wall_clock, "config");
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  try {
    return parse_config(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

inline nlohmann::ordered_json flags_to_json(const VariantFlags& f) {
  nlohmann::ordered_json v;
  v["adversary"] = f.adversary;
  v["instance_sel"] = f.instance_sel;
  v["class_sel"] = f.class_sel;
  v["self_training"] = f.self_training;
  v["entropy_min"] = f.entropy_min;
  v["shared_trunk"] = f.shared_trunk;
  return v;
}

// The effective configuration with every default spelled out.
inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json d;
  if (c.data.kind == DataConfig::Kind::synthetic) {
    const auto& s = c.data.synthetic;
    d["kind"] = "synthetic";
    nlohmann::ordered_json sj;
    sj["dim"] = s.dim;
    sj["num_source_classes"] = s.num_source_classes;
    sj["shared_classes"] = s.shared_classes;
    sj["samples_per_class"] = s.samples_per_class;
    sj["cluster_means"] = s.resolved_means();
    sj["cluster_std"] = s.cluster_std;
    sj["target_rotation"] = s.target_rotation;
    sj["target_translation"] = s.target_translation;
    sj["seed"] = s.seed;
    d["synthetic"] = sj;
  } else {
    d["kind"] = "csv";
    d["csv"] = {{"source", c.data.csv.source}, {"target", c.data.csv.target}, {"metadata", c.data.csv.metadata}};
  }
  j["data"] = d;
  j["architecture"] = {{"feature_widths", c.architecture.feature_widths},
                       {"classifier_hidden", c.architecture.classifier_hidden},
                       {"discriminator_trunk", c.architecture.discriminator_trunk}};
  if (c.variant.preset.empty()) {
    j["variant"] = flags_to_json(c.variant.flags);
  } else {
    j["variant"] = c.variant.preset;
  }
  const auto& s = c.schedule;
  nlohmann::ordered_json sj;
  sj["eta0"] = s.eta0;
  sj["alpha"] = s.alpha;
  sj["beta"] = s.beta;
  sj["momentum"] = s.momentum;
  sj["total_epochs"] = s.total_epochs;
  sj["warmup_epochs"] = s.warmup_epochs;
  sj["selection_warmup_epochs"] = s.selection_warmup_epochs;
  sj["log_interval"] = s.log_interval;
  sj["batch_size"] = s.batch_size;
  sj["ramp_gamma"] = s.ramp_gamma;
  sj["lambda_max"] = s.lambda_max;
  sj["entropy_coef"] = s.entropy_coef;
  j["schedule"] = sj;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["record_wall_clock"] = c.record_wall_clock;
  return j;
}

// Resolves data (generating or loading) into a ready-to-run setup. Target
// labels, when present, go to the oracle only.
inline ExperimentSetup make_setup(const RunConfig& c) {
  ExperimentSetup s;
  if (c.data.kind == DataConfig::Kind::synthetic) {
    ToyData d = generate_toy(c.data.synthetic);
    s.source = std::move(d.source);
    s.target = std::move(d.target);
    s.oracle = std::move(d.oracle);
    s.num_classes = c.data.synthetic.num_source_classes;
  } else {
    s.source = load_csv(c.data.csv.source);
    Dataset target = load_csv(c.data.csv.target);
    const DatasetMetadata meta = load_metadata(c.data.csv.metadata);
    s.num_classes = meta.num_source_classes;
    for (const Sample& smp : s.source.samples)
      if (smp.domain != Domain::source) throw FormatError("source csv contains a target-domain row");
    for (const Sample& smp : target.samples)
      if (smp.domain != Domain::target) throw FormatError("target csv contains a source-domain row");
    if (target.fully_labeled() && !meta.shared_classes.empty()) {
      s.oracle = oracle::OracleContext{meta.shared_classes, target.labels()};
    }
    s.target = target.unlabeled();
  }
  s.feature_widths = c.architecture.feature_widths;
  s.classifier_hidden = c.architecture.classifier_hidden;
  s.discriminator_trunk = c.architecture.discriminator_trunk;
  s.flags = c.variant.flags;
  s.schedule = c.schedule;
  s.seed = c.seed;
  s.record_wall_clock = c.record_wall_clock;
  return s;
}

}  // namespace pda
