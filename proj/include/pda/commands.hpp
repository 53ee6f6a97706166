#pragma once

// Implementations behind the `pda` command-line tool. Each command validates
// everything it can before touching the filesystem.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pda/ablation.hpp"
#include "pda/config.hpp"
#include "pda/data.hpp"
#include "pda/experiment.hpp"
#include "pda/metrics.hpp"

namespace pda::cli {

enum class LogLevel { info, debug };

// PDA_LOG=debug|info; anything else means info.
inline LogLevel log_level() {
  const char* v = std::getenv("PDA_LOG");
  return v && std::string(v) == "debug" ? LogLevel::debug : LogLevel::info;
}

inline void log_info(const std::string& msg) { std::cerr << "[info] " << msg << '\n'; }

inline void log_debug(const std::string& msg) {
  if (log_level() == LogLevel::debug) std::cerr << "[debug] " << msg << '\n';
}

namespace fs = std::filesystem;

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error("failed writing " + path.string());
}

inline void write_effective_config(const RunConfig& c, const std::string& dir) {
  write_text(fs::path(dir) / "effective_config.json", config_to_json(c).dump(2) + "\n");
}

struct GeneratedFiles {
  std::string source;
  std::string target;
  std::string metadata;
};

// source.csv, target.csv (labels kept for oracle evaluation) and
// metadata.json under `dir`.
inline GeneratedFiles generate_data(const RunConfig& c, const std::string& dir) {
  if (c.data.kind != DataConfig::Kind::synthetic) throw ConfigError("generate-data: config has no synthetic data spec");
  c.data.synthetic.validate();
  ToyData d = generate_toy(c.data.synthetic);
  ensure_dir(dir);
  Dataset target = d.target;
  for (std::size_t i = 0; i < target.size(); ++i) target.samples[i].y = d.oracle.target_labels[i];
  GeneratedFiles f{(fs::path(dir) / "source.csv").string(), (fs::path(dir) / "target.csv").string(),
                   (fs::path(dir) / "metadata.json").string()};
  save_csv(d.source, f.source);
  save_csv(target, f.target);
  save_metadata(DatasetMetadata{c.data.synthetic.num_source_classes, d.oracle.shared_classes}, f.metadata);
  log_info("wrote " + std::to_string(d.source.size()) + " source and " + std::to_string(target.size()) +
           " target rows to " + dir);
  return f;
}

// metrics.jsonl, confusion.csv, model.json and effective_config.json under
// c.output_dir.
inline MetricsTrace train(const RunConfig& c) {
  ExperimentSetup setup = make_setup(c);
  ensure_dir(c.output_dir);
  write_effective_config(c, c.output_dir);
  const fs::path metrics_path = fs::path(c.output_dir) / "metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::trunc);
  if (!metrics) throw Error("cannot open " + metrics_path.string());
  const auto sink = [&](const MetricsRecord& r) {
    metrics << serialize_record(r) << '\n';
    metrics.flush();
    std::ostringstream msg;
    msg << "epoch " << r.epoch << " target_acc "
        << (r.target_accuracy ? std::to_string(*r.target_accuracy) : std::string("n/a")) << " objective "
        << r.loss.objective;
    log_debug(msg.str());
  };
  MetricsTrace trace = run_experiment(std::move(setup), sink);
  if (trace.final_eval) {
    std::ostringstream cm;
    write_confusion_csv(cm, trace.final_eval->confusion);
    write_text(fs::path(c.output_dir) / "confusion.csv", cm.str());
    log_info("final target accuracy " + std::to_string(trace.final_eval->accuracy));
  }
  save_model(trace.model, (fs::path(c.output_dir) / "model.json").string());
  return trace;
}

inline void bound_trace(const std::string& metrics_path, std::ostream& os) {
  const auto records = load_metrics(metrics_path);
  for (const MetricsRecord& r : records) {
    if (!r.bound) throw FormatError("bound-trace: epoch " + std::to_string(r.epoch) + " has no bound report");
    if (r.bound->w_error_l1 > r.bound->rhs_intermediate + kBoundTolerance)
      throw BoundViolation("bound-trace: stored record violates the intermediate inequality at epoch " +
                           std::to_string(r.epoch));
  }
  write_bound_trace(os, records);
}

inline void write_ablation_table(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,instance,class,self_training,entropy,shared,mean,std";
  const std::size_t k = rows.empty() ? 0 : rows.front().accuracies.size();
  for (std::size_t i = 0; i < k; ++i) os << ",seed" << i;
  os << '\n';
  for (const AblationRow& r : rows) {
    const VariantFlags& f = r.variant.flags;
    os << r.variant.name << ',' << f.instance_sel << ',' << f.class_sel << ',' << f.self_training << ','
       << f.entropy_min << ',' << f.shared_trunk << ',' << format_double(r.mean) << ',' << format_double(r.stddev);
    for (double a : r.accuracies) os << ',' << format_double(a);
    os << '\n';
  }
}

inline std::vector<AblationRow> ablate(const RunConfig& c, std::size_t seeds, std::size_t workers) {
  ExperimentSetup base = make_setup(c);
  ensure_dir(c.output_dir);
  write_effective_config(c, c.output_dir);
  auto rows = run_ablation(base, seeds, workers);
  std::ostringstream table;
  write_ablation_table(table, rows);
  write_text(fs::path(c.output_dir) / "ablation.csv", table.str());
  for (const AblationRow& r : rows) {
    std::ostringstream line;
    line << std::left << std::setw(40) << r.variant.name << std::right << std::fixed << std::setprecision(2)
         << 100.0 * r.mean << " +- " << 100.0 * r.stddev;
    std::cout << line.str() << '\n';
  }
  return rows;
}

// Scores <output_dir>/model.json on the target set when oracle labels exist,
// otherwise on the source set.
inline EvalResult eval(const RunConfig& c) {
  ExperimentSetup s = make_setup(c);
  ModelBundle model = load_model((fs::path(c.output_dir) / "model.json").string());
  if (model.feature.in_dim() != s.source.dim || model.num_classes() != s.num_classes)
    throw DimensionError("eval: model does not match the dataset");
  const bool on_target = s.oracle.has_value();
  const EvalResult r = on_target ? evaluate(model, s.target.features(), s.oracle->target_labels)
                                 : evaluate(model, s.source);
  std::ostringstream cm;
  write_confusion_csv(cm, r.confusion);
  write_text(fs::path(c.output_dir) / "eval_confusion.csv", cm.str());
  std::cout << (on_target ? "target" : "source") << " accuracy " << format_double(r.accuracy) << '\n';
  return r;
}

}  // namespace pda::cli
