// pda: partial domain adaptation laboratory.
//
//   pda generate-data --config cfg.json [--seed N] [--out DIR]
//   pda train         --config cfg.json [--seed N] [--out DIR] [--variant NAME]
//   pda eval          --config cfg.json [--out DIR]
//   pda bound-trace   METRICS.jsonl [--out DIR]
//   pda ablate        --config cfg.json [--seeds K] [--workers N] [--out DIR]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pda/commands.hpp"
#include "pda/config.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
};

pda::RunConfig resolve(const CommonOptions& o) {
  pda::RunConfig c = o.config_path.empty() ? pda::RunConfig{} : pda::load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.variant) c.variant = pda::variant_from_preset(*o.variant);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial domain adaptation laboratory"};
  app.require_subcommand(1);

  CommonOptions gen_opt, train_opt, eval_opt, ablate_opt;
  std::optional<std::string> trace_out;
  std::string metrics_path;
  std::size_t seeds = 5, workers = 1, ablate_workers = 1;

  auto add_common = [](CLI::App* cmd, CommonOptions& o, bool config_required) {
    auto* opt = cmd->add_option("--config", o.config_path, "run configuration (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", o.seed, "override the run seed");
    cmd->add_option("--out", o.out, "override the output directory");
  };

  auto* gen = app.add_subcommand("generate-data", "write the synthetic toy task as CSV + metadata");
  add_common(gen, gen_opt, false);

  auto* train = app.add_subcommand("train", "train one variant and write metrics, confusion matrix and model");
  add_common(train, train_opt, false);
  train->add_option("--variant", train_opt.variant, "variant preset: source_only, dann, san, san_pp");
  train->add_option("--workers", workers, "accepted for symmetry; a single run is single-threaded");

  auto* ev = app.add_subcommand("eval", "score <out>/model.json");
  add_common(ev, eval_opt, false);

  auto* trace = app.add_subcommand("bound-trace", "tabulate bound terms per epoch from a metrics file");
  trace->add_option("metrics", metrics_path, "metrics.jsonl written by train")->required();
  trace->add_option("--out", trace_out, "write <out>/bound_trace.csv instead of stdout");

  auto* abl = app.add_subcommand("ablate", "run the six ablation variants over several seeds");
  add_common(abl, ablate_opt, false);
  abl->add_option("--seeds", seeds, "number of seeds per variant")->check(CLI::PositiveNumber);
  abl->add_option("--workers", ablate_workers, "parallel runs")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      pda::RunConfig c = resolve(gen_opt);
      if (gen_opt.seed) c.data.synthetic.seed = *gen_opt.seed;
      pda::cli::generate_data(c, c.output_dir);
    } else if (*train) {
      pda::cli::train(resolve(train_opt));
    } else if (*ev) {
      pda::cli::eval(resolve(eval_opt));
    } else if (*trace) {
      if (trace_out) {
        pda::cli::ensure_dir(*trace_out);
        const auto path = std::filesystem::path(*trace_out) / "bound_trace.csv";
        std::ofstream os(path, std::ios::binary);
        if (!os) throw pda::Error("cannot open " + path.string());
        pda::cli::bound_trace(metrics_path, os);
      } else {
        pda::cli::bound_trace(metrics_path, std::cout);
      }
    } else if (*abl) {
      pda::cli::ablate(resolve(ablate_opt), seeds, ablate_workers);
    }
  } catch (const std::exception& e) {
    std::cerr << "pda: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
