#ifndef LUMIX_CLI_HPP
#define LUMIX_CLI_HPP

// Command-line front end. Errors are reported on stderr as
//   error: category=<kind> message=<text>
// with exit codes 2 (config / usage), 3 (io), 4 (numeric), 5 (other).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lumix/config.hpp"
#include "lumix/data.hpp"
#include "lumix/error.hpp"
#include "lumix/experiment.hpp"

namespace lumix {

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument: return 2;
    case ErrorKind::io_open:
    case ErrorKind::io_bad_magic:
    case ErrorKind::io_truncated:
    case ErrorKind::io_dim_mismatch: return 3;
    case ErrorKind::non_finite:
    case ErrorKind::numeric_divergence: return 4;
    case ErrorKind::shape_mismatch: return 5;
  }
  return 5;
}

namespace detail {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::int64_t seed = -1;
  std::string dataset;
  std::string out;
};

inline void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "config file (section.key = value)");
  cmd->add_option("--set", a.sets, "override, key=value (repeatable)");
  cmd->add_option("--seed", a.seed, "root seed");
  cmd->add_option("--dataset", a.dataset, "collage | blobs | idx:<dir>");
  cmd->add_option("--out", a.out, "output location");
}

inline void apply_dataset_flag(ExperimentConfig& cfg, const std::string& flag) {
  if (flag.empty()) return;
  if (flag.rfind("idx:", 0) == 0) {
    cfg.data.kind = DatasetKind::idx;
    cfg.data.path = flag.substr(4);
  } else if (flag == "collage") {
    cfg.data.kind = DatasetKind::collage;
  } else if (flag == "blobs") {
    cfg.data.kind = DatasetKind::blobs;
  } else {
    fail(ErrorKind::config, "unknown --dataset '" + flag + "'");
  }
}

inline ExperimentConfig resolve_config(const CommonArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  apply_dataset_flag(cfg, a.dataset);
  for (const auto& s : a.sets) {
    const auto [k, v] = split_assignment(s);
    set_config_value(cfg, k, v);
  }
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  cfg.validate();
  return cfg;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty()) continue;
    if constexpr (std::is_floating_point_v<T>) {
      out.push_back(parse_double(what, t));
    } else {
      out.push_back(static_cast<T>(parse_uint(what, t)));
    }
  }
  if (out.empty()) fail(ErrorKind::config, std::string(what) + ": empty list");
  return out;
}

struct LoadedRun {
  ExperimentConfig cfg;
  Model model;
  Dataset test;
};

inline LoadedRun load_run(const std::string& dir) {
  const std::filesystem::path p(dir);
  LoadedRun run;
  run.cfg = load_config((p / "config.cfg").string());
  run.cfg.validate();
  std::ifstream in(p / "model.bin", std::ios::binary);
  if (!in) fail(ErrorKind::io_open, "cannot open " + (p / "model.bin").string());
  run.model = load_model(in);
  run.test = make_datasets(run.cfg).test;
  return run;
}

inline void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  write_text(out_path, text);
}

}  // namespace detail

inline constexpr const char* kShuffleHeader = "#lumix-shuffle v1\ngrid,accuracy\n";

inline int cli_main(int argc, char** argv) {
  CLI::App app{"lumix: mixing-augmentation training and robustness evaluation"};
  app.require_subcommand(1);

  detail::CommonArgs train_args;
  std::size_t dump_mixed = 0;
  auto* train = app.add_subcommand("train", "train one model");
  detail::add_common(train, train_args);
  train->add_option("--dump-mixed", dump_mixed, "write the first N mixed samples as PPM");

  std::string run_dir, occ_mode = "random", fractions = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", occ_out;
  auto* occ = app.add_subcommand("eval-occlusion", "patch-dropping accuracy of a trained run");
  occ->add_option("--run", run_dir, "training output directory")->required();
  occ->add_option("--mode", occ_mode, "random | salient_proxy | nonsalient_proxy | all");
  occ->add_option("--fractions", fractions, "comma-separated information-loss fractions");
  occ->add_option("--out", occ_out, "CSV path (default stdout)");

  std::string shuf_run, grids = "1,2,4,8,16", shuf_out;
  auto* shuf = app.add_subcommand("eval-shuffle", "patch-shuffle accuracy of a trained run");
  shuf->add_option("--run", shuf_run, "training output directory")->required();
  shuf->add_option("--grids", grids, "comma-separated grid sizes");
  shuf->add_option("--out", shuf_out, "CSV path (default stdout)");

  detail::CommonArgs sweep_args;
  std::string sweep_spec;
  auto* sweep = app.add_subcommand("sweep", "multi-seed grid of config overrides");
  detail::add_common(sweep, sweep_args);
  sweep->add_option("--spec", sweep_spec, "sweep file");

  detail::CommonArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "write the configured dataset as IDX files");
  detail::add_common(gen, gen_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: category=usage message=" << e.what() << "\n";
    return 2;
  }

  try {
    if (*train) {
      ExperimentConfig cfg = detail::resolve_config(train_args);
      if (!train_args.out.empty()) cfg.output_dir = train_args.out;
      if (cfg.output_dir.empty()) cfg.output_dir = "runs/train";
      std::filesystem::create_directories(cfg.output_dir);
      const DatasetPair data = make_datasets(cfg);
      const TrainingResult r = run_training(cfg, data, {false, dump_mixed});
      write_run_outputs(cfg, r);
      const double acc = r.rows.empty() ? evaluate(r.model, data.test) : r.rows.back().test_acc;
      std::cout << "test_acc=" << format_metric(acc) << " out=" << cfg.output_dir << "\n";
    } else if (*occ) {
      const auto run = detail::load_run(run_dir);
      std::vector<OcclusionMode> modes;
      if (occ_mode == "random" || occ_mode == "all") modes.push_back(OcclusionMode::random);
      if (occ_mode == "salient_proxy" || occ_mode == "all") modes.push_back(OcclusionMode::salient_proxy);
      if (occ_mode == "nonsalient_proxy" || occ_mode == "all") modes.push_back(OcclusionMode::nonsalient_proxy);
      if (modes.empty()) detail::fail(ErrorKind::config, "unknown --mode '" + occ_mode + "'");
      const auto fr = detail::parse_list<double>(fractions, "--fractions");
      detail::emit(occ_out, occlusion_csv(run.model, run.test, modes, fr, run.cfg.occlusion_grid, run.cfg.seed));
    } else if (*shuf) {
      const auto run = detail::load_run(shuf_run);
      std::string out = kShuffleHeader;
      for (std::size_t g : detail::parse_list<std::size_t>(grids, "--grids")) {
        out += std::to_string(g) + "," + format_metric(eval_shuffle(run.model, run.test, g, run.cfg.seed)) + "\n";
      }
      detail::emit(shuf_out, out);
    } else if (*sweep) {
      const ExperimentConfig cfg = detail::resolve_config(sweep_args);
      const SweepSpec spec = sweep_spec.empty() ? SweepSpec{} : parse_sweep(read_text_file(sweep_spec));
      // Validate every cell before any training starts.
      for (const auto& cell : spec.cells) {
        ExperimentConfig c = cfg;
        for (const auto& [k, v] : cell.overrides) set_config_value(c, k, v);
        c.validate();
      }
      detail::emit(sweep_args.out, sweep_csv(run_sweep(cfg, spec)));
    } else if (*gen) {
      const ExperimentConfig cfg = detail::resolve_config(gen_args);
      const std::filesystem::path dir(gen_args.out.empty() ? "data" : gen_args.out);
      std::filesystem::create_directories(dir);
      const DatasetPair data = make_datasets(cfg);
      save_idx(data.train, (dir / "train-images-idx3-ubyte").string(), (dir / "train-labels-idx1-ubyte").string());
      save_idx(data.test, (dir / "t10k-images-idx3-ubyte").string(), (dir / "t10k-labels-idx1-ubyte").string());
      std::cout << "train=" << data.train.size() << " test=" << data.test.size() << " out=" << dir.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: category=" << to_string(e.kind()) << " message=" << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: category=internal message=" << e.what() << "\n";
    return 5;
  }
  return 0;
}

}  // namespace lumix

#endif  // LUMIX_CLI_HPP
