#include "mitonet_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "mitonet/checkpoint.hpp"
#include "mitonet/config.hpp"
#include "mitonet/data.hpp"
#include "mitonet/errors.hpp"
#include "mitonet/metrics.hpp"
#include "mitonet/parallel.hpp"
#include "mitonet/png_io.hpp"
#include "mitonet/train.hpp"

namespace mitonet::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kHistoryFile = "history.jsonl";
constexpr const char* kValManifestFile = "val_manifest.csv";
constexpr const char* kValReportFile = "val_report.json";

struct InitConfigArgs {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string numeric_mode;
};

struct SynthArgs {
  std::string out;
  data::SynthConfig cfg;
};

struct NormalizeArgs {
  std::string manifest;
  std::string out;
  std::string config;
  int jobs = 1;
};

struct TrainArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string numeric_mode;
  int jobs = 1;
};

struct EvaluateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string report;
  std::optional<double> threshold;
  int jobs = 1;
};

struct ReportArgs {
  std::string path;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

// Manifest paths are stored relative to the directory holding the manifest.
fs::path relative_to(const fs::path& target, const fs::path& dir) {
  return fs::weakly_canonical(target).lexically_proximate(fs::weakly_canonical(dir));
}

int run_init_config(const InitConfigArgs& a, std::ostream& out) {
  RunConfig cfg;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.numeric_mode.empty()) cfg.numeric_mode = parse_numeric_mode(a.numeric_mode);
  const std::string text = to_json(cfg).dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return kExitOk;
}

int run_synth(const SynthArgs& a, std::ostream& out) {
  const auto manifest = data::generate_synthetic(a.cfg, a.out);
  std::size_t positives = 0;
  for (const auto& e : manifest.entries) positives += e.label == 1 ? 1 : 0;
  out << "wrote " << manifest.entries.size() << " patches (" << positives << " positive) to "
      << a.out << "\n";
  return kExitOk;
}

int run_normalize(const NormalizeArgs& a, std::ostream& out) {
  const RunConfig cfg = config_or_default(a.config);
  const auto manifest = data::load_manifest(a.manifest);
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);

  std::vector<data::ManifestEntry> entries = manifest.entries;
  std::vector<char> normalized(entries.size(), 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const fs::path& p = entries[i].path;
    bool plain = p.is_relative();
    for (const auto& part : p) plain = plain && part != "..";
    if (!plain) {
      std::ostringstream name;
      name << "patches/patch_" << std::setw(5) << std::setfill('0') << i << ".png";
      entries[i].path = name.str();
    }
  }
  parallel_for(entries.size(), a.jobs, [&](std::size_t i) {
    const Patch src = data::load_patch(manifest, manifest.entries[i]);
    auto outcome = stain::normalize_or_passthrough(src, cfg.stain.params);
    normalized[i] = outcome.normalized ? 1 : 0;
    const fs::path dst = out_dir / entries[i].path;
    fs::create_directories(dst.parent_path());
    write_png(dst, outcome.patch);
  });
  data::write_manifest(out_dir / "manifest.csv", entries);

  const auto count = std::count(normalized.begin(), normalized.end(), 1);
  out << "normalized " << count << " of " << entries.size() << " patches";
  if (static_cast<std::size_t>(count) < entries.size()) {
    out << " (" << entries.size() - count << " passed through unchanged)";
  }
  out << "\n";
  return kExitOk;
}

template <typename T>
void train_as(const RunConfig& cfg, const std::vector<data::LabeledPatch>& dataset,
              const data::Manifest& manifest, const fs::path& out_dir, int jobs,
              std::ostream& out) {
  fs::create_directories(out_dir);
  std::ofstream history(out_dir / kHistoryFile, std::ios::binary);
  if (!history) throw IoError("cannot write " + (out_dir / kHistoryFile).string());

  train::TrainHooks hooks;
  hooks.jobs = jobs;
  hooks.on_epoch = [&](const train::EpochRecord& rec) {
    history << train::to_json(rec).dump() << "\n";
    history.flush();
    out << "epoch " << rec.epoch << " loss " << std::fixed << std::setprecision(4)
        << rec.train_loss << " val " << metrics::format_row(rec.val)
        << (rec.improved ? " *" : "") << "\n";
    out.unsetf(std::ios::floatfield);
    out.flush();
  };
  auto result = train::train_loop<T>(dataset, cfg, hooks);
  if (!history) throw IoError("failed writing " + (out_dir / kHistoryFile).string());

  Checkpoint<T> ckpt;
  ckpt.config = cfg;
  ckpt.params = std::move(result.best_params);
  ckpt.optim_state = std::move(result.best_optim_state);
  ckpt.epoch = result.best_epoch;
  ckpt.best_bacc = result.best_bacc;
  checkpoint_save(ckpt, out_dir);

  std::vector<data::ManifestEntry> val_entries;
  for (std::size_t i : result.split.val) {
    data::ManifestEntry e = manifest.entries[i];
    e.path = relative_to(manifest.resolve(e), out_dir);
    val_entries.push_back(std::move(e));
  }
  data::write_manifest(out_dir / kValManifestFile, val_entries);
  write_text(out_dir / kValReportFile, metrics::render_report(result.final_report).dump(2) + "\n");

  if (result.stain_passthrough > 0) {
    out << result.stain_passthrough << " training patches kept their original stain\n";
  }
  out << "best epoch " << result.best_epoch << " val bacc " << result.best_bacc << "\n";
}

int run_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = config_or_default(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.numeric_mode.empty()) cfg.numeric_mode = parse_numeric_mode(a.numeric_mode);
  cfg.validate();
  const auto manifest = data::load_manifest(a.manifest);
  const auto dataset = data::load_dataset(manifest, a.jobs);
  if (cfg.numeric_mode == NumericMode::reference64) {
    train_as<double>(cfg, dataset, manifest, a.out, a.jobs, out);
  } else {
    train_as<float>(cfg, dataset, manifest, a.out, a.jobs, out);
  }
  return kExitOk;
}

template <typename T>
metrics::DomainReport evaluate_as(const fs::path& ckpt_dir,
                                  const std::vector<data::LabeledPatch>& dataset,
                                  std::optional<double> threshold, int jobs) {
  const auto ckpt = checkpoint_load<T>(ckpt_dir);
  const RunConfig& cfg = ckpt.config;
  return train::evaluate(ckpt.params, cfg.model, dataset, cfg.augment, cfg.eval_stain_policy(),
                         threshold.value_or(cfg.data.threshold), jobs);
}

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto manifest = data::load_manifest(a.manifest);
  const auto dataset = data::load_dataset(manifest, a.jobs);
  const auto report = checkpoint_numeric_mode(a.checkpoint) == NumericMode::reference64
                           ? evaluate_as<double>(a.checkpoint, dataset, a.threshold, a.jobs)
                           : evaluate_as<float>(a.checkpoint, dataset, a.threshold, a.jobs);
  if (!a.report.empty()) write_text(a.report, metrics::render_report(report).dump(2) + "\n");
  out << metrics::format_table(report);
  return kExitOk;
}

int run_report(const ReportArgs& a, std::ostream& out) {
  std::ifstream f(a.path);
  if (!f) throw MissingFile("cannot open " + a.path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError(a.path + ": " + e.what());
  }
  out << metrics::format_table(metrics::parse_report(doc));
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Atypical mitosis classification: stain normalization, imbalance-aware training "
               "and domain-wise evaluation",
               "mitonet"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  const std::vector<std::string> modes{"reference64", "fast32"};

  InitConfigArgs init_args;
  auto* init = app.add_subcommand("init-config", "Write a run config with every default filled in");
  init->add_option("--out", init_args.out, "Destination file (stdout if omitted)");
  init->add_option("--seed", init_args.seed, "Run seed");
  init->add_option("--numeric-mode", init_args.numeric_mode)->check(CLI::IsMember(modes));

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic stained-patch dataset");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--n", synth_args.cfg.n_samples, "Number of patches");
  synth->add_option("--pos-fraction", synth_args.cfg.pos_fraction, "Fraction of positives");
  synth->add_option("--domains", synth_args.cfg.n_domains, "Number of staining domains");
  synth->add_option("--seed", synth_args.cfg.seed, "Generator seed");
  synth->add_option("--patch-size", synth_args.cfg.patch_size, "Patch side length in pixels");
  synth->add_option("--separation", synth_args.cfg.separation, "Class separation in [0, 1]");

  NormalizeArgs norm_args;
  auto* norm = app.add_subcommand("normalize", "Macenko-normalize every patch of a manifest");
  norm->add_option("--manifest", norm_args.manifest, "Input manifest")->required();
  norm->add_option("--out", norm_args.out, "Output directory")->required();
  norm->add_option("--config", norm_args.config, "Run config supplying stain parameters");
  norm->add_option("--jobs", norm_args.jobs, "Worker threads")->check(CLI::PositiveNumber);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a classifier and write a checkpoint");
  train->add_option("--config", train_args.config, "Run config (defaults if omitted)");
  train->add_option("--manifest", train_args.manifest, "Training manifest")->required();
  train->add_option("--out", train_args.out, "Checkpoint directory")->required();
  train->add_option("--seed", train_args.seed, "Override the config seed");
  train->add_option("--numeric-mode", train_args.numeric_mode)->check(CLI::IsMember(modes));
  train->add_option("--jobs", train_args.jobs, "Worker threads")->check(CLI::PositiveNumber);

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score a manifest with a checkpoint");
  evaluate->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory")->required();
  evaluate->add_option("--manifest", eval_args.manifest, "Manifest to score")->required();
  evaluate->add_option("--report", eval_args.report, "Write the JSON report here");
  evaluate->add_option("--threshold", eval_args.threshold, "Decision threshold on the score")
      ->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--jobs", eval_args.jobs, "Worker threads")->check(CLI::PositiveNumber);

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Print a JSON report as a table");
  report->add_option("report", report_args.path, "JSON report file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (e.get_name() != "RequiredError" && e.get_name() != "RequiredSubcommandError") {
      err << app.help();
    }
    return kExitUsage;
  }

  try {
    if (init->parsed()) return run_init_config(init_args, out);
    if (synth->parsed()) return run_synth(synth_args, out);
    if (norm->parsed()) return run_normalize(norm_args, out);
    if (train->parsed()) return run_train(train_args, out);
    if (evaluate->parsed()) return run_evaluate(eval_args, out);
    if (report->parsed()) return run_report(report_args, out);
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mitonet::cli
