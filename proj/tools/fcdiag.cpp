// Command-line harness: synthesize recordings, run the two-stage pipeline,
// sweep the ablation grid, compare GAN trainers, reformat reports.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fcdiag/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fcdiag;

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;  // section.key=value
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "plain-text config file with [run]/[gan]/[diag] sections");
  cmd->add_option("--set", flags.sets,
                  "override a config key, e.g. --set run.sample_size=50")
      ->take_all();
}

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig config;
  if (!flags.config_path.empty())
    config = parse_config_file(flags.config_path);
  for (const std::string& kv : flags.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::istringstream is(csv);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::istringstream is(csv);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoull(item));
  return out;
}

int cmd_synth(const CommonFlags& flags, const std::string& out_dir,
              int windows, std::uint64_t seed) {
  RunConfig config = resolve_config(flags);
  const auto specs = resolve_class_specs(config);
  fs::create_directories(out_dir);
  std::ostringstream manifest;
  Rng root(seed);
  for (std::size_t c = 0; c < specs.size(); ++c) {
    const FaultSpec& spec = specs[c];
    const Index samples = static_cast<Index>(windows) * kWindowLength + 8;
    const double duration = static_cast<double>(samples) / spec.sample_rate_hz;
    Tensor signal = synth_signal(
        spec, duration, root.fork(static_cast<std::uint64_t>(c)).next_u64());
    std::ostringstream name;
    name << "class_" << spec.fault_class << ".vib";
    write_recording((fs::path(out_dir) / name.str()).string(), signal,
                    static_cast<std::uint32_t>(spec.sample_rate_hz),
                    static_cast<std::uint32_t>(spec.fault_class));
    manifest << name.str() << "," << spec.fault_class << ",DE\n";
  }
  std::ofstream mf(fs::path(out_dir) / "manifest.txt");
  mf << manifest.str();
  std::cout << "wrote " << specs.size() << " recordings and manifest.txt to "
            << out_dir << "\n";
  return 0;
}

int cmd_run(const CommonFlags& flags) {
  RunConfig config = resolve_config(flags);
  EvalReport report = run_pipeline(config);
  std::cout << "accuracy=" << report.accuracy << "\n";
  if (!config.output_dir.empty())
    std::cout << "report written to " << config.output_dir << "\n";
  return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::string& sizes_csv,
               const std::string& seeds_csv, int jobs) {
  RunConfig config = resolve_config(flags);
  auto rows = ablation_matrix(config, parse_int_list(sizes_csv),
                              parse_seed_list(seeds_csv), jobs);
  std::cout << ablation_csv(rows);
  if (!config.output_dir.empty())
    std::cerr << "grid written to " << config.output_dir << "/ablation.csv\n";
  for (const auto& row : rows)
    if (!row.error.empty()) return 1;
  return 0;
}

int cmd_fairness(const CommonFlags& flags) {
  RunConfig config = resolve_config(flags);
  FairnessResult result = fairness_report(config);
  std::cout << "cclr_fraction_below=" << result.cclr_fraction << "\n";
  std::cout << "dcgan_fraction_below=" << result.dcgan_fraction << "\n";
  if (!config.output_dir.empty())
    std::cout << "traces written to " << config.output_dir << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir) {
  const fs::path dir(in_dir);
  for (const char* name : {"report.csv", "confusion.csv"}) {
    std::ifstream is(dir / name);
    if (!is)
      throw std::runtime_error((dir / name).string() + ": cannot open");
    std::cout << "# " << name << "\n" << is.rdbuf() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bearing fault diagnosis under limited data: conditional "
               "CLR-GAN augmentation, contrastive joint training, 1D Fourier "
               "convolution"};
  app.require_subcommand(1);

  CommonFlags synth_flags, run_flags, ablate_flags, fairness_flags;

  auto* synth = app.add_subcommand(
      "synth", "write synthetic VIB1 recordings plus a manifest");
  std::string synth_out = "data";
  int synth_windows = 400;
  std::uint64_t synth_seed = 1;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--windows", synth_windows, "windows per class");
  synth->add_option("--seed", synth_seed, "synthesis seed");
  add_common(synth, synth_flags);

  auto* run = app.add_subcommand("run", "run the two-stage pipeline once");
  add_common(run, run_flags);

  auto* ablate =
      app.add_subcommand("ablate", "run the 2^3 toggle grid of pipelines");
  std::string sizes = "20,50,100,150,200";
  std::string seeds = "1,2,3";
  int jobs = 2;
  ablate->add_option("--sizes", sizes, "comma list of per-class sample sizes");
  ablate->add_option("--seeds", seeds, "comma list of seeds");
  ablate->add_option("--jobs", jobs, "worker threads");
  add_common(ablate, ablate_flags);

  auto* fairness = app.add_subcommand(
      "fairness", "train CCLR-GAN and the DCGAN baseline on identical data");
  add_common(fairness, fairness_flags);

  auto* report =
      app.add_subcommand("report", "reprint a written report directory");
  std::string report_in;
  report->add_option("--in", report_in, "report directory")->required();

  try {
    app.parse(argc, argv);
    if (synth->parsed())
      return cmd_synth(synth_flags, synth_out, synth_windows, synth_seed);
    if (run->parsed()) return cmd_run(run_flags);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, sizes, seeds, jobs);
    if (fairness->parsed()) return cmd_fairness(fairness_flags);
    if (report->parsed()) return cmd_report(report_in);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
