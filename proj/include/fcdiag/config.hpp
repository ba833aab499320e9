#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fcdiag/signal.hpp"

namespace fcdiag {

// Full experiment description. Defaults reproduce the published training
// parameters: generation stage Adam lr 1e-4 / batch 32 / noise dim 100 /
// 500 generated windows per class, diagnosis stage Adam lr 2e-4 / batch 64.
struct RunConfig {
  // [run]
  std::uint64_t seed = 1;
  bool use_gan_aug = true;
  bool use_contrastive = true;
  bool use_fourier_conv = true;
  int sample_size = 20;  // per-class training windows: 20/50/100/150/200
  int test_size = 200;   // per-class held-out windows
  std::string dataset = "synthetic";  // synthetic | manifest
  std::string manifest_path;
  std::string synth_spec_path;  // empty: built-in 10-class scheme
  std::string output_dir;       // empty: do not write files
  double signal_scale = 0.25;   // fixed scale into the tanh range

  // [gan]
  double gan_lr = 1e-4;
  int gan_batch = 32;
  Index noise_dim = 100;
  int gan_steps = 2000;
  int per_class_generated = 500;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  Index d_v = 64;
  int rows_per_class = 4;
  Index gen_base_channels = 32;
  int fairness_warmup = 200;
  double fairness_threshold = 0.02;

  // [diag]
  double diag_lr = 2e-4;
  int diag_batch = 64;
  int diag_epochs = 100;
  int diag_max_steps = 600;  // cap on optimizer steps; 0 = no cap
  double lambda_con = 0.5;
  int n_pairs = 0;  // 0: one pair per batch element
  double sim_epsilon = 1e-6;
  Index channels = 32;
  Index feature_dim = 128;
  Index local_kernel = 5;
  Index lfu_segments = 4;
  std::vector<Index> strides = {4, 2, 1, 1};

  void validate() const;
};

// Plain-text key = value file with [run] / [gan] / [diag] sections.
RunConfig parse_config_file(const std::string& path);

// Applies one "section.key=value" override; throws on unknown keys.
void apply_override(RunConfig& config, const std::string& key,
                    const std::string& value);

// Canonical echo of every field, suitable for reparsing.
std::string config_echo(const RunConfig& config);

// Plain-text fault-spec file: one [class] section per class with FaultSpec
// fields.
std::vector<FaultSpec> parse_spec_file(const std::string& path);

std::vector<FaultSpec> resolve_class_specs(const RunConfig& config);

}  // namespace fcdiag
