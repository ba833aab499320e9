#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fcdiag/config.hpp"
#include "fcdiag/contrastive.hpp"
#include "fcdiag/gan.hpp"
#include "fcdiag/signal.hpp"
#include "fcdiag/spectral.hpp"

namespace fcdiag {

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<int>> confusion;  // rows = true class
  std::vector<std::array<double, 4>> diag_curve;  // step, total, ce, con
  LossTrace gan_trace;
  std::string config_echo;
};

// Counts predictions into an RxR matrix, rows = true class.
std::vector<std::vector<int>> confusion_from_predictions(
    const std::vector<int>& truth, const std::vector<int>& predicted,
    int classes);

// Batched inference over a dataset; windows are scaled by signal_scale
// before entering the network.
EvalReport evaluate(const Backbone& net, const Dataset& test, double scale);

// Mean intra-class minus mean inter-class cosine similarity of the feature
// extractor output over a dataset.
double feature_margin(const Backbone& net, const Dataset& data, double scale);

struct DiagnosisSettings {
  double lr = 2e-4;
  int batch = 64;
  int epochs = 100;
  int max_steps = 600;  // 0: no cap
  ContrastiveConfig contrastive;
};

// Joint-loss training loop (classification + contrastive term). Refuses
// test-tagged windows. Returns the per-step loss curve.
std::vector<std::array<double, 4>> train_classifier(
    Backbone& net, const Dataset& train, const DiagnosisSettings& settings,
    double scale, std::uint64_t seed);

// The two-stage pipeline: split, optional CCLR-GAN augmentation, joint
// classifier training, evaluation. Writes report files into
// config.output_dir when set. Deterministic per (config, seed).
EvalReport run_pipeline(const RunConfig& config);

void write_report(const EvalReport& report, const std::string& dir);
std::string confusion_csv(const EvalReport& report);
std::string trace_csv(const LossTrace& trace);

struct AblationCell {
  bool use_gan_aug;
  bool use_contrastive;
  bool use_fourier_conv;
  int sample_size;
  std::uint64_t seed;

  std::string name() const;
};

std::vector<AblationCell> ablation_cells(
    const std::vector<int>& sizes, const std::vector<std::uint64_t>& seeds);

struct AblationRow {
  AblationCell cell;
  double accuracy = 0.0;
  std::string error;  // empty on success
};

// Runs the full 2^3 toggle grid over the given sizes and seeds; cells run
// on `jobs` worker threads and one cell's failure does not abort the rest.
std::vector<AblationRow> ablation_matrix(
    const RunConfig& base, const std::vector<int>& sizes,
    const std::vector<std::uint64_t>& seeds, int jobs = 2);

std::string ablation_csv(const std::vector<AblationRow>& rows);

struct FairnessResult {
  LossTrace cclr;
  LossTrace dcgan;
  double cclr_fraction = 0.0;   // post-warmup steps with L_D < threshold
  double dcgan_fraction = 0.0;
  int warmup = 0;
  double threshold = 0.0;
};

// Trains the conditional CLR-GAN and the DCGAN baseline from identical
// initialization on identical data and seeds, and summarizes how often each
// discriminator's adversarial loss collapses below the threshold.
FairnessResult fairness_report(const RunConfig& config);

double fraction_below(const LossTrace& trace, int warmup, double threshold);

// Scaled copy used before windows enter either training stage.
Dataset scale_dataset(const Dataset& ds, double scale);

// Config -> module configs (shared by the pipeline and the CLI).
GanConfig gan_config_from(const RunConfig& config, int classes);
BackboneConfig backbone_config_from(const RunConfig& config, int classes);
Dataset build_dataset(const RunConfig& config);

}  // namespace fcdiag
