#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fcdiag/tensor.hpp"

namespace fcdiag {

inline constexpr Index kWindowLength = 1024;

// Parametric bearing signature: repetitive impulses at the characteristic
// defect frequency, each exciting an exponentially decaying resonance,
// amplitude-modulated at shaft speed, plus additive Gaussian noise.
struct FaultSpec {
  int fault_class = 0;
  double impulse_rate_hz = 100.0;
  double resonance_hz = 3000.0;
  double decay = 900.0;        // 1/s
  double amplitude = 0.0;
  double shaft_hz = 29.95;
  double noise_sigma = 0.0;
  double sample_rate_hz = 12000.0;

  void validate() const;
};

enum class Origin { none, train, test, generated };

struct WindowMeta {
  int source_id = 0;
  std::int64_t offset = 0;
  std::string channel;
  Origin origin = Origin::none;
};

struct SignalWindow {
  Tensor samples;  // [1024]
  int label = 0;
  WindowMeta meta;
};

struct Dataset {
  std::vector<SignalWindow> windows;
  int class_count = 0;

  std::vector<int> per_class_counts() const;
  void validate() const;
  bool empty() const { return windows.empty(); }
  Index size() const { return static_cast<Index>(windows.size()); }
};

// Simulated recording; deterministic in (spec, duration, seed).
Tensor synth_signal(const FaultSpec& spec, double duration_s,
                    std::uint64_t seed);

// Consecutive non-overlapping windows of length 1024; the tail is dropped.
std::vector<SignalWindow> window(const Tensor& signal, int label,
                                 int source_id = 0);

// Per-class split: exactly sample_size training and test_size test windows
// per class, disjoint, deterministic per seed. Split origin is stamped on
// each window's metadata.
std::pair<Dataset, Dataset> make_split(const Dataset& dataset, int sample_size,
                                       int test_size, std::uint64_t seed);

// Recording container (one recording per file): little-endian, magic "VIB1",
// u32 sample_rate_hz, u32 label, u64 sample_count, then f64 samples.
void write_recording(const std::string& path, const Tensor& signal,
                     std::uint32_t sample_rate_hz, std::uint32_t label);

// Loads one converted CWRU-format recording and windows it. The channel
// must be one of DE, FE, BA and, as a consistency check, the label stored
// in the container must match the requested one.
Dataset load_cwru(const std::string& path, const std::string& channel,
                  int label);

// Manifest: plain-text lines "path,label,channel". Relative paths resolve
// against the manifest's directory.
Dataset load_manifest(const std::string& path);

// The default 10-class scheme: normal plus {inner, outer, ball} faults at
// three severities realized as amplitudes 0.5 / 1.0 / 1.5.
std::vector<FaultSpec> default_class_specs();

// Synthesizes windows_per_class windows for every spec; deterministic.
Dataset synth_dataset(const std::vector<FaultSpec>& specs,
                      int windows_per_class, std::uint64_t seed);

Dataset concat_datasets(const Dataset& a, const Dataset& b);

}  // namespace fcdiag
