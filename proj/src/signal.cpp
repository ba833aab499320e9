#include "fcdiag/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fcdiag {

void FaultSpec::validate() const {
  require(sample_rate_hz > 0, "fault spec: sample_rate_hz must be positive");
  require(impulse_rate_hz > 0, "fault spec: impulse_rate_hz must be positive");
  require(resonance_hz > 0, "fault spec: resonance_hz must be positive");
  require(resonance_hz < sample_rate_hz / 2,
          "fault spec: resonance_hz violates the Nyquist limit");
  require(decay > 0, "fault spec: decay must be positive");
  require(amplitude >= 0, "fault spec: amplitude must be nonnegative");
  require(shaft_hz > 0, "fault spec: shaft_hz must be positive");
  require(noise_sigma >= 0, "fault spec: noise_sigma must be nonnegative");
  require(fault_class != 0 || amplitude == 0.0,
          "fault spec: a normal bearing (class 0) has no impulse train");
}

std::vector<int> Dataset::per_class_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(class_count), 0);
  for (const SignalWindow& w : windows)
    counts[static_cast<std::size_t>(w.label)] += 1;
  return counts;
}

void Dataset::validate() const {
  require(class_count > 0, "dataset: class_count must be positive");
  for (const SignalWindow& w : windows) {
    require(w.label >= 0 && w.label < class_count,
            "dataset: label " + std::to_string(w.label) +
                " outside [0," + std::to_string(class_count) + ")");
    require(w.samples.size() == kWindowLength,
            "dataset: window length must be 1024");
  }
}

Tensor synth_signal(const FaultSpec& spec, double duration_s,
                    std::uint64_t seed) {
  spec.validate();
  require(duration_s > 0, "synth_signal: duration must be positive");
  const Index n = static_cast<Index>(duration_s * spec.sample_rate_hz);
  require(n >= kWindowLength,
          "synth_signal: duration too short for one 1024-sample window");
  const double sr = spec.sample_rate_hz;
  Eigen::ArrayXd x = Eigen::ArrayXd::Zero(n);
  Rng rng(seed);

  if (spec.amplitude > 0.0) {
    // response length: run each impulse until the envelope is below 1e-8
    const double t_max = std::log(1e8) / spec.decay;
    const Index resp_len =
        std::min<Index>(n, static_cast<Index>(t_max * sr) + 1);
    const double period = 1.0 / spec.impulse_rate_hz;
    double t_impulse = period * rng.uniform();  // random initial phase
    while (t_impulse < duration_s) {
      const Index start = static_cast<Index>(std::ceil(t_impulse * sr));
      for (Index i = start; i < std::min(n, start + resp_len); ++i) {
        const double dt = static_cast<double>(i) / sr - t_impulse;
        x[i] += std::exp(-spec.decay * dt) *
                std::sin(2.0 * M_PI * spec.resonance_hz * dt);
      }
      t_impulse += period * (1.0 + 0.01 * rng.uniform(-1.0, 1.0));
    }
    for (Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      x[i] *= spec.amplitude *
              (1.0 + 0.3 * std::sin(2.0 * M_PI * spec.shaft_hz * t));
    }
  }
  if (spec.noise_sigma > 0.0)
    for (Index i = 0; i < n; ++i) x[i] += spec.noise_sigma * rng.gaussian();
  return Tensor({n}, std::move(x));
}

std::vector<SignalWindow> window(const Tensor& signal, int label,
                                 int source_id) {
  require(signal.rank() == 1, "window: expects a rank-1 signal");
  const Index m = signal.dim(0);
  require(m >= kWindowLength, "window: signal shorter than one window (" +
                                  std::to_string(m) + " < 1024 samples)");
  const Index count = m / kWindowLength;
  std::vector<SignalWindow> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index w = 0; w < count; ++w) {
    Eigen::ArrayXd chunk =
        signal.value().segment(w * kWindowLength, kWindowLength);
    SignalWindow sw;
    sw.samples = Tensor({kWindowLength}, std::move(chunk));
    sw.label = label;
    sw.meta.source_id = source_id;
    sw.meta.offset = w * kWindowLength;
    out.push_back(std::move(sw));
  }
  return out;
}

std::pair<Dataset, Dataset> make_split(const Dataset& dataset, int sample_size,
                                       int test_size, std::uint64_t seed) {
  require(sample_size >= 0 && test_size >= 0,
          "make_split: sizes must be nonnegative");
  dataset.validate();
  std::vector<std::vector<Index>> by_class(
      static_cast<std::size_t>(dataset.class_count));
  for (Index i = 0; i < dataset.size(); ++i)
    by_class[static_cast<std::size_t>(dataset.windows[static_cast<std::size_t>(i)].label)]
        .push_back(i);

  Dataset train, test;
  train.class_count = test.class_count = dataset.class_count;
  Rng rng(seed);
  for (int c = 0; c < dataset.class_count; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(idx.size()) < sample_size + test_size)
      throw std::invalid_argument(
          "make_split: class " + std::to_string(c) + " has only " +
          std::to_string(idx.size()) + " windows, need " +
          std::to_string(sample_size + test_size));
    rng.shuffle(idx);
    for (int i = 0; i < sample_size; ++i) {
      SignalWindow w = dataset.windows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      w.meta.origin = Origin::train;
      train.windows.push_back(std::move(w));
    }
    for (int i = sample_size; i < sample_size + test_size; ++i) {
      SignalWindow w = dataset.windows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      w.meta.origin = Origin::test;
      test.windows.push_back(std::move(w));
    }
  }
  return {std::move(train), std::move(test)};
}

namespace {

constexpr char kMagic[4] = {'V', 'I', 'B', '1'};

template <class T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is, const std::string& path, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw std::runtime_error(path + ": truncated while reading " +
                             std::string(what));
  return v;
}

bool known_channel(const std::string& channel) {
  return channel == "DE" || channel == "FE" || channel == "BA";
}

}  // namespace

void write_recording(const std::string& path, const Tensor& signal,
                     std::uint32_t sample_rate_hz, std::uint32_t label) {
  require(signal.rank() == 1, "write_recording: expects a rank-1 signal");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path + ": cannot open for writing");
  os.write(kMagic, 4);
  write_raw<std::uint32_t>(os, sample_rate_hz);
  write_raw<std::uint32_t>(os, label);
  write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(signal.size()));
  os.write(reinterpret_cast<const char*>(signal.value().data()),
           static_cast<std::streamsize>(sizeof(double) * signal.size()));
  if (!os) throw std::runtime_error(path + ": write failed");
}

Dataset load_cwru(const std::string& path, const std::string& channel,
                  int label) {
  if (!known_channel(channel))
    throw std::runtime_error("load_cwru: unknown channel '" + channel +
                             "' (expected DE, FE or BA)");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path + ": cannot open");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + ": not a VIB1 recording");
  const auto sr = read_raw<std::uint32_t>(is, path, "sample rate");
  const auto file_label = read_raw<std::uint32_t>(is, path, "label");
  const auto count = read_raw<std::uint64_t>(is, path, "sample count");
  if (static_cast<int>(file_label) != label)
    throw std::runtime_error(path + ": container label " +
                             std::to_string(file_label) +
                             " does not match requested label " +
                             std::to_string(label));
  if (sr == 0) throw std::runtime_error(path + ": zero sample rate");
  Eigen::ArrayXd data(static_cast<Index>(count));
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(sizeof(double) * count));
  if (!is) throw std::runtime_error(path + ": truncated sample data");

  Dataset ds;
  ds.class_count = label + 1;
  auto windows = window(Tensor({static_cast<Index>(count)}, std::move(data)),
                        label, /*source_id=*/0);
  for (auto& w : windows) {
    w.meta.channel = channel;
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

Dataset load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path + ": cannot open manifest");
  const auto base = std::filesystem::path(path).parent_path();
  Dataset ds;
  std::string line;
  int line_no = 0;
  int source_id = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string file, label_str, channel;
    if (!std::getline(ls, file, ',') || !std::getline(ls, label_str, ',') ||
        !std::getline(ls, channel))
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'path,label,channel'");
    int label = 0;
    try {
      label = std::stoi(label_str);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": bad label '" + label_str + "'");
    }
    std::filesystem::path rec(file);
    if (rec.is_relative()) rec = base / rec;
    Dataset part = load_cwru(rec.string(), channel, label);
    for (auto& w : part.windows) {
      w.meta.source_id = source_id;
      ds.windows.push_back(std::move(w));
      ds.class_count = std::max(ds.class_count, label + 1);
    }
    ++source_id;
  }
  require(!ds.windows.empty(), "load_manifest: no recordings listed");
  return ds;
}

std::vector<FaultSpec> default_class_specs() {
  // Characteristic frequencies near a 12 kHz drive-end bearing at ~1797 rpm;
  // fault types get distinct resonances, severities scale the amplitude.
  std::vector<FaultSpec> specs;
  FaultSpec normal;
  normal.fault_class = 0;
  normal.amplitude = 0.0;
  normal.noise_sigma = 0.35;
  specs.push_back(normal);

  struct Family {
    double rate, resonance;
  };
  const Family families[3] = {{162.2, 3000.0},   // inner race
                              {107.4, 2500.0},   // outer race
                              {70.6, 3500.0}};   // ball
  const double severities[3] = {0.5, 1.0, 1.5};
  int cls = 1;
  for (const Family& fam : families) {
    for (double amp : severities) {
      FaultSpec s;
      s.fault_class = cls++;
      s.impulse_rate_hz = fam.rate;
      s.resonance_hz = fam.resonance;
      s.decay = 900.0;
      s.amplitude = amp;
      s.noise_sigma = 0.35;
      specs.push_back(s);
    }
  }
  return specs;
}

Dataset synth_dataset(const std::vector<FaultSpec>& specs,
                      int windows_per_class, std::uint64_t seed) {
  require(!specs.empty(), "synth_dataset: no class specs");
  require(windows_per_class > 0, "synth_dataset: need at least one window");
  Dataset ds;
  Rng root(seed);
  for (std::size_t c = 0; c < specs.size(); ++c) {
    const FaultSpec& spec = specs[c];
    ds.class_count = std::max(ds.class_count, spec.fault_class + 1);
    const Index samples = static_cast<Index>(windows_per_class) * kWindowLength + 8;
    const double duration =
        static_cast<double>(samples) / spec.sample_rate_hz;
    Tensor signal =
        synth_signal(spec, duration, root.fork(static_cast<std::uint64_t>(c)).next_u64());
    auto windows_all =
        window(signal, spec.fault_class, static_cast<int>(c));
    require(static_cast<int>(windows_all.size()) >= windows_per_class,
            "synth_dataset: internal sizing error");
    for (int w = 0; w < windows_per_class; ++w)
      ds.windows.push_back(std::move(windows_all[static_cast<std::size_t>(w)]));
  }
  ds.validate();
  return ds;
}

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
  Dataset out;
  out.class_count = std::max(a.class_count, b.class_count);
  out.windows = a.windows;
  out.windows.insert(out.windows.end(), b.windows.begin(), b.windows.end());
  return out;
}

}  // namespace fcdiag
