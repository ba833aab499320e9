#include "fcdiag/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace fcdiag {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

long long to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    long long out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad real '" + v + "' for " + key);
  }
}

std::vector<Index> to_index_list(const std::string& v, const std::string& key) {
  std::vector<Index> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ','))
    out.push_back(static_cast<Index>(to_int(trim(item), key)));
  require(!out.empty(), "config: empty list for " + key);
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  const int allowed[] = {20, 50, 100, 150, 200};
  require(std::find(std::begin(allowed), std::end(allowed), sample_size) !=
              std::end(allowed),
          "config: sample_size must be one of 20, 50, 100, 150, 200");
  require(test_size > 0, "config: test_size must be positive");
  require(dataset == "synthetic" || dataset == "manifest",
          "config: dataset must be 'synthetic' or 'manifest'");
  require(dataset != "manifest" || !manifest_path.empty(),
          "config: manifest dataset needs run.manifest_path");
  require(signal_scale > 0, "config: signal_scale must be positive");
  require(gan_lr > 0 && diag_lr > 0, "config: learning rates must be positive");
  require(gan_batch > 0 && diag_batch > 0, "config: batch sizes must be positive");
  require(gan_steps >= 0 && diag_epochs >= 0 && diag_max_steps >= 0,
          "config: step counts must be nonnegative");
  require(per_class_generated >= 0,
          "config: per_class_generated must be nonnegative");
  require(noise_dim > 0, "config: noise_dim must be positive");
  require(lambda1 >= 0 && lambda2 >= 0 && lambda_con >= 0,
          "config: loss weights must be nonnegative");
  require(sim_epsilon > 0 && sim_epsilon < 0.1,
          "config: sim_epsilon must lie in (0, 0.1)");
  require(fairness_warmup >= 0, "config: fairness_warmup must be nonnegative");
  require(fairness_threshold > 0, "config: fairness_threshold must be positive");
}

void apply_override(RunConfig& c, const std::string& key,
                    const std::string& value) {
  const std::string v = trim(value);
  if (key == "run.seed") c.seed = static_cast<std::uint64_t>(to_int(v, key));
  else if (key == "run.use_gan_aug") c.use_gan_aug = to_bool(v, key);
  else if (key == "run.use_contrastive") c.use_contrastive = to_bool(v, key);
  else if (key == "run.use_fourier_conv") c.use_fourier_conv = to_bool(v, key);
  else if (key == "run.sample_size") c.sample_size = static_cast<int>(to_int(v, key));
  else if (key == "run.test_size") c.test_size = static_cast<int>(to_int(v, key));
  else if (key == "run.dataset") c.dataset = v;
  else if (key == "run.manifest_path") c.manifest_path = v;
  else if (key == "run.synth_spec_path") c.synth_spec_path = v;
  else if (key == "run.output_dir") c.output_dir = v;
  else if (key == "run.signal_scale") c.signal_scale = to_double(v, key);
  else if (key == "gan.lr") c.gan_lr = to_double(v, key);
  else if (key == "gan.batch") c.gan_batch = static_cast<int>(to_int(v, key));
  else if (key == "gan.noise_dim") c.noise_dim = static_cast<Index>(to_int(v, key));
  else if (key == "gan.steps") c.gan_steps = static_cast<int>(to_int(v, key));
  else if (key == "gan.per_class_generated") c.per_class_generated = static_cast<int>(to_int(v, key));
  else if (key == "gan.lambda1") c.lambda1 = to_double(v, key);
  else if (key == "gan.lambda2") c.lambda2 = to_double(v, key);
  else if (key == "gan.d_v") c.d_v = static_cast<Index>(to_int(v, key));
  else if (key == "gan.rows_per_class") c.rows_per_class = static_cast<int>(to_int(v, key));
  else if (key == "gan.base_channels") c.gen_base_channels = static_cast<Index>(to_int(v, key));
  else if (key == "gan.fairness_warmup") c.fairness_warmup = static_cast<int>(to_int(v, key));
  else if (key == "gan.fairness_threshold") c.fairness_threshold = to_double(v, key);
  else if (key == "diag.lr") c.diag_lr = to_double(v, key);
  else if (key == "diag.batch") c.diag_batch = static_cast<int>(to_int(v, key));
  else if (key == "diag.epochs") c.diag_epochs = static_cast<int>(to_int(v, key));
  else if (key == "diag.max_steps") c.diag_max_steps = static_cast<int>(to_int(v, key));
  else if (key == "diag.lambda_con") c.lambda_con = to_double(v, key);
  else if (key == "diag.n_pairs") c.n_pairs = static_cast<int>(to_int(v, key));
  else if (key == "diag.sim_epsilon") c.sim_epsilon = to_double(v, key);
  else if (key == "diag.channels") c.channels = static_cast<Index>(to_int(v, key));
  else if (key == "diag.feature_dim") c.feature_dim = static_cast<Index>(to_int(v, key));
  else if (key == "diag.local_kernel") c.local_kernel = static_cast<Index>(to_int(v, key));
  else if (key == "diag.lfu_segments") c.lfu_segments = static_cast<Index>(to_int(v, key));
  else if (key == "diag.strides") c.strides = to_index_list(v, key);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

namespace {

// Shared section/key reader for config and fault-spec files.
void parse_sectioned(const std::string& path,
                     const std::function<void(const std::string&)>& on_section,
                     const std::function<void(const std::string&,
                                              const std::string&)>& on_kv) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path + ": cannot open");
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": malformed section header");
      on_section(trim(s.substr(1, s.size() - 2)));
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key = value");
    on_kv(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

}  // namespace

RunConfig parse_config_file(const std::string& path) {
  RunConfig config;
  std::string section;
  parse_sectioned(
      path, [&](const std::string& name) { section = name; },
      [&](const std::string& key, const std::string& value) {
        require(!section.empty(),
                "config: key '" + key + "' before any [section]");
        apply_override(config, section + "." + key, value);
      });
  return config;
}

std::string config_echo(const RunConfig& c) {
  std::ostringstream os;
  os << "[run]\n";
  os << "seed = " << c.seed << "\n";
  os << "use_gan_aug = " << (c.use_gan_aug ? "true" : "false") << "\n";
  os << "use_contrastive = " << (c.use_contrastive ? "true" : "false") << "\n";
  os << "use_fourier_conv = " << (c.use_fourier_conv ? "true" : "false") << "\n";
  os << "sample_size = " << c.sample_size << "\n";
  os << "test_size = " << c.test_size << "\n";
  os << "dataset = " << c.dataset << "\n";
  os << "manifest_path = " << c.manifest_path << "\n";
  os << "synth_spec_path = " << c.synth_spec_path << "\n";
  os << "output_dir = " << c.output_dir << "\n";
  os << "signal_scale = " << fmt_double(c.signal_scale) << "\n";
  os << "\n[gan]\n";
  os << "lr = " << fmt_double(c.gan_lr) << "\n";
  os << "batch = " << c.gan_batch << "\n";
  os << "noise_dim = " << c.noise_dim << "\n";
  os << "steps = " << c.gan_steps << "\n";
  os << "per_class_generated = " << c.per_class_generated << "\n";
  os << "lambda1 = " << fmt_double(c.lambda1) << "\n";
  os << "lambda2 = " << fmt_double(c.lambda2) << "\n";
  os << "d_v = " << c.d_v << "\n";
  os << "rows_per_class = " << c.rows_per_class << "\n";
  os << "base_channels = " << c.gen_base_channels << "\n";
  os << "fairness_warmup = " << c.fairness_warmup << "\n";
  os << "fairness_threshold = " << fmt_double(c.fairness_threshold) << "\n";
  os << "\n[diag]\n";
  os << "lr = " << fmt_double(c.diag_lr) << "\n";
  os << "batch = " << c.diag_batch << "\n";
  os << "epochs = " << c.diag_epochs << "\n";
  os << "max_steps = " << c.diag_max_steps << "\n";
  os << "lambda_con = " << fmt_double(c.lambda_con) << "\n";
  os << "n_pairs = " << c.n_pairs << "\n";
  os << "sim_epsilon = " << fmt_double(c.sim_epsilon) << "\n";
  os << "channels = " << c.channels << "\n";
  os << "feature_dim = " << c.feature_dim << "\n";
  os << "local_kernel = " << c.local_kernel << "\n";
  os << "lfu_segments = " << c.lfu_segments << "\n";
  os << "strides = ";
  for (std::size_t i = 0; i < c.strides.size(); ++i)
    os << (i ? "," : "") << c.strides[i];
  os << "\n";
  return os.str();
}

std::vector<FaultSpec> parse_spec_file(const std::string& path) {
  std::vector<FaultSpec> specs;
  bool in_class = false;
  parse_sectioned(
      path,
      [&](const std::string& name) {
        require(name == "class",
                "spec file: unknown section [" + name + "]");
        specs.emplace_back();
        in_class = true;
      },
      [&](const std::string& key, const std::string& value) {
        require(in_class, "spec file: key '" + key + "' before [class]");
        FaultSpec& s = specs.back();
        if (key == "fault_class") s.fault_class = static_cast<int>(to_int(value, key));
        else if (key == "impulse_rate_hz") s.impulse_rate_hz = to_double(value, key);
        else if (key == "resonance_hz") s.resonance_hz = to_double(value, key);
        else if (key == "decay") s.decay = to_double(value, key);
        else if (key == "amplitude") s.amplitude = to_double(value, key);
        else if (key == "shaft_hz") s.shaft_hz = to_double(value, key);
        else if (key == "noise_sigma") s.noise_sigma = to_double(value, key);
        else if (key == "sample_rate_hz") s.sample_rate_hz = to_double(value, key);
        else throw std::invalid_argument("spec file: unknown key '" + key + "'");
      });
  require(!specs.empty(), "spec file: no [class] sections in " + path);
  // labels must cover 0..R-1 exactly once
  std::vector<int> labels;
  for (const FaultSpec& s : specs) {
    s.validate();
    labels.push_back(s.fault_class);
  }
  std::sort(labels.begin(), labels.end());
  for (std::size_t i = 0; i < labels.size(); ++i)
    require(labels[i] == static_cast<int>(i),
            "spec file: fault_class values must cover 0..R-1 exactly once");
  return specs;
}

std::vector<FaultSpec> resolve_class_specs(const RunConfig& config) {
  if (config.synth_spec_path.empty()) return default_class_specs();
  return parse_spec_file(config.synth_spec_path);
}

}  // namespace fcdiag
