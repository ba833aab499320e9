#include "fcdiag/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "fcdiag/checkpoint.hpp"
#include "fcdiag/optim.hpp"

namespace fcdiag {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// Batch assembly with origin-aware scaling: synthesized/recorded windows are
// multiplied into the tanh range, generated windows already live there.
Tensor batch_from(const Dataset& ds, const std::vector<Index>& idx,
                  double scale) {
  const Index n = static_cast<Index>(idx.size());
  Eigen::ArrayXd data(n * kWindowLength);
  for (Index i = 0; i < n; ++i) {
    const SignalWindow& w =
        ds.windows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    double s = w.meta.origin == Origin::generated ? 1.0 : scale;
    data.segment(i * kWindowLength, kWindowLength) = w.samples.value() * s;
  }
  return Tensor({n, 1, kWindowLength}, std::move(data));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path + ": cannot open for writing");
  os << text;
  if (!os) throw std::runtime_error(path + ": write failed");
}

}  // namespace

Dataset scale_dataset(const Dataset& ds, double scale) {
  Dataset out;
  out.class_count = ds.class_count;
  out.windows.reserve(ds.windows.size());
  for (const SignalWindow& w : ds.windows) {
    SignalWindow copy = w;
    if (w.meta.origin != Origin::generated)
      copy.samples = Tensor({kWindowLength}, w.samples.value() * scale);
    out.windows.push_back(std::move(copy));
  }
  return out;
}

std::vector<std::vector<int>> confusion_from_predictions(
    const std::vector<int>& truth, const std::vector<int>& predicted,
    int classes) {
  require(truth.size() == predicted.size(),
          "confusion: prediction count mismatch");
  std::vector<std::vector<int>> m(
      static_cast<std::size_t>(classes),
      std::vector<int>(static_cast<std::size_t>(classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && truth[i] < classes &&
                predicted[i] >= 0 && predicted[i] < classes,
            "confusion: label out of range");
    m[static_cast<std::size_t>(truth[i])]
     [static_cast<std::size_t>(predicted[i])] += 1;
  }
  return m;
}

EvalReport evaluate(const Backbone& net, const Dataset& test, double scale) {
  require(!test.empty(), "evaluate: empty test set");
  const int classes = net.config().classes;
  std::vector<int> truth, predicted;
  truth.reserve(static_cast<std::size_t>(test.size()));
  predicted.reserve(static_cast<std::size_t>(test.size()));
  const Index batch = 256;
  for (Index at = 0; at < test.size(); at += batch) {
    const Index n = std::min<Index>(batch, test.size() - at);
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = at + i;
    Tensor x = batch_from(test, idx, scale);
    auto [features, logits] = net.forward(x);
    for (Index i = 0; i < n; ++i) {
      const auto row = logits.value().segment(i * classes, classes);
      Index best = 0;
      row.maxCoeff(&best);
      truth.push_back(
          test.windows[static_cast<std::size_t>(at + i)].label);
      predicted.push_back(static_cast<int>(best));
    }
  }
  EvalReport report;
  report.confusion = confusion_from_predictions(truth, predicted, classes);
  int correct = 0;
  report.per_class_accuracy.assign(static_cast<std::size_t>(classes), 0.0);
  for (int c = 0; c < classes; ++c) {
    int row_total = 0;
    for (int p = 0; p < classes; ++p)
      row_total += report.confusion[static_cast<std::size_t>(c)]
                                   [static_cast<std::size_t>(p)];
    int diag = report.confusion[static_cast<std::size_t>(c)]
                               [static_cast<std::size_t>(c)];
    correct += diag;
    report.per_class_accuracy[static_cast<std::size_t>(c)] =
        row_total > 0 ? static_cast<double>(diag) / row_total : 0.0;
  }
  report.accuracy = static_cast<double>(correct) /
                    static_cast<double>(truth.size());
  return report;
}

double feature_margin(const Backbone& net, const Dataset& data, double scale) {
  require(data.size() >= 2, "feature_margin: need at least two windows");
  const Index d = net.config().feature_dim;
  const Index n = data.size();
  Eigen::MatrixXd f(n, d);
  const Index batch = 256;
  for (Index at = 0; at < n; at += batch) {
    const Index m = std::min<Index>(batch, n - at);
    std::vector<Index> idx(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = at + i;
    auto [features, logits] = net.forward(batch_from(data, idx, scale));
    for (Index i = 0; i < m; ++i)
      f.row(at + i) =
          Eigen::Map<const Eigen::RowVectorXd>(features.value().data() + i * d,
                                               d);
  }
  for (Index i = 0; i < n; ++i) {
    double norm = f.row(i).norm();
    require(norm > 0, "feature_margin: zero feature vector");
    f.row(i) /= norm;
  }
  double intra = 0, inter = 0;
  long long intra_n = 0, inter_n = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      double s = f.row(i).dot(f.row(j));
      if (data.windows[static_cast<std::size_t>(i)].label ==
          data.windows[static_cast<std::size_t>(j)].label) {
        intra += s;
        ++intra_n;
      } else {
        inter += s;
        ++inter_n;
      }
    }
  require(intra_n > 0 && inter_n > 0,
          "feature_margin: need both intra- and inter-class pairs");
  return intra / static_cast<double>(intra_n) -
         inter / static_cast<double>(inter_n);
}

std::vector<std::array<double, 4>> train_classifier(
    Backbone& net, const Dataset& train, const DiagnosisSettings& settings,
    double scale, std::uint64_t seed) {
  require(!train.empty(), "train_classifier: empty training set");
  for (const SignalWindow& w : train.windows)
    require(w.meta.origin != Origin::test,
            "train_classifier: refusing to train on test-tagged windows");
  settings.contrastive.validate();
  require(settings.lr > 0 && settings.batch > 0,
          "train_classifier: bad optimizer settings");

  const Index n = train.size();
  const Index batch = std::min<Index>(settings.batch, n);
  const long long steps_per_epoch = (n + batch - 1) / batch;
  long long total = static_cast<long long>(settings.epochs) * steps_per_epoch;
  if (settings.max_steps > 0)
    total = std::min<long long>(total, settings.max_steps);

  Rng shuffle_rng = Rng(seed).fork(1);
  Rng pair_rng = Rng(seed).fork(2);
  auto params = net.params();
  AdamState state;
  std::vector<std::array<double, 4>> curve;
  curve.reserve(static_cast<std::size_t>(total));

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  long long step = 0;
  while (step < total) {
    shuffle_rng.shuffle(order);
    for (Index at = 0; at < n && step < total; at += batch) {
      const Index m = std::min<Index>(batch, n - at);
      std::vector<Index> idx(order.begin() + at, order.begin() + at + m);
      std::vector<int> labels;
      labels.reserve(static_cast<std::size_t>(m));
      for (Index i : idx)
        labels.push_back(train.windows[static_cast<std::size_t>(i)].label);
      Tensor x = batch_from(train, idx, scale);

      Tape tape;
      TapeScope scope(tape);
      auto [features, logits] = net.forward(x);
      JointLossParts parts =
          joint_loss(features, logits, labels, settings.contrastive, pair_rng);
      tape.backward(parts.total);
      adam_step(params, state, settings.lr);
      zero_grads(params);

      ++step;
      double total_v = parts.total.scalar();
      if (!std::isfinite(total_v))
        throw std::runtime_error("train_classifier: loss diverged at step " +
                                 std::to_string(step));
      curve.push_back({static_cast<double>(step), total_v, parts.ce.scalar(),
                       parts.con.scalar()});
    }
  }
  return curve;
}

GanConfig gan_config_from(const RunConfig& config, int classes) {
  GanConfig gc;
  gc.classes = classes;
  gc.noise_dim = config.noise_dim;
  gc.d_v = config.d_v;
  gc.rows_per_class = config.rows_per_class;
  gc.gen_base_channels = config.gen_base_channels;
  gc.lambda1 = config.lambda1;
  gc.lambda2 = config.lambda2;
  gc.lr = config.gan_lr;
  gc.batch = config.gan_batch;
  gc.steps = config.gan_steps;
  return gc;
}

BackboneConfig backbone_config_from(const RunConfig& config, int classes) {
  BackboneConfig bc;
  bc.channels = config.channels;
  bc.local_kernel = config.local_kernel;
  bc.lfu_segments = config.lfu_segments;
  bc.strides = config.strides;
  bc.feature_dim = config.feature_dim;
  bc.classes = classes;
  bc.input_length = kWindowLength;
  bc.spectral = config.use_fourier_conv;
  return bc;
}

Dataset build_dataset(const RunConfig& config) {
  if (config.dataset == "manifest") return load_manifest(config.manifest_path);
  const auto specs = resolve_class_specs(config);
  const int windows_per_class = config.sample_size + config.test_size;
  const std::uint64_t seed = Rng(config.seed).fork(10).next_u64();
  return synth_dataset(specs, windows_per_class, seed);
}

EvalReport run_pipeline(const RunConfig& config) {
  config.validate();
  Rng root(config.seed);
  Dataset dataset = build_dataset(config);
  auto [train, test] =
      make_split(dataset, config.sample_size, config.test_size,
                 root.fork(11).next_u64());

  EvalReport report;
  report.config_echo = config_echo(config);

  Dataset train_full = train;
  std::optional<GanBundle> bundle;
  if (config.use_gan_aug) {
    GanConfig gc = gan_config_from(config, dataset.class_count);
    gc.seed = root.fork(12).next_u64();
    Rng init = root.fork(13);
    bundle.emplace(gc, init);
    Dataset scaled_train = scale_dataset(train, config.signal_scale);
    report.gan_trace = train_gan(*bundle, scaled_train, gc);
    Dataset generated =
        augment(*bundle, config.per_class_generated, root.fork(14).next_u64());
    train_full = concat_datasets(train, generated);
  }

  BackboneConfig bc = backbone_config_from(config, dataset.class_count);
  Rng net_init = root.fork(15);
  Backbone net(bc, net_init);
  DiagnosisSettings settings;
  settings.lr = config.diag_lr;
  settings.batch = config.diag_batch;
  settings.epochs = config.diag_epochs;
  settings.max_steps = config.diag_max_steps;
  settings.contrastive.n_pairs = config.n_pairs;
  settings.contrastive.lambda_con =
      config.use_contrastive ? config.lambda_con : 0.0;
  settings.contrastive.sim_epsilon = config.sim_epsilon;
  report.diag_curve = train_classifier(net, train_full, settings,
                                       config.signal_scale,
                                       root.fork(16).next_u64());

  EvalReport eval = evaluate(net, test, config.signal_scale);
  report.accuracy = eval.accuracy;
  report.per_class_accuracy = eval.per_class_accuracy;
  report.confusion = eval.confusion;

  if (!config.output_dir.empty()) {
    write_report(report, config.output_dir);
    save_checkpoint(config.output_dir + "/backbone.dacw", net.params());
    if (bundle) {
      std::vector<Tensor> gan_params = bundle->gen_params();
      for (const Tensor& t : bundle->disc_params()) gan_params.push_back(t);
      save_checkpoint(config.output_dir + "/gan.dacw", gan_params);
    }
  }
  return report;
}

std::string confusion_csv(const EvalReport& report) {
  std::ostringstream os;
  const std::size_t r = report.confusion.size();
  os << "label";
  for (std::size_t c = 0; c < r; ++c) os << "," << c;
  os << "\n";
  for (std::size_t i = 0; i < r; ++i) {
    os << i;
    for (std::size_t j = 0; j < r; ++j) os << "," << report.confusion[i][j];
    os << "\n";
  }
  return os.str();
}

std::string trace_csv(const LossTrace& trace) {
  std::ostringstream os;
  os << "step,l_g,l_d,l_clr,l_rec\n";
  for (const LossTraceRow& row : trace)
    os << row.step << "," << fmt(row.l_g) << "," << fmt(row.l_d) << ","
       << fmt(row.l_clr) << "," << fmt(row.l_rec) << "\n";
  return os.str();
}

void write_report(const EvalReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream os;
  os << "metric,value\n";
  os << "accuracy," << fmt(report.accuracy) << "\n";
  for (std::size_t c = 0; c < report.per_class_accuracy.size(); ++c)
    os << "per_class_accuracy_" << c << ","
       << fmt(report.per_class_accuracy[c]) << "\n";
  write_text(dir + "/report.csv", os.str());
  write_text(dir + "/confusion.csv", confusion_csv(report));

  std::ostringstream curve;
  curve << "step,total,ce,con\n";
  for (const auto& row : report.diag_curve)
    curve << static_cast<long long>(row[0]) << "," << fmt(row[1]) << ","
          << fmt(row[2]) << "," << fmt(row[3]) << "\n";
  write_text(dir + "/diag_curve.csv", curve.str());

  if (!report.gan_trace.empty())
    write_text(dir + "/gan_trace.csv", trace_csv(report.gan_trace));
  write_text(dir + "/config.txt", report.config_echo);
}

std::string AblationCell::name() const {
  std::ostringstream os;
  os << "size" << sample_size << "_seed" << seed << "_g" << use_gan_aug << "c"
     << use_contrastive << "f" << use_fourier_conv;
  return os.str();
}

std::vector<AblationCell> ablation_cells(
    const std::vector<int>& sizes, const std::vector<std::uint64_t>& seeds) {
  require(!sizes.empty() && !seeds.empty(),
          "ablation: need at least one size and one seed");
  std::vector<AblationCell> cells;
  for (int size : sizes)
    for (std::uint64_t seed : seeds)
      for (int bits = 0; bits < 8; ++bits)
        cells.push_back(AblationCell{(bits & 4) != 0, (bits & 2) != 0,
                                     (bits & 1) != 0, size, seed});
  return cells;
}

std::vector<AblationRow> ablation_matrix(
    const RunConfig& base, const std::vector<int>& sizes,
    const std::vector<std::uint64_t>& seeds, int jobs) {
  const auto cells = ablation_cells(sizes, seeds);
  std::vector<AblationRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  jobs = std::max(1, jobs);

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const AblationCell& cell = cells[i];
      rows[i].cell = cell;
      try {
        RunConfig config = base;
        config.use_gan_aug = cell.use_gan_aug;
        config.use_contrastive = cell.use_contrastive;
        config.use_fourier_conv = cell.use_fourier_conv;
        config.sample_size = cell.sample_size;
        config.seed = cell.seed;
        config.output_dir = base.output_dir.empty()
                                ? ""
                                : base.output_dir + "/" + cell.name();
        rows[i].accuracy = run_pipeline(config).accuracy;
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  if (!base.output_dir.empty()) {
    std::filesystem::create_directories(base.output_dir);
    write_text(base.output_dir + "/ablation.csv", ablation_csv(rows));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "use_gan_aug,use_contrastive,use_fourier_conv,sample_size,seed,"
        "accuracy,error\n";
  for (const AblationRow& row : rows)
    os << row.cell.use_gan_aug << "," << row.cell.use_contrastive << ","
       << row.cell.use_fourier_conv << "," << row.cell.sample_size << ","
       << row.cell.seed << "," << fmt(row.accuracy) << "," << row.error
       << "\n";
  return os.str();
}

double fraction_below(const LossTrace& trace, int warmup, double threshold) {
  long long total = 0, below = 0;
  for (const LossTraceRow& row : trace) {
    if (row.step <= warmup) continue;
    ++total;
    if (row.l_d < threshold) ++below;
  }
  return total > 0 ? static_cast<double>(below) / static_cast<double>(total)
                   : 0.0;
}

FairnessResult fairness_report(const RunConfig& config) {
  config.validate();
  Rng root(config.seed);
  Dataset dataset = build_dataset(config);
  auto [train, test] =
      make_split(dataset, config.sample_size, config.test_size,
                 root.fork(11).next_u64());
  Dataset scaled_train = scale_dataset(train, config.signal_scale);

  GanConfig gc = gan_config_from(config, dataset.class_count);
  gc.seed = root.fork(12).next_u64();
  Rng init_a = root.fork(13);
  Rng init_b = root.fork(13);  // identical initialization for both players
  GanBundle cclr(gc, init_a);
  GanBundle dcgan(gc, init_b);

  FairnessResult result;
  result.warmup = config.fairness_warmup;
  result.threshold = config.fairness_threshold;
  std::exception_ptr err_a, err_b;
  std::thread ta([&] {
    try {
      result.cclr = train_gan(cclr, scaled_train, gc);
    } catch (...) {
      err_a = std::current_exception();
    }
  });
  std::thread tb([&] {
    try {
      result.dcgan = train_dcgan_baseline(dcgan, scaled_train, gc);
    } catch (...) {
      err_b = std::current_exception();
    }
  });
  ta.join();
  tb.join();
  if (err_a) std::rethrow_exception(err_a);
  if (err_b) std::rethrow_exception(err_b);

  result.cclr_fraction =
      fraction_below(result.cclr, result.warmup, result.threshold);
  result.dcgan_fraction =
      fraction_below(result.dcgan, result.warmup, result.threshold);

  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_text(config.output_dir + "/cclr_trace.csv", trace_csv(result.cclr));
    write_text(config.output_dir + "/dcgan_trace.csv",
               trace_csv(result.dcgan));
    std::ostringstream os;
    os << "metric,value\n";
    os << "warmup," << result.warmup << "\n";
    os << "threshold," << fmt(result.threshold) << "\n";
    os << "cclr_fraction_below," << fmt(result.cclr_fraction) << "\n";
    os << "dcgan_fraction_below," << fmt(result.dcgan_fraction) << "\n";
    write_text(config.output_dir + "/fairness.csv", os.str());
  }
  return result;
}

}  // namespace fcdiag
