#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fcdiag/signal.hpp"
#include "oracles.hpp"

using namespace fcdiag;

namespace {

FaultSpec inner_race_spec() {
  FaultSpec s;
  s.fault_class = 1;
  s.impulse_rate_hz = 160.0;
  s.resonance_hz = 3000.0;
  s.decay = 900.0;
  s.amplitude = 1.0;
  s.noise_sigma = 0.1;
  s.sample_rate_hz = 12000.0;
  return s;
}

}  // namespace

TEST_CASE("normal spec with zero noise synthesizes silence") {
  FaultSpec s;
  s.fault_class = 0;
  s.amplitude = 0.0;
  s.noise_sigma = 0.0;
  Tensor x = synth_signal(s, 0.2, 1);
  CHECK(x.size() == 2400);
  CHECK(x.value().abs().maxCoeff() == 0.0);
}

TEST_CASE("pure noise has unit variance") {
  FaultSpec s;
  s.fault_class = 0;
  s.amplitude = 0.0;
  s.noise_sigma = 1.0;
  double acc = 0.0;
  const int seeds = 3;
  for (int seed = 1; seed <= seeds; ++seed) {
    Tensor x = synth_signal(s, 4096.0 / 12000.0, static_cast<std::uint64_t>(seed));
    REQUIRE(x.size() == 4096);
    double m = x.value().mean();
    acc += (x.value() - m).square().sum() / static_cast<double>(x.size() - 1);
  }
  CHECK(acc / seeds == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("inner-race signature: resonance carrier, defect-rate envelope") {
  Tensor x = synth_signal(inner_race_spec(), 0.5, 7);
  REQUIRE(x.size() == 6000);  // resolution: 2 Hz per bin
  auto vec = oracle::to_vector(x);

  auto spec = oracle::naive_dft(vec);
  Index peak_bin = 0;
  double peak = 0.0;
  for (Index k = 100; k < 3000; ++k) {
    double mag = std::abs(spec[static_cast<std::size_t>(k)]);
    if (mag > peak) {
      peak = mag;
      peak_bin = k;
    }
  }
  CHECK(std::abs(2.0 * static_cast<double>(peak_bin) - 3000.0) < 500.0);

  auto env = oracle::envelope_spectrum(vec);
  Index env_bin = 0;
  double env_peak = 0.0;
  for (Index k = 5; k <= 150; ++k) {
    if (env[static_cast<std::size_t>(k)] > env_peak) {
      env_peak = env[static_cast<std::size_t>(k)];
      env_bin = k;
    }
  }
  CHECK(std::abs(2.0 * static_cast<double>(env_bin) - 160.0) <= 2.0);
}

TEST_CASE("synth_signal is pure in (spec, duration, seed)") {
  FaultSpec s = inner_race_spec();
  Tensor a = synth_signal(s, 0.2, 42);
  Tensor b = synth_signal(s, 0.2, 42);
  Tensor c = synth_signal(s, 0.2, 43);
  CHECK((a.value() == b.value()).all());
  CHECK((a.value() != c.value()).any());
}

TEST_CASE("spec validation") {
  FaultSpec s = inner_race_spec();
  s.resonance_hz = 7000.0;  // above Nyquist of 12 kHz
  CHECK_THROWS(s.validate());
  FaultSpec n;
  n.fault_class = 0;
  n.amplitude = 1.0;
  CHECK_THROWS(n.validate());
  CHECK_THROWS(synth_signal(inner_race_spec(), 0.01, 1));  // < one window
}

TEST_CASE("windowing counts and boundaries") {
  Rng rng(3);
  CHECK(window(Tensor::uniform({4096}, rng, -1, 1), 0).size() == 4);
  CHECK(window(Tensor::uniform({1024}, rng, -1, 1), 0).size() == 1);

  Tensor sig = Tensor::uniform({2500}, rng, -1, 1);
  auto ws = window(sig, 3, 9);
  REQUIRE(ws.size() == 2);
  CHECK(ws[0].meta.offset == 0);
  CHECK(ws[1].meta.offset == 1024);
  CHECK(ws[0].label == 3);
  CHECK(ws[0].meta.source_id == 9);
  for (Index i = 0; i < 1024; ++i) {
    CHECK(ws[0].samples[i] == sig[i]);
    CHECK(ws[1].samples[i] == sig[1024 + i]);
  }
  CHECK_THROWS(window(Tensor::uniform({1000}, rng, -1, 1), 0));
}

TEST_CASE("windowing partitions the signal prefix") {
  Rng rng(5);
  Tensor sig = Tensor::uniform({3500}, rng, -1, 1);
  auto ws = window(sig, 0);
  Index pos = 0;
  for (const auto& w : ws)
    for (Index i = 0; i < kWindowLength; ++i, ++pos)
      CHECK(w.samples[i] == sig[pos]);
  CHECK(pos == 1024 * 3);
}

TEST_CASE("make_split is balanced, disjoint and deterministic") {
  Dataset ds = synth_dataset(default_class_specs(), 12, 99);
  CHECK(ds.class_count == 10);

  auto [train, test] = make_split(ds, 5, 4, 17);
  CHECK(train.size() == 50);
  CHECK(test.size() == 40);
  for (int c : train.per_class_counts()) CHECK(c == 5);
  for (int c : test.per_class_counts()) CHECK(c == 4);
  for (const auto& w : train.windows) CHECK(w.meta.origin == Origin::train);
  for (const auto& w : test.windows) CHECK(w.meta.origin == Origin::test);

  // same seed, same split
  auto [train2, test2] = make_split(ds, 5, 4, 17);
  for (std::size_t i = 0; i < train.windows.size(); ++i)
    CHECK((train.windows[i].samples.value() ==
           train2.windows[i].samples.value())
              .all());

  // disjointness via (source, offset) identity
  auto key = [](const SignalWindow& w) {
    return std::make_pair(w.meta.source_id, w.meta.offset);
  };
  for (const auto& tw : train.windows)
    for (const auto& ew : test.windows)
      CHECK(key(tw) != key(ew));
}

TEST_CASE("make_split supports an empty training side") {
  Dataset ds = synth_dataset(default_class_specs(), 6, 7);
  auto [train, test] = make_split(ds, 0, 4, 1);
  CHECK(train.size() == 0);
  CHECK(test.size() == 40);
}

TEST_CASE("make_split names the deficient class") {
  Dataset ds = synth_dataset(default_class_specs(), 6, 7);
  try {
    make_split(ds, 5, 4, 1);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("class 0") != std::string::npos);
  }
}

TEST_CASE("recording container roundtrip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "fcdiag_signal_test";
  fs::create_directories(dir);
  const auto path = (dir / "rec.vib").string();

  Rng rng(8);
  Tensor sig = Tensor::uniform({12000}, rng, -2, 2);
  write_recording(path, sig, 12000, 4);

  Dataset ds = load_cwru(path, "DE", 4);
  CHECK(ds.size() == 11);  // floor(12000/1024)
  Index pos = 0;
  for (const auto& w : ds.windows) {
    CHECK(w.label == 4);
    CHECK(w.meta.channel == "DE");
    for (Index i = 0; i < kWindowLength; ++i, ++pos)
      CHECK(w.samples[i] == sig[pos]);
  }

  CHECK_THROWS_WITH_AS(load_cwru(path, "XX", 4),
                       doctest::Contains("unknown channel"),
                       std::runtime_error);
  CHECK_THROWS(load_cwru(path, "DE", 2));  // label mismatch
  CHECK_THROWS(load_cwru((dir / "missing.vib").string(), "DE", 4));

  // corrupt magic
  {
    std::ofstream os(path, std::ios::binary);
    os << "JUNKJUNKJUNK";
  }
  CHECK_THROWS(load_cwru(path, "DE", 4));
  fs::remove_all(dir);
}

TEST_CASE("manifest loading") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "fcdiag_manifest_test";
  fs::create_directories(dir);
  Rng rng(9);
  write_recording((dir / "a.vib").string(),
                  Tensor::uniform({2048}, rng, -1, 1), 12000, 0);
  write_recording((dir / "b.vib").string(),
                  Tensor::uniform({3072}, rng, -1, 1), 12000, 2);
  {
    std::ofstream os(dir / "manifest.txt");
    os << "# comment line\n";
    os << "a.vib,0,DE\n";
    os << "b.vib,2,FE\n";
  }
  Dataset ds = load_manifest((dir / "manifest.txt").string());
  CHECK(ds.size() == 5);
  CHECK(ds.class_count == 3);
  {
    std::ofstream os(dir / "bad.txt");
    os << "a.vib;0;DE\n";
  }
  CHECK_THROWS(load_manifest((dir / "bad.txt").string()));
  fs::remove_all(dir);
}

TEST_CASE("default class specs mirror the 10-label scheme") {
  auto specs = default_class_specs();
  REQUIRE(specs.size() == 10);
  CHECK(specs[0].fault_class == 0);
  CHECK(specs[0].amplitude == 0.0);
  for (int c = 1; c < 10; ++c) {
    CHECK(specs[static_cast<std::size_t>(c)].fault_class == c);
    CHECK(specs[static_cast<std::size_t>(c)].amplitude > 0.0);
    CHECK_NOTHROW(specs[static_cast<std::size_t>(c)].validate());
  }
  // three severities per family
  CHECK(specs[1].amplitude == 0.5);
  CHECK(specs[2].amplitude == 1.0);
  CHECK(specs[3].amplitude == 1.5);
  CHECK(specs[1].impulse_rate_hz == specs[2].impulse_rate_hz);
  CHECK(specs[1].impulse_rate_hz != specs[4].impulse_rate_hz);
}
