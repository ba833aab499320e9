#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fcdiag/fft.hpp"
#include "fcdiag/grad_check.hpp"
#include "oracles.hpp"

using namespace fcdiag;

TEST_CASE("delta function has a flat spectrum") {
  auto s = rfft(Tensor::from({1, 0, 0, 0}));
  REQUIRE(s.bin_count() == 3);
  for (Index k = 0; k < 3; ++k) {
    CHECK(s.real(k) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.imag(k) == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("constant signal concentrates in bin zero") {
  auto s = rfft(Tensor::from({1, 1, 1, 1}));
  CHECK(s.real(0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(s.real(1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s.imag(1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s.real(2) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("rfft matches the naive DFT oracle at length 256") {
  Rng rng(100);
  Tensor x = Tensor::uniform({256}, rng, -1, 1);
  auto s = rfft(x);
  auto ref = oracle::naive_dft(oracle::to_vector(x));
  for (Index k = 0; k <= 128; ++k) {
    CHECK(std::abs(s.real(k) - ref[static_cast<std::size_t>(k)].real()) <
          1e-9);
    CHECK(std::abs(s.imag(k) - ref[static_cast<std::size_t>(k)].imag()) <
          1e-9);
  }
}

TEST_CASE("rfft matches the oracle at every power of two up to 256") {
  Rng rng(101);
  for (Index l = 2; l <= 256; l *= 2) {
    Tensor x = Tensor::uniform({l}, rng, -2, 2);
    auto s = rfft(x);
    auto ref = oracle::naive_dft(oracle::to_vector(x));
    for (Index k = 0; k <= l / 2; ++k) {
      CHECK(std::abs(s.real(k) - ref[static_cast<std::size_t>(k)].real()) <
            1e-9);
      CHECK(std::abs(s.imag(k) - ref[static_cast<std::size_t>(k)].imag()) <
            1e-9);
    }
  }
}

TEST_CASE("rfft rejects non-power-of-two lengths") {
  Rng rng(1);
  CHECK_THROWS(rfft(Tensor::uniform({12}, rng, -1, 1)));
  CHECK_THROWS(rfft(Tensor::uniform({1000}, rng, -1, 1)));
}

TEST_CASE("spectrum edge bins have exactly zero imaginary part") {
  Rng rng(102);
  Tensor x = Tensor::uniform({64}, rng, -1, 1);
  auto s = rfft(x);
  CHECK(s.imag(0) == 0.0);
  CHECK(s.imag(32) == 0.0);
  CHECK(s.bin_count() == 33);
}

TEST_CASE("irfft recovers the constant signal") {
  Tensor bins = Tensor::from({3, 2}, {4, 0, 0, 0, 0, 0});
  Tensor x = irfft(ComplexSpectrum(bins, 4));
  REQUIRE(x.size() == 4);
  for (Index i = 0; i < 4; ++i)
    CHECK(x[i] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("roundtrip identity at length 1024") {
  Rng rng(103);
  Tensor x = Tensor::uniform({1024}, rng, -3, 3);
  Tensor back = irfft(rfft(x));
  double worst = (back.value() - x.value()).abs().maxCoeff();
  CHECK(worst < 1e-9);
}

TEST_CASE("roundtrip identity for all powers of two up to 4096") {
  Rng rng(104);
  for (Index l = 2; l <= 4096; l *= 2) {
    Tensor x = Tensor::uniform({l}, rng, -3, 3);
    Tensor back = irfft(rfft(x));
    CHECK((back.value() - x.value()).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("single-bin perturbation spreads as a cosine over every sample") {
  // Adding D to interior bin k changes sample n by (2D/L)*cos(2 pi k n / L):
  // the conjugate-symmetric twin doubles the real contribution.
  Rng rng(105);
  const Index l = 64;
  const Index k = 3;
  const double delta = 0.5;
  Tensor x = Tensor::uniform({l}, rng, -1, 1);
  auto s = rfft(x);
  Tensor before = irfft(s);
  Eigen::ArrayXd bumped = s.bins().value();
  bumped[2 * k] += delta;
  Tensor after = irfft(ComplexSpectrum(Tensor({l / 2 + 1, 2}, bumped), l));
  for (Index n = 0; n < l; ++n) {
    double expected = (1.0 / static_cast<double>(l)) * delta * 2.0 *
                      std::cos(2.0 * M_PI * 3.0 * static_cast<double>(n) /
                               static_cast<double>(l));
    CHECK(after[n] - before[n] == doctest::Approx(expected).epsilon(1e-9));
    CHECK(std::abs(expected) >= 0.0);
  }
}

TEST_CASE("linearity of the transform") {
  Rng rng(106);
  const Index l = 128;
  Tensor x = Tensor::uniform({l}, rng, -1, 1);
  Tensor y = Tensor::uniform({l}, rng, -1, 1);
  const double a = 1.7, b = -0.4;
  Tensor combo = add(mul_scalar(x, a), mul_scalar(y, b));
  auto sc = rfft(combo);
  auto sx = rfft(x);
  auto sy = rfft(y);
  for (Index k = 0; k <= l / 2; ++k) {
    CHECK(std::abs(sc.real(k) - (a * sx.real(k) + b * sy.real(k))) < 1e-9);
    CHECK(std::abs(sc.imag(k) - (a * sx.imag(k) + b * sy.imag(k))) < 1e-9);
  }
}

TEST_CASE("irfft rejects malformed spectra") {
  Tensor bins = Tensor::from({3, 2}, {1, 0, 0, 0, 0, 0});
  CHECK_THROWS(ComplexSpectrum(bins, 8));   // bin count mismatch
  CHECK_THROWS(irfft(ComplexSpectrum(Tensor::from({4, 2}, {1, 0, 0, 0, 0, 0, 0, 0}), 6)));
}

TEST_CASE("rfft and irfft are differentiable") {
  Rng rng(107);
  Tensor x = Tensor::uniform({32}, rng, -1, 1, true);
  Tensor w = Tensor::uniform({17, 2}, rng, -1, 1, true);
  auto f = [&] {
    Tensor bins = rfft(x).bins();
    Tensor mixed = mul(bins, w);
    Tensor back = irfft(ComplexSpectrum(mixed, 32));
    return mean(square(back));
  };
  CHECK(grad_check(f, {x, w}) < 1e-6);
}

TEST_CASE("batched channel transform agrees with per-row rfft") {
  Rng rng(108);
  Tensor x = Tensor::uniform({2, 3, 16}, rng, -1, 1);
  Tensor spec = rfft_channels(x);
  REQUIRE(spec.shape() == Shape{2, 6, 9});
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) {
      Eigen::ArrayXd row = x.value().segment((i * 3 + j) * 16, 16);
      auto s = rfft(Tensor({16}, row));
      for (Index k = 0; k < 9; ++k) {
        CHECK(spec[(i * 6 + j) * 9 + k] == doctest::Approx(s.real(k)));
        CHECK(spec[(i * 6 + 3 + j) * 9 + k] == doctest::Approx(s.imag(k)));
      }
    }
  Tensor back = irfft_channels(spec, 16);
  CHECK((back.value() - x.value()).abs().maxCoeff() < 1e-9);
}

TEST_CASE("batched transforms are differentiable") {
  Rng rng(109);
  Tensor x = Tensor::uniform({2, 2, 8}, rng, -1, 1, true);
  Tensor w = Tensor::uniform({2, 4, 5}, rng, -1, 1, true);
  auto f = [&] {
    Tensor spec = rfft_channels(x);
    Tensor mixed = mul(spec, w);
    Tensor back = irfft_channels(mixed, 8);
    return mean(square(back));
  };
  CHECK(grad_check(f, {x, w}) < 1e-6);
}
