// Copyright 2026 The tfmamba Authors
//
// Licensed under the Apache License, Version 2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tfmamba/autodiff.hpp"
#include "tfmamba/fft.hpp"
#include "tfmamba/kernels.hpp"
#include "tfmamba/rng.hpp"

using namespace tfmamba;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void expect_complex_near(const ComplexTensor& got, std::initializer_list<Complex> want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  std::size_t i = 0;
  for (const Complex& w : want) {
    EXPECT_NEAR(got[i].real(), w.real(), tol) << "bin " << i;
    EXPECT_NEAR(got[i].imag(), w.imag(), tol) << "bin " << i;
    ++i;
  }
}

}  // namespace

TEST(Fft, ZeroInputGivesZeroSpectrum) {
  expect_complex_near(fft_real_1d(Tensor::vector({0, 0, 0, 0})), {0, 0, 0}, 0.0);
}

TEST(Fft, ImpulseHasFlatSpectrum) {
  expect_complex_near(fft_real_1d(Tensor::vector({1, 0, 0, 0})), {1, 1, 1}, 1e-15);
  expect_complex_near(dft_oracle(Tensor::vector({1, 0, 0, 0})), {1, 1, 1}, 1e-15);
}

TEST(Fft, ConstantSignalConcentratesAtDc) {
  expect_complex_near(dft_oracle(Tensor::vector({1, 1, 1, 1})), {4, 0, 0}, 1e-12);
}

TEST(Fft, RampMatchesHandDft) {
  const Tensor x = Tensor::vector({1, 2, 3, 4});
  expect_complex_near(dft_oracle(x), {{10, 0}, {-2, 2}, {-2, 0}}, 1e-12);
  expect_complex_near(fft_real_1d(x), {{10, 0}, {-2, 2}, {-2, 0}}, 1e-12);
}

TEST(Fft, InverseOfHandSpectrum) {
  const ComplexTensor s({3}, {Complex(10, 0), Complex(-2, 2), Complex(-2, 0)});
  const Tensor x = ifft_real_1d(s, 4);
  const double want[] = {1, 2, 3, 4};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x[i], want[i], 1e-12);
  const Tensor z = ifft_real_1d(ComplexTensor({3}), 4);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Fft, ShortRoundTrip) {
  const Tensor x = Tensor::vector({3, 1, 4, 1});
  EXPECT_LT(max_abs_diff(ifft_real_1d(fft_real_1d(x), 4), x), 1e-12);
}

TEST(Fft, ErrorsOnEmptyOrMismatchedInput) {
  EXPECT_THROW(fft_real_1d(Tensor({0})), std::invalid_argument);
  EXPECT_THROW(dft_oracle(Tensor({0})), std::invalid_argument);
  EXPECT_THROW(ifft_real_1d(ComplexTensor({2}), 4), std::invalid_argument);
}

TEST(Fft, AgreesWithOracleAcrossLengths) {
  Rng rng(11);
  for (std::size_t len = 1; len <= 300; ++len) {
    const Tensor x = random_tensor({len}, rng);
    EXPECT_LT(max_abs_diff(fft_real_1d(x), dft_oracle(x)), 1e-10) << "L=" << len;
  }
  for (std::size_t len : {1000u, 1024u, 4096u}) {
    const Tensor x = random_tensor({len}, rng);
    EXPECT_LT(max_abs_diff(fft_real_1d(x), dft_oracle(x)), 1e-10) << "L=" << len;
  }
}

TEST(Fft, RoundTripIdentity) {
  Rng rng(12);
  for (std::size_t len = 1; len <= 256; ++len) {
    const Tensor x = random_tensor({len}, rng, -5, 5);
    EXPECT_LT(max_abs_diff(ifft_real_1d(fft_real_1d(x), len), x), 1e-10) << "L=" << len;
  }
}

TEST(Fft, Parseval) {
  Rng rng(13);
  for (std::size_t len = 1; len <= 1024; len += (len < 64 ? 1 : 37)) {
    const Tensor x = random_tensor({len}, rng);
    const ComplexTensor s = fft_real_1d(x);
    double time_energy = 0.0;
    for (double v : x.data()) time_energy += v * v;
    double freq = std::norm(s[0]);
    for (std::size_t k = 1; k < s.size(); ++k) {
      freq += (2 * k == len ? 1.0 : 2.0) * std::norm(s[k]);
    }
    freq /= static_cast<double>(len);
    EXPECT_NEAR(freq, time_energy, 1e-9 * time_energy) << "L=" << len;
  }
}

TEST(Fft, Linearity) {
  Rng rng(14);
  for (std::size_t len : {5u, 16u, 33u}) {
    const Tensor x = random_tensor({len}, rng), y = random_tensor({len}, rng);
    const double a = 1.7, b = -0.3;
    Tensor z({len});
    for (std::size_t i = 0; i < len; ++i) z[i] = a * x[i] + b * y[i];
    const auto fx = fft_real_1d(x), fy = fft_real_1d(y), fz = fft_real_1d(z);
    for (std::size_t k = 0; k < fz.size(); ++k) {
      EXPECT_LT(std::abs(fz[k] - (a * fx[k] + b * fy[k])), 1e-10);
    }
  }
}

TEST(PowerSpectrum, Basics) {
  EXPECT_EQ(power_spectrum(ComplexTensor({1}, {Complex(3, 4)}))[0], 25.0);
  EXPECT_EQ(power_spectrum(ComplexTensor({1}))[0], 0.0);
  const Tensor p = power_spectrum(fft_real_1d(Tensor::vector({1, 0, 0, 0})));
  for (double v : p.data()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Silu, ScalarValues) {
  EXPECT_EQ(silu(0.0), 0.0);
  EXPECT_NEAR(silu(40.0), 40.0, 1e-12);
  EXPECT_NEAR(silu(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(silu(1.0), 0.7310585786300049, 1e-15);
}

TEST(DepthwiseConv, DeltaKernelIsIdentity) {
  Rng rng(21);
  for (std::size_t len : {1u, 2u, 7u}) {
    for (std::size_t ch : {1u, 3u}) {
      for (std::size_t k : {1u, 2u, 4u}) {
        const Tensor x = random_tensor({len, ch}, rng);
        Tensor kernel({k, ch});
        for (std::size_t c = 0; c < ch; ++c) kernel(k - 1, c) = 1.0;
        EXPECT_EQ(depthwise_conv1d(x, kernel, Tensor({ch})), x);
      }
    }
  }
}

TEST(DepthwiseConv, ZeroKernelGivesBias) {
  const Tensor out = depthwise_conv1d(Tensor({4, 2}, 3.0), Tensor({3, 2}), Tensor::vector({0.5, -2}));
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_EQ(out(t, 0), 0.5);
    EXPECT_EQ(out(t, 1), -2.0);
  }
}

TEST(DepthwiseConv, MatchesNestedLoopOracle) {
  Rng rng(22);
  const std::size_t len = 3, ch = 2, k = 2;
  const Tensor x = random_tensor({len, ch}, rng), kernel = random_tensor({k, ch}, rng),
               bias = random_tensor({ch}, rng);
  const Tensor out = depthwise_conv1d(x, kernel, bias);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      // Explicit zero-padded sequence of length L + k - 1.
      std::vector<double> padded(len + k - 1, 0.0);
      for (std::size_t s = 0; s < len; ++s) padded[s + k - 1] = x(s, c);
      double want = bias[c];
      for (std::size_t j = 0; j < k; ++j) want += kernel(j, c) * padded[t + j];
      EXPECT_NEAR(out(t, c), want, 1e-15);
    }
  }
}

TEST(DepthwiseConv, RejectsChannelMismatch) {
  EXPECT_THROW(depthwise_conv1d(Tensor({3, 2}), Tensor({2, 3}), Tensor({2})), ShapeMismatch);
}

TEST(LayerNorm, ConstantRowMapsToShift) {
  const Tensor out = layer_norm(Tensor({1, 4}, 7.0), Tensor({4}, 1.0), Tensor({4}, 0.0), 1e-5);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, StandardizedRowUnchanged) {
  const Tensor out = layer_norm(Tensor::matrix(1, 2, {1, -1}), Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-14);
  EXPECT_NEAR(out[0], 1.0, 1e-12);
  EXPECT_NEAR(out[1], -1.0, 1e-12);
}

TEST(LayerNorm, RowStatistics) {
  Rng rng(23);
  const Tensor x = random_tensor({5, 9}, rng, -3, 8);
  const Tensor out = layer_norm(x, Tensor({9}, 1.0), Tensor({9}, 0.0), 1e-12);
  for (std::size_t i = 0; i < 5; ++i) {
    double mean = 0.0, var = 0.0;
    for (double v : out.row(i)) mean += v;
    mean /= 9.0;
    for (double v : out.row(i)) var += (v - mean) * (v - mean);
    var /= 9.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(Autodiff, SumHasUnitGradient) {
  const auto g = gradient([](Tape&, std::span<const Var> p) { return ad::sum(p[0]); },
                          std::vector<Tensor>{Tensor::vector({1, -2, 3})});
  for (double v : g[0].data()) EXPECT_EQ(v, 1.0);
}

TEST(Autodiff, SelfDotGradientIsTwiceInput) {
  const Tensor x = Tensor::vector({0.5, -1.5, 2});
  const auto g = gradient([](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(p[0], p[0])); },
                          std::vector<Tensor>{x});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g[0][i], 2.0 * x[i]);
}

TEST(Autodiff, NonScalarLossRejected) {
  EXPECT_THROW(gradient([](Tape&, std::span<const Var> p) { return p[0]; },
                        std::vector<Tensor>{Tensor::vector({1, 2})}),
               std::invalid_argument);
}

TEST(Autodiff, DeterministicGradients) {
  Rng rng(31);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  const LossBuilder f = [](Tape&, std::span<const Var> p) {
    return ad::sum(ad::silu(ad::matmul(p[0], p[1])));
  };
  const std::vector<Tensor> params{a, b};
  EXPECT_EQ(gradient(f, params), gradient(f, params));
}

TEST(FiniteDiff, QuadraticIsExact) {
  const auto rep = finite_diff_check(
      [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(p[0], p[0])); },
      {Tensor::vector({3.0})}, 1e-5);
  EXPECT_NEAR(rep.numeric[0][0], 6.0, 1e-9);
  EXPECT_NEAR(rep.analytic[0][0], 6.0, 1e-15);
}

TEST(FiniteDiff, SiluAtOne) {
  const auto rep = finite_diff_check([](Tape&, std::span<const Var> p) { return ad::sum(ad::silu(p[0])); },
                                     {Tensor::vector({1.0})}, 1e-5);
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  const double analytic = s * (1.0 + 1.0 * (1.0 - s));
  EXPECT_NEAR(rep.numeric[0][0], analytic, 1e-7);
  EXPECT_NEAR(rep.analytic[0][0], analytic, 1e-15);
}

TEST(FiniteDiff, LinearMapExact) {
  Rng rng(32);
  const Tensor w = random_tensor({4, 3}, rng);
  const auto rep = finite_diff_check(
      [&](Tape& t, std::span<const Var> p) { return ad::sum(ad::matmul(p[0], t.constant(w))); },
      {random_tensor({2, 4}, rng)}, 1e-5);
  EXPECT_LT(rep.max_rel_error, 1e-9);
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_check([](Tape&, std::span<const Var> p) { return ad::sum(p[0]); },
                                 {Tensor::vector({1.0})}, 0.0),
               std::invalid_argument);
}

// Every differentiable kernel, contracted with a fixed random readout so the
// loss depends on each output entry differently.
class KernelGradients : public ::testing::Test {
 protected:
  Var readout(Tape& t, const Var& y) {
    Rng rng(1234 + y.value().size());
    Tensor w(y.shape());
    for (double& v : w.data()) v = rng.uniform(-1, 1);
    return ad::sum(ad::mul(y, t.constant(w)));
  }

  void check(const LossBuilder& f, std::vector<Tensor> params, double tol = 1e-4) {
    const auto rep = finite_diff_check(f, std::move(params), 1e-5);
    EXPECT_LT(rep.max_rel_error, tol) << "param " << rep.worst_param << " entry " << rep.worst_entry;
  }

  Rng rng{41};
};

TEST_F(KernelGradients, Elementwise) {
  const Tensor x = random_tensor({3, 4}, rng, -2, 2);
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::silu(p[0])); }, {x});
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::sigmoid(p[0])); }, {x});
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::softplus(p[0])); }, {x});
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::exp(p[0])); }, {x});
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::decay_from_raw(p[0])); }, {x});
}

TEST_F(KernelGradients, LinearAlgebra) {
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), bias = random_tensor({5}, rng);
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::linear(p[0], p[1], p[2])); }, {a, b, bias});
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::transpose(p[0])); }, {a});
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::softmax_rows(p[0])); }, {a});
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::mean_rows(p[0])); }, {a});
  check([&](Tape& t, std::span<const Var> p) {
    const Var parts[] = {ad::slice_cols(p[0], 1, 3), p[0]};
    return readout(t, ad::concat_cols(parts));
  }, {a});
}

TEST_F(KernelGradients, NormAndConv) {
  const Tensor x = random_tensor({5, 4}, rng, -2, 2), gain = random_tensor({4}, rng), shift = random_tensor({4}, rng);
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::layer_norm(p[0], p[1], p[2], 1e-5)); },
        {x, gain, shift});
  const Tensor kernel = random_tensor({3, 4}, rng), cbias = random_tensor({4}, rng);
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::depthwise_conv1d(p[0], p[1], p[2])); },
        {x, kernel, cbias});
}

TEST_F(KernelGradients, FourierPair) {
  for (std::size_t len : {1u, 4u, 5u, 8u}) {
    const Tensor x = random_tensor({len, 3}, rng);
    check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::rfft_cols(p[0])); }, {x});
    const Tensor s = random_tensor({rfft_bins(len), 3, 2}, rng);
    check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::irfft_cols(p[0], len)); }, {s});
  }
}

TEST_F(KernelGradients, SoftSpectralGate) {
  const Tensor s = random_tensor({5, 3, 2}, rng);
  for (bool normalize : {false, true}) {
    const ad::GateOptions opt{0.7, ad::GateMode::soft, normalize};
    check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::spectral_gate(p[0], p[1], opt)); },
          {s, Tensor::vector({0.4})});
  }
  // Composition through the transform pair, as used by the frequency branch.
  const Tensor x = random_tensor({6, 2}, rng);
  check([&](Tape& t, std::span<const Var> p) {
    const Var g = ad::spectral_gate(ad::rfft_cols(p[0]), ad::softplus(p[1]), {1.0, ad::GateMode::soft, true});
    return readout(t, ad::irfft_cols(g, 6));
  }, {x, Tensor::vector({-0.3})});
}

TEST_F(KernelGradients, ScanAndLosses) {
  const std::size_t len = 7;
  const Tensor x = random_tensor({len, 4}, rng), araw = random_tensor({len, 4}, rng, -2, 2),
               b = random_tensor({len, 6}, rng), c = random_tensor({len, 6}, rng);
  for (std::size_t chunk : {1u, 3u, 16u}) {
    check([&](Tape& t, std::span<const Var> p) {
      return readout(t, ad::ssd(p[0], ad::decay_from_raw(p[1]), p[2], p[3], 2, chunk));
    }, {x, araw, b, c});
  }
  const Tensor logits = random_tensor({1, 4}, rng, -3, 3);
  check([&](Tape&, std::span<const Var> p) { return ad::cross_entropy(p[0], 2); }, {logits});
  const Tensor u = random_tensor({3, 4, 2}, rng), v = random_tensor({3, 2, 2}, rng);
  check([&](Tape& t, std::span<const Var> p) { return readout(t, ad::complex_cosine(p[0], p[1])); }, {u, v});
  const Tensor scores = random_tensor({4, 3}, rng);
  const std::vector<std::size_t> labels{0, 2, 2, 1};
  check([&](Tape&, std::span<const Var> p) { return ad::info_nce(p[0], labels, 0.3); }, {scores});
}
