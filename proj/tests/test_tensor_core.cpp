#include <cmath>
#include <vector>

#include "doctest.h"
#include "fsg/errors.hpp"
#include "fsg/errors.hpp"
#include "fsg/fft.hpp"
#include "fsg/gradcheck.hpp"
#include "fsg/kernels.hpp"
#include "fsg/layers.hpp"
#include "fsg/ops.hpp"
#include "oracles.hpp"

using fsg::PadQuad;
using fsg::Shape;
using fsg::Tensor;
using TD = Tensor<double>;
using TF = Tensor<float>;

namespace {

TF plane2x2() { return TF(Shape{1, 1, 2, 2}, {1, 2, 3, 4}); }

std::vector<float> values(const TF& t) { return {t.data().begin(), t.data().end()}; }

// Gradient of `loss` w.r.t. x.
std::vector<double> grad_of(const TD& x, const std::function<TD(const TD&)>& loss) {
  x.zero_grad();
  x.set_requires_grad(true);
  fsg::Tape tape;
  TD l;
  {
    fsg::TapeScope scope(tape);
    l = loss(x);
  }
  tape.backward(l);
  return {x.grad().begin(), x.grad().end()};
}

}  // namespace

TEST_SUITE("tensor-core") {
  TEST_CASE("tensor shape, fill and clone") {
    TF t(Shape{2, 3, 4, 5}, 1.5f);
    CHECK(t.size() == 120);
    CHECK(t.at(1, 2, 3, 4) == 1.5f);
    TF alias = t;
    TF copy = t.clone();
    alias.at(0, 0, 0, 0) = 7;
    CHECK(t.at(0, 0, 0, 0) == 7);
    CHECK(copy.at(0, 0, 0, 0) == 1.5f);
    CHECK_THROWS_AS(TF(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3}), fsg::ShapeError);
  }

  TEST_CASE("grad buffer mirrors data shape") {
    TF t(Shape{1, 2, 3, 3});
    CHECK_FALSE(t.has_grad());
    CHECK(t.grad().size() == t.size());
    CHECK(t.has_grad());
  }

  TEST_CASE("non-finite forward output is an error") {
    TF t(Shape{1, 1, 1, 2}, {1.0f, INFINITY});
    CHECK_THROWS_AS(fsg::relu(t), fsg::NumericError);
  }

  TEST_CASE("conv2d 2x2 all-ones kernel") {
    const TF w(Shape{1, 1, 2, 2}, 1.0f);
    const TF y = fsg::conv2d(plane2x2(), w, TF());
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 10.0f);
  }

  TEST_CASE("conv2d 1x3 kernel with left padding 2") {
    const TF w(Shape{1, 1, 1, 3}, 1.0f);
    const TF y = fsg::conv2d(plane2x2(), w, TF(), 1, PadQuad{2, 0, 0, 0});
    CHECK(values(y) == std::vector<float>{1, 3, 3, 7});
    const auto ref = oracle::conv({1, 2, 3, 4}, Shape{1, 1, 2, 2}, {1, 1, 1}, {}, 1, 1, 3, 1,
                                  PadQuad{2, 0, 0, 0}, 1);
    CHECK(ref == std::vector<double>{1, 3, 3, 7});
  }

  TEST_CASE("conv2d Dirac kernel is the identity") {
    const TF x = oracle::uniform<float>(Shape{2, 3, 7, 7}, 11);
    for (int k : {1, 3, 5}) {
      TF w(Shape{3, 3, k, k});
      fsg::set_dirac(w);
      const TF y = fsg::conv2d(x, w, TF(), 1, PadQuad::same(k / 2));
      CHECK(values(y) == values(x));
    }
  }

  TEST_CASE("conv2d matches nested-loop oracle on 100 random cases") {
    fsg::SplitMix64 rng(5);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 1 + static_cast<int>(rng.below(2));
      const int c = 1 + static_cast<int>(rng.below(4));
      const int o = 1 + static_cast<int>(rng.below(4));
      const int h = 3 + static_cast<int>(rng.below(6));
      const int w = 3 + static_cast<int>(rng.below(6));
      const int kh = 1 + static_cast<int>(rng.below(3));
      const int kw = 1 + static_cast<int>(rng.below(3));
      const int stride = 1 + static_cast<int>(rng.below(2));
      const PadQuad pad{static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3)),
                        static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
      const TF x = oracle::uniform<float>(Shape{n, c, h, w}, rng.next());
      const TF wt = oracle::uniform<float>(Shape{o, c, kh, kw}, rng.next());
      const TF b = oracle::uniform<float>(Shape{1, o, 1, 1}, rng.next());
      const TF y = fsg::conv2d(x, wt, b, stride, pad);
      const auto ref = oracle::conv(oracle::as_double(x), x.shape(), oracle::as_double(wt),
                                    oracle::as_double(b), o, kh, kw, stride, pad, 1);
      worst = std::max(worst, oracle::max_abs_diff(oracle::as_double(y), ref));
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("depthwise conv: Dirac identity, constant interior and grouped oracle") {
    const TF x = oracle::uniform<float>(Shape{1, 2, 4, 4}, 3);
    TF dirac(Shape{2, 1, 3, 3});
    fsg::set_dirac(dirac);
    CHECK(values(fsg::depthwise_conv2d(x, dirac, TF(), PadQuad::same(1))) == values(x));

    const TF constant(Shape{1, 2, 5, 5}, 0.75f);
    const TF ones(Shape{2, 1, 3, 3}, 1.0f);
    const TF y = fsg::depthwise_conv2d(constant, ones, TF(), PadQuad::same(1));
    for (int c = 0; c < 2; ++c) {
      for (int i = 1; i < 4; ++i) {
        for (int j = 1; j < 4; ++j) CHECK(y.at(0, c, i, j) == doctest::Approx(9 * 0.75));
      }
    }
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4 * 0.75));

    fsg::SplitMix64 rng(9);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const int c = 1 + static_cast<int>(rng.below(4));
      const int k = rng.coin() ? 3 : 5;
      const TF xr = oracle::uniform<float>(Shape{2, c, 6, 7}, rng.next());
      const TF wr = oracle::uniform<float>(Shape{c, 1, k, k}, rng.next());
      const TF br = oracle::uniform<float>(Shape{1, c, 1, 1}, rng.next());
      const TF yr = fsg::depthwise_conv2d(xr, wr, br, PadQuad::same(k / 2));
      const auto ref = oracle::conv(oracle::as_double(xr), xr.shape(), oracle::as_double(wr),
                                    oracle::as_double(br), c, k, k, 1, PadQuad::same(k / 2), c);
      worst = std::max(worst, oracle::max_abs_diff(oracle::as_double(yr), ref));
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("pooling examples") {
    CHECK(fsg::pool2d(plane2x2(), fsg::PoolMode::kAvg, 2, 2).item() == 2.5f);
    CHECK(fsg::pool2d(plane2x2(), fsg::PoolMode::kMax, 2, 2).item() == 4.0f);
    const TF c(Shape{2, 3, 5, 5}, 0.3f);
    for (const auto out = fsg::global_pool(c, fsg::PoolMode::kAvg); float v : out.data()) {
      CHECK(v == doctest::Approx(0.3f));
    }
  }

  TEST_CASE("max pool backward routes gradient only to the argmax") {
    const TD x(Shape{1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 7});
    const auto g = grad_of(x, [](const TD& t) {
      return fsg::sum(fsg::pool2d(t, fsg::PoolMode::kMax, 2, 2));
    });
    CHECK(g == std::vector<double>{0, 1, 0, 0, 0, 0, 1, 0});
  }

  TEST_CASE("upsample nearest, bilinear constant and bilinear oracle") {
    const TF up = fsg::upsample2d(plane2x2(), 2, fsg::Interp::kNearest);
    CHECK(values(up) == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    const TF c(Shape{1, 2, 3, 3}, 0.4f);
    for (const auto out = fsg::upsample2d(c, 4, fsg::Interp::kBilinear); float v : out.data()) {
      CHECK(v == doctest::Approx(0.4f));
    }
    for (int factor : {2, 4, 8, 16}) {
      const TF ramp = factor == 2 ? plane2x2() : oracle::uniform<float>(Shape{1, 1, 3, 5}, 4);
      const TF y = fsg::upsample2d(ramp, factor, fsg::Interp::kBilinear);
      const auto ref = oracle::bilinear(oracle::as_double(ramp), ramp.h(), ramp.w(), factor);
      CHECK(oracle::max_abs_diff(oracle::as_double(y), ref) < 1e-6);
    }
  }

  TEST_CASE("batchnorm examples") {
    TF rm(Shape{1, 1, 1, 1}), rv(Shape{1, 1, 1, 1}, 1.0f);
    const TF x(Shape{1, 1, 1, 4}, {-1, 1, -1, 1});
    const TF y = fsg::batchnorm2d(x, TF(Shape{1, 1, 1, 1}, 1.0f), TF(Shape{1, 1, 1, 1}), rm, rv,
                                  fsg::Mode::kTrain, 0.1f, 0.0f);
    CHECK(values(y) == std::vector<float>{-1, 1, -1, 1});

    const TF r = oracle::uniform<float>(Shape{4, 3, 5, 5}, 8, -2, 3);
    TF rm3(Shape{1, 3, 1, 1}), rv3(Shape{1, 3, 1, 1}, 1.0f);
    const TF zero = fsg::batchnorm2d(r, TF(Shape{1, 3, 1, 1}), TF(Shape{1, 3, 1, 1}, 0.25f), rm3,
                                     rv3, fsg::Mode::kTrain);
    for (float v : zero.data()) CHECK(v == 0.25f);

    const TD gamma(Shape{1, 3, 1, 1}, {0.5, -2.0, 1.5});
    const TD beta(Shape{1, 3, 1, 1}, {0.1, 0.2, -0.3});
    TD rmd(Shape{1, 3, 1, 1}), rvd(Shape{1, 3, 1, 1}, 1.0);
    const TD yd = fsg::batchnorm2d(oracle::uniform<double>(Shape{4, 3, 5, 5}, 8, -2, 3), gamma,
                                   beta, rmd, rvd, fsg::Mode::kTrain, 0.1, 0.0);
    for (int c = 0; c < 3; ++c) {
      double s = 0, sq = 0;
      const int count = 4 * 25;
      for (int b = 0; b < 4; ++b) {
        for (int i = 0; i < 25; ++i) s += yd.at(b, c, i / 5, i % 5);
      }
      const double mean = s / count;
      for (int b = 0; b < 4; ++b) {
        for (int i = 0; i < 25; ++i) sq += std::pow(yd.at(b, c, i / 5, i % 5) - mean, 2);
      }
      CHECK(std::abs(mean - beta.data()[c]) < 1e-4);
      CHECK(std::abs(std::sqrt(sq / count) - std::abs(gamma.data()[c])) < 1e-4);
    }
  }

  TEST_CASE("batchnorm running statistics use momentum and unbiased variance") {
    TD rm(Shape{1, 1, 1, 1}), rv(Shape{1, 1, 1, 1}, 1.0);
    const TD x(Shape{1, 1, 1, 4}, {1, 2, 3, 6});
    fsg::batchnorm2d(x, TD(Shape{1, 1, 1, 1}, 1.0), TD(Shape{1, 1, 1, 1}), rm, rv,
                     fsg::Mode::kTrain, 0.1);
    // mean 3, unbiased variance (4 + 1 + 0 + 9) / 3
    CHECK(rm.item() == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(rv.item() == doctest::Approx(0.9 + 0.1 * 14.0 / 3).epsilon(1e-12));
  }

  TEST_CASE("elementwise ops") {
    CHECK(fsg::sigmoid(TF::scalar(0)).item() == 0.5f);
    CHECK(fsg::relu(TF::scalar(-3)).item() == 0.0f);
    CHECK(fsg::relu(TF::scalar(3)).item() == 3.0f);
    CHECK(fsg::scale(TF::scalar(3), 2.5f).item() == 7.5f);
    const TF a = oracle::uniform<float>(Shape{2, 3, 4, 4}, 1);
    const TF b = oracle::uniform<float>(Shape{2, 5, 4, 4}, 2);
    const std::vector<TF> parts{a, b};
    const TF cat = fsg::concat_channels(parts);
    const std::vector<int> sizes{3, 5};
    const auto split = fsg::split_channels(cat, std::span<const int>(sizes));
    CHECK(values(split[0]) == values(a));
    CHECK(values(split[1]) == values(b));
    const TF gate = oracle::uniform<float>(Shape{2, 1, 4, 4}, 3);
    const TF prod = fsg::mul(a, gate);
    CHECK(prod.at(1, 2, 3, 1) == a.at(1, 2, 3, 1) * gate.at(1, 0, 3, 1));
    CHECK_THROWS_AS(fsg::add(a, b), fsg::ShapeError);
  }

  TEST_CASE("fft2d of a 2x2 plane and a constant plane") {
    const auto z = fsg::fft2d(plane2x2());
    CHECK(values(z.real) == std::vector<float>{10, -2, -4, 0});
    CHECK(values(z.imag) == std::vector<float>{0, 0, 0, 0});
    const auto c = fsg::fft2d(TF(Shape{1, 1, 8, 16}, 0.5f));
    CHECK(c.real.data()[0] == doctest::Approx(0.5 * 128));
    for (std::size_t i = 1; i < c.real.size(); ++i) {
      CHECK(std::abs(c.real.data()[i]) < 1e-6);
      CHECK(std::abs(c.imag.data()[i]) < 1e-6);
    }
  }

  TEST_CASE("fft2d matches direct DFT and round trips") {
    for (int hw : {4, 8, 16}) {
      const TD x = oracle::uniform<double>(Shape{1, 1, hw, hw}, 40 + hw);
      const auto z = fsg::fft2d(x);
      const auto ref = oracle::dft2d(oracle::as_double(x), {}, hw, hw);
      CHECK(oracle::max_abs_diff(oracle::as_double(z.real), ref.re) < 1e-9);
      CHECK(oracle::max_abs_diff(oracle::as_double(z.imag), ref.im) < 1e-9);
    }
    const TD xd = oracle::uniform<double>(Shape{2, 2, 64, 64}, 7);
    CHECK(oracle::max_abs_diff(oracle::as_double(fsg::ifft2d(fsg::fft2d(xd))),
                               oracle::as_double(xd)) < 1e-10);
    const TF xf = oracle::uniform<float>(Shape{2, 2, 64, 64}, 7);
    CHECK(oracle::max_abs_diff(oracle::as_double(fsg::ifft2d(fsg::fft2d(xf))),
                               oracle::as_double(xf)) < 1e-4);
    CHECK_THROWS_AS(fsg::fft2d(TF(Shape{1, 1, 6, 8})), fsg::ShapeError);
  }

  TEST_CASE("strict inverse rejects a non-Hermitian spectrum") {
    fsg::ComplexPair<double> z{TD(Shape{1, 1, 4, 4}), TD(Shape{1, 1, 4, 4})};
    z.imag.at(0, 0, 0, 1) = 1.0;
    CHECK(fsg::ifft2d_imag_residue(z) > 0.01);
    CHECK_THROWS_AS(fsg::ifft2d(z), fsg::NumericError);
    CHECK_NOTHROW(fsg::ifft2d(z, fsg::ResidueCheck::kRealPart));
  }

  TEST_CASE("backward of sum and relu") {
    const TD x = oracle::uniform<double>(Shape{1, 2, 3, 3}, 2);
    for (double g : grad_of(x, [](const TD& t) { return fsg::sum(t); })) CHECK(g == 1.0);
    const TD neg = TD::scalar(-1), pos = TD::scalar(1);
    const auto relu_sum = [](const TD& t) { return fsg::sum(fsg::relu(t)); };
    CHECK(grad_of(neg, relu_sum)[0] == 0.0);
    CHECK(grad_of(pos, relu_sum)[0] == 1.0);
  }

  TEST_CASE("backward twice without reset throws") {
    const TD x = TD::scalar(2);
    x.set_requires_grad(true);
    fsg::Tape tape;
    TD l;
    {
      fsg::TapeScope scope(tape);
      l = fsg::sum(fsg::mul(x, x));
    }
    tape.backward(l);
    CHECK(x.grad()[0] == 4.0);
    CHECK_THROWS_AS(tape.backward(l), std::logic_error);
  }

  TEST_CASE("composite conv, batchnorm, sigmoid gradient matches finite differences") {
    fsg::SplitMix64 rng(3);
    TD x = oracle::uniform<double>(Shape{1, 2, 4, 4}, 1);
    TD w = oracle::uniform<double>(Shape{3, 2, 3, 3}, 2);
    TD b = oracle::uniform<double>(Shape{1, 3, 1, 1}, 3);
    TD gamma = oracle::uniform<double>(Shape{1, 3, 1, 1}, 4, 0.5, 1.5);
    TD beta = oracle::uniform<double>(Shape{1, 3, 1, 1}, 5);
    std::vector<TD> params{x, w, b, gamma, beta};
    const auto loss = [&]() {
      TD rm(Shape{1, 3, 1, 1}), rv(Shape{1, 3, 1, 1}, 1.0);
      const TD h = fsg::conv2d(x, w, b, 1, PadQuad::same(1));
      return fsg::sum(fsg::sigmoid(fsg::batchnorm2d(h, gamma, beta, rm, rv, fsg::Mode::kTrain)));
    };
    const auto r = fsg::finite_diff_check(loss, params);
    CHECK(r.max_rel_error < 1e-4);
  }

  TEST_CASE("every op passes finite-difference checks") {
    using Fn = std::function<TD(const TD&)>;
    const TD other = oracle::uniform<double>(Shape{2, 3, 4, 4}, 77);
    const TD gate = oracle::uniform<double>(Shape{2, 1, 4, 4}, 78);
    const TD dw = oracle::uniform<double>(Shape{3, 1, 3, 3}, 79);
    const std::vector<std::pair<const char*, Fn>> cases{
        {"add broadcast", [&](const TD& t) { return fsg::sum(fsg::mul(fsg::add(t, gate), other)); }},
        {"mul", [&](const TD& t) { return fsg::sum(fsg::mul(t, fsg::mul(t, gate))); }},
        {"relu", [&](const TD& t) { return fsg::sum(fsg::mul(fsg::relu(t), other)); }},
        {"sigmoid", [&](const TD& t) { return fsg::sum(fsg::mul(fsg::sigmoid(t), other)); }},
        {"scale", [&](const TD& t) { return fsg::sum(fsg::mul(fsg::scale(t, 1.7), other)); }},
        {"max pool", [&](const TD& t) {
           return fsg::sum(fsg::mul(fsg::pool2d(t, fsg::PoolMode::kMax, 2, 2),
                                    fsg::pool2d(other, fsg::PoolMode::kAvg, 2, 2)));
         }},
        {"avg pool", [&](const TD& t) {
           return fsg::sum(fsg::mul(fsg::pool2d(t, fsg::PoolMode::kAvg, 2, 2),
                                    fsg::pool2d(other, fsg::PoolMode::kAvg, 2, 2)));
         }},
        {"global pools", [&](const TD& t) {
           return fsg::sum(fsg::add(fsg::mul(fsg::global_pool(t, fsg::PoolMode::kMax),
                                             fsg::global_pool(other, fsg::PoolMode::kAvg)),
                                    fsg::global_pool(fsg::mul(t, t), fsg::PoolMode::kAvg)));
         }},
        {"channel pools", [&](const TD& t) {
           return fsg::sum(fsg::mul(fsg::add(fsg::channel_pool(t, fsg::PoolMode::kMax),
                                             fsg::channel_pool(t, fsg::PoolMode::kAvg)),
                                    gate));
         }},
        {"bilinear x2", [&](const TD& t) {
           return fsg::sum(fsg::mul(fsg::upsample2d(t, 2, fsg::Interp::kBilinear),
                                    fsg::upsample2d(other, 2, fsg::Interp::kNearest)));
         }},
        {"nearest x4", [&](const TD& t) {
           return fsg::sum(fsg::mul(fsg::upsample2d(t, 4, fsg::Interp::kNearest),
                                    fsg::upsample2d(other, 4, fsg::Interp::kBilinear)));
         }},
        {"depthwise", [&](const TD& t) {
           return fsg::sum(fsg::mul(fsg::depthwise_conv2d(t, dw, TD(), PadQuad::same(1)), other));
         }},
        {"concat and slice", [&](const TD& t) {
           const std::vector<TD> parts{t, fsg::mul(t, t)};
           return fsg::sum(fsg::mul(fsg::slice_channels(fsg::concat_channels(parts), 2, 3), other));
         }},
        {"fft real", [&](const TD& t) {
           const auto z = fsg::fft2d(t);
           return fsg::sum(fsg::add(fsg::mul(z.real, other), fsg::mul(z.imag, fsg::mul(z.imag, other))));
         }},
        {"fft round trip", [&](const TD& t) {
           auto z = fsg::fft2d(t);
           z.real = fsg::mul(z.real, other);
           return fsg::sum(fsg::mul(fsg::ifft2d(z, fsg::ResidueCheck::kRealPart), other));
         }},
        {"batchnorm eval", [&](const TD& t) {
           TD rm = oracle::uniform<double>(Shape{1, 3, 1, 1}, 5);
           TD rv = oracle::uniform<double>(Shape{1, 3, 1, 1}, 6, 0.5, 2.0);
           return fsg::sum(fsg::mul(
               fsg::batchnorm2d(t, TD(Shape{1, 3, 1, 1}, 1.3), TD(Shape{1, 3, 1, 1}, 0.2), rm,
                                rv, fsg::Mode::kEval),
               other));
         }},
    };
    for (const auto& [name, fn] : cases) {
      CAPTURE(name);
      std::vector<TD> params{oracle::uniform<double>(Shape{2, 3, 4, 4}, 100)};
      const TD& x = params[0];
      const auto r = fsg::finite_diff_check([&]() { return fn(x); }, params);
      CHECK(r.max_rel_error < 1e-4);
    }
  }

  TEST_CASE("finite_diff_check: linear map is exact, corrupted backward is caught") {
    std::vector<TD> params{oracle::uniform<double>(Shape{1, 2, 3, 3}, 1)};
    const TD coeff = oracle::uniform<double>(Shape{1, 2, 3, 3}, 2);
    const TD& x = params[0];
    const auto linear = fsg::finite_diff_check([&]() { return fsg::sum(fsg::mul(x, coeff)); },
                                               params);
    CHECK(linear.max_rel_error < 1e-9);

    // square(x) whose recorded derivative is 3x instead of 2x.
    const auto broken = [&]() {
      TD out(x.shape());
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] * x.data()[i];
      if (fsg::Tape::active() && x.requires_grad()) {
        out.set_requires_grad(true);
        fsg::Tape::active()->record("broken_square", [x, out]() {
          if (!out.has_grad()) return;
          for (std::size_t i = 0; i < out.size(); ++i) {
            x.grad()[i] += 3 * x.data()[i] * out.grad()[i];
          }
        });
      }
      return fsg::sum(out);
    };
    const auto r = fsg::finite_diff_check(broken, params);
    CHECK(r.max_rel_error > 1e-2);
  }

  TEST_CASE("backward with parameter list zero-fills unreached parameters") {
    TD used = TD::scalar(2), unused = TD::scalar(5);
    used.set_requires_grad(true);
    unused.set_requires_grad(true);
    std::vector<TD> params{used, unused};
    fsg::Tape tape;
    TD l;
    {
      fsg::TapeScope scope(tape);
      l = fsg::sum(fsg::scale(used, 3.0));
    }
    CHECK(tape.backward(l, std::span<TD>(params)) == 1);
    CHECK(used.grad()[0] == 3.0);
    CHECK(unused.grad()[0] == 0.0);
  }

  TEST_CASE("production kernels match serial reference kernels") {
    const fsg::kernels::ConvGeometry g{Shape{2, 3, 9, 8}, 4, 3, 2, 1, PadQuad{1, 0, 2, 1}, 1};
    const TF x = oracle::uniform<float>(g.input, 1);
    const TF w = oracle::uniform<float>(Shape{4, 3, 3, 2}, 2);
    const TF dy = oracle::uniform<float>(g.output(), 3);
    std::vector<float> y1(g.output().numel()), y2(y1.size());
    fsg::kernels::conv2d_forward<float>(g, x.data().data(), w.data().data(), nullptr, y1.data());
    fsg::kernels::conv2d_forward_reference<float>(g, x.data().data(), w.data().data(), nullptr, y2.data());
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-5));
    std::vector<float> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size());
    fsg::kernels::conv2d_backward<float>(g, x.data().data(), w.data().data(), dy.data().data(),
                                  dx1.data(), dw1.data(), nullptr);
    fsg::kernels::conv2d_backward_reference<float>(g, x.data().data(), w.data().data(),
                                            dy.data().data(), dx2.data(), dw2.data(), nullptr);
    for (std::size_t i = 0; i < dx1.size(); ++i) CHECK(std::abs(dx1[i] - dx2[i]) < 1e-5);
    for (std::size_t i = 0; i < dw1.size(); ++i) CHECK(std::abs(dw1[i] - dw2[i]) < 1e-4);
  }

  TEST_CASE("flop counter tallies conv MACs") {
    const TF x(Shape{1, 8, 4, 4});
    const TF w(Shape{16, 8, 1, 1});
    fsg::FlopCounter counter;
    fsg::conv2d(x, w, TF());
    CHECK(counter.conv_macs() == 8 * 16 * 16);
  }
}
