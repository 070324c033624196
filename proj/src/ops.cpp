#include "fsg/ops.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <numeric>

#include "fsg/errors.hpp"

namespace fsg {

namespace {

thread_local FlopCounter* g_flops = nullptr;
constexpr std::size_t kParallelThreshold = 1 << 15;

template <typename T>
Tensor<T> finish(Tensor<T> out, const char* op) {
  check_finite(out, op);
  return out;
}

template <typename T>
void require_defined(const Tensor<T>& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined input tensor");
}

}  // namespace

FlopCounter::FlopCounter() : previous_(g_flops) { g_flops = this; }
FlopCounter::~FlopCounter() { g_flops = previous_; }
void FlopCounter::add_conv(std::uint64_t v) {
  if (g_flops) g_flops->conv_ += v;
}
void FlopCounter::add_fft(std::uint64_t v) {
  if (g_flops) g_flops->fft_ += v;
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

template <typename T>
Tensor<T> conv_impl(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                    const kernels::ConvGeometry& g, const char* op) {
  g.validate();
  if (weight.size() != g.weight_count()) {
    throw ShapeError(std::string(op) + ": weight " + weight.shape().str() +
                     " does not match input " + x.shape().str());
  }
  if (bias.defined() && bias.size() != static_cast<std::size_t>(g.out_c)) {
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(bias.size()) +
                     " values, expected " + std::to_string(g.out_c));
  }
  Tensor<T> out(g.output());
  kernels::conv2d_forward(g, x.data().data(), weight.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out.data().data());
  FlopCounter::add_conv(g.macs());
  const bool with_bias = bias.defined();
  if (detail::should_record(x, weight) || (with_bias && detail::should_record(bias))) {
    out.set_requires_grad(true);
    Tape::active()->record(op, [x, weight, bias, out, g, with_bias]() mutable {
      if (!out.has_grad()) return;
      T* dx = x.requires_grad() ? x.grad().data() : nullptr;
      T* dw = weight.requires_grad() ? weight.grad().data() : nullptr;
      T* db = with_bias && bias.requires_grad() ? bias.grad().data() : nullptr;
      kernels::conv2d_backward(g, x.data().data(), weight.data().data(), out.grad().data(), dx,
                               dw, db);
    });
  }
  return finish(out, op);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 PadQuad pad) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  const Shape& ws = weight.shape();
  if (ws.c != x.c()) {
    throw ShapeError("conv2d: input has " + std::to_string(x.c()) + " channels, weight expects " +
                     std::to_string(ws.c));
  }
  kernels::ConvGeometry g{x.shape(), ws.n, ws.h, ws.w, stride, pad, 1};
  return conv_impl(x, weight, bias, g, "conv2d");
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           PadQuad pad) {
  require_defined(x, "depthwise_conv2d");
  require_defined(weight, "depthwise_conv2d");
  const Shape& ws = weight.shape();
  if (ws.n != x.c() || ws.c != 1) {
    throw ShapeError("depthwise_conv2d: weight " + ws.str() + " incompatible with " +
                     std::to_string(x.c()) + " input channels");
  }
  kernels::ConvGeometry g{x.shape(), ws.n, ws.h, ws.w, 1, pad, x.c()};
  return conv_impl(x, weight, bias, g, "depthwise_conv2d");
}

// ---------------------------------------------------------------------------
// Pooling

template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolMode mode, int kernel, int stride) {
  require_defined(x, "pool2d");
  kernels::PoolGeometry g{x.shape(), kernel, stride};
  g.validate();
  Tensor<T> out(g.output());
  if (mode == PoolMode::kMax) {
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
    kernels::max_pool_forward(g, x.data().data(), out.data().data(), argmax->data());
    if (detail::should_record(x)) {
      out.set_requires_grad(true);
      Tape::active()->record("max_pool2d", [x, out, g, argmax]() mutable {
        if (!out.has_grad()) return;
        kernels::max_pool_backward(g, out.grad().data(), argmax->data(), x.grad().data());
      });
    }
  } else {
    kernels::avg_pool_forward(g, x.data().data(), out.data().data());
    if (detail::should_record(x)) {
      out.set_requires_grad(true);
      Tape::active()->record("avg_pool2d", [x, out, g]() mutable {
        if (!out.has_grad()) return;
        kernels::avg_pool_backward(g, out.grad().data(), x.grad().data());
      });
    }
  }
  return finish(out, "pool2d");
}

template <typename T>
Tensor<T> global_pool(const Tensor<T>& x, PoolMode mode) {
  require_defined(x, "global_pool");
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  if (mode == PoolMode::kMax) {
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
    kernels::spatial_max(s, x.data().data(), out.data().data(), argmax->data());
    if (detail::should_record(x)) {
      out.set_requires_grad(true);
      Tape::active()->record("global_max_pool", [x, out, s, argmax]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto dx = x.grad();
        for (std::size_t p = 0; p < g.size(); ++p) dx[p * s.plane() + (*argmax)[p]] += g[p];
      });
    }
  } else {
    kernels::spatial_mean(s, x.data().data(), out.data().data());
    if (detail::should_record(x)) {
      out.set_requires_grad(true);
      Tape::active()->record("global_avg_pool", [x, out, s]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto dx = x.grad();
        const std::size_t hw = s.plane();
        const T inv = T(1) / static_cast<T>(hw);
        for (std::size_t p = 0; p < g.size(); ++p) {
          const T v = g[p] * inv;
          for (std::size_t i = 0; i < hw; ++i) dx[p * hw + i] += v;
        }
      });
    }
  }
  return finish(out, "global_pool");
}

template <typename T>
Tensor<T> channel_pool(const Tensor<T>& x, PoolMode mode) {
  require_defined(x, "channel_pool");
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  const std::size_t hw = s.plane();
  if (mode == PoolMode::kMax) {
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
    kernels::channel_max(s, x.data().data(), out.data().data(), argmax->data());
    if (detail::should_record(x)) {
      out.set_requires_grad(true);
      Tape::active()->record("channel_max_pool", [x, out, s, hw, argmax]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto dx = x.grad();
        for (int b = 0; b < s.n; ++b) {
          for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t o = b * hw + i;
            dx[(static_cast<std::size_t>(b) * s.c + (*argmax)[o]) * hw + i] += g[o];
          }
        }
      });
    }
  } else {
    kernels::channel_mean(s, x.data().data(), out.data().data());
    if (detail::should_record(x)) {
      out.set_requires_grad(true);
      Tape::active()->record("channel_avg_pool", [x, out, s, hw]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto dx = x.grad();
        const T inv = T(1) / static_cast<T>(s.c);
        for (int b = 0; b < s.n; ++b) {
          for (int ch = 0; ch < s.c; ++ch) {
            T* d = dx.data() + (static_cast<std::size_t>(b) * s.c + ch) * hw;
            const T* gs = g.data() + b * hw;
            for (std::size_t i = 0; i < hw; ++i) d[i] += gs[i] * inv;
          }
        }
      });
    }
  }
  return finish(out, "channel_pool");
}

// ---------------------------------------------------------------------------
// Resampling and normalization

template <typename T>
Tensor<T> upsample2d(const Tensor<T>& x, int factor, Interp mode) {
  require_defined(x, "upsample2d");
  if (factor != 1 && factor != 2 && factor != 4 && factor != 8 && factor != 16) {
    throw ShapeError("upsample2d: unsupported factor " + std::to_string(factor));
  }
  if (factor == 1) return x;
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  kernels::upsample_forward(s, factor, mode, x.data().data(), out.data().data());
  if (detail::should_record(x)) {
    out.set_requires_grad(true);
    Tape::active()->record("upsample2d", [x, out, s, factor, mode]() mutable {
      if (!out.has_grad()) return;
      kernels::upsample_backward(s, factor, mode, out.grad().data(), x.grad().data());
    });
  }
  return finish(out, "upsample2d");
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, Mode mode, T momentum,
                      T eps) {
  require_defined(x, "batchnorm2d");
  const Shape s = x.shape();
  const std::size_t c = static_cast<std::size_t>(s.c);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw ShapeError("batchnorm2d: parameter size does not match " + std::to_string(s.c) +
                     " channels");
  }
  Tensor<T> out(s);
  if (mode == Mode::kTrain) {
    const std::size_t count = static_cast<std::size_t>(s.n) * s.plane();
    if (count < 2) {
      throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                       s.str());
    }
    auto stats = std::make_shared<std::vector<T>>(3 * c);
    T* mean = stats->data();
    T* var = mean + c;
    T* invstd = var + c;
    kernels::batchnorm_forward_train(s, x.data().data(), gamma.data().data(), beta.data().data(),
                                     eps, mean, var, invstd, out.data().data());
    auto rm = running_mean.data();
    auto rv = running_var.data();
    const T unbias = static_cast<T>(count) / static_cast<T>(count - 1);
    for (std::size_t ch = 0; ch < c; ++ch) {
      rm[ch] = (1 - momentum) * rm[ch] + momentum * mean[ch];
      rv[ch] = (1 - momentum) * rv[ch] + momentum * var[ch] * unbias;
    }
    if (detail::should_record(x, gamma, beta)) {
      out.set_requires_grad(true);
      Tape::active()->record("batchnorm2d", [x, gamma, beta, out, s, stats, c]() mutable {
        if (!out.has_grad()) return;
        const T* mean = stats->data();
        kernels::batchnorm_backward_train(
            s, x.data().data(), gamma.data().data(), mean, mean + 2 * c, out.grad().data(),
            x.requires_grad() ? x.grad().data() : nullptr,
            gamma.requires_grad() ? gamma.grad().data() : nullptr,
            beta.requires_grad() ? beta.grad().data() : nullptr);
      });
    }
  } else {
    kernels::batchnorm_forward_eval(s, x.data().data(), gamma.data().data(), beta.data().data(),
                                    running_mean.data().data(), running_var.data().data(), eps,
                                    out.data().data());
    if (detail::should_record(x, gamma, beta)) {
      out.set_requires_grad(true);
      // Running stats are snapshotted: later train-mode calls must not
      // change what this node differentiates.
      auto rm = std::make_shared<std::vector<T>>(running_mean.data().begin(),
                                                 running_mean.data().end());
      auto rv = std::make_shared<std::vector<T>>(running_var.data().begin(),
                                                 running_var.data().end());
      Tape::active()->record("batchnorm2d_eval", [x, gamma, beta, out, s, rm, rv, eps]() mutable {
        if (!out.has_grad()) return;
        kernels::batchnorm_backward_eval(
            s, x.data().data(), gamma.data().data(), rm->data(), rv->data(), eps,
            out.grad().data(), x.requires_grad() ? x.grad().data() : nullptr,
            gamma.requires_grad() ? gamma.grad().data() : nullptr,
            beta.requires_grad() ? beta.grad().data() : nullptr);
      });
    }
  }
  return finish(out, "batchnorm2d");
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

struct Broadcast {
  Shape out;
  std::array<std::size_t, 4> sa{};  // strides of a per axis (0 when broadcast)
  std::array<std::size_t, 4> sb{};
  bool same = false;
};

std::array<std::size_t, 4> strides_for(const Shape& s, const Shape& out) {
  const std::array<int, 4> d{s.n, s.c, s.h, s.w};
  const std::array<int, 4> o{out.n, out.c, out.h, out.w};
  std::array<std::size_t, 4> st{};
  std::size_t acc = 1;
  for (int i = 3; i >= 0; --i) {
    st[i] = (d[i] == 1 && o[i] != 1) ? 0 : acc;
    acc *= static_cast<std::size_t>(d[i]);
  }
  return st;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  Broadcast r;
  r.same = a == b;
  auto dim = [&](int x, int y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
  };
  r.out = {dim(a.n, b.n), dim(a.c, b.c), dim(a.h, b.h), dim(a.w, b.w)};
  r.sa = strides_for(a, r.out);
  r.sb = strides_for(b, r.out);
  return r;
}

// Calls f(out_index, a_index, b_index) for every output element in order.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  std::size_t o = 0;
  for (int n = 0; n < bc.out.n; ++n) {
    for (int c = 0; c < bc.out.c; ++c) {
      for (int h = 0; h < bc.out.h; ++h) {
        const std::size_t ia = n * bc.sa[0] + c * bc.sa[1] + h * bc.sa[2];
        const std::size_t ib = n * bc.sb[0] + c * bc.sb[1] + h * bc.sb[2];
        for (int w = 0; w < bc.out.w; ++w, ++o) f(o, ia + w * bc.sa[3], ib + w * bc.sb[3]);
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), "add");
  Tensor<T> out(bc.out);
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  if (bc.same) {
    const std::size_t n = o.size();
#pragma omp parallel for if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) o[i] = av[i] + bv[i];
  } else {
    for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      o[i] = av[ia] + bv[ib];
    });
  }
  if (detail::should_record(a, b)) {
    out.set_requires_grad(true);
    Tape::active()->record("add", [a, b, out, bc]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (bc.same) {
        if (a.requires_grad()) {
          auto da = a.grad();
          for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        }
        if (b.requires_grad()) {
          auto db = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
        }
        return;
      }
      T* da = a.requires_grad() ? a.grad().data() : nullptr;
      T* db = b.requires_grad() ? b.grad().data() : nullptr;
      for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        if (da) da[ia] += g[i];
        if (db) db[ib] += g[i];
      });
    });
  }
  return finish(out, "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), "mul");
  Tensor<T> out(bc.out);
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  if (bc.same) {
    const std::size_t n = o.size();
#pragma omp parallel for if (n > kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) o[i] = av[i] * bv[i];
  } else {
    for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      o[i] = av[ia] * bv[ib];
    });
  }
  if (detail::should_record(a, b)) {
    out.set_requires_grad(true);
    Tape::active()->record("mul", [a, b, out, bc]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto av = a.data();
      auto bv = b.data();
      T* da = a.requires_grad() ? a.grad().data() : nullptr;
      T* db = b.requires_grad() ? b.grad().data() : nullptr;
      if (bc.same) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (da) da[i] += g[i] * bv[i];
          if (db) db[i] += g[i] * av[i];
        }
        return;
      }
      for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        if (da) da[ia] += g[i] * bv[ib];
        if (db) db[ib] += g[i] * av[ia];
      });
    });
  }
  return finish(out, "mul");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  require_defined(x, "relu");
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.data();
  const std::size_t n = o.size();
#pragma omp parallel for if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) o[i] = xv[i] > T(0) ? xv[i] : T(0);
  if (detail::should_record(x)) {
    out.set_requires_grad(true);
    Tape::active()->record("relu", [x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto dx = x.grad();
      auto xv = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > T(0)) dx[i] += g[i];
      }
    });
  }
  return finish(out, "relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  require_defined(x, "sigmoid");
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.data();
  const std::size_t n = o.size();
#pragma omp parallel for if (n > kParallelThreshold)
  for (std::size_t i = 0; i < n; ++i) {
    const T v = xv[i];
    if (v >= 0) {
      o[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      o[i] = e / (T(1) + e);
    }
  }
  if (detail::should_record(x)) {
    out.set_requires_grad(true);
    Tape::active()->record("sigmoid", [x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto dx = x.grad();
      auto y = out.data();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }
  return finish(out, "sigmoid");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  require_defined(x, "scale");
  Tensor<T> out(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor;
  if (detail::should_record(x)) {
    out.set_requires_grad(true);
    Tape::active()->record("scale", [x, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto dx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
  }
  return finish(out, "scale");
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = parts[0].shape();
  int total_c = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat_channels");
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: " + s.str() + " does not match " + first.str());
    }
    total_c += s.c;
  }
  Tensor<T> out(Shape{first.n, total_c, first.h, first.w});
  const std::size_t hw = first.plane();
  auto o = out.data();
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const int pc = p.c();
    auto pv = p.data();
    for (int b = 0; b < first.n; ++b) {
      std::copy(pv.begin() + static_cast<std::size_t>(b) * pc * hw,
                pv.begin() + static_cast<std::size_t>(b + 1) * pc * hw,
                o.begin() + (static_cast<std::size_t>(b) * total_c + off) * hw);
    }
    off += pc;
  }
  bool record = false;
  for (const auto& p : parts) record = record || detail::should_record(p);
  if (record) {
    out.set_requires_grad(true);
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    Tape::active()->record("concat_channels", [inputs, offsets, out, total_c, hw]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto& in = inputs[k];
        if (!in.requires_grad()) continue;
        auto d = in.grad();
        const int pc = in.c();
        for (int b = 0; b < in.n(); ++b) {
          const T* src = g.data() + (static_cast<std::size_t>(b) * total_c + offsets[k]) * hw;
          T* dst = d.data() + static_cast<std::size_t>(b) * pc * hw;
          for (std::size_t i = 0; i < static_cast<std::size_t>(pc) * hw; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count) {
  require_defined(x, "slice_channels");
  const Shape s = x.shape();
  if (begin < 0 || count <= 0 || begin + count > s.c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + std::to_string(s.c) +
                     " channels");
  }
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  const std::size_t hw = s.plane();
  auto xv = x.data();
  auto o = out.data();
  for (int b = 0; b < s.n; ++b) {
    std::copy(xv.begin() + (static_cast<std::size_t>(b) * s.c + begin) * hw,
              xv.begin() + (static_cast<std::size_t>(b) * s.c + begin + count) * hw,
              o.begin() + static_cast<std::size_t>(b) * count * hw);
  }
  if (detail::should_record(x)) {
    out.set_requires_grad(true);
    Tape::active()->record("slice_channels", [x, out, s, begin, count, hw]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto d = x.grad();
      for (int b = 0; b < s.n; ++b) {
        const T* src = g.data() + static_cast<std::size_t>(b) * count * hw;
        T* dst = d.data() + (static_cast<std::size_t>(b) * s.c + begin) * hw;
        for (std::size_t i = 0; i < static_cast<std::size_t>(count) * hw; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& x, std::span<const int> sizes) {
  require_defined(x, "split_channels");
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  if (total != x.c()) {
    throw ShapeError("split_channels: sizes sum to " + std::to_string(total) + ", tensor has " +
                     std::to_string(x.c()) + " channels");
  }
  std::vector<Tensor<T>> parts;
  int begin = 0;
  for (int s : sizes) {
    parts.push_back(slice_channels(x, begin, s));
    begin += s;
  }
  return parts;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined(x, "sum");
  T acc = 0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (detail::should_record(x)) {
    out.set_requires_grad(true);
    Tape::active()->record("sum", [x, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (T& d : x.grad()) d += g;
    });
  }
  return finish(out, "sum");
}

#define FSG_INSTANTIATE(T)                                                                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, PadQuad); \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                      PadQuad);                                                  \
  template Tensor<T> pool2d(const Tensor<T>&, PoolMode, int, int);                               \
  template Tensor<T> global_pool(const Tensor<T>&, PoolMode);                                    \
  template Tensor<T> channel_pool(const Tensor<T>&, PoolMode);                                   \
  template Tensor<T> upsample2d(const Tensor<T>&, int, Interp);                                  \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                 Tensor<T>&, Tensor<T>&, Mode, T, T);                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                                \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                                 \
  template std::vector<Tensor<T>> split_channels(const Tensor<T>&, std::span<const int>);        \
  template Tensor<T> sum(const Tensor<T>&);

FSG_INSTANTIATE(float)
FSG_INSTANTIATE(double)
#undef FSG_INSTANTIATE

}  // namespace fsg
