// Copyright 2026 The bodyscene Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bodyscene/tensor/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bodyscene/tensor/kernels.h"

namespace bodyscene {
namespace {

[[noreturn]] void Mismatch(const char* op, const Tensor& a, const Tensor& b,
                           const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail + " (got " +
                   shape_string(a.shape()) + " and " +
                   shape_string(b.shape()) + ")");
}

void RequireRank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void Record(OpKind kind, std::vector<Tensor> inputs, const Tensor& out,
            std::function<void()> fn) {
  GradTape::active()->record(kind, std::move(inputs), out, std::move(fn));
}

struct ConvGeometry {
  int n, c, h, w, f, kh, kw, stride, pad, ho, wo;
  int patch() const { return c * kh * kw; }
  int plane() const { return ho * wo; }
  int columns() const { return n * ho * wo; }
};

// Output columns ox whose input column ox*stride - pad + kj lies in [0, W).
std::pair<int, int> ValidRange(const ConvGeometry& g, int kj) {
  int lo = 0;
  while (lo < g.wo && lo * g.stride - g.pad + kj < 0) ++lo;
  int hi = g.wo;
  while (hi > lo && (hi - 1) * g.stride - g.pad + kj >= g.w) --hi;
  return {lo, hi};
}

// col[(c,ki,kj), n*P + oy*Wo + ox] = input[n, c, oy*s - pad + ki, ox*s - pad + kj]
void Im2Col(const ConvGeometry& g, const float* in, float* col) {
  const std::ptrdiff_t cols = g.columns();
  const int plane = g.plane();
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const auto [lo, hi] = ValidRange(g, kj);
        const int shift = kj - g.pad;
        float* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (int n = 0; n < g.n; ++n) {
          const float* src = in + (static_cast<std::ptrdiff_t>(n) * g.c + c) * g.h * g.w;
          float* dst = row + static_cast<std::ptrdiff_t>(n) * plane;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            float* drow = dst + oy * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(drow, drow + g.wo, 0.0f);
              continue;
            }
            const float* srow = src + iy * g.w + shift;
            std::fill(drow, drow + lo, 0.0f);
            if (g.stride == 1) {
              std::copy(srow + lo, srow + hi, drow + lo);
            } else {
              for (int ox = lo; ox < hi; ++ox) drow[ox] = srow[ox * g.stride];
            }
            std::fill(drow + std::max(lo, hi), drow + g.wo, 0.0f);
          }
        }
      }
    }
  }
}

void Col2ImAccumulate(const ConvGeometry& g, const float* col, float* in) {
  const std::ptrdiff_t cols = g.columns();
  const int plane = g.plane();
  for (int c = 0; c < g.c; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const auto [lo, hi] = ValidRange(g, kj);
        const int shift = kj - g.pad;
        const float* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (int n = 0; n < g.n; ++n) {
          float* dst = in + (static_cast<std::ptrdiff_t>(n) * g.c + c) * g.h * g.w;
          const float* src = row + static_cast<std::ptrdiff_t>(n) * plane;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ki;
            if (iy < 0 || iy >= g.h) continue;
            float* drow = dst + iy * g.w + shift;
            const float* srow = src + oy * g.wo;
            for (int ox = lo; ox < hi; ++ox) drow[ox * g.stride] += srow[ox];
          }
        }
      }
    }
  }
}

// Reused scratch so the per-step temporaries do not hit the allocator.
std::vector<float>& Scratch(int slot, std::size_t size) {
  thread_local std::vector<float> buffers[2];
  std::vector<float>& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
  RequireRank("conv2d", input, 4);
  RequireRank("conv2d", kernel, 4);
  if (stride < 1 || pad < 0) {
    throw std::invalid_argument("conv2d: stride must be >= 1 and pad >= 0");
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.f = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (kernel.dim(1) != g.c) {
    Mismatch("conv2d", input, kernel, "input channels differ from kernel channels");
  }
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    Mismatch("conv2d", input, kernel, "kernel larger than padded input");
  }
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;

  const kernels::KernelTable& k = kernels::active();
  const int patch = g.patch();
  const int cols = g.columns();
  const int plane = g.plane();

  auto col = std::make_shared<std::vector<float>>(static_cast<std::size_t>(patch) * cols);
  Im2Col(g, input.data(), col->data());

  // One GEMM per sample writes straight into NCHW:
  //   out[n] [F, P] = W [F, patch] * col[:, n*P : (n+1)*P]
  std::vector<float> out_values(static_cast<std::size_t>(g.n) * g.f * plane);
  for (int n = 0; n < g.n; ++n) {
    k.gemm(g.f, plane, patch, kernel.data(), patch, 1,
           col->data() + static_cast<std::ptrdiff_t>(n) * plane, cols,
           out_values.data() + static_cast<std::ptrdiff_t>(n) * g.f * plane, plane, false);
  }
  const bool track = should_record({&input, &kernel});
  Tensor out = Tensor::from({g.n, g.f, g.ho, g.wo}, std::move(out_values), track);
  if (!track) return out;

  Record(OpKind::kConv2d, {input, kernel}, out, [g, col, input, kernel, out]() mutable {
    const kernels::KernelTable& k = kernels::active();
    const int patch = g.patch();
    const int cols = g.columns();
    const int plane = g.plane();
    const float* gy = out.grad().data();
    if (kernel.requires_grad()) {
      // dW^T [patch, F] = col [patch, cols] * gy^T [cols, F]
      std::vector<float>& gy_t = Scratch(0, static_cast<std::size_t>(cols) * g.f);
      for (int n = 0; n < g.n; ++n) {
        for (int f = 0; f < g.f; ++f) {
          const float* src = gy + (static_cast<std::ptrdiff_t>(n) * g.f + f) * plane;
          float* dst = gy_t.data() + static_cast<std::ptrdiff_t>(n) * plane * g.f + f;
          for (int p = 0; p < plane; ++p) dst[static_cast<std::ptrdiff_t>(p) * g.f] = src[p];
        }
      }
      std::vector<float>& gw_t = Scratch(1, static_cast<std::size_t>(patch) * g.f);
      k.gemm(patch, g.f, cols, col->data(), cols, 1, gy_t.data(), g.f, gw_t.data(), g.f, false);
      float* gw = kernel.mutable_grad().data();
      for (int f = 0; f < g.f; ++f) {
        for (int r = 0; r < patch; ++r) {
          gw[static_cast<std::size_t>(f) * patch + r] += gw_t[static_cast<std::size_t>(r) * g.f + f];
        }
      }
    }
    if (input.requires_grad()) {
      // dcol[:, n*P : (n+1)*P] = W^T [patch, F] * gy[n] [F, P]
      std::vector<float>& dcol = Scratch(0, static_cast<std::size_t>(patch) * cols);
      for (int n = 0; n < g.n; ++n) {
        k.gemm(patch, plane, g.f, kernel.data(), 1, patch,
               gy + static_cast<std::ptrdiff_t>(n) * g.f * plane, plane,
               dcol.data() + static_cast<std::ptrdiff_t>(n) * plane, cols, false);
      }
      Col2ImAccumulate(g, dcol.data(), input.mutable_grad().data());
    }
  });
  return out;
}

Tensor relu(const Tensor& x) {
  std::vector<float> v(x.numel());
  kernels::active().relu(v.size(), x.data(), v.data());
  const bool track = should_record({&x});
  Tensor out = Tensor::from(x.shape(), std::move(v), track);
  if (!track) return out;
  Record(OpKind::kRelu, {x}, out, [x, out]() mutable {
    kernels::active().relu_backward(x.numel(), x.data(), out.grad().data(),
                                    x.mutable_grad().data());
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) Mismatch("add", a, b, "shapes differ");
  std::vector<float> v(a.numel());
  kernels::active().add(v.size(), a.data(), b.data(), v.data());
  const bool track = should_record({&a, &b});
  Tensor out = Tensor::from(a.shape(), std::move(v), track);
  if (!track) return out;
  Record(OpKind::kAdd, {a, b}, out, [a, b, out]() mutable {
    const kernels::KernelTable& k = kernels::active();
    if (a.requires_grad()) {
      k.axpy(a.numel(), 1.0f, out.grad().data(), a.mutable_grad().data());
    }
    if (b.requires_grad()) {
      k.axpy(b.numel(), 1.0f, out.grad().data(), b.mutable_grad().data());
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) Mismatch("mul", a, b, "shapes differ");
  std::vector<float> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * b.data()[i];
  const bool track = should_record({&a, &b});
  Tensor out = Tensor::from(a.shape(), std::move(v), track);
  if (!track) return out;
  Record(OpKind::kMul, {a, b}, out, [a, b, out]() mutable {
    const float* gy = out.grad().data();
    // a and b may alias (x*x); read both before writing either.
    std::vector<float> ga(a.numel()), gb(b.numel());
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] = gy[i] * b.data()[i];
      gb[i] = gy[i] * a.data()[i];
    }
    if (a.requires_grad()) {
      float* g = a.mutable_grad().data();
      for (std::size_t i = 0; i < ga.size(); ++i) g[i] += ga[i];
    }
    if (b.requires_grad()) {
      float* g = b.mutable_grad().data();
      for (std::size_t i = 0; i < gb.size(); ++i) g[i] += gb[i];
    }
  });
  return out;
}

Tensor max_pool2x2(const Tensor& x) {
  RequireRank("max_pool2x2", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h / 2, wo = w / 2;
  if (ho == 0 || wo == 0) {
    throw ShapeError("max_pool2x2: input too small " + shape_string(x.shape()));
  }
  std::vector<float> v(static_cast<std::size_t>(n) * c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(v.size());
  const float* in = x.data();
  std::size_t o = 0;
  for (int nc = 0; nc < n * c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t idx : cand) {
          if (in[idx] > in[best]) best = idx;
        }
        v[o] = in[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  const bool track = should_record({&x});
  Tensor out = Tensor::from({n, c, ho, wo}, std::move(v), track);
  if (!track) return out;
  Record(OpKind::kMaxPool2x2, {x}, out, [x, out, argmax]() mutable {
    const float* gy = out.grad().data();
    float* gx = x.mutable_grad().data();
    for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += gy[i];
  });
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  RequireRank("global_avg_pool", x, 4);
  const int n = x.dim(0), c = x.dim(1);
  const int plane = x.dim(2) * x.dim(3);
  std::vector<float> v(static_cast<std::size_t>(n) * c);
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float* src = x.data() + i * plane;
    float s = 0.0f;
    for (int p = 0; p < plane; ++p) s += src[p];
    v[i] = s * inv;
  }
  const bool track = should_record({&x});
  Tensor out = Tensor::from({n, c}, std::move(v), track);
  if (!track) return out;
  Record(OpKind::kGlobalAvgPool, {x}, out, [x, out, plane, inv]() mutable {
    const float* gy = out.grad().data();
    float* gx = x.mutable_grad().data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const float g = gy[i] * inv;
      float* dst = gx + i * plane;
      for (int p = 0; p < plane; ++p) dst[p] += g;
    }
  });
  return out;
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  RequireRank("dense", x, 2);
  RequireRank("dense", weight, 2);
  RequireRank("dense", bias, 1);
  const int n = x.dim(0), d = x.dim(1), k = weight.dim(0);
  if (weight.dim(1) != d) Mismatch("dense", x, weight, "feature width differs");
  if (bias.dim(0) != k) Mismatch("dense", weight, bias, "bias length differs");
  const kernels::KernelTable& kt = kernels::active();
  std::vector<float> w_t(static_cast<std::size_t>(d) * k);
  for (int r = 0; r < k; ++r) {
    for (int j = 0; j < d; ++j) w_t[static_cast<std::size_t>(j) * k + r] = weight.data()[static_cast<std::size_t>(r) * d + j];
  }
  std::vector<float> v(static_cast<std::size_t>(n) * k);
  kt.gemm(n, k, d, x.data(), d, 1, w_t.data(), k, v.data(), k, false);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < k; ++r) v[static_cast<std::size_t>(i) * k + r] += bias.data()[r];
  }
  const bool track = should_record({&x, &weight, &bias});
  Tensor out = Tensor::from({n, k}, std::move(v), track);
  if (!track) return out;
  Record(OpKind::kDense, {x, weight, bias}, out,
         [x, weight, bias, out, n, d, k]() mutable {
           const kernels::KernelTable& kt = kernels::active();
           const float* gy = out.grad().data();
           if (x.requires_grad()) {
             kt.gemm(n, d, k, gy, k, 1, weight.data(), d,
                     x.mutable_grad().data(), d, true);
           }
           if (weight.requires_grad()) {
             // gW[k,d] += gy^T[k,n] * x[n,d]
             kt.gemm(k, d, n, gy, 1, k, x.data(), d,
                     weight.mutable_grad().data(), d, true);
           }
           if (bias.requires_grad()) {
             float* gb = bias.mutable_grad().data();
             for (int i = 0; i < n; ++i) {
               for (int r = 0; r < k; ++r) gb[r] += gy[static_cast<std::size_t>(i) * k + r];
             }
           }
         });
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Tensor& first = parts.front();
  RequireRank("concat_channels", first, 4);
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int total = 0;
  for (const Tensor& p : parts) {
    RequireRank("concat_channels", p, 4);
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      Mismatch("concat_channels", first, p, "batch or spatial extents differ");
    }
    total += p.dim(1);
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<float> v(static_cast<std::size_t>(n) * total * plane);
  for (int i = 0; i < n; ++i) {
    std::size_t offset = static_cast<std::size_t>(i) * total * plane;
    for (const Tensor& p : parts) {
      const std::size_t chunk = static_cast<std::size_t>(p.dim(1)) * plane;
      std::copy_n(p.data() + i * chunk, chunk, v.data() + offset);
      offset += chunk;
    }
  }
  bool track = false;
  if (GradTape::active() != nullptr) {
    for (const Tensor& p : parts) track = track || p.requires_grad();
  }
  Tensor out = Tensor::from({n, total, h, w}, std::move(v), track);
  if (!track) return out;
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  Record(OpKind::kConcatChannels, inputs, out,
         [inputs, out, n, total, plane]() mutable {
           const float* gy = out.grad().data();
           for (int i = 0; i < n; ++i) {
             std::size_t offset = static_cast<std::size_t>(i) * total * plane;
             for (Tensor& p : inputs) {
               const std::size_t chunk = static_cast<std::size_t>(p.dim(1)) * plane;
               if (p.requires_grad()) {
                 float* g = p.mutable_grad().data() + i * chunk;
                 for (std::size_t j = 0; j < chunk; ++j) g[j] += gy[offset + j];
               }
               offset += chunk;
             }
           }
         });
  return out;
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw std::invalid_argument("stack_batch: no inputs");
  const Shape& s = items.front().shape();
  for (const Tensor& t : items) {
    if (t.shape() != s) Mismatch("stack_batch", items.front(), t, "item shapes differ");
  }
  const std::size_t chunk = items.front().numel();
  std::vector<float> v(chunk * items.size());
  bool track = false;
  for (std::size_t i = 0; i < items.size(); ++i) {
    std::copy_n(items[i].data(), chunk, v.data() + i * chunk);
    track = track || items[i].requires_grad();
  }
  track = track && GradTape::active() != nullptr;
  Shape out_shape{static_cast<int>(items.size())};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor out = Tensor::from(std::move(out_shape), std::move(v), track);
  if (!track) return out;
  std::vector<Tensor> inputs(items.begin(), items.end());
  Record(OpKind::kStackBatch, inputs, out, [inputs, out, chunk]() mutable {
    const float* gy = out.grad().data();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      float* g = inputs[i].mutable_grad().data();
      for (std::size_t j = 0; j < chunk; ++j) g[j] += gy[i * chunk + j];
    }
  });
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  RequireRank("softmax_cross_entropy", logits, 2);
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || y >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label " +
                                  std::to_string(y) + " outside [0," +
                                  std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n) * k);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* z = logits.data() + static_cast<std::size_t>(i) * k;
    float* p = probs->data() + static_cast<std::size_t>(i) * k;
    const float m = *std::max_element(z, z + k);
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      const double e = std::exp(static_cast<double>(z[j]) - m);
      p[j] = static_cast<float>(e);
      s += e;
    }
    for (int j = 0; j < k; ++j) p[j] = static_cast<float>(p[j] / s);
    const double lse = static_cast<double>(m) + std::log(s);
    total += lse - static_cast<double>(z[labels[i]]);
  }
  const float value = static_cast<float>(total / n);
  const bool track = should_record({&logits});
  Tensor out = Tensor::from({1}, {value}, track);
  if (!track) return out;
  std::vector<int> ys(labels.begin(), labels.end());
  Record(OpKind::kSoftmaxCrossEntropy, {logits}, out,
         [logits, out, probs, ys, n, k]() mutable {
           const float scale = out.grad()[0] / static_cast<float>(n);
           float* g = logits.mutable_grad().data();
           for (int i = 0; i < n; ++i) {
             const float* p = probs->data() + static_cast<std::size_t>(i) * k;
             float* gi = g + static_cast<std::size_t>(i) * k;
             for (int j = 0; j < k; ++j) {
               const float target = j == ys[i] ? 1.0f : 0.0f;
               gi[j] += scale * (p[j] - target);
             }
           }
         });
  return out;
}

std::vector<float> softmax_rows(const Tensor& logits) {
  RequireRank("softmax_rows", logits, 2);
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<float> out(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < n; ++i) {
    const float* z = logits.data() + static_cast<std::size_t>(i) * k;
    float* p = out.data() + static_cast<std::size_t>(i) * k;
    const float m = *std::max_element(z, z + k);
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(static_cast<double>(z[j]) - m);
    for (int j = 0; j < k; ++j) {
      p[j] = static_cast<float>(std::exp(static_cast<double>(z[j]) - m) / s);
    }
  }
  return out;
}

}  // namespace bodyscene
