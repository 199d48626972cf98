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

#include "bodyscene/tensor/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bodyscene/common/rng.h"

namespace bodyscene {
namespace {

double Objective(const Tensor& y, const std::vector<float>& w) {
  double sum = 0;
  std::span<const float> v = y.values();
  for (std::size_t i = 0; i < v.size(); ++i) sum += static_cast<double>(w[i]) * v[i];
  return sum;
}

}  // namespace

GradCheckResult check_gradients(const GradFn& f, const std::vector<Tensor>& inputs,
                                const GradCheckOptions& options) {
  Rng rng(options.seed);
  std::vector<Tensor> x;
  for (const Tensor& t : inputs) {
    std::span<const float> v = t.values();
    x.push_back(Tensor::from(t.shape(), std::vector<float>(v.begin(), v.end()), true));
  }

  std::vector<float> w;
  std::vector<std::vector<float>> analytic;
  {
    GradTape tape;
    const Tensor y = f(x);
    w.resize(y.numel());
    for (float& wi : w) wi = static_cast<float>(rng.normal());
    tape.backward(y, w);
    for (const Tensor& t : x) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  double diff2 = 0, a2 = 0, n2 = 0;
  GradCheckResult result;
  for (std::size_t j = 0; j < x.size(); ++j) {
    std::vector<std::size_t> idx(x[j].numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > options.max_entries) {
      rng.shuffle(idx);
      idx.resize(options.max_entries);
    }
    std::span<float> v = x[j].mutable_values();
    for (std::size_t i : idx) {
      const float orig = v[i];
      const float hi = orig + options.eps, lo = orig - options.eps;
      v[i] = hi;
      const double f_hi = Objective(f(x), w);
      v[i] = lo;
      const double f_lo = Objective(f(x), w);
      v[i] = orig;
      const double numeric = (f_hi - f_lo) / (static_cast<double>(hi) - lo);
      if (options.skip_kinks) {
        const double f_mid = Objective(f(x), w);
        const double up = (f_hi - f_mid) / (static_cast<double>(hi) - orig);
        const double down = (f_mid - f_lo) / (static_cast<double>(orig) - lo);
        if (std::abs(up - down) >
            options.kink_rel * std::max(std::abs(up), std::abs(down)) + options.kink_abs) {
          ++result.skipped;
          continue;
        }
      }
      const double a = analytic[j][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++result.entries;
    }
  }
  const double scale = std::sqrt(std::max(a2, n2));
  result.rel_error = scale > 0 ? std::sqrt(diff2) / scale : 0.0;
  return result;
}

}  // namespace bodyscene
