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

#include "bodyscene/stim/stimpipe.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bodyscene::stim {
namespace {

void CheckSameSize(const Image& frame, const Mask& mask, const char* what) {
  if (frame.height != mask.height || frame.width != mask.width) {
    throw std::invalid_argument(std::string(what) + ": frame is " +
                                std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                                " but mask is " + std::to_string(mask.height) + "x" +
                                std::to_string(mask.width));
  }
}

// Single-channel float plane.
struct Plane {
  int h = 0, w = 0;
  std::vector<float> v;
  Plane() = default;
  Plane(int hh, int ww) : h(hh), w(ww), v(static_cast<std::size_t>(hh) * ww, 0.0f) {}
  float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  float& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  float clamped(int y, int x) const {
    return at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  }
  // Bilinear sample with edge clamping.
  float sample(double y, double x) const {
    const double fy = std::floor(y), fx = std::floor(x);
    const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
    const double ay = y - fy, ax = x - fx;
    const double top = (1 - ax) * clamped(y0, x0) + ax * clamped(y0, x0 + 1);
    const double bot = (1 - ax) * clamped(y0 + 1, x0) + ax * clamped(y0 + 1, x0 + 1);
    return static_cast<float>((1 - ay) * top + ay * bot);
  }
};

Plane Luminance(const Image& img) {
  Plane p(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      p.at(y, x) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) +
                   0.114f * img.at(y, x, 2);
    }
  }
  return p;
}

// [1 4 6 4 1]/16 blur, then keep every other sample.
Plane Downsample(const Plane& src) {
  static constexpr float kTap[5] = {1 / 16.f, 4 / 16.f, 6 / 16.f, 4 / 16.f, 1 / 16.f};
  Plane tmp(src.h, src.w);
  for (int y = 0; y < src.h; ++y) {
    for (int x = 0; x < src.w; ++x) {
      float s = 0;
      for (int k = -2; k <= 2; ++k) s += kTap[k + 2] * src.clamped(y, x + k);
      tmp.at(y, x) = s;
    }
  }
  Plane out((src.h + 1) / 2, (src.w + 1) / 2);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      float s = 0;
      for (int k = -2; k <= 2; ++k) s += kTap[k + 2] * tmp.clamped(2 * y + k, 2 * x);
      out.at(y, x) = s;
    }
  }
  return out;
}

// One Lucas-Kanade level; flow (dx, dy interleaved) is refined in place.
// ok[i] is cleared where the structure tensor is ill-conditioned.
void RefineLevel(const Plane& a, const Plane& b, const FlowOptions& opt,
                 std::vector<float>& flow, std::vector<std::uint8_t>& ok) {
  const int h = a.h, w = a.w, r = opt.window_radius;
  Plane gx(h, w), gy(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gx.at(y, x) = 0.5f * (a.clamped(y, x + 1) - a.clamped(y, x - 1));
      gy.at(y, x) = 0.5f * (a.clamped(y + 1, x) - a.clamped(y - 1, x));
    }
  }
  ok.assign(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gxx = 0, gxy = 0, gyy = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double ix = gx.clamped(y + dy, x + dx), iy = gy.clamped(y + dy, x + dx);
          gxx += ix * ix;
          gxy += ix * iy;
          gyy += iy * iy;
        }
      }
      const double tr = gxx + gyy;
      const double det = gxx * gyy - gxy * gxy;
      const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
      const double min_eig = tr / 2 - disc;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (min_eig < opt.min_eigenvalue || det <= 0) continue;
      ok[i] = 1;
      double u = flow[2 * i], v = flow[2 * i + 1];
      for (int it = 0; it < opt.max_iterations; ++it) {
        double bx = 0, by = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = std::clamp(y + dy, 0, h - 1), xx = std::clamp(x + dx, 0, w - 1);
            const double it_val = b.sample(yy + v, xx + u) - a.at(yy, xx);
            bx += gx.at(yy, xx) * it_val;
            by += gy.at(yy, xx) * it_val;
          }
        }
        const double du = -(gyy * bx - gxy * by) / det;
        const double dv = -(gxx * by - gxy * bx) / det;
        u += du;
        v += dv;
        if (std::abs(du) + std::abs(dv) < opt.step_tolerance) break;
      }
      flow[2 * i] = static_cast<float>(u);
      flow[2 * i + 1] = static_cast<float>(v);
    }
  }
}

}  // namespace

const char* version_name(Version v) {
  switch (v) {
    case Version::kOriginal: return "orig";
    case Version::kBodyOnly: return "body";
    case Version::kBackgroundOnly: return "bg";
  }
  return "?";
}

Version parse_version(const std::string& name) {
  if (name == "orig") return Version::kOriginal;
  if (name == "body") return Version::kBodyOnly;
  if (name == "bg") return Version::kBackgroundOnly;
  throw std::invalid_argument("unknown stimulus version '" + name +
                              "' (expected orig, body or bg)");
}

Image body_only(const Image& frame, const Mask& mask) {
  CheckSameSize(frame, mask, "body_only");
  Image out = frame;
  for (std::size_t p = 0; p < mask.bits.size(); ++p) {
    if (!mask.bits[p]) out.rgb[3 * p] = out.rgb[3 * p + 1] = out.rgb[3 * p + 2] = 0.0f;
  }
  return out;
}

Mask union_mask(const std::vector<Mask>& masks) {
  if (masks.empty()) throw std::invalid_argument("union_mask: no masks");
  Mask out(masks.front().height, masks.front().width);
  for (const Mask& m : masks) {
    if (m.height != out.height || m.width != out.width) {
      throw std::invalid_argument("union_mask: masks differ in size");
    }
    for (std::size_t i = 0; i < m.bits.size(); ++i) out.bits[i] |= m.bits[i];
  }
  return out;
}

Mask dilate(const Mask& mask, double factor) {
  if (!(factor >= 1.0)) throw std::invalid_argument("dilate: factor must be >= 1");
  const std::size_t area = mask.area();
  if (area == 0) return mask;
  double cy = 0, cx = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(y, x)) {
        cy += y;
        cx += x;
      }
    }
  }
  cy /= static_cast<double>(area);
  cx /= static_cast<double>(area);
  Mask out = mask;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int sy = static_cast<int>(std::floor(cy + (y - cy) / factor + 0.5));
      const int sx = static_cast<int>(std::floor(cx + (x - cx) / factor + 0.5));
      if (sy >= 0 && sy < mask.height && sx >= 0 && sx < mask.width && mask.at(sy, sx)) {
        out.at(y, x) = 1;
      }
    }
  }
  return out;
}

Image inpaint(const Image& frame, const Mask& region, const InpaintOptions& options) {
  CheckSameSize(frame, region, "inpaint");
  const std::size_t area = region.area();
  if (area == 0) return frame;
  if (area == region.bits.size()) {
    throw std::invalid_argument("inpaint: region covers the entire frame");
  }
  const int h = frame.height, w = frame.width;
  Image out = frame;
  std::vector<int> pixels;
  for (int i = 0; i < h * w; ++i) {
    if (region.bits[i]) pixels.push_back(i);
  }
  // Start from the mean of the pixels bordering the region.
  double border[3] = {0, 0, 0};
  int border_count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (region.at(y, x)) continue;
      const bool touches = (y > 0 && region.at(y - 1, x)) || (y + 1 < h && region.at(y + 1, x)) ||
                           (x > 0 && region.at(y, x - 1)) || (x + 1 < w && region.at(y, x + 1));
      if (!touches) continue;
      for (int c = 0; c < 3; ++c) border[c] += frame.at(y, x, c);
      ++border_count;
    }
  }
  for (int i : pixels) {
    for (int c = 0; c < 3; ++c) out.rgb[3 * i + c] = static_cast<float>(border[c] / border_count);
  }
  // Gauss-Seidel sweeps in row-major order.
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double max_change = 0;
    for (int i : pixels) {
      const int y = i / w, x = i % w;
      int nb[4];
      int n = 0;
      if (y > 0) nb[n++] = i - w;
      if (y + 1 < h) nb[n++] = i + w;
      if (x > 0) nb[n++] = i - 1;
      if (x + 1 < w) nb[n++] = i + 1;
      for (int c = 0; c < 3; ++c) {
        float s = 0;
        for (int k = 0; k < n; ++k) s += out.rgb[3 * nb[k] + c];
        const float next = s / static_cast<float>(n);
        max_change = std::max(max_change, static_cast<double>(std::abs(next - out.rgb[3 * i + c])));
        out.rgb[3 * i + c] = next;
      }
    }
    if (max_change < options.tolerance) break;
  }
  return out;
}

FlowField estimate_flow(const Image& frame_a, const Image& frame_b, const FlowOptions& options) {
  if (frame_a.height != frame_b.height || frame_a.width != frame_b.width) {
    throw std::invalid_argument("estimate_flow: frames differ in size");
  }
  std::vector<Plane> pa{Luminance(frame_a)}, pb{Luminance(frame_b)};
  while (std::min(pa.back().h, pa.back().w) / 2 >= options.min_level_size) {
    pa.push_back(Downsample(pa.back()));
    pb.push_back(Downsample(pb.back()));
  }
  std::vector<float> flow;
  std::vector<std::uint8_t> ok;
  for (int level = static_cast<int>(pa.size()) - 1; level >= 0; --level) {
    const Plane& a = pa[level];
    std::vector<float> init(static_cast<std::size_t>(a.h) * a.w * 2, 0.0f);
    if (!flow.empty()) {
      const Plane& coarse = pa[level + 1];
      for (int y = 0; y < a.h; ++y) {
        for (int x = 0; x < a.w; ++x) {
          const std::size_t src =
              static_cast<std::size_t>(std::min(y / 2, coarse.h - 1)) * coarse.w +
              std::min(x / 2, coarse.w - 1);
          const std::size_t dst = static_cast<std::size_t>(y) * a.w + x;
          init[2 * dst] = 2.0f * flow[2 * src];
          init[2 * dst + 1] = 2.0f * flow[2 * src + 1];
        }
      }
    }
    flow = std::move(init);
    RefineLevel(a, pb[level], options, flow, ok);
  }
  FlowField out(frame_a.height, frame_a.width);
  for (std::size_t i = 0; i < ok.size(); ++i) {
    if (!ok[i]) continue;
    out.uv[2 * i] = flow[2 * i];
    out.uv[2 * i + 1] = flow[2 * i + 1];
  }
  return out;
}

namespace {

std::vector<FlowField> EstimateAll(const std::vector<Image>& frames) {
  std::vector<FlowField> flows;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    flows.push_back(estimate_flow(frames[t], frames[t + 1]));
  }
  return flows;
}

}  // namespace

VersionedClip make_original(const synth::Clip& clip) {
  VersionedClip v;
  v.version = Version::kOriginal;
  v.clip = clip;
  // Ground-truth flow when the source has it.
  if (v.clip.flows.empty()) v.clip.flows = EstimateAll(v.clip.frames);
  return v;
}

VersionedClip make_body_only(const synth::Clip& clip) {
  VersionedClip v;
  v.version = Version::kBodyOnly;
  v.clip = clip;
  for (int t = 0; t < clip.num_frames(); ++t) {
    v.clip.frames[t] = body_only(clip.frames[t], clip.masks[t]);
  }
  v.clip.flows = EstimateAll(v.clip.frames);
  return v;
}

VersionedClip make_background_only(const synth::Clip& clip, double dilation) {
  VersionedClip v;
  v.version = Version::kBackgroundOnly;
  v.clip = clip;
  v.region = dilate(union_mask(clip.masks), dilation);
  for (int t = 0; t < clip.num_frames(); ++t) {
    Image filled = inpaint(clip.frames[t], v.region);
    // Re-quantize only the filled pixels so the rest stays bit-identical.
    for (std::size_t p = 0; p < v.region.bits.size(); ++p) {
      if (!v.region.bits[p]) continue;
      for (int c = 0; c < 3; ++c) filled.rgb[3 * p + c] = quantize8(filled.rgb[3 * p + c]);
    }
    v.clip.frames[t] = std::move(filled);
  }
  v.clip.flows = EstimateAll(v.clip.frames);
  return v;
}

VersionedClip make_version(const synth::Clip& clip, Version version) {
  switch (version) {
    case Version::kOriginal: return make_original(clip);
    case Version::kBodyOnly: return make_body_only(clip);
    case Version::kBackgroundOnly: return make_background_only(clip);
  }
  throw std::invalid_argument("make_version: bad version");
}

void write_versions(const synth::DatasetManifest& source, const std::filesystem::path& out_root) {
  for (Version version : kAllVersions) {
    synth::DatasetManifest m = source;
    const std::filesystem::path root = out_root / version_name(version);
    for (synth::ClipRecord& r : m.clips) {
      const synth::Clip clip = synth::load_clip(source, r);
      const VersionedClip v = make_version(clip, version);
      r.path = r.id;
      r.has_flows = true;
      synth::write_clip(root / r.path, v.clip);
    }
    m.root = root;
    synth::write_manifest(root, m);
  }
}

}  // namespace bodyscene::stim
