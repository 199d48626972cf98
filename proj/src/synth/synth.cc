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

#include "bodyscene/synth/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bodyscene/common/rng.h"

namespace bodyscene::synth {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFigureRadius = 10.0;

enum Arm { kDown, kOut, kUp };
enum Legs { kClosed, kWide };

struct Pose {
  Arm left;
  Arm right;
  Legs legs;
};

// Ordered so that the first classes differ in as many limbs as possible.
constexpr std::array<Pose, kMaxClasses> kPoses = {{
    {kUp, kUp, kClosed},     {kDown, kDown, kWide},  {kOut, kOut, kClosed},
    {kUp, kDown, kWide},     {kDown, kUp, kClosed},  {kOut, kUp, kWide},
    {kUp, kOut, kClosed},    {kDown, kOut, kWide},   {kOut, kDown, kClosed},
    {kUp, kUp, kWide},       {kDown, kDown, kClosed}, {kOut, kOut, kWide},
    {kUp, kDown, kClosed},   {kDown, kUp, kWide},    {kOut, kUp, kClosed},
    {kUp, kOut, kWide},      {kDown, kOut, kClosed}, {kOut, kDown, kWide},
}};

const char* ArmName(Arm a) {
  switch (a) {
    case kDown: return "down";
    case kOut: return "out";
    case kUp: return "up";
  }
  return "?";
}

double ArmAngle(Arm a) {
  switch (a) {
    case kDown: return -55.0 * kPi / 180.0;
    case kOut: return 0.0;
    case kUp: return 55.0 * kPi / 180.0;
  }
  return 0.0;
}

double SegmentDistance(double px, double py, double ax, double ay, double bx,
                       double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = ((px - ax) * vx + (py - ay) * vy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// Figure-local coordinates at unit scale; y grows downward.
bool InsideFigure(const Pose& pose, double x, double y) {
  if ((x / 2.6) * (x / 2.6) + (y / 4.2) * (y / 4.2) <= 1.0) return true;
  if (x * x + (y + 6.6) * (y + 6.6) <= 4.0) return true;
  constexpr double kArmLen = 5.0, kArmRadius = 1.1;
  const double la = ArmAngle(pose.left), ra = ArmAngle(pose.right);
  if (SegmentDistance(x, y, -2.2, -3.0, -2.2 - kArmLen * std::cos(la),
                      -3.0 - kArmLen * std::sin(la)) <= kArmRadius) {
    return true;
  }
  if (SegmentDistance(x, y, 2.2, -3.0, 2.2 + kArmLen * std::cos(ra),
                      -3.0 - kArmLen * std::sin(ra)) <= kArmRadius) {
    return true;
  }
  constexpr double kLegLen = 5.0, kLegRadius = 1.2;
  double lx, ly;
  if (pose.legs == kClosed) {
    lx = 0.15 / std::hypot(0.15, 1.0);
    ly = 1.0 / std::hypot(0.15, 1.0);
  } else {
    lx = ly = std::sqrt(0.5);
  }
  if (SegmentDistance(x, y, -1.2, 3.6, -1.2 - kLegLen * lx, 3.6 + kLegLen * ly) <=
      kLegRadius) {
    return true;
  }
  return SegmentDistance(x, y, 1.2, 3.6, 1.2 + kLegLen * lx, 3.6 + kLegLen * ly) <=
         kLegRadius;
}

std::array<double, 3> HsvToRgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Image RenderBackground(const SynthConfig& cfg, int bg_class, Rng& rng) {
  Image img(cfg.height, cfg.width);
  const auto base = HsvToRgb(static_cast<double>(bg_class) / cfg.num_classes, 0.7, 0.8);
  const double period = rng.uniform(cfg.texture_period_min, cfg.texture_period_max);
  const double theta = rng.uniform(0.0, kPi);
  const double phase1 = rng.uniform(0.0, 2 * kPi);
  const double phase2 = rng.uniform(0.0, 2 * kPi);
  const int family = bg_class % 3;

  // Lattice for the blob family, spacing ~period/1.5.
  const double spacing = period / 1.5;
  const int lat_h = static_cast<int>(cfg.height / spacing) + 3;
  const int lat_w = static_cast<int>(cfg.width / spacing) + 3;
  std::vector<double> lattice;
  if (family == 2) {
    lattice.resize(static_cast<std::size_t>(lat_h) * lat_w);
    for (double& v : lattice) v = rng.uniform();
  }

  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      double m = 0.0;
      if (family == 0) {
        m = 0.5 + 0.5 * std::sin(2 * kPi * (x * std::cos(theta) + y * std::sin(theta)) / period + phase1);
      } else if (family == 1) {
        m = 0.5 + 0.5 * std::tanh(3.0 * std::sin(2 * kPi * x / period + phase1) *
                                  std::sin(2 * kPi * y / period + phase2));
      } else {
        const double gx = x / spacing, gy = y / spacing;
        const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
        const double fx = gx - ix, fy = gy - iy;
        auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * lat_w + xx]; };
        m = (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix + 1)) +
            fy * ((1 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1));
      }
      const double gain = 0.45 + 0.55 * m;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(base[c] * gain);
    }
  }
  return img;
}

}  // namespace

double figure_radius() { return kFigureRadius; }

std::string category_name(int class_idx) {
  if (class_idx < 0 || class_idx >= kMaxClasses) {
    throw std::out_of_range("class index " + std::to_string(class_idx));
  }
  const Pose& p = kPoses[class_idx];
  return std::string("c") + (class_idx < 10 ? "0" : "") + std::to_string(class_idx) +
         "_" + ArmName(p.left) + "_" + ArmName(p.right) + "_" +
         (p.legs == kClosed ? "closed" : "wide");
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("synth config: " + what); };
  if (num_classes < 2 || num_classes > kMaxClasses) {
    fail("num_classes must be in [2," + std::to_string(kMaxClasses) + "]");
  }
  if (clips_per_class < 1) fail("clips_per_class must be >= 1");
  if (frames_per_clip < 2) fail("frames_per_clip must be >= 2");
  if (height < 32 || width < 32) fail("frame size must be at least 32x32");
  if (!(rho >= 0.0 && rho <= 1.0)) fail("rho must be in [0,1]");
  if (!(sprite_scale_min > 0.0 && sprite_scale_min <= sprite_scale_max)) {
    fail("sprite scale range is empty");
  }
  if (!(base_speed > 0.0 && speed_step >= 0.0)) fail("speeds must be positive");
  if (!(travel_min > 0.0 && travel_min <= travel_max)) fail("travel range is empty");
  if (!(texture_period_min > 1.0 && texture_period_min <= texture_period_max)) {
    fail("texture period range is invalid");
  }
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && train_fraction + val_fraction < 1.0)) {
    fail("split fractions must leave every split nonempty");
  }
  const double vmax = class_speed(num_classes - 1);
  const double path = std::max(travel_max + 0.5 * vmax, vmax);
  const double need = 2.0 * kFigureRadius * sprite_scale_max + path + 2.0;
  if (need > std::min(height, width)) {
    fail("figure (" + std::to_string(need) + " px with its path) does not fit a " +
         std::to_string(height) + "x" + std::to_string(width) + " frame");
  }
}

nlohmann::json SynthConfig::to_json() const {
  return {
      {"num_classes", num_classes},
      {"clips_per_class", clips_per_class},
      {"frames_per_clip", frames_per_clip},
      {"height", height},
      {"width", width},
      {"rho", rho},
      {"sprite_scale_min", sprite_scale_min},
      {"sprite_scale_max", sprite_scale_max},
      {"base_speed", base_speed},
      {"speed_step", speed_step},
      {"travel_min", travel_min},
      {"travel_max", travel_max},
      {"texture_period_min", texture_period_min},
      {"texture_period_max", texture_period_max},
      {"train_fraction", train_fraction},
      {"val_fraction", val_fraction},
      {"seed", seed},
  };
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("num_classes", c.num_classes);
  get("clips_per_class", c.clips_per_class);
  get("frames_per_clip", c.frames_per_clip);
  get("height", c.height);
  get("width", c.width);
  get("rho", c.rho);
  get("sprite_scale_min", c.sprite_scale_min);
  get("sprite_scale_max", c.sprite_scale_max);
  get("base_speed", c.base_speed);
  get("speed_step", c.speed_step);
  get("travel_min", c.travel_min);
  get("travel_max", c.travel_max);
  get("texture_period_min", c.texture_period_min);
  get("texture_period_max", c.texture_period_max);
  get("train_fraction", c.train_fraction);
  get("val_fraction", c.val_fraction);
  get("seed", c.seed);
  return c;
}

double FigurePath::along(int t) const {
  const int period = 2 * leg_frames;
  const int phase = t % period;
  const int steps = phase <= leg_frames ? phase : period - phase;
  return steps * speed;
}

double FigurePath::position_x(int t) const { return start_x + along(t) * dir_x; }
double FigurePath::position_y(int t) const { return start_y + along(t) * dir_y; }

Clip generate_clip(const SynthConfig& config, int class_idx, std::uint64_t seed) {
  config.validate();
  if (class_idx < 0 || class_idx >= config.num_classes) {
    throw std::invalid_argument("generate_clip: class index " + std::to_string(class_idx) +
                                " outside [0," + std::to_string(config.num_classes) + ")");
  }
  Rng rng(seed);
  Clip clip;
  clip.action_class = class_idx;

  // Background class: congruent with probability rho.
  const double draw = rng.uniform();
  if (draw < config.rho) {
    clip.background_class = class_idx;
  } else {
    const int other = rng.uniform_int(config.num_classes - 1);
    clip.background_class = other >= class_idx ? other + 1 : other;
  }

  FigurePath path{};
  path.scale = rng.uniform(config.sprite_scale_min, config.sprite_scale_max);
  path.speed = config.class_speed(class_idx);
  const double angle = rng.uniform(0.0, 2 * kPi);
  path.dir_x = std::cos(angle);
  path.dir_y = std::sin(angle);
  const double travel = rng.uniform(config.travel_min, config.travel_max);
  path.leg_frames = std::clamp(static_cast<int>(std::lround(travel / path.speed)), 1,
                               config.frames_per_clip - 1);
  const double leg = path.leg_frames * path.speed;
  const double margin = kFigureRadius * path.scale + 1.0;
  auto centre = [&](double extent, double d) {
    const double lo = margin + std::abs(d) * leg / 2;
    const double hi = extent - 1 - margin - std::abs(d) * leg / 2;
    return lo >= hi ? (lo + hi) / 2 : rng.uniform(lo, hi);
  };
  const double mid_x = centre(config.width, path.dir_x);
  const double mid_y = centre(config.height, path.dir_y);
  path.start_x = mid_x - path.dir_x * leg / 2;
  path.start_y = mid_y - path.dir_y * leg / 2;

  const double tex_phase_u = rng.uniform(0.0, 2 * kPi);
  const double tex_phase_v = rng.uniform(0.0, 2 * kPi);
  const Image background = RenderBackground(config, clip.background_class, rng);
  const Pose& pose = kPoses[class_idx];
  constexpr std::array<double, 3> kTint = {1.0, 0.86, 0.72};

  const int T = config.frames_per_clip;
  for (int t = 0; t < T; ++t) {
    Image frame = background;
    Mask mask(config.height, config.width);
    const double cx = path.position_x(t), cy = path.position_y(t);
    for (int y = 0; y < config.height; ++y) {
      for (int x = 0; x < config.width; ++x) {
        const double dx = x - cx, dy = y - cy;
        if (!InsideFigure(pose, dx / path.scale, dy / path.scale)) continue;
        mask.at(y, x) = 1;
        const double tex = 0.55 + 0.2 * std::sin(2 * kPi * dx / 6.5 + tex_phase_u) +
                           0.2 * std::sin(2 * kPi * dy / 5.5 + tex_phase_v);
        for (int c = 0; c < 3; ++c) frame.at(y, x, c) = static_cast<float>(kTint[c] * tex);
      }
    }
    quantize8(frame);
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(std::move(mask));
  }
  for (int t = 0; t + 1 < T; ++t) {
    FlowField flow(config.height, config.width);
    const float du = static_cast<float>(path.position_x(t + 1) - path.position_x(t));
    const float dv = static_cast<float>(path.position_y(t + 1) - path.position_y(t));
    const Mask& m = clip.masks[t];
    for (int y = 0; y < config.height; ++y) {
      for (int x = 0; x < config.width; ++x) {
        if (m.at(y, x)) {
          flow.u(y, x) = du;
          flow.v(y, x) = dv;
        }
      }
    }
    clip.flows.push_back(std::move(flow));
  }
  return clip;
}

}  // namespace bodyscene::synth
