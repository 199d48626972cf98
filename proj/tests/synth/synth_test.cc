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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "bodyscene/common/rng.h"

namespace bodyscene::synth {
namespace {

TEST(SynthConfigTest, DefaultsAreValid) { EXPECT_NO_THROW(SynthConfig{}.validate()); }

TEST(SynthConfigTest, RejectsSpriteLargerThanFrame) {
  SynthConfig c;
  c.sprite_scale_min = 1.5;
  c.sprite_scale_max = 1.6;
  try {
    c.validate();
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("does not fit"), std::string::npos);
  }
}

TEST(SynthConfigTest, RejectsBadFields) {
  SynthConfig c;
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.rho = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.height = 16;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SynthConfig{};
  c.frames_per_clip = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SynthConfigTest, JsonRoundTrip) {
  SynthConfig c;
  c.rho = 0.5;
  c.seed = 77;
  c.num_classes = 5;
  const SynthConfig d = SynthConfig::from_json(c.to_json());
  EXPECT_EQ(d.to_json(), c.to_json());
}

TEST(GenerateClipTest, SameSeedIsBitIdentical) {
  SynthConfig c;
  const Clip a = generate_clip(c, 3, 99);
  const Clip b = generate_clip(c, 3, 99);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.masks, b.masks);
  EXPECT_EQ(a.flows, b.flows);
  EXPECT_EQ(a.background_class, b.background_class);
}

TEST(GenerateClipTest, ShapesAndMaskAreaBounds) {
  SynthConfig c;
  for (int k = 0; k < c.num_classes; ++k) {
    const Clip clip = generate_clip(c, k, 1000 + k);
    ASSERT_EQ(clip.num_frames(), c.frames_per_clip);
    ASSERT_EQ(clip.masks.size(), static_cast<std::size_t>(c.frames_per_clip));
    ASSERT_EQ(clip.flows.size(), static_cast<std::size_t>(c.frames_per_clip - 1));
    for (int t = 0; t < clip.num_frames(); ++t) {
      const std::size_t area = clip.masks[t].area();
      EXPECT_GT(area, 0u);
      EXPECT_LT(area, static_cast<std::size_t>(c.height * c.width));
      EXPECT_EQ(clip.frames[t].height, c.height);
      EXPECT_EQ(clip.frames[t].width, c.width);
    }
  }
}

TEST(GenerateClipTest, RejectsClassOutOfRange) {
  SynthConfig c;
  EXPECT_THROW(generate_clip(c, c.num_classes, 1), std::invalid_argument);
  EXPECT_THROW(generate_clip(c, -1, 1), std::invalid_argument);
}

TEST(GenerateClipTest, FramesHoldEightBitLevels) {
  const Clip clip = generate_clip(SynthConfig{}, 2, 5);
  for (const Image& f : clip.frames) {
    for (float v : f.rgb) {
      const float scaled = v * 255.0f;
      EXPECT_FLOAT_EQ(scaled, std::round(scaled));
    }
  }
}

TEST(GenerateClipTest, MaskDoesNotTouchFrameBorder) {
  SynthConfig c;
  for (int k = 0; k < c.num_classes; ++k) {
    for (int s = 0; s < 10; ++s) {
      const Clip clip = generate_clip(c, k, s * 31 + k);
      for (const Mask& m : clip.masks) {
        for (int i = 0; i < c.width; ++i) {
          EXPECT_EQ(m.at(0, i), 0);
          EXPECT_EQ(m.at(c.height - 1, i), 0);
        }
        for (int i = 0; i < c.height; ++i) {
          EXPECT_EQ(m.at(i, 0), 0);
          EXPECT_EQ(m.at(i, c.width - 1), 0);
        }
      }
    }
  }
}

// Outside the mask the frame is the static background.
TEST(GenerateClipTest, BackgroundStaticOutsideMasks) {
  const Clip clip = generate_clip(SynthConfig{}, 4, 12);
  for (int t = 1; t < clip.num_frames(); ++t) {
    for (int y = 0; y < clip.height(); ++y) {
      for (int x = 0; x < clip.width(); ++x) {
        if (clip.masks[t].at(y, x) || clip.masks[0].at(y, x)) continue;
        for (int ch = 0; ch < 3; ++ch) {
          ASSERT_EQ(clip.frames[t].at(y, x, ch), clip.frames[0].at(y, x, ch));
        }
      }
    }
  }
}

TEST(GenerateClipTest, FlowIsDisplacementInsideMaskZeroOutside) {
  SynthConfig c;
  const Clip clip = generate_clip(c, 5, 3);
  const double speed = c.class_speed(5);
  for (std::size_t t = 0; t < clip.flows.size(); ++t) {
    const FlowField& f = clip.flows[t];
    const Mask& m = clip.masks[t];
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) {
        if (m.at(y, x)) {
          EXPECT_NEAR(std::hypot(f.u(y, x), f.v(y, x)), speed, 1e-5);
        } else {
          EXPECT_EQ(f.u(y, x), 0.0f);
          EXPECT_EQ(f.v(y, x), 0.0f);
        }
      }
    }
  }
}

// The mask moves by the flow: shifting mask_t by the flow lands on mask_{t+1}
// for most pixels (rasterization differs only at the boundary).
TEST(GenerateClipTest, MaskFollowsFlow) {
  SynthConfig c;
  const Clip clip = generate_clip(c, 7, 8);
  for (std::size_t t = 0; t < clip.flows.size(); ++t) {
    int hits = 0, total = 0;
    for (int y = 0; y < c.height; ++y) {
      for (int x = 0; x < c.width; ++x) {
        if (!clip.masks[t].at(y, x)) continue;
        const int ty = static_cast<int>(std::lround(y + clip.flows[t].v(y, x)));
        const int tx = static_cast<int>(std::lround(x + clip.flows[t].u(y, x)));
        ++total;
        hits += clip.masks[t + 1].at(ty, tx);
      }
    }
    EXPECT_GT(hits, 0.85 * total) << "frame " << t;
  }
}

TEST(GenerateClipTest, RhoOneIsAlwaysCongruent) {
  SynthConfig c;
  c.rho = 1.0;
  int congruent = 0;
  for (int i = 0; i < 200; ++i) {
    const Clip clip = generate_clip(c, i % c.num_classes, derive_seed(5, i, 0));
    congruent += clip.background_class == clip.action_class;
  }
  EXPECT_EQ(congruent, 200);
}

TEST(GenerateClipTest, RhoZeroIsNeverCongruentAndCoversOthers) {
  SynthConfig c;
  c.rho = 0.0;
  c.frames_per_clip = 2;
  std::map<int, int> seen;
  for (int i = 0; i < 1000; ++i) {
    const Clip clip = generate_clip(c, 0, derive_seed(6, i, 0));
    ASSERT_NE(clip.background_class, 0);
    ++seen[clip.background_class];
  }
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(c.num_classes - 1));
}

// Counting oracle: guessing "background class = action class" is right for
// a fraction of clips near rho.
TEST(GenerateClipTest, CongruentGuessAccuracyTracksRho) {
  SynthConfig c;
  c.frames_per_clip = 2;
  const int n = 2000;
  int congruent = 0;
  for (int i = 0; i < n; ++i) {
    const Clip clip = generate_clip(c, i % c.num_classes, derive_seed(7, i, 0));
    congruent += clip.background_class == clip.action_class;
  }
  const double p = static_cast<double>(congruent) / n;
  const double sigma = std::sqrt(c.rho * (1 - c.rho) / n);
  EXPECT_NEAR(p, c.rho, 4 * sigma);
}

// Mean frame-to-frame speed of the mask centroid separates the classes: a
// nearest-centroid rule on it is always right.
TEST(GenerateClipTest, NearestCentroidOnMeanSpeedIsPerfect) {
  SynthConfig c;
  const int per_class = 10;
  std::vector<std::pair<int, double>> samples;
  std::vector<double> centroid(c.num_classes, 0.0);
  for (int k = 0; k < c.num_classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      const Clip clip = generate_clip(c, k, derive_seed(8, k, i));
      double total = 0;
      for (std::size_t t = 0; t < clip.flows.size(); ++t) {
        const Mask& m = clip.masks[t];
        double su = 0, sv = 0;
        for (int p = 0; p < c.height * c.width; ++p) {
          if (m.bits[p]) {
            su += clip.flows[t].uv[2 * p];
            sv += clip.flows[t].uv[2 * p + 1];
          }
        }
        total += std::hypot(su, sv) / static_cast<double>(m.area());
      }
      const double speed = total / static_cast<double>(clip.flows.size());
      samples.emplace_back(k, speed);
      centroid[k] += speed / per_class;
    }
  }
  for (const auto& [label, speed] : samples) {
    int best = 0;
    for (int k = 1; k < c.num_classes; ++k) {
      if (std::abs(speed - centroid[k]) < std::abs(speed - centroid[best])) best = k;
    }
    EXPECT_EQ(best, label);
  }
}

TEST(GenerateClipTest, PathIsBackAndForth) {
  FigurePath p{0, 0, 1, 0, 0.5, 3, 1.0};
  EXPECT_DOUBLE_EQ(p.along(0), 0.0);
  EXPECT_DOUBLE_EQ(p.along(3), 1.5);
  EXPECT_DOUBLE_EQ(p.along(4), 1.0);
  EXPECT_DOUBLE_EQ(p.along(6), 0.0);
  EXPECT_DOUBLE_EQ(p.along(7), 0.5);
}

TEST(CategoryNameTest, DistinctForAllClasses) {
  std::set<std::string> names;
  for (int k = 0; k < kMaxClasses; ++k) names.insert(category_name(k));
  EXPECT_EQ(names.size(), static_cast<std::size_t>(kMaxClasses));
  EXPECT_THROW(category_name(kMaxClasses), std::out_of_range);
}

}  // namespace
}  // namespace bodyscene::synth
