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

#include <gtest/gtest.h>

#include <cmath>

#include "bodyscene/common/rng.h"
#include "common/temp_dir.h"

namespace bodyscene::stim {
namespace {

Image RandomImage(int h, int w, Rng& rng) {
  Image img(h, w);
  for (float& v : img.rgb) v = static_cast<float>(rng.uniform());
  return img;
}

Mask RandomMask(int h, int w, Rng& rng, double p = 0.4) {
  Mask m(h, w);
  for (auto& b : m.bits) b = rng.uniform() < p ? 1 : 0;
  return m;
}

Mask Square(int h, int w, int y0, int x0, int side) {
  Mask m(h, w);
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) m.at(y, x) = 1;
  }
  return m;
}

TEST(BodyOnlyTest, FullMaskIsIdentity) {
  Rng rng(1);
  const Image f = RandomImage(8, 9, rng);
  EXPECT_EQ(body_only(f, Mask(8, 9, 1)), f);
}

TEST(BodyOnlyTest, EmptyMaskIsBlack) {
  Rng rng(2);
  const Image out = body_only(RandomImage(8, 9, rng), Mask(8, 9, 0));
  for (float v : out.rgb) EXPECT_EQ(v, 0.0f);
}

TEST(BodyOnlyTest, MatchesPixelwiseProduct) {
  Rng rng(3);
  const Image f = RandomImage(16, 12, rng);
  const Mask m = RandomMask(16, 12, rng);
  const Image out = body_only(f, m);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(out.at(y, x, c), f.at(y, x, c) * static_cast<float>(m.at(y, x)));
      }
    }
  }
}

TEST(BodyOnlyTest, Idempotent) {
  Rng rng(4);
  const Image f = RandomImage(10, 10, rng);
  const Mask m = RandomMask(10, 10, rng);
  EXPECT_EQ(body_only(body_only(f, m), m), body_only(f, m));
}

TEST(BodyOnlyTest, ShapeMismatchIsRejected) {
  EXPECT_THROW(body_only(Image(4, 4), Mask(4, 5)), std::invalid_argument);
}

TEST(UnionMaskTest, SingleMaskIsItself) {
  Rng rng(5);
  const Mask m = RandomMask(7, 7, rng);
  EXPECT_EQ(union_mask({m}), m);
}

TEST(UnionMaskTest, DisjointAreasAdd) {
  const Mask a = Square(20, 20, 0, 0, 4);
  const Mask b = Square(20, 20, 10, 10, 5);
  EXPECT_EQ(union_mask({a, b}).area(), a.area() + b.area());
}

TEST(UnionMaskTest, MovingSpriteUnionCoversEveryFrame) {
  const synth::Clip clip = synth::generate_clip(synth::SynthConfig{}, 6, 17);
  const Mask u = union_mask(clip.masks);
  for (const Mask& m : clip.masks) {
    EXPECT_GE(u.area(), m.area());
    EXPECT_TRUE(m.subset_of(u));
  }
  EXPECT_GT(u.area(), clip.masks.front().area());
}

TEST(UnionMaskTest, EmptyListIsRejected) { EXPECT_THROW(union_mask({}), std::invalid_argument); }

TEST(DilateTest, FactorOneIsIdentity) {
  Rng rng(6);
  const Mask m = RandomMask(15, 15, rng);
  EXPECT_EQ(dilate(m, 1.0), m);
}

TEST(DilateTest, CenteredSquareGrowsToTwelve) {
  // 10x10 square occupying rows/cols 11..20 of a 32x32 grid.
  const Mask m = Square(32, 32, 11, 11, 10);
  const Mask d = dilate(m, 1.2);
  EXPECT_EQ(d.area(), 144u);
  EXPECT_EQ(d, Square(32, 32, 10, 10, 12));
  EXPECT_TRUE(m.subset_of(d));
}

TEST(DilateTest, AlwaysSuperset) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Mask m = RandomMask(20, 24, rng, 0.1);
    for (double f : {1.1, 1.2, 1.7}) EXPECT_TRUE(m.subset_of(dilate(m, f)));
  }
}

TEST(DilateTest, MonotoneOnDiscsAndRectangles) {
  for (int r = 2; r <= 9; ++r) {
    Mask disc(32, 32);
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        disc.at(y, x) = (y - 13.3) * (y - 13.3) + (x - 17.6) * (x - 17.6) <= r * r;
      }
    }
    Mask rect(32, 32);
    for (int y = 5; y < 5 + 2 * r; ++y) {
      for (int x = 9; x < 9 + r + 3; ++x) rect.at(y, x) = 1;
    }
    for (const Mask* m : {&disc, &rect}) {
      Mask prev = *m;
      for (double f = 1.0; f <= 1.6; f += 0.05) {
        const Mask d = dilate(*m, f);
        EXPECT_TRUE(prev.subset_of(d)) << "r=" << r << " f=" << f;
        prev = d;
      }
    }
  }
}

TEST(DilateTest, EmptyMaskUnchanged) {
  const Mask m(9, 9);
  EXPECT_EQ(dilate(m, 1.2), m);
}

TEST(DilateTest, FactorBelowOneIsRejected) {
  EXPECT_THROW(dilate(Mask(3, 3, 1), 0.9), std::invalid_argument);
}

TEST(InpaintTest, EmptyRegionIsIdentity) {
  Rng rng(8);
  const Image f = RandomImage(12, 12, rng);
  EXPECT_EQ(inpaint(f, Mask(12, 12)), f);
}

TEST(InpaintTest, UniformFrameIsUnchanged) {
  const Image f(16, 16, 0.3f);
  Rng rng(9);
  EXPECT_EQ(inpaint(f, RandomMask(16, 16, rng)), f);
}

TEST(InpaintTest, LinearRampIsRecovered) {
  const int h = 32, w = 32;
  Image f(h, w);
  auto ramp = [&](int x) { return 0.1f + 0.8f * static_cast<float>(x) / (w - 1); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = ramp(x) * (1.0f - 0.2f * c);
    }
  }
  const Mask region = Square(h, w, 10, 10, 12);
  Image damaged = f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (region.at(y, x)) {
        for (int c = 0; c < 3; ++c) damaged.at(y, x, c) = 1.0f;
      }
    }
  }
  const Image out = inpaint(damaged, region);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(out.at(y, x, c), f.at(y, x, c), 1e-2) << y << "," << x;
      }
    }
  }
}

TEST(InpaintTest, ComplementIsBitIdentical) {
  Rng rng(10);
  const Image f = RandomImage(20, 20, rng);
  const Mask region = RandomMask(20, 20, rng, 0.3);
  const Image out = inpaint(f, region);
  for (std::size_t p = 0; p < region.bits.size(); ++p) {
    if (region.bits[p]) continue;
    for (int c = 0; c < 3; ++c) ASSERT_EQ(out.rgb[3 * p + c], f.rgb[3 * p + c]);
  }
}

TEST(InpaintTest, FilledPixelsAreHarmonic) {
  Rng rng(11);
  const Image f = RandomImage(16, 16, rng);
  const Mask region = Square(16, 16, 4, 5, 6);
  const Image out = inpaint(f, region);
  for (int y = 4; y < 10; ++y) {
    for (int x = 5; x < 11; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float mean = 0.25f * (out.at(y - 1, x, c) + out.at(y + 1, x, c) +
                                    out.at(y, x - 1, c) + out.at(y, x + 1, c));
        EXPECT_NEAR(out.at(y, x, c), mean, 1e-3);
      }
    }
  }
}

TEST(InpaintTest, FullRegionIsRejected) {
  EXPECT_THROW(inpaint(Image(4, 4), Mask(4, 4, 1)), std::invalid_argument);
}

synth::Clip StaticClip() {
  synth::Clip clip = synth::generate_clip(synth::SynthConfig{}, 1, 21);
  for (int t = 1; t < clip.num_frames(); ++t) {
    clip.frames[t] = clip.frames[0];
    clip.masks[t] = clip.masks[0];
  }
  clip.flows.clear();
  return clip;
}

TEST(BackgroundOnlyTest, StaticClipRegionIsDilatedSingleMask) {
  const synth::Clip clip = StaticClip();
  const VersionedClip v = make_background_only(clip);
  EXPECT_EQ(v.region, dilate(clip.masks[0], 1.2));
}

TEST(BackgroundOnlyTest, ModifiedSupportIsInsideSharedRegion) {
  for (int k : {0, 3, 7}) {
    const synth::Clip clip = synth::generate_clip(synth::SynthConfig{}, k, 40 + k);
    const VersionedClip v = make_background_only(clip);
    ASSERT_EQ(v.clip.num_frames(), clip.num_frames());
    for (int t = 0; t < clip.num_frames(); ++t) {
      for (std::size_t p = 0; p < v.region.bits.size(); ++p) {
        if (v.region.bits[p]) continue;
        for (int c = 0; c < 3; ++c) {
          ASSERT_EQ(v.clip.frames[t].rgb[3 * p + c], clip.frames[t].rgb[3 * p + c]);
        }
      }
      EXPECT_TRUE(clip.masks[t].subset_of(v.region));
    }
  }
}

// The filled region depends only on the static background around it, so it
// is the same in every frame.
TEST(BackgroundOnlyTest, FilledFramesAreStatic) {
  const synth::Clip clip = synth::generate_clip(synth::SynthConfig{}, 4, 3);
  const VersionedClip v = make_background_only(clip);
  for (int t = 1; t < v.clip.num_frames(); ++t) EXPECT_EQ(v.clip.frames[t], v.clip.frames[0]);
}

TEST(BackgroundOnlyTest, NoBodyColourSurvives) {
  for (int k = 0; k < 8; ++k) {
    const synth::Clip clip = synth::generate_clip(synth::SynthConfig{}, k, 60 + k);
    const VersionedClip v = make_background_only(clip);
    for (int t = 0; t < clip.num_frames(); ++t) {
      for (std::size_t p = 0; p < v.region.bits.size(); ++p) {
        if (!clip.masks[t].bits[p]) continue;
        const bool same = v.clip.frames[t].rgb[3 * p] == clip.frames[t].rgb[3 * p] &&
                          v.clip.frames[t].rgb[3 * p + 1] == clip.frames[t].rgb[3 * p + 1] &&
                          v.clip.frames[t].rgb[3 * p + 2] == clip.frames[t].rgb[3 * p + 2];
        EXPECT_FALSE(same) << "class " << k << " frame " << t << " pixel " << p;
      }
    }
  }
}

TEST(BackgroundOnlyTest, OutputIsQuantized) {
  const VersionedClip v = make_background_only(synth::generate_clip(synth::SynthConfig{}, 0, 1));
  for (float x : v.clip.frames[0].rgb) EXPECT_FLOAT_EQ(x * 255.0f, std::round(x * 255.0f));
}

TEST(VersionTest, BodyOnlyBlacksOutComplementEveryFrame) {
  const synth::Clip clip = synth::generate_clip(synth::SynthConfig{}, 5, 2);
  const VersionedClip v = make_body_only(clip);
  ASSERT_EQ(v.clip.flows.size(), clip.flows.size());
  for (int t = 0; t < clip.num_frames(); ++t) {
    for (std::size_t p = 0; p < clip.masks[t].bits.size(); ++p) {
      for (int c = 0; c < 3; ++c) {
        if (clip.masks[t].bits[p]) {
          ASSERT_EQ(v.clip.frames[t].rgb[3 * p + c], clip.frames[t].rgb[3 * p + c]);
        } else {
          ASSERT_EQ(v.clip.frames[t].rgb[3 * p + c], 0.0f);
        }
      }
    }
  }
}

TEST(VersionTest, OriginalKeepsFramesAndFlows) {
  const synth::Clip clip = synth::generate_clip(synth::SynthConfig{}, 5, 2);
  const VersionedClip v = make_original(clip);
  EXPECT_EQ(v.clip.frames, clip.frames);
  EXPECT_EQ(v.clip.flows, clip.flows);
  EXPECT_TRUE(v.region.bits.empty());
}

TEST(VersionTest, NamesRoundTrip) {
  for (Version v : kAllVersions) EXPECT_EQ(parse_version(version_name(v)), v);
  EXPECT_STREQ(version_name(Version::kOriginal), "orig");
  EXPECT_STREQ(version_name(Version::kBodyOnly), "body");
  EXPECT_STREQ(version_name(Version::kBackgroundOnly), "bg");
  EXPECT_THROW(parse_version("both"), std::invalid_argument);
}

TEST(VersionTest, WriteVersionsLayout) {
  testing::TempDir dir("versions");
  synth::SynthConfig c;
  c.num_classes = 2;
  c.clips_per_class = 3;
  c.frames_per_clip = 3;
  const synth::DatasetManifest m = synth::generate_dataset(c, dir.path() / "src");
  write_versions(m, dir.path() / "out");
  for (const char* name : {"orig", "body", "bg"}) {
    const synth::DatasetManifest vm = synth::load_external(dir.path() / "out" / name);
    EXPECT_EQ(vm.clips.size(), m.clips.size());
  }
  const synth::DatasetManifest body = synth::load_external(dir.path() / "out" / "body");
  const synth::Clip src = synth::load_clip(m, m.clips[0]);
  const synth::Clip got = synth::load_clip(body, body.clips[0]);
  EXPECT_EQ(got.frames, make_body_only(src).clip.frames);
}

}  // namespace
}  // namespace bodyscene::stim
