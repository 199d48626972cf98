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

#include "bodyscene/nets/nets.h"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bodyscene/common/rng.h"
#include "bodyscene/tensor/ops.h"
#include "common/gradient_suite.h"
#include "common/temp_dir.h"

namespace bodyscene::nets {
namespace {

using testing::RandomTensor;

ModelSpec SmallSpec(Topology t, InputMode m = InputMode::kFrames) {
  ModelSpec s;
  s.topology = t;
  s.input_mode = m;
  s.backbone.widths = {4, 6};
  s.backbone.blocks = {1, 2};
  s.num_classes = 5;
  return s;
}

bool AllZero(const Tensor& t) {
  for (float v : t.values()) {
    if (v != 0.0f) return false;
  }
  return true;
}

bool BitEqual(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.values()[i] != b.values()[i]) return false;
  }
  return true;
}

std::vector<Tensor> StreamTensors(const Model& m, int stream) {
  std::vector<NamedTensor> named;
  m.stream(stream).append_named("", named);
  std::vector<Tensor> out;
  for (auto& nt : named) out.push_back(nt.tensor);
  return out;
}

TEST(ModelSpecTest, NamesRoundTripAndValidation) {
  EXPECT_EQ(parse_topology("baseline"), Topology::kBaseline);
  EXPECT_EQ(parse_topology("domainnet"), Topology::kDomainNet);
  EXPECT_EQ(parse_input_mode("frames+flows"), InputMode::kFramesFlows);
  EXPECT_EQ(std::string(input_mode_name(InputMode::kFrames)), "frames");
  EXPECT_THROW(parse_topology("resnet"), std::invalid_argument);
  EXPECT_THROW(parse_input_mode("flows"), std::invalid_argument);

  const ModelSpec s = SmallSpec(Topology::kDomainNet, InputMode::kFramesFlows);
  EXPECT_EQ(ModelSpec::from_json(s.to_json()).to_json(), s.to_json());
  EXPECT_EQ(s.in_channels(), 5);
  EXPECT_EQ(s.backbone.pooling_factor(), 4);
  EXPECT_NE(s.hash(), SmallSpec(Topology::kBaseline).hash());

  ModelSpec bad = s;
  bad.backbone.blocks = {1};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = s;
  bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(ModelTest, DefaultBackboneLayout) {
  const ModelSpec spec;
  EXPECT_EQ(spec.backbone.widths, (std::vector<int>{16, 32, 64}));
  EXPECT_EQ(spec.backbone.blocks, (std::vector<int>{2, 2, 2}));
  const Model m = Model::create(spec, 1);
  const std::vector<NamedTensor> named = m.named_parameters();
  std::vector<std::string> names;
  for (const auto& nt : named) names.push_back(nt.name);
  EXPECT_EQ(names, (std::vector<std::string>{
                       "net.stem.w", "net.s0.b0.w", "net.s0.b1.w", "net.s1.transition.w",
                       "net.s1.b0.w", "net.s1.b1.w", "net.s2.transition.w", "net.s2.b0.w",
                       "net.s2.b1.w", "net.head.w", "net.head.b"}));
  // stem 16*3*9, transitions 32*16*9 + 64*32*9, blocks 2*(16*16 + 32*32 + 64*64)*9,
  // head 8*64 + 8.
  EXPECT_EQ(m.parameter_count(), 432u + 4608 + 18432 + 2u * (256 + 1024 + 4096) * 9 + 520);
}

TEST(ModelTest, HeInitializationScale) {
  const Model m = Model::create(ModelSpec{}, 3, 1.0);
  const Tensor& w = m.stream(0).blocks[2][1];  // [64, 64, 3, 3]
  double ss = 0;
  for (float v : w.values()) ss += static_cast<double>(v) * v;
  const double sd = std::sqrt(ss / w.numel());
  EXPECT_NEAR(sd, std::sqrt(2.0 / (64 * 9)), 0.03 * std::sqrt(2.0 / (64 * 9)));
  EXPECT_TRUE(AllZero(m.stream(0).head_bias));
  const Model small = Model::create(ModelSpec{}, 3, 0.01);
  EXPECT_NEAR(small.stream(0).blocks[2][1].values()[7], 0.01 * w.values()[7], 1e-7);
}

TEST(ModelTest, DomainNetStreamsAreDisjoint) {
  const Model m = Model::create(SmallSpec(Topology::kDomainNet), 2);
  ASSERT_EQ(m.num_streams(), 2);
  const std::vector<Tensor> body = StreamTensors(m, 0), bg = StreamTensors(m, 1);
  ASSERT_EQ(body.size(), bg.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    EXPECT_EQ(body[i].shape(), bg[i].shape());
    for (const Tensor& other : bg) EXPECT_FALSE(body[i].same_storage(other));
  }
  std::set<std::string> prefixes;
  for (const auto& nt : m.named_parameters()) prefixes.insert(nt.name.substr(0, nt.name.find('.')));
  EXPECT_EQ(prefixes, (std::set<std::string>{"body", "bg"}));
}

TEST(ForwardTest, ZeroParametersGiveZeroLogits) {
  Rng rng(1);
  const Tensor x = RandomTensor({3, 3, 8, 8}, rng);
  EXPECT_TRUE(AllZero(baseline_forward(Model::zeros(SmallSpec(Topology::kBaseline)), x)));
  const DomainLogits d =
      domainnet_forward(Model::zeros(SmallSpec(Topology::kDomainNet)), x, RandomTensor({3, 3, 8, 8}, rng));
  EXPECT_TRUE(AllZero(d.body));
  EXPECT_TRUE(AllZero(d.background));
  EXPECT_TRUE(AllZero(d.combined));
}

TEST(ForwardTest, OutputShapeForSizesDivisibleByPoolingFactor) {
  Rng rng(2);
  const Model m = Model::create(SmallSpec(Topology::kBaseline), 2);
  for (int size : {4, 8, 12, 20}) {
    const Tensor y = baseline_forward(m, RandomTensor({2, 3, size, size + 4}, rng));
    EXPECT_EQ(y.shape(), (Shape{2, 5}));
    for (float v : y.values()) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(baseline_forward(m, RandomTensor({1, 3, 8, 8}, rng)).shape(), (Shape{1, 5}));
  EXPECT_THROW(baseline_forward(m, RandomTensor({1, 5, 8, 8}, rng)), ShapeError);
}

TEST(ForwardTest, BaselineIsBackboneForward) {
  Rng rng(3);
  const Model m = Model::create(SmallSpec(Topology::kBaseline), 4);
  const Tensor x = RandomTensor({2, 3, 8, 8}, rng);
  EXPECT_TRUE(BitEqual(baseline_forward(m, x), backbone_forward(m.spec(), m.stream(0), x)));
  EXPECT_THROW(baseline_forward(Model::create(SmallSpec(Topology::kDomainNet), 1), x),
               std::invalid_argument);
}

TEST(ForwardTest, ZeroFlowChannelsOnlyAddInputChannels) {
  Rng rng(4);
  const Model frames = Model::create(SmallSpec(Topology::kBaseline), 5);
  Model flows = Model::create(SmallSpec(Topology::kBaseline, InputMode::kFramesFlows), 6);
  // Copy every parameter, with the frames stem in the RGB slice of the
  // 5-channel stem.
  const std::vector<NamedTensor> src = frames.named_parameters();
  const std::vector<NamedTensor> dst = flows.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::span<const float> s = src[i].tensor.values();
    std::span<float> d = dst[i].tensor.mutable_values();
    if (src[i].name == "net.stem.w") {
      const int f = src[i].tensor.dim(0);
      for (int o = 0; o < f; ++o) {
        for (int k = 0; k < 27; ++k) d[o * 45 + k] = s[o * 27 + k];
      }
    } else {
      std::copy(s.begin(), s.end(), d.begin());
    }
  }
  const Tensor rgb = RandomTensor({2, 3, 8, 8}, rng);
  std::vector<float> padded(2 * 5 * 64, 0.0f);
  for (int n = 0; n < 2; ++n) {
    std::copy_n(rgb.data() + n * 192, 192, padded.begin() + n * 320);
  }
  const Tensor five = Tensor::from({2, 5, 8, 8}, padded);
  EXPECT_TRUE(BitEqual(baseline_forward(frames, rgb), baseline_forward(flows, five)));
}

TEST(DomainNetTest, FusionIsExactSum) {
  Rng rng(5);
  const Model m = Model::create(SmallSpec(Topology::kDomainNet), 7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + rng.uniform_int(3);
    const DomainLogits d = domainnet_forward(m, RandomTensor({n, 3, 8, 8}, rng),
                                             RandomTensor({n, 3, 8, 8}, rng));
    for (std::size_t i = 0; i < d.combined.numel(); ++i) {
      ASSERT_EQ(d.combined.values()[i] - (d.body.values()[i] + d.background.values()[i]), 0.0f);
    }
  }
}

TEST(DomainNetTest, BatchMismatchRejected) {
  const Model m = Model::create(SmallSpec(Topology::kDomainNet), 7);
  EXPECT_THROW(domainnet_forward(m, Tensor::zeros({2, 3, 8, 8}), Tensor::zeros({3, 3, 8, 8})),
               ShapeError);
}

TEST(DomainNetTest, BodyPerturbationLeavesBackgroundLogitsBitIdentical) {
  Rng rng(6);
  const Model m = Model::create(SmallSpec(Topology::kDomainNet), 8);
  const Tensor body = RandomTensor({2, 3, 8, 8}, rng), bg = RandomTensor({2, 3, 8, 8}, rng);
  const DomainLogits before = domainnet_forward(m, body, bg);
  for (const Tensor& t : StreamTensors(m, 0)) {
    for (float& v : t.mutable_values()) v += 0.1f * static_cast<float>(rng.normal());
  }
  const DomainLogits after = domainnet_forward(m, body, bg);
  EXPECT_TRUE(BitEqual(before.background, after.background));
  EXPECT_FALSE(BitEqual(before.body, after.body));
}

TEST(DomainLossTest, HandExamples) {
  const Tensor z = Tensor::zeros({1, 5});
  const int label[] = {0};
  const LossBreakdown zero = domain_loss({z, z, add(z, z)}, label);
  EXPECT_NEAR(zero.l_body.item(), std::log(5.0), 1e-6);
  EXPECT_NEAR(zero.l_background.item(), std::log(5.0), 1e-6);
  EXPECT_NEAR(zero.l_combined.item(), std::log(5.0), 1e-6);
  EXPECT_NEAR(zero.total.item(), 3 * std::log(5.0), 1e-5);
  EXPECT_NEAR(zero.total.item(), 4.8283, 1e-4);

  const Tensor body = Tensor::from({1, 5}, {100, 0, 0, 0, 0});
  const LossBreakdown sat = domain_loss({body, z, add(body, z)}, label);
  EXPECT_NEAR(sat.l_body.item(), 0.0, 1e-6);
  EXPECT_NEAR(sat.l_combined.item(), 0.0, 1e-6);
  EXPECT_NEAR(sat.total.item(), std::log(5.0), 1e-5);
  const int bad[] = {5};
  EXPECT_THROW(domain_loss({z, z, z}, bad), std::invalid_argument);
}

TEST(DomainLossTest, TotalIsExactSumOfIndependentTerms) {
  Rng rng(7);
  const Model m = Model::create(SmallSpec(Topology::kDomainNet), 9);
  for (int trial = 0; trial < 50; ++trial) {
    const DomainLogits d = domainnet_forward(m, RandomTensor({4, 3, 8, 8}, rng),
                                             RandomTensor({4, 3, 8, 8}, rng));
    std::vector<int> labels(4);
    for (int& l : labels) l = rng.uniform_int(5);
    const LossBreakdown loss = domain_loss(d, labels);
    const float lb = softmax_cross_entropy(d.body, labels).item();
    const float lg = softmax_cross_entropy(d.background, labels).item();
    const float lc = softmax_cross_entropy(d.combined, labels).item();
    EXPECT_EQ(loss.total.item(), (lb + lg) + lc);
    EXPECT_GE(lb, 0.0f);
    EXPECT_GE(lg, 0.0f);
    EXPECT_GE(lc, 0.0f);
  }
}

class IsolationTest : public ::testing::Test {
 protected:
  // Gradients of one loss term with respect to each stream.
  std::pair<std::vector<float>, std::vector<float>> Grads(int term) {
    Rng rng(8);
    const Model m = Model::create(SmallSpec(Topology::kDomainNet), 10);
    const Tensor body = RandomTensor({3, 3, 8, 8}, rng), bg = RandomTensor({3, 3, 8, 8}, rng);
    const int labels[] = {0, 3, 1};
    GradTape tape;
    const LossBreakdown l = domain_loss(domainnet_forward(m, body, bg), labels);
    const Tensor& which = term == 0 ? l.l_body : term == 1 ? l.l_background : l.l_combined;
    tape.backward(which);
    std::pair<std::vector<float>, std::vector<float>> out;
    for (const Tensor& t : StreamTensors(m, 0)) out.first.insert(out.first.end(), t.grad().begin(), t.grad().end());
    for (const Tensor& t : StreamTensors(m, 1)) out.second.insert(out.second.end(), t.grad().begin(), t.grad().end());
    return out;
  }
  static bool Zero(const std::vector<float>& g) {
    return std::all_of(g.begin(), g.end(), [](float v) { return v == 0.0f; });
  }
};

TEST_F(IsolationTest, BodyTermTouchesOnlyBodyStream) {
  const auto [body, bg] = Grads(0);
  EXPECT_TRUE(Zero(bg));
  EXPECT_FALSE(Zero(body));
}

TEST_F(IsolationTest, BackgroundTermTouchesOnlyBackgroundStream) {
  const auto [body, bg] = Grads(1);
  EXPECT_TRUE(Zero(body));
  EXPECT_FALSE(Zero(bg));
}

TEST_F(IsolationTest, CombinedTermTouchesBothStreams) {
  const auto [body, bg] = Grads(2);
  EXPECT_FALSE(Zero(body));
  EXPECT_FALSE(Zero(bg));
}

TEST(DomainLossTest, BodyStreamStillLearnsWhenBackgroundIsPerfect) {
  Rng rng(9);
  const Model m = Model::create(SmallSpec(Topology::kDomainNet), 11);
  // Background stream classifies every sample as class 2 with a huge margin.
  m.stream(1).head_bias.mutable_values()[2] = 60.0f;
  const int labels[] = {2, 2, 2};
  GradTape tape;
  const LossBreakdown l = domain_loss(
      domainnet_forward(m, RandomTensor({3, 3, 8, 8}, rng), RandomTensor({3, 3, 8, 8}, rng)),
      labels);
  EXPECT_LT(l.l_background.item(), 1e-6f);
  EXPECT_LT(l.l_combined.item(), 1e-6f);
  EXPECT_GT(l.l_body.item(), 0.5f);
  tape.backward(l.total);
  double norm = 0;
  for (const Tensor& t : StreamTensors(m, 0)) {
    for (float g : t.grad()) norm += static_cast<double>(g) * g;
  }
  EXPECT_GT(norm, 1e-6);
}

TEST(BackboneGradientTest, TwoStageFiniteDifferences) {
  for (const testing::GradCase& c : testing::GradientCases(0, 5, 99)) {
    const GradCheckResult r = check_gradients(c.fn, c.inputs, c.options);
    EXPECT_TRUE(testing::Passes(r)) << c.name << ": rel " << r.rel_error;
  }
}

TEST(CheckpointTest, SaveLoadCloneRoundTrip) {
  testing::TempDir dir("nets");
  const ModelSpec spec = SmallSpec(Topology::kDomainNet, InputMode::kFramesFlows);
  const Model m = Model::create(spec, 12);
  m.save(dir.path() / "m.ckpt");
  const Model loaded = Model::load(dir.path() / "m.ckpt", spec);
  const auto a = m.named_parameters(), b = loaded.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(BitEqual(a[i].tensor, b[i].tensor));
  }
  EXPECT_THROW(Model::load(dir.path() / "m.ckpt", SmallSpec(Topology::kDomainNet)),
               CheckpointError);

  const Model copy = m.clone();
  copy.stream(0).stem.mutable_values()[0] += 1.0f;
  EXPECT_NE(copy.stream(0).stem.values()[0], m.stream(0).stem.values()[0]);
}

TEST(MakeInputTest, ChannelLayout) {
  Image a(4, 4), b(4, 4);
  a.at(1, 2, 0) = 0.25f;
  a.at(1, 2, 2) = 0.75f;
  b.at(3, 0, 1) = 0.5f;
  FlowField fa(4, 4), fb(4, 4);
  fa.u(1, 2) = 1.5f;
  fb.v(3, 0) = -2.0f;
  const Image* frames[] = {&a, &b};
  const FlowField* flows[] = {&fa, &fb};
  const Tensor x3 = make_input(frames, {}, InputMode::kFrames);
  EXPECT_EQ(x3.shape(), (Shape{2, 3, 4, 4}));
  EXPECT_EQ(x3.values()[0 * 16 + 1 * 4 + 2], 0.25f);
  EXPECT_EQ(x3.values()[2 * 16 + 1 * 4 + 2], 0.75f);
  EXPECT_EQ(x3.values()[48 + 1 * 16 + 3 * 4 + 0], 0.5f);
  const Tensor x5 = make_input(frames, flows, InputMode::kFramesFlows);
  EXPECT_EQ(x5.shape(), (Shape{2, 5, 4, 4}));
  EXPECT_EQ(x5.values()[3 * 16 + 1 * 4 + 2], 1.5f);
  EXPECT_EQ(x5.values()[80 + 4 * 16 + 3 * 4 + 0], -2.0f);
  EXPECT_THROW(make_input(frames, std::span<const FlowField* const>(flows, 1),
                          InputMode::kFramesFlows),
               std::invalid_argument);
}

}  // namespace
}  // namespace bodyscene::nets
