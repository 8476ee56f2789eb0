#include <gtest/gtest.h>

#include <random>

#include "proxavg/transforms.hpp"
#include "test_support.hpp"

using namespace proxavg;
using testing_support::central_differences;
using testing_support::random_tensor;
using testing_support::rel_error;

namespace {

constexpr std::size_t kNf = 4;

std::vector<PenaltySpec> three_penalties() {
  return {PenaltySpec::l1(0.05), PenaltySpec::mcp(0.08, 2.5), PenaltySpec::scad(0.06, 3.7)};
}

}  // namespace

TEST(ForwardF, ZeroInputGivesZero) {
  std::mt19937_64 rng(1);
  const auto t = AnalysisTransform::random(kNf, rng);
  EXPECT_TRUE(testing_support::all_zero(forward_F(t, Tensor({1, 6, 6}))));
  const auto s = SynthesisTransform::random(kNf, rng);
  EXPECT_TRUE(testing_support::all_zero(forward_Ftilde(s, Tensor({kNf, 6, 6}))));
}

TEST(ForwardF, IdentityKernelsReplicateNonnegativeInput) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({1, 5, 5}, rng, 0.0, 1.0);
  const Tensor fx = forward_F(AnalysisTransform::identity(kNf), x);
  ASSERT_EQ(fx.shape(), (Shape{kNf, 5, 5}));
  for (std::size_t c = 0; c < kNf; ++c)
    for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(fx[c * 25 + i], x[i]);
  const Tensor back = forward_Ftilde(SynthesisTransform::identity(kNf), fx);
  EXPECT_LE(testing_support::max_abs_diff(back, x), 1e-15);
}

TEST(ForwardF, ShapeMismatchThrows) {
  std::mt19937_64 rng(3);
  const auto t = AnalysisTransform::random(kNf, rng);
  EXPECT_THROW(forward_F(t, Tensor({2, 4, 4})), std::invalid_argument);
}

TEST(BackwardF, MatchesCentralDifferences) {
  std::mt19937_64 rng(4);
  auto t = AnalysisTransform::random(kNf, rng);
  Tensor x = random_tensor({1, 6, 6}, rng);
  const Tensor up = random_tensor({kNf, 6, 6}, rng);
  ConvPairTape tape;
  forward_F(t, x, &tape);
  const AnalysisGrad g = backward_F(t, tape, up);
  auto f = [&] { return dot(forward_F(t, x), up); };
  EXPECT_LT(rel_error(g.A.data(), central_differences(t.A.weights.data(), f)), 1e-5);
  EXPECT_LT(rel_error(g.B.data(), central_differences(t.B.weights.data(), f)), 1e-5);
  EXPECT_LT(rel_error(g.input.data(), central_differences(x.data(), f)), 1e-5);
}

TEST(BackwardFtilde, MatchesCentralDifferences) {
  std::mt19937_64 rng(5);
  auto t = SynthesisTransform::random(kNf, rng);
  Tensor z = random_tensor({kNf, 5, 7}, rng);
  const Tensor up = random_tensor({1, 5, 7}, rng);
  ConvPairTape tape;
  forward_Ftilde(t, z, &tape);
  const SynthesisGrad g = backward_Ftilde(t, tape, up);
  auto f = [&] { return dot(forward_Ftilde(t, z), up); };
  EXPECT_LT(rel_error(g.Bt.data(), central_differences(t.Bt.weights.data(), f)), 1e-5);
  EXPECT_LT(rel_error(g.At.data(), central_differences(t.At.weights.data(), f)), 1e-5);
  EXPECT_LT(rel_error(g.input.data(), central_differences(z.data(), f)), 1e-5);
}

TEST(BackwardF, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(6);
  const auto t = AnalysisTransform::random(kNf, rng);
  ConvPairTape tape;
  forward_F(t, random_tensor({1, 4, 4}, rng), &tape);
  const AnalysisGrad g = backward_F(t, tape, Tensor({kNf, 4, 4}));
  EXPECT_TRUE(testing_support::all_zero(g.A));
  EXPECT_TRUE(testing_support::all_zero(g.B));
}

TEST(BackwardF, RejectsMissingOrForeignTape) {
  std::mt19937_64 rng(7);
  const auto t = AnalysisTransform::random(kNf, rng);
  const auto other = AnalysisTransform::random(kNf, rng);
  ConvPairTape empty;
  EXPECT_THROW(backward_F(t, empty, Tensor({kNf, 4, 4})), std::logic_error);
  ConvPairTape tape;
  forward_F(other, random_tensor({1, 4, 4}, rng), &tape);
  EXPECT_THROW(backward_F(t, tape, Tensor({kNf, 4, 4})), std::logic_error);
}

TEST(BackwardF, HalfSquaredNormChainRule) {
  // d/dx 1/2 ||F(x)||^2 = J_F^T F(x), with J_F^T composed by hand from the
  // adjoint primitives.
  std::mt19937_64 rng(8);
  const auto t = AnalysisTransform::random(kNf, rng);
  const Tensor x = random_tensor({1, 6, 6}, rng);
  ConvPairTape tape;
  const Tensor fx = forward_F(t, x, &tape);
  const AnalysisGrad g = backward_F(t, tape, fx);
  const Tensor pre = conv2d(x, t.A);
  Tensor h = conv2d_transpose(fx, t.B);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] *= pre[i] > 0.0 ? 1.0 : 0.0;
  const Tensor manual = conv2d_transpose(h, t.A);
  EXPECT_LT(rel_error(g.input, manual), 1e-14);
}

TEST(ForwardPlus, ZeroGIsIdentityResidual) {
  std::mt19937_64 rng(9);
  auto t = PlusTransform::random(kNf, rng);
  t.G = FilterBank::zeros(1, kNf, BankRole::kResidualG);
  const Tensor r = random_tensor({1, 6, 6}, rng);
  const auto specs = three_penalties();
  EXPECT_EQ(forward_plus(t, r, [&](const Tensor& u) {
              return prox_average(specs, MixtureWeights::uniform(3), u);
            }), r);
}

TEST(ForwardPlus, IdentityComponentsDoubleNonnegativeInput) {
  std::mt19937_64 rng(10);
  const Tensor r = random_tensor({1, 5, 5}, rng, 0.0, 1.0);
  const Tensor out = forward_plus(PlusTransform::identity(kNf), r, [](const Tensor& u) { return u; });
  EXPECT_LE(testing_support::max_abs_diff(out, 2.0 * r), 1e-15);
}

TEST(BackwardPlus, MatchesCentralDifferencesOn8x8) {
  std::mt19937_64 rng(11);
  auto t = PlusTransform::random(kNf, rng);
  Tensor r = random_tensor({1, 8, 8}, rng);
  const Tensor up = random_tensor({1, 8, 8}, rng);
  const auto specs = three_penalties();
  const auto w = MixtureWeights::uniform(3);
  auto shrink = [&](const Tensor& u) { return prox_average(specs, w, u); };
  PlusTape tape;
  forward_plus(t, r, shrink, &tape);
  const PlusGrad g = backward_plus(t, tape, up, [&](const Tensor& u, const Tensor& gz) {
    return prox_average_backward(specs, w, u, gz).input;
  });
  auto f = [&] { return dot(forward_plus(t, r, shrink), up); };
  const std::pair<FilterBank*, const Tensor*> groups[] = {
      {&t.D, &g.D}, {&t.H1, &g.H1}, {&t.H2, &g.H2}, {&t.Ht1, &g.Ht1}, {&t.Ht2, &g.Ht2}, {&t.G, &g.G}};
  for (const auto& [bank, grad] : groups) {
    EXPECT_LT(rel_error(grad->data(), central_differences(bank->weights.data(), f)), 1e-5);
  }
  EXPECT_LT(rel_error(g.input.data(), central_differences(r.data(), f)), 1e-5);
}

TEST(BackwardPlus, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(12);
  const auto t = PlusTransform::random(kNf, rng);
  PlusTape tape;
  auto id = [](const Tensor& u) { return u; };
  forward_plus(t, random_tensor({1, 5, 5}, rng), id, &tape);
  const PlusGrad g = backward_plus(t, tape, Tensor({1, 5, 5}),
                                   [](const Tensor&, const Tensor& gz) { return gz; });
  for (const Tensor* x : {&g.D, &g.H1, &g.H2, &g.Ht1, &g.Ht2, &g.G}) {
    for (double v : x->data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(ForwardF, Deterministic) {
  std::mt19937_64 rng(13);
  const auto t = AnalysisTransform::random(kNf, rng);
  const Tensor x = random_tensor({1, 7, 7}, rng);
  EXPECT_EQ(forward_F(t, x), forward_F(t, x));
}

TEST(Transforms, SoftInvertibilityAfterFittingTheMirror) {
  // Fit F~ to invert a fixed F by gradient descent on ||F~(F(x)) - x||^2 over
  // a probe set, then check relative reconstruction error on held-out probes.
  std::mt19937_64 rng(14);
  const std::size_t nf = 2;
  const auto f = AnalysisTransform::identity(nf);
  auto s = SynthesisTransform::random(nf, rng);
  std::vector<Tensor> probes, held_out;
  for (int i = 0; i < 6; ++i) probes.push_back(random_tensor({1, 6, 6}, rng, 0.0, 1.0));
  for (int i = 0; i < 4; ++i) held_out.push_back(random_tensor({1, 6, 6}, rng, 0.0, 1.0));
  // Start near the exact inverse so plain gradient descent converges.
  s.Bt = FilterBank::identity(nf, nf, BankRole::kSynthesisB, 1.1);
  s.At = FilterBank::identity(1, nf, BankRole::kSynthesisA, 0.4);
  double term = 0.0;
  for (int it = 0; it < 4000; ++it) {
    term = 0.0;
    Tensor gBt = Tensor::zeros_like(s.Bt.weights), gAt = Tensor::zeros_like(s.At.weights);
    for (const Tensor& x : probes) {
      ConvPairTape tape;
      const Tensor e = forward_Ftilde(s, forward_F(f, x), &tape) - x;
      term += squared_norm(e) / static_cast<double>(x.size() * probes.size());
      const SynthesisGrad g = backward_Ftilde(s, tape, e * (2.0 / static_cast<double>(x.size() * probes.size())));
      gBt += g.Bt;
      gAt += g.At;
    }
    s.Bt.weights -= 0.05 * gBt;
    s.At.weights -= 0.05 * gAt;
  }
  ASSERT_LT(term, 1e-6);
  for (const Tensor& x : held_out) {
    const Tensor e = forward_Ftilde(s, forward_F(f, x)) - x;
    EXPECT_LT(std::sqrt(squared_norm(e) / squared_norm(x)), 1e-2);
  }
}
