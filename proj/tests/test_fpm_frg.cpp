#include <gtest/gtest.h>

#include <cmath>

#include "grad_check.hpp"
#include "iderase/fpm.hpp"
#include "iderase/frg.hpp"
#include "iderase/ops.hpp"

using namespace iderase;

namespace {

// Tiny generator config shared by the structural tests: every attention
// stage side (R/2=4, R/4=2, R=8) is divisible by the window.
constexpr std::int64_t kR = 8, kDf = 4, kC1 = 4, kC2 = 8, kWin = 2, kDhp = 4;

Frg<double> tiny_frg(std::uint64_t seed) {
  Rng rng = derive_rng(seed, "test-frg");
  return Frg<double>(kDf, kR, kC1, kC2, kWin, kDhp, rng);
}

void set_param(ParamStore<double>& ps, const std::string& name,
               Tensor<double> t) {
  auto v = ps.find(name);
  ASSERT_TRUE(v) << "missing parameter " << name;
  ASSERT_EQ(v->val.shape, t.shape) << name;
  v->val = std::move(t);
}

}  // namespace

TEST(Fpm, HandComputedDelta) {
  // d_f=2, d_h=1, w1=[[1,0]], w2=[[2],[0]], zero biases:
  //   h = relu(src[0]); delta = (tanh(2 h), 0).
  Rng rng(1);
  Fpm<double> fpm(2, 1, rng);
  set_param(fpm.params(), "fpm.w1", Tensor<double>({1, 2}, {1, 0}));
  set_param(fpm.params(), "fpm.b1", Tensor<double>({1}, {0}));
  set_param(fpm.params(), "fpm.w2", Tensor<double>({2, 1}, {2, 0}));
  set_param(fpm.params(), "fpm.b2", Tensor<double>({2}, {0, 0}));

  auto src = make_leaf<double>(Tensor<double>({2}, {1, 0}));
  auto d = fpm.delta(src);
  EXPECT_NEAR(d->val.v[0], std::tanh(2.0), 1e-12);
  EXPECT_NEAR(d->val.v[1], 0.0, 1e-12);

  auto p = fpm.perturb(src, 0.1);
  EXPECT_NEAR(p->val.v[0], 1.0 + 0.1 * std::tanh(2.0), 1e-12);
  EXPECT_NEAR(p->val.v[1], 0.0, 1e-12);

  // negative pre-activation: relu gates the hidden unit off -> delta = tanh(b2)
  auto neg = make_leaf<double>(Tensor<double>({2}, {-1, 0}));
  auto dn = fpm.delta(neg);
  EXPECT_NEAR(dn->val.v[0], 0.0, 1e-12);
  EXPECT_NEAR(dn->val.v[1], 0.0, 1e-12);
}

TEST(Fpm, PerturbationBoundedByAlpha) {
  // |pert - src|_inf = alpha |tanh(.)|_inf <= alpha for any weights/input.
  Rng rng(7);
  Fpm<double> fpm(16, 32, rng);
  // exaggerate the weights so tanh saturates; the bound must still hold
  for (const auto& [name, v] : fpm.params().items())
    for (auto& x : v->val.v) x *= 50.0;

  for (int trial = 0; trial < 50; ++trial) {
    auto src =
        make_leaf<double>(Tensor<double>::normal({16}, 0.0, 1.0, rng));
    for (double alpha : {0.05, 0.1, 0.25, 0.5}) {
      auto p = fpm.perturb(src, alpha);
      double linf = 0;
      for (std::int64_t i = 0; i < 16; ++i)
        linf = std::max(linf, std::abs(p->val.v[i] - src->val.v[i]));
      EXPECT_LE(linf, alpha + 1e-12);
    }
  }
}

TEST(Fpm, NearIdentityAtInit) {
  // Fresh weights are small and biases zero, so the initial perturbation is
  // tiny: protection starts from an almost unmodified embedding.
  Rng rng(3);
  Fpm<double> fpm(32, 64, rng);
  auto src = make_leaf<double>(Tensor<double>::normal({32}, 0.0, 1.0, rng));
  auto p = fpm.perturb(src, 0.05);
  double moved = 0;
  for (std::int64_t i = 0; i < 32; ++i) {
    double d = p->val.v[i] - src->val.v[i];
    moved += d * d;
  }
  EXPECT_LT(std::sqrt(moved) / l2_norm(src->val), 0.05);
}

TEST(Fpm, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  Fpm<double> fpm(6, 5, rng);
  // keep activations away from relu kinks for clean numeric probes
  auto src = Tensor<double>::normal({6}, 0.0, 1.0, rng);

  auto build = [&] { return sum_all(fpm.perturb(make_leaf<double>(src), 0.25)); };
  EXPECT_LT(gradcheck::param_max_rel_err(build, {&fpm.params()}), 1e-4);
}

TEST(Frg, FuseAddsPerChannelConstant) {
  auto frg = tiny_frg(5);
  // w3 = identity, w4 row0 = (1,0,0,0), row1 = (0,-0.5,0,0), rest zero:
  // fused[c] = bottleneck[c] + {0.5, -0.25, 0, ...}[c] for pert=(0.5,0.5,..).
  Tensor<double> w3 = Tensor<double>::zeros({kDhp, kDf});
  for (std::int64_t i = 0; i < kDf; ++i) w3.v[i * kDf + i] = 1.0;
  Tensor<double> w4 = Tensor<double>::zeros({kC2, kDhp});
  w4.v[0 * kDhp + 0] = 1.0;
  w4.v[1 * kDhp + 1] = -0.5;
  set_param(frg.params(), "fuse.w3", std::move(w3));
  set_param(frg.params(), "fuse.w4", std::move(w4));

  Rng rng(9);
  auto bottleneck = make_leaf<double>(
      Tensor<double>::uniform({kC2, kR / 4, kR / 4}, -1, 1, rng));
  auto pert = make_leaf<double>(Tensor<double>::full({kDf}, 0.5));
  auto fused = frg.fuse_identity(bottleneck, pert);

  ASSERT_EQ(fused->val.shape, bottleneck->val.shape);
  const std::int64_t hw = (kR / 4) * (kR / 4);
  for (std::int64_t c = 0; c < kC2; ++c) {
    double expect_add = c == 0 ? 0.5 : (c == 1 ? -0.25 : 0.0);
    for (std::int64_t i = 0; i < hw; ++i)
      EXPECT_NEAR(fused->val.v[c * hw + i], bottleneck->val.v[c * hw + i] + expect_add,
                  1e-12)
          << "channel " << c;
  }
}

TEST(Frg, FuseGatesNegativeThroughRelu) {
  auto frg = tiny_frg(6);
  Tensor<double> w3 = Tensor<double>::zeros({kDhp, kDf});
  for (std::int64_t i = 0; i < kDf; ++i) w3.v[i * kDf + i] = 1.0;
  Tensor<double> w4 = Tensor<double>::zeros({kC2, kDhp});
  w4.v[0] = 1.0;
  set_param(frg.params(), "fuse.w3", std::move(w3));
  set_param(frg.params(), "fuse.w4", std::move(w4));

  auto bottleneck =
      make_leaf<double>(Tensor<double>::zeros({kC2, kR / 4, kR / 4}));
  // negative embedding component is cut by the relu between w3 and w4
  auto pert = make_leaf<double>(Tensor<double>({kDf}, {-2.0, 0, 0, 0}));
  auto fused = frg.fuse_identity(bottleneck, pert);
  for (auto x : fused->val.v) EXPECT_EQ(x, 0.0);
}

TEST(Frg, ReviveShapeAndRange) {
  auto frg = tiny_frg(7);
  Rng rng(13);
  auto img = make_leaf<double>(Tensor<double>::uniform({3, kR, kR}, -1, 1, rng));
  auto pert = make_leaf<double>(Tensor<double>::normal({kDf}, 0.0, 1.0, rng));
  auto out = frg.revive(img, pert);
  ASSERT_EQ(out->val.shape, (std::vector<std::int64_t>{3, kR, kR}));
  for (auto x : out->val.v) {
    EXPECT_GT(x, -1.0);
    EXPECT_LT(x, 1.0);  // tanh keeps the output strictly inside the range
  }
  EXPECT_TRUE(out->val.all_finite());
}

TEST(Frg, OutputDependsOnEmbedding) {
  auto frg = tiny_frg(8);
  Rng rng(17);
  // push the fuse weights up so the identity branch visibly moves pixels
  frg.params().find("fuse.w4")->val =
      Tensor<double>::uniform({kC2, kDhp}, -1.0, 1.0, rng);
  auto img = make_leaf<double>(Tensor<double>::uniform({3, kR, kR}, -1, 1, rng));
  auto p1 = make_leaf<double>(Tensor<double>::full({kDf}, 1.0));
  auto p2 = make_leaf<double>(Tensor<double>::full({kDf}, -1.0));
  auto o1 = frg.revive(img, p1);
  auto o2 = frg.revive(img, p2);
  double diff = 0;
  for (std::int64_t i = 0; i < o1->val.numel(); ++i)
    diff = std::max(diff, std::abs(o1->val.v[i] - o2->val.v[i]));
  EXPECT_GT(diff, 1e-6) << "identity embedding must influence the output";
}

TEST(Frg, RejectsBadInputs) {
  auto frg = tiny_frg(9);
  Rng rng(19);
  auto wrong_res =
      make_leaf<double>(Tensor<double>::zeros({3, kR * 2, kR * 2}));
  auto pert = make_leaf<double>(Tensor<double>::zeros({kDf}));
  EXPECT_THROW(frg.revive(wrong_res, pert), ValidationError);
  auto img = make_leaf<double>(Tensor<double>::zeros({3, kR, kR}));
  auto wrong_pert = make_leaf<double>(Tensor<double>::zeros({kDf + 1}));
  EXPECT_THROW(frg.revive(img, wrong_pert), ValidationError);
}

TEST(Frg, GradientsMatchFiniteDifferences) {
  // Whole revive pass at the miniature configuration, probing a strided
  // subset of every parameter tensor (the acceptance gate runs the full
  // composite check).
  auto frg = tiny_frg(10);
  Rng rng(23);
  auto img = Tensor<double>::uniform({3, kR, kR}, -0.9, 0.9, rng);
  auto pert = Tensor<double>::normal({kDf}, 0.0, 0.5, rng);

  auto build = [&] {
    return mean_all(
        frg.revive(make_leaf<double>(img), make_leaf<double>(pert)));
  };
  EXPECT_LT(gradcheck::param_max_rel_err(build, {&frg.params()}, 1e-5, 24),
            1e-4);
}
