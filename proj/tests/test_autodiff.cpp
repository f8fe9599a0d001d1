#include <gtest/gtest.h>

#include <cmath>

#include "grad_check.hpp"
#include "iderase/conv.hpp"
#include "iderase/nn.hpp"
#include "iderase/ops.hpp"

using namespace iderase;
using gradcheck::max_rel_err;

namespace {

constexpr double kTol = 1e-6;  // engine-level bar; well under the 1e-4 gate

Tensor<double> rnd(std::vector<std::int64_t> shape, Rng& rng, double lo = -1.0,
                   double hi = 1.0) {
  return Tensor<double>::uniform(std::move(shape), lo, hi, rng);
}

// Values pushed away from zero so kinked activations stay differentiable at
// every probe point.
Tensor<double> rnd_nokink(std::vector<std::int64_t> shape, Rng& rng) {
  Tensor<double> t = rnd(std::move(shape), rng);
  for (auto& x : t.v)
    if (std::abs(x) < 0.05) x += x >= 0 ? 0.1 : -0.1;
  return t;
}

}  // namespace

TEST(Autodiff, PointwiseChain) {
  Rng rng(derive_rng(7, "pw"));
  auto f = [](const std::vector<Var<double>>& v) {
    auto a = add(v[0], v[1]);
    auto b = sub(mul(a, v[2]), v[0]);
    auto c = axpy(b, v[1], 0.37);
    return mean_all(mul_scalar(c, -1.25));
  };
  EXPECT_LT(max_rel_err(f, {rnd({3, 4}, rng), rnd({3, 4}, rng), rnd({3, 4}, rng)}),
            kTol);
}

TEST(Autodiff, ReluLeakyRelu) {
  Rng rng(derive_rng(7, "relu"));
  auto f = [](const std::vector<Var<double>>& v) {
    return sum_all(add(relu(v[0]), leaky_relu(v[0], 0.2)));
  };
  EXPECT_LT(max_rel_err(f, {rnd_nokink({4, 5}, rng)}), kTol);
}

TEST(Autodiff, TanhGelu) {
  Rng rng(derive_rng(7, "smooth"));
  auto f = [](const std::vector<Var<double>>& v) {
    return mean_all(add(tanh_op(v[0]), gelu(v[0])));
  };
  EXPECT_LT(max_rel_err(f, {rnd({3, 7}, rng, -2.0, 2.0)}), kTol);
}

TEST(Autodiff, Reductions) {
  Rng rng(derive_rng(7, "red"));
  auto f = [](const std::vector<Var<double>>& v) {
    auto s = weighted_sum<double>({sum_all(v[0]), mean_all(v[1]), mse(v[0], v[1])},
                                  {0.3, -0.7, 1.9});
    return s;
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 5}, rng), rnd({2, 5}, rng)}), kTol);
}

TEST(Autodiff, CosineAndNormalize) {
  Rng rng(derive_rng(7, "cos"));
  auto f = [](const std::vector<Var<double>>& v) {
    auto c = cosine(v[0], v[1]);
    auto n = l2_normalize(v[0]);
    return add(c, mean_all(mul(n, v[1])));
  };
  EXPECT_LT(max_rel_err(f, {rnd({6}, rng, 0.3, 1.2), rnd({6}, rng, -1.2, -0.3)}),
            kTol);
}

TEST(Autodiff, CosineRejectsZeroNorm) {
  auto a = make_leaf<double>(Tensor<double>::zeros({4}));
  auto b = make_leaf<double>(Tensor<double>::full({4}, 1.0));
  EXPECT_THROW(cosine(a, b), ValidationError);
  EXPECT_THROW(l2_normalize(a), ValidationError);
}

TEST(Autodiff, StructuralOps) {
  Rng rng(derive_rng(7, "struct"));
  // reversal permutation
  auto map = std::make_shared<std::vector<std::int32_t>>();
  for (int i = 23; i >= 0; --i) map->push_back(static_cast<std::int32_t>(i));
  auto mp = std::shared_ptr<const std::vector<std::int32_t>>(map);
  auto f = [mp](const std::vector<Var<double>>& v) {
    auto r = reindex(v[0], {24}, mp);
    auto rs = reshape(r, {2, 3, 4});
    auto cat = concat_channels(rs, v[1]);
    auto ba = broadcast_add_channels(cat, v[2]);
    return sum_all(mul(global_avg_pool(ba), v[3]));
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 3, 4}, rng), rnd({1, 3, 4}, rng),
                            rnd({3}, rng), rnd({3}, rng)}),
            kTol);
}

TEST(Autodiff, Linear) {
  Rng rng(derive_rng(7, "lin"));
  auto f = [](const std::vector<Var<double>>& v) {
    auto y = linear(v[0], v[1], v[2]);
    auto z = linear(y, v[3], Var<double>{});  // no bias
    return mean_all(z);
  };
  EXPECT_LT(max_rel_err(f, {rnd({3, 4}, rng), rnd({5, 4}, rng), rnd({5}, rng),
                            rnd({2, 5}, rng)}),
            kTol);
}

TEST(Autodiff, BatchedMatmul) {
  Rng rng(derive_rng(7, "bmm"));
  auto f = [](const std::vector<Var<double>>& v) {
    auto nn = bmm(v[0], v[1]);                      // [2,3,4]x[2,4,5]
    auto nt = bmm(nn, v[2], /*transpose_b=*/true);  // [2,3,5]x[2,6,5]
    return mean_all(nt);
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 3, 4}, rng), rnd({2, 4, 5}, rng),
                            rnd({2, 6, 5}, rng)}),
            kTol);
}

TEST(Autodiff, SoftmaxRows) {
  Rng rng(derive_rng(7, "sm"));
  auto f = [](const std::vector<Var<double>>& v) {
    return mean_all(mul(softmax_rows(v[0]), v[1]));
  };
  EXPECT_LT(max_rel_err(f, {rnd({4, 6}, rng, -3.0, 3.0), rnd({4, 6}, rng)}), kTol);
}

TEST(Autodiff, LayerNorm) {
  Rng rng(derive_rng(7, "ln"));
  auto f = [](const std::vector<Var<double>>& v) {
    return mean_all(mul(layer_norm(v[0], v[1], v[2]), v[3]));
  };
  EXPECT_LT(max_rel_err(f, {rnd({5, 8}, rng), rnd({8}, rng, 0.5, 1.5),
                            rnd({8}, rng), rnd({5, 8}, rng)}),
            kTol);
}

TEST(Autodiff, SoftmaxCrossEntropy) {
  Rng rng(derive_rng(7, "ce"));
  auto f = [](const std::vector<Var<double>>& v) {
    return softmax_cross_entropy(v[0], 2);
  };
  EXPECT_LT(max_rel_err(f, {rnd({7}, rng, -2.0, 2.0)}), kTol);
  auto bad = make_leaf<double>(Tensor<double>::zeros({3}));
  EXPECT_THROW(softmax_cross_entropy(bad, 3), ValidationError);
}

TEST(Autodiff, Conv2dStride1) {
  Rng rng(derive_rng(7, "c1"));
  auto f = [](const std::vector<Var<double>>& v) {
    return mean_all(conv2d(v[0], v[1], v[2], 1, 1));
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 5, 5}, rng), rnd({3, 2, 3, 3}, rng),
                            rnd({3}, rng)}),
            kTol);
}

TEST(Autodiff, Conv2dStride2NoBias) {
  Rng rng(derive_rng(7, "c2"));
  auto f = [](const std::vector<Var<double>>& v) {
    return mean_all(conv2d(v[0], v[1], Var<double>{}, 2, 1));
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 6, 6}, rng), rnd({4, 2, 3, 3}, rng)}), kTol);
}

TEST(Autodiff, ConvTranspose2x2Stride2) {
  Rng rng(derive_rng(7, "t1"));
  auto f = [](const std::vector<Var<double>>& v) {
    return mean_all(conv_transpose2d(v[0], v[1], v[2], 2, 0));
  };
  EXPECT_LT(max_rel_err(f, {rnd({3, 4, 4}, rng), rnd({3, 2, 2, 2}, rng),
                            rnd({2}, rng)}),
            kTol);
}

TEST(Autodiff, ConvTranspose3x3Stride1Pad1) {
  Rng rng(derive_rng(7, "t2"));
  auto f = [](const std::vector<Var<double>>& v) {
    return mean_all(conv_transpose2d(v[0], v[1], Var<double>{}, 1, 1));
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 5, 5}, rng), rnd({2, 3, 3, 3}, rng)}), kTol);
}

TEST(Autodiff, SeparableBlur) {
  Rng rng(derive_rng(7, "blur"));
  auto kern = std::make_shared<const std::vector<double>>(gaussian_kernel_1d(5, 1.1));
  auto f = [kern](const std::vector<Var<double>>& v) {
    return mean_all(mul(separable_blur(v[0], kern), v[1]));
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 6, 6}, rng), rnd({2, 6, 6}, rng)}), kTol);
}

TEST(Autodiff, WarpBilinear) {
  Rng rng(derive_rng(7, "warp"));
  auto plan = std::make_shared<WarpPlan>();
  plan->src_h = 5;
  plan->src_w = 5;
  plan->out_h = 4;
  plan->out_w = 4;
  // Rotation-ish sampling pattern with out-of-bounds positions to exercise
  // the symmetric fold.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      plan->add(0.9 * y + 0.3 * x - 0.7, -0.25 * y + 1.1 * x + 0.4);
  auto pc = std::shared_ptr<const WarpPlan>(plan);
  auto f = [pc](const std::vector<Var<double>>& v) {
    return mean_all(mul(warp_bilinear(v[0], pc), v[1]));
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 5, 5}, rng), rnd({2, 4, 4}, rng)}), kTol);
}

// Same wiring a transformer window block uses: relayouts, batched attention,
// pre-norm residuals.
TEST(Autodiff, AttentionComposition) {
  Rng rng(derive_rng(7, "attn"));
  const std::int64_t C = 6, H = 4, W = 4, win = 2, heads = 2, dh = C / heads;
  auto wm = make_window_maps(C, H, W, win);
  const std::int64_t nw = wm.n_windows, tpw = wm.tokens_per_window;

  auto split = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(nw * tpw * C));
  auto merge = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(nw * tpw * C));
  for (std::int64_t wi = 0; wi < nw; ++wi)
    for (std::int64_t hd = 0; hd < heads; ++hd)
      for (std::int64_t t = 0; t < tpw; ++t)
        for (std::int64_t d = 0; d < dh; ++d) {
          std::int64_t src = (wi * tpw + t) * C + hd * dh + d;
          std::int64_t dst = ((wi * heads + hd) * tpw + t) * dh + d;
          (*split)[static_cast<std::size_t>(dst)] = static_cast<std::int32_t>(src);
          (*merge)[static_cast<std::size_t>(src)] = static_cast<std::int32_t>(dst);
        }
  auto sp = std::shared_ptr<const std::vector<std::int32_t>>(split);
  auto mg = std::shared_ptr<const std::vector<std::int32_t>>(merge);

  auto f = [&, sp, mg](const std::vector<Var<double>>& v) {
    auto tokens = reindex(v[0], {nw * tpw, C}, wm.to_tokens);
    auto normed = layer_norm(tokens, v[1], v[2]);
    auto q = reindex(linear(normed, v[3], Var<double>{}), {nw * heads, tpw, dh}, sp);
    auto k = reindex(linear(normed, v[4], Var<double>{}), {nw * heads, tpw, dh}, sp);
    auto vv = reindex(linear(normed, v[5], Var<double>{}), {nw * heads, tpw, dh}, sp);
    auto att = softmax_rows(
        mul_scalar(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh))));
    auto ctx = reindex(bmm(att, vv), {nw * tpw, C}, mg);
    auto out = add(tokens, linear(ctx, v[6], Var<double>{}));
    auto back = reindex(out, {C, H, W}, wm.to_chw);
    return mean_all(mul(back, v[7]));
  };
  EXPECT_LT(max_rel_err(f,
                        {rnd({C, H, W}, rng), rnd({C}, rng, 0.5, 1.5),
                         rnd({C}, rng), rnd({C, C}, rng), rnd({C, C}, rng),
                         rnd({C, C}, rng), rnd({C, C}, rng), rnd({C, H, W}, rng)},
                        1e-5),
            kTol);
}

// conv -> activation -> pool -> similarity: the same composite pattern the
// training losses run through.
TEST(Autodiff, CompositeNetworkChain) {
  Rng rng(derive_rng(7, "net"));
  auto f = [](const std::vector<Var<double>>& v) {
    auto h1 = tanh_op(conv2d(v[0], v[1], v[2], 2, 1));
    auto h2 = gelu(conv_transpose2d(h1, v[3], Var<double>{}, 2, 0));
    auto emb = global_avg_pool(h2);
    auto sim = cosine(emb, v[4]);
    return weighted_sum<double>({sim, mse(h2, v[5])}, {0.6, 0.4});
  };
  EXPECT_LT(max_rel_err(f, {rnd({2, 6, 6}, rng), rnd({3, 2, 3, 3}, rng),
                            rnd({3}, rng), rnd({3, 2, 2, 2}, rng),
                            rnd({2}, rng, 0.2, 1.0), rnd({2, 6, 6}, rng)}),
            kTol);
}

TEST(Autodiff, DiamondReuseAccumulates) {
  auto x = make_leaf<double>(Tensor<double>({3}, {1.0, -2.0, 0.5}), true);
  auto y = mul(x, x);
  auto r = sum_all(add(y, y));  // d/dx sum(2x^2) = 4x
  backward(r);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x->grad.v[i], 4.0 * x->val.v[i], 1e-12);
}

TEST(Autodiff, DetachStopsGradient) {
  auto x = make_leaf<double>(Tensor<double>({2}, {3.0, -1.0}), true);
  auto r = sum_all(mul(detach(x), x));  // treats first factor as constant
  backward(r);
  EXPECT_NEAR(x->grad.v[0], 3.0, 1e-12);
  EXPECT_NEAR(x->grad.v[1], -1.0, 1e-12);
}

TEST(Autodiff, FrozenParamsRecordNothing) {
  Rng rng(derive_rng(7, "frozen"));
  ParamStore<double> ps;
  Linear<double> lin(ps, "lin", 4, 3, rng);
  ps.freeze();
  auto x = make_leaf<double>(rnd({2, 4}, rng), true);
  auto r = mean_all(lin(x));
  backward(r);
  EXPECT_TRUE(lin.w->grad.v.empty());
  EXPECT_GT(l2_norm(x->grad), 0.0);

  // fully frozen graph: no closures at all
  auto x2 = make_leaf<double>(rnd({2, 4}, rng), false);
  auto r2 = mean_all(lin(x2));
  EXPECT_FALSE(r2->needs_grad);
  EXPECT_TRUE(r2->parents.empty());
}

TEST(Autodiff, BackwardRejectsNonScalarRoot) {
  auto x = make_leaf<double>(Tensor<double>({2}, {1.0, 2.0}), true);
  auto y = mul(x, x);
  EXPECT_THROW(backward(y), ValidationError);
}

TEST(Autodiff, ParamStoreRejectsDuplicates) {
  Rng rng(derive_rng(7, "ps"));
  ParamStore<double> ps;
  ps.add("a", Tensor<double>::zeros({2}));
  EXPECT_THROW(ps.add("a", Tensor<double>::zeros({2})), ValidationError);
  EXPECT_THROW(ps.find("missing"), ValidationError);
  EXPECT_EQ(ps.total_numel(), 2);
}
