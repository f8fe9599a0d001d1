#pragma once

#include "iderase/nn.hpp"

namespace iderase {

// Face Revive Generator: a reduced U-Net with windowed-attention blocks.
//   encoder: two conv-downsample stages (R -> R/2 -> R/4), each followed by
//            one window-attention transformer block;
//   bottleneck: the perturbed identity embedding is projected through
//            w4 * relu(w3 * pert) and broadcast-added across the spatial map;
//   decoder: skip concat + 1x1 conv at the bottleneck, transposed-conv
//            upsamples with skip fusion, a final attention block at full
//            resolution, and a 3-channel output conv under tanh.
template <class T>
class Frg {
 public:
  struct Encoded {
    Var<T> bottleneck;  // (c2, R/4, R/4)
    Var<T> skip1;       // (c1, R/2, R/2)
    Var<T> skip2;       // (c2, R/4, R/4)
  };

  Frg() = default;

  Frg(std::int64_t d_f, std::int64_t resolution, std::int64_t c1, std::int64_t c2,
      std::int64_t window, std::int64_t d_hp, Rng& rng)
      : d_f_(d_f), r_(resolution), c1_(c1), c2_(c2), win_(window), d_hp_(d_hp) {
    check(r_ > 0 && r_ % 4 == 0, "frg: resolution must be a positive multiple of 4");
    check((r_ / 2) % win_ == 0 && (r_ / 4) % win_ == 0 && r_ % win_ == 0,
          "frg: window size must divide R, R/2 and R/4");
    check(c1_ % heads_for(c1_) == 0 && c2_ % heads_for(c2_) == 0,
          "frg: channel plan incompatible with head count");

    enc1_ = Conv2d<T>(ps_, "enc1.down", 3, c1_, 3, 2, 1, rng);
    blk1_ = WindowBlock<T>(ps_, "enc1.blk", c1_, heads_for(c1_), 2, rng);
    enc2_ = Conv2d<T>(ps_, "enc2.down", c1_, c2_, 3, 2, 1, rng);
    blk2_ = WindowBlock<T>(ps_, "enc2.blk", c2_, heads_for(c2_), 2, rng);

    fuse_w3_ = ps_.add("fuse.w3", init::fan_in_uniform<T>({d_hp_, d_f_}, d_f_, rng));
    fuse_w4_ = ps_.add("fuse.w4", init::fan_in_uniform<T>({c2_, d_hp_}, d_hp_, rng));

    dec0_ = Conv2d<T>(ps_, "dec0.mix", 2 * c2_, c2_, 1, 1, 0, rng);
    up1_ = ConvTranspose2d<T>(ps_, "dec1.up", c2_, c1_, 2, 2, 0, rng);
    dec1_ = Conv2d<T>(ps_, "dec1.mix", 2 * c1_, c1_, 1, 1, 0, rng);
    up2_ = ConvTranspose2d<T>(ps_, "dec2.up", c1_, c1_, 2, 2, 0, rng);
    blk3_ = WindowBlock<T>(ps_, "dec2.blk", c1_, heads_for(c1_), 2, rng);
    out_ = Conv2d<T>(ps_, "out.conv", c1_, 3, 3, 1, 1, rng);

    maps_half_ = make_window_maps(c1_, r_ / 2, r_ / 2, win_);
    maps_quarter_ = make_window_maps(c2_, r_ / 4, r_ / 4, win_);
    maps_full_ = make_window_maps(c1_, r_, r_, win_);
  }

  std::int64_t d_f() const { return d_f_; }
  std::int64_t resolution() const { return r_; }
  std::int64_t bottleneck_channels() const { return c2_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }

  Encoded encode(const Var<T>& image) const {
    check(image->val.ndim() == 3 && image->val.dim(0) == 3,
          "frg: input must be 3xRxR");
    check(image->val.dim(1) == r_ && image->val.dim(2) == r_,
          "frg: input resolution " + std::to_string(image->val.dim(1)) +
              " does not match configured " + std::to_string(r_));
    Encoded e;
    auto h1 = attend(relu(enc1_(image)), blk1_, maps_half_, r_ / 2, c1_);
    e.skip1 = h1;
    auto h2 = attend(relu(enc2_(h1)), blk2_, maps_quarter_, r_ / 4, c2_);
    e.skip2 = h2;
    e.bottleneck = h2;
    return e;
  }

  // b[c,h,w] + (w4 relu(w3 pert))[c], broadcast over space.
  Var<T> fuse_identity(const Var<T>& bottleneck, const Var<T>& pert) const {
    check(pert->val.numel() == d_f_,
          "frg: perturbed embedding dimension mismatch, expected " +
              std::to_string(d_f_));
    auto fp = linear(relu(linear(pert, fuse_w3_, Var<T>{})), fuse_w4_, Var<T>{});
    return broadcast_add_channels(bottleneck, fp);
  }

  Var<T> decode(const Var<T>& fused, const Encoded& e) const {
    check(fused->val.same_shape(e.skip2->val), "frg: bottleneck/skip shape mismatch");
    auto d0 = relu(dec0_(concat_channels(fused, e.skip2)));
    auto u1 = up1_(d0);
    auto d1 = relu(dec1_(concat_channels(u1, e.skip1)));
    auto u2 = up2_(d1);
    auto refined = attend(u2, blk3_, maps_full_, r_, c1_);
    return tanh_op(out_(refined));
  }

  // Full protected-image forward: decode(fuse(encode(I), pert)).
  Var<T> revive(const Var<T>& image, const Var<T>& pert) const {
    Encoded e = encode(image);
    return decode(fuse_identity(e.bottleneck, pert), e);
  }

  static std::int64_t heads_for(std::int64_t dim) {
    return std::max<std::int64_t>(1, dim / 16);
  }

 private:
  Var<T> attend(const Var<T>& chw, const WindowBlock<T>& blk, const WindowMaps& m,
                std::int64_t side, std::int64_t ch) const {
    auto tokens = reindex(chw, {m.n_windows * m.tokens_per_window, ch}, m.to_tokens);
    auto out = blk(tokens, m.n_windows, m.tokens_per_window);
    return reindex(out, {ch, side, side}, m.to_chw);
  }

  std::int64_t d_f_ = 0, r_ = 0, c1_ = 32, c2_ = 64, win_ = 4, d_hp_ = 0;
  ParamStore<T> ps_;
  Conv2d<T> enc1_, enc2_, dec0_, dec1_, out_;
  ConvTranspose2d<T> up1_, up2_;
  WindowBlock<T> blk1_, blk2_, blk3_;
  Var<T> fuse_w3_, fuse_w4_;
  WindowMaps maps_half_, maps_quarter_, maps_full_;
};

}  // namespace iderase
