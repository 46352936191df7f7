// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Multi-head self-attention and a compact conformer block: half feed-forward,
// self-attention, convolution module (pointwise GLU + depthwise + pointwise),
// second half feed-forward, all pre-normalized with a final layer norm.

#include "tokentts/nn.hpp"

namespace tts {

constexpr float kMaskNegInf = -1e30f;

struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  int heads = 1;
  int head_dim = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(int width, int heads, Rng& rng)
      : q_proj(width, width, rng),
        k_proj(width, width, rng),
        v_proj(width, width, rng),
        out_proj(width, width, rng),
        heads(heads),
        head_dim(width / heads) {
    check(width % heads == 0, "attention: width must divide into heads");
  }

  // mask_bias: optional [L*L] additive bias (0 where attendable, -1e30 where
  // not); empty = fully bidirectional
  Tensor forward(const Tensor& x, const std::vector<float>& mask_bias) const {
    const int L = x.rows();
    if (!mask_bias.empty())
      check(mask_bias.size() == static_cast<size_t>(L) * L, "attention: mask size mismatch");
    Tensor q = q_proj.forward(x);
    Tensor k = k_proj.forward(x);
    Tensor v = v_proj.forward(x);
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));
    std::vector<Tensor> ctx_t;
    for (int h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * head_dim, head_dim);
      Tensor kh = slice_cols(k, h * head_dim, head_dim);
      Tensor vh = slice_cols(v, h * head_dim, head_dim);
      Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
      if (!mask_bias.empty()) scores = add_const(scores, mask_bias);
      ctx_t.push_back(transpose(matmul(softmax_rows(scores), vh)));
    }
    Tensor ctx = transpose(concat_rows(ctx_t));
    return out_proj.forward(ctx);
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    q_proj.collect_params(prefix + ".q", out);
    k_proj.collect_params(prefix + ".k", out);
    v_proj.collect_params(prefix + ".v", out);
    out_proj.collect_params(prefix + ".o", out);
  }
};

struct ConformerBlock {
  LayerNorm ln_ff1, ln_attn, ln_conv, ln_dw, ln_ff2, ln_final;
  Linear ff1_in, ff1_out, ff2_in, ff2_out;
  MultiHeadAttention attn;
  Linear conv_in;   // width -> 2*width, split for GLU
  DepthwiseConv1d conv_dw;
  Linear conv_out;
  int width = 0;

  ConformerBlock() = default;
  ConformerBlock(int width, int heads, int ff_mult, int conv_kernel, Rng& rng)
      : ln_ff1(width),
        ln_attn(width),
        ln_conv(width),
        ln_dw(width),
        ln_ff2(width),
        ln_final(width),
        ff1_in(width, ff_mult * width, rng),
        ff1_out(ff_mult * width, width, rng),
        ff2_in(width, ff_mult * width, rng),
        ff2_out(ff_mult * width, width, rng),
        attn(width, heads, rng),
        conv_in(width, 2 * width, rng),
        conv_dw(width, conv_kernel, conv_kernel / 2, rng),
        conv_out(width, width, rng),
        width(width) {}

  Tensor forward(const Tensor& x_in, const std::vector<float>& mask_bias = {}) const {
    Tensor x = add(x_in, scale(ff1_out.forward(swish(ff1_in.forward(ln_ff1.forward(x_in)))), 0.5f));
    x = add(x, attn.forward(ln_attn.forward(x), mask_bias));
    {
      Tensor h = conv_in.forward(ln_conv.forward(x));
      Tensor a = slice_cols(h, 0, width);
      Tensor b = slice_cols(h, width, width);
      Tensor glu = mul(a, sigmoid(b));
      Tensor dw = swish(ln_dw.forward(conv_dw.forward(glu)));
      x = add(x, conv_out.forward(dw));
    }
    x = add(x, scale(ff2_out.forward(swish(ff2_in.forward(ln_ff2.forward(x)))), 0.5f));
    return ln_final.forward(x);
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    ln_ff1.collect_params(prefix + ".ln_ff1", out);
    ln_attn.collect_params(prefix + ".ln_attn", out);
    ln_conv.collect_params(prefix + ".ln_conv", out);
    ln_dw.collect_params(prefix + ".ln_dw", out);
    ln_ff2.collect_params(prefix + ".ln_ff2", out);
    ln_final.collect_params(prefix + ".ln_final", out);
    ff1_in.collect_params(prefix + ".ff1_in", out);
    ff1_out.collect_params(prefix + ".ff1_out", out);
    ff2_in.collect_params(prefix + ".ff2_in", out);
    ff2_out.collect_params(prefix + ".ff2_out", out);
    attn.collect_params(prefix + ".attn", out);
    conv_in.collect_params(prefix + ".conv_in", out);
    conv_dw.collect_params(prefix + ".conv_dw", out);
    conv_out.collect_params(prefix + ".conv_out", out);
  }
};

}  // namespace tts
