#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trajtok/rng.hpp"
#include "trajtok/tensor.hpp"

namespace trajtok {

// Decoupled space-time transformer: per block, temporal self-attention runs
// over T within each trajectory and spatial self-attention over M within
// each frame, both on the same pre-norm input, and the branch outputs are
// added to the residual stream. A learnable CLS query cross-attends over all
// M*T output tokens for classification. Only a temporal positional embedding
// exists; trajectory order carries no geometry.
struct NetConfig {
  int model_dim = 64;  // C, divisible by heads
  int heads = 4;
  int blocks = 1;
  bool mlp = false;    // optional GELU MLP sublayer after the attention branches
  int mlp_hidden = 0;  // 0 -> 2 * model_dim

  void validate() const;
  int hidden_dim() const { return mlp_hidden > 0 ? mlp_hidden : 2 * model_dim; }
};

template <typename T>
struct AttnParamsT {
  TensorT<T> wq, wk, wv, wo;  // each C x C
};

template <typename T>
struct NormParamsT {
  TensorT<T> gain, bias;  // each C
};

template <typename T>
struct MlpParamsT {
  NormParamsT<T> norm;
  TensorT<T> w1, b1, w2, b2;
};

template <typename T>
struct BlockParamsT {
  NormParamsT<T> norm_temporal, norm_spatial;
  AttnParamsT<T> temporal, spatial;
  MlpParamsT<T> mlp;  // tensors stay empty unless NetConfig::mlp
};

template <typename T>
struct NetParamsT {
  TensorT<T> pos_embed;  // T x C
  std::vector<BlockParamsT<T>> blocks;
  TensorT<T> cls_token;  // C
  AttnParamsT<T> cls_attn;
  NormParamsT<T> cls_norm;
  TensorT<T> classifier_w;  // n_classes x C
  TensorT<T> classifier_b;  // n_classes
};

using NetParams = NetParamsT<float>;

template <typename T>
NetParamsT<T> init_net_params(const NetConfig& cfg, std::size_t frames, std::size_t n_classes,
                              Rng& rng);

// Visits every parameter tensor in a fixed order with a stable name.
// Optional (empty) tensors are skipped.
template <typename T>
void for_each_param(NetParamsT<T>& params,
                    const std::function<void(const std::string&, TensorT<T>&)>& fn);

template <typename T>
NetParamsT<T> zero_like(const NetParamsT<T>& params);

template <typename To, typename From>
NetParamsT<To> cast_params(const NetParamsT<From>& src);

// --- forward/backward caches ---------------------------------------------

template <typename T>
struct NormCacheT {
  TensorT<T> xhat;     // same shape as the normalized input
  TensorT<T> inv_std;  // one entry per row
};

template <typename T>
struct AttnCacheT {
  TensorT<T> input;   // R x S x C, the normalized branch input
  TensorT<T> q, k, v; // R x S x C
  TensorT<T> probs;   // R x heads x S x S
  TensorT<T> concat;  // R x S x C, attention-weighted values before Wo
};

template <typename T>
struct BlockTraceT {
  TensorT<T> x_in;  // M x T x C
  NormCacheT<T> ln_temporal;
  AttnCacheT<T> attn_temporal;  // R = M sequences of length T
  TensorT<T> xt;                // T x M x C view of x_in
  NormCacheT<T> ln_spatial;
  AttnCacheT<T> attn_spatial;  // R = T slices of length M
  TensorT<T> x_mid;            // input to the MLP sublayer (cfg.mlp only)
  NormCacheT<T> ln_mlp;
  TensorT<T> mlp_in, mlp_h, mlp_act;
};

template <typename T>
struct ForwardTraceT {
  std::size_t m = 0, frames = 0, dim = 0;
  TensorT<T> x0;  // tokens + positional embedding
  std::vector<BlockTraceT<T>> blocks;
  TensorT<T> f_final;  // M x T x C
  TensorT<T> cls_q;                 // C
  TensorT<T> cls_k, cls_v;          // (M*T) x C
  TensorT<T> cls_probs;             // heads x (M*T)
  TensorT<T> cls_concat, cls_pre;   // C
  NormCacheT<T> cls_ln;
  TensorT<T> c_cls;   // C
  TensorT<T> logits;  // n_classes
};

using ForwardTrace = ForwardTraceT<float>;

template <typename T>
struct ForwardOutT {
  TensorT<T> f_final;
  TensorT<T> c_cls;
  TensorT<T> logits;
  ForwardTraceT<T> trace;
};

template <typename T>
ForwardOutT<T> net_forward(const TensorT<T>& tokens, const NetParamsT<T>& params,
                           const NetConfig& cfg, int threads = 1);

template <typename T>
struct NetBackOutT {
  NetParamsT<T> grads;
  TensorT<T> d_tokens;  // M x T x C
};

// Exact analytic gradients for d(loss)/d(params) and d(loss)/d(tokens) given
// upstream gradients on the logits and (optionally, for the contrastive
// path) on f_final directly. Raises StaleTrace if the gradient shapes do not
// match the trace.
template <typename T>
NetBackOutT<T> net_backward(const ForwardTraceT<T>& trace, const NetParamsT<T>& params,
                            const NetConfig& cfg, const TensorT<T>& d_logits,
                            const TensorT<T>& d_f_final, int threads = 1);

}  // namespace trajtok
