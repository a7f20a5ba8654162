#include "trajtok/net.hpp"

#include <cmath>

#include "trajtok/linalg.hpp"
#include "trajtok/parallel.hpp"

namespace trajtok {

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
T gelu(T x) {
  const T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  const T c = static_cast<T>(0.044715);
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(k * (x + c * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T k = static_cast<T>(0.7978845608028654);
  const T c = static_cast<T>(0.044715);
  const T u = k * (x + c * x * x * x);
  const T th = std::tanh(u);
  const T sech2 = static_cast<T>(1) - th * th;
  return static_cast<T>(0.5) * (static_cast<T>(1) + th) +
         static_cast<T>(0.5) * x * sech2 * k * (static_cast<T>(1) + static_cast<T>(3) * c * x * x);
}

template <typename T>
TensorT<T> layer_norm_forward(const TensorT<T>& x, const NormParamsT<T>& p, NormCacheT<T>& cache) {
  const std::size_t C = p.gain.size();
  const std::size_t rows = x.size() / C;
  TensorT<T> y(x.shape());
  cache.xhat = TensorT<T>(x.shape());
  cache.inv_std = TensorT<T>({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * C;
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += xr[c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const T d = xr[c] - mu;
      var += d * d;
    }
    var /= static_cast<T>(C);
    const T inv = static_cast<T>(1) / std::sqrt(var + static_cast<T>(kNormEps));
    cache.inv_std[r] = inv;
    T* xh = cache.xhat.data() + r * C;
    T* yr = y.data() + r * C;
    for (std::size_t c = 0; c < C; ++c) {
      xh[c] = (xr[c] - mu) * inv;
      yr[c] = p.gain[c] * xh[c] + p.bias[c];
    }
  }
  return y;
}

template <typename T>
TensorT<T> layer_norm_backward(const TensorT<T>& d_y, const NormParamsT<T>& p,
                               const NormCacheT<T>& cache, NormParamsT<T>& grads) {
  const std::size_t C = p.gain.size();
  const std::size_t rows = d_y.size() / C;
  TensorT<T> d_x(d_y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dyr = d_y.data() + r * C;
    const T* xh = cache.xhat.data() + r * C;
    const T inv = cache.inv_std[r];
    T mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (std::size_t c = 0; c < C; ++c) {
      grads.bias[c] += dyr[c];
      grads.gain[c] += dyr[c] * xh[c];
      const T dxh = dyr[c] * p.gain[c];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xh[c];
    }
    mean_dxhat /= static_cast<T>(C);
    mean_dxhat_xhat /= static_cast<T>(C);
    T* dxr = d_x.data() + r * C;
    for (std::size_t c = 0; c < C; ++c) {
      const T dxh = dyr[c] * p.gain[c];
      dxr[c] = inv * (dxh - mean_dxhat - xh[c] * mean_dxhat_xhat);
    }
  }
  return d_x;
}

// Self-attention over R independent sequences of length S (input R x S x C).
template <typename T>
TensorT<T> mha_self_forward(const TensorT<T>& y, const AttnParamsT<T>& p, int heads,
                            AttnCacheT<T>& cache, int threads) {
  const std::size_t R = y.dim(0), S = y.dim(1), C = y.dim(2);
  const std::size_t H = static_cast<std::size_t>(heads);
  const std::size_t d = C / H;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(d));
  const std::size_t rows = R * S;

  cache.input = y;
  cache.q = TensorT<T>({R, S, C});
  cache.k = TensorT<T>({R, S, C});
  cache.v = TensorT<T>({R, S, C});
  affine_rows(y.data(), rows, C, p.wq.data(), static_cast<const T*>(nullptr), C, cache.q.data(), threads);
  affine_rows(y.data(), rows, C, p.wk.data(), static_cast<const T*>(nullptr), C, cache.k.data(), threads);
  affine_rows(y.data(), rows, C, p.wv.data(), static_cast<const T*>(nullptr), C, cache.v.data(), threads);

  cache.probs = TensorT<T>({R, H, S, S});
  cache.concat = TensorT<T>({R, S, C});
  parallel_for(R, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<T> scores(S);
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t off = h * d;
        for (std::size_t i = 0; i < S; ++i) {
          const T* qi = cache.q.data() + cache.q.offset(r, i, off);
          T maxv = -std::numeric_limits<T>::infinity();
          for (std::size_t j = 0; j < S; ++j) {
            const T* kj = cache.k.data() + cache.k.offset(r, j, off);
            T s = 0;
            for (std::size_t e = 0; e < d; ++e) s += qi[e] * kj[e];
            s *= scale;
            scores[j] = s;
            maxv = std::max(maxv, s);
          }
          T total = 0;
          for (std::size_t j = 0; j < S; ++j) {
            scores[j] = std::exp(scores[j] - maxv);
            total += scores[j];
          }
          T* pr = cache.probs.data() + cache.probs.offset(r, h, i, std::size_t(0));
          for (std::size_t j = 0; j < S; ++j) pr[j] = scores[j] / total;
          T* out = cache.concat.data() + cache.concat.offset(r, i, off);
          for (std::size_t e = 0; e < d; ++e) out[e] = 0;
          for (std::size_t j = 0; j < S; ++j) {
            const T w = pr[j];
            const T* vj = cache.v.data() + cache.v.offset(r, j, off);
            for (std::size_t e = 0; e < d; ++e) out[e] += w * vj[e];
          }
        }
      }
    }
  });

  TensorT<T> out({R, S, C});
  affine_rows(cache.concat.data(), rows, C, p.wo.data(), static_cast<const T*>(nullptr), C,
              out.data(), threads);
  return out;
}

template <typename T>
TensorT<T> mha_self_backward(const TensorT<T>& d_out, const AttnParamsT<T>& p, int heads,
                             const AttnCacheT<T>& cache, AttnParamsT<T>& grads, int threads) {
  const std::size_t R = d_out.dim(0), S = d_out.dim(1), C = d_out.dim(2);
  const std::size_t H = static_cast<std::size_t>(heads);
  const std::size_t d = C / H;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(d));
  const std::size_t rows = R * S;

  TensorT<T> d_concat({R, S, C});
  matmul_grad_input(d_out.data(), rows, C, p.wo.data(), C, d_concat.data(), threads);
  matmul_grad_params(d_out.data(), cache.concat.data(), rows, C, C, grads.wo.data(),
                     static_cast<T*>(nullptr));

  TensorT<T> d_q({R, S, C}), d_k({R, S, C}), d_v({R, S, C});
  parallel_for(R, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<T> d_probs(S), d_scores(S);
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t off = h * d;
        for (std::size_t i = 0; i < S; ++i) {
          const T* dci = d_concat.data() + d_concat.offset(r, i, off);
          const T* pr = cache.probs.data() + cache.probs.offset(r, h, i, std::size_t(0));
          T dot_pp = 0;
          for (std::size_t j = 0; j < S; ++j) {
            const T* vj = cache.v.data() + cache.v.offset(r, j, off);
            T dp = 0;
            for (std::size_t e = 0; e < d; ++e) dp += dci[e] * vj[e];
            d_probs[j] = dp;
            dot_pp += pr[j] * dp;
            T* dvj = d_v.data() + d_v.offset(r, j, off);
            for (std::size_t e = 0; e < d; ++e) dvj[e] += pr[j] * dci[e];
          }
          for (std::size_t j = 0; j < S; ++j) d_scores[j] = pr[j] * (d_probs[j] - dot_pp);
          const T* qi = cache.q.data() + cache.q.offset(r, i, off);
          T* dqi = d_q.data() + d_q.offset(r, i, off);
          for (std::size_t j = 0; j < S; ++j) {
            const T g = d_scores[j] * scale;
            if (g == T(0)) continue;
            const T* kj = cache.k.data() + cache.k.offset(r, j, off);
            T* dkj = d_k.data() + d_k.offset(r, j, off);
            for (std::size_t e = 0; e < d; ++e) {
              dqi[e] += g * kj[e];
              dkj[e] += g * qi[e];
            }
          }
        }
      }
    }
  });

  matmul_grad_params(d_q.data(), cache.input.data(), rows, C, C, grads.wq.data(), static_cast<T*>(nullptr));
  matmul_grad_params(d_k.data(), cache.input.data(), rows, C, C, grads.wk.data(), static_cast<T*>(nullptr));
  matmul_grad_params(d_v.data(), cache.input.data(), rows, C, C, grads.wv.data(), static_cast<T*>(nullptr));

  TensorT<T> d_in({R, S, C});
  TensorT<T> tmp({R, S, C});
  matmul_grad_input(d_q.data(), rows, C, p.wq.data(), C, d_in.data(), threads);
  matmul_grad_input(d_k.data(), rows, C, p.wk.data(), C, tmp.data(), threads);
  for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] += tmp[i];
  matmul_grad_input(d_v.data(), rows, C, p.wv.data(), C, tmp.data(), threads);
  for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] += tmp[i];
  return d_in;
}

template <typename T>
TensorT<T> transpose01(const TensorT<T>& x) {
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2);
  TensorT<T> out({B, A, C});
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b) {
      const T* src = x.data() + x.offset(a, b, std::size_t(0));
      T* dst = out.data() + out.offset(b, a, std::size_t(0));
      for (std::size_t c = 0; c < C; ++c) dst[c] = src[c];
    }
  return out;
}

template <typename T>
void transpose01_add(const TensorT<T>& src, TensorT<T>& dst) {
  const std::size_t A = src.dim(0), B = src.dim(1), C = src.dim(2);
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b) {
      const T* s = src.data() + src.offset(a, b, std::size_t(0));
      T* d = dst.data() + dst.offset(b, a, std::size_t(0));
      for (std::size_t c = 0; c < C; ++c) d[c] += s[c];
    }
}

template <typename T>
AttnParamsT<T> init_attn(std::size_t C, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(C));
  AttnParamsT<T> p;
  for (TensorT<T>* w : {&p.wq, &p.wk, &p.wv, &p.wo}) {
    *w = TensorT<T>({C, C});
    for (std::size_t i = 0; i < w->size(); ++i)
      (*w)[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  return p;
}

template <typename T>
NormParamsT<T> init_norm(std::size_t C) {
  NormParamsT<T> p;
  p.gain = TensorT<T>::full({C}, T(1));
  p.bias = TensorT<T>({C});
  return p;
}

}  // namespace

void NetConfig::validate() const {
  if (model_dim < 1 || heads < 1 || blocks < 1)
    raise(ErrorCode::ConfigError, "model_dim, heads and blocks must be >= 1");
  if (model_dim % heads != 0)
    raise(ErrorCode::ConfigError, "model_dim " + std::to_string(model_dim) +
                                      " not divisible by heads " + std::to_string(heads));
}

template <typename T>
NetParamsT<T> init_net_params(const NetConfig& cfg, std::size_t frames, std::size_t n_classes,
                              Rng& rng) {
  cfg.validate();
  if (frames < 1 || n_classes < 1)
    raise(ErrorCode::ConfigError, "frames and n_classes must be >= 1");
  const auto C = static_cast<std::size_t>(cfg.model_dim);
  NetParamsT<T> p;
  p.pos_embed = TensorT<T>({frames, C});
  for (std::size_t i = 0; i < p.pos_embed.size(); ++i)
    p.pos_embed[i] = static_cast<T>(rng.uniform(-0.02, 0.02));
  p.blocks.resize(static_cast<std::size_t>(cfg.blocks));
  for (auto& block : p.blocks) {
    block.norm_temporal = init_norm<T>(C);
    block.norm_spatial = init_norm<T>(C);
    block.temporal = init_attn<T>(C, rng);
    block.spatial = init_attn<T>(C, rng);
    if (cfg.mlp) {
      const auto hidden = static_cast<std::size_t>(cfg.hidden_dim());
      block.mlp.norm = init_norm<T>(C);
      const double b1 = 1.0 / std::sqrt(static_cast<double>(C));
      const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
      block.mlp.w1 = TensorT<T>({hidden, C});
      block.mlp.b1 = TensorT<T>({hidden});
      block.mlp.w2 = TensorT<T>({C, hidden});
      block.mlp.b2 = TensorT<T>({C});
      for (std::size_t i = 0; i < block.mlp.w1.size(); ++i)
        block.mlp.w1[i] = static_cast<T>(rng.uniform(-b1, b1));
      for (std::size_t i = 0; i < block.mlp.w2.size(); ++i)
        block.mlp.w2[i] = static_cast<T>(rng.uniform(-b2, b2));
    }
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(C));
  p.cls_token = TensorT<T>({C});
  for (std::size_t i = 0; i < C; ++i) p.cls_token[i] = static_cast<T>(rng.uniform(-bound, bound));
  p.cls_attn = init_attn<T>(C, rng);
  p.cls_norm = init_norm<T>(C);
  p.classifier_w = TensorT<T>({n_classes, C});
  for (std::size_t i = 0; i < p.classifier_w.size(); ++i)
    p.classifier_w[i] = static_cast<T>(rng.uniform(-bound, bound));
  p.classifier_b = TensorT<T>({n_classes});
  return p;
}

template <typename T>
void for_each_param(NetParamsT<T>& params,
                    const std::function<void(const std::string&, TensorT<T>&)>& fn) {
  auto visit = [&](const std::string& name, TensorT<T>& t) {
    if (!t.empty()) fn(name, t);
  };
  visit("pos_embed", params.pos_embed);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    auto& block = params.blocks[b];
    visit(prefix + "norm_temporal.gain", block.norm_temporal.gain);
    visit(prefix + "norm_temporal.bias", block.norm_temporal.bias);
    visit(prefix + "temporal.wq", block.temporal.wq);
    visit(prefix + "temporal.wk", block.temporal.wk);
    visit(prefix + "temporal.wv", block.temporal.wv);
    visit(prefix + "temporal.wo", block.temporal.wo);
    visit(prefix + "norm_spatial.gain", block.norm_spatial.gain);
    visit(prefix + "norm_spatial.bias", block.norm_spatial.bias);
    visit(prefix + "spatial.wq", block.spatial.wq);
    visit(prefix + "spatial.wk", block.spatial.wk);
    visit(prefix + "spatial.wv", block.spatial.wv);
    visit(prefix + "spatial.wo", block.spatial.wo);
    visit(prefix + "mlp.norm.gain", block.mlp.norm.gain);
    visit(prefix + "mlp.norm.bias", block.mlp.norm.bias);
    visit(prefix + "mlp.w1", block.mlp.w1);
    visit(prefix + "mlp.b1", block.mlp.b1);
    visit(prefix + "mlp.w2", block.mlp.w2);
    visit(prefix + "mlp.b2", block.mlp.b2);
  }
  visit("cls_token", params.cls_token);
  visit("cls_attn.wq", params.cls_attn.wq);
  visit("cls_attn.wk", params.cls_attn.wk);
  visit("cls_attn.wv", params.cls_attn.wv);
  visit("cls_attn.wo", params.cls_attn.wo);
  visit("cls_norm.gain", params.cls_norm.gain);
  visit("cls_norm.bias", params.cls_norm.bias);
  visit("classifier_w", params.classifier_w);
  visit("classifier_b", params.classifier_b);
}

template <typename T>
NetParamsT<T> zero_like(const NetParamsT<T>& params) {
  NetParamsT<T> z = params;
  for_each_param<T>(z, [](const std::string&, TensorT<T>& t) { t.fill(T(0)); });
  return z;
}

template <typename To, typename From>
NetParamsT<To> cast_params(const NetParamsT<From>& src) {
  NetParamsT<To> dst;
  dst.pos_embed = tensor_cast<To>(src.pos_embed);
  dst.blocks.resize(src.blocks.size());
  for (std::size_t b = 0; b < src.blocks.size(); ++b) {
    const auto& s = src.blocks[b];
    auto& d = dst.blocks[b];
    d.norm_temporal = {tensor_cast<To>(s.norm_temporal.gain), tensor_cast<To>(s.norm_temporal.bias)};
    d.norm_spatial = {tensor_cast<To>(s.norm_spatial.gain), tensor_cast<To>(s.norm_spatial.bias)};
    d.temporal = {tensor_cast<To>(s.temporal.wq), tensor_cast<To>(s.temporal.wk),
                  tensor_cast<To>(s.temporal.wv), tensor_cast<To>(s.temporal.wo)};
    d.spatial = {tensor_cast<To>(s.spatial.wq), tensor_cast<To>(s.spatial.wk),
                 tensor_cast<To>(s.spatial.wv), tensor_cast<To>(s.spatial.wo)};
    d.mlp.norm = {tensor_cast<To>(s.mlp.norm.gain), tensor_cast<To>(s.mlp.norm.bias)};
    d.mlp.w1 = tensor_cast<To>(s.mlp.w1);
    d.mlp.b1 = tensor_cast<To>(s.mlp.b1);
    d.mlp.w2 = tensor_cast<To>(s.mlp.w2);
    d.mlp.b2 = tensor_cast<To>(s.mlp.b2);
  }
  dst.cls_token = tensor_cast<To>(src.cls_token);
  dst.cls_attn = {tensor_cast<To>(src.cls_attn.wq), tensor_cast<To>(src.cls_attn.wk),
                  tensor_cast<To>(src.cls_attn.wv), tensor_cast<To>(src.cls_attn.wo)};
  dst.cls_norm = {tensor_cast<To>(src.cls_norm.gain), tensor_cast<To>(src.cls_norm.bias)};
  dst.classifier_w = tensor_cast<To>(src.classifier_w);
  dst.classifier_b = tensor_cast<To>(src.classifier_b);
  return dst;
}

template <typename T>
ForwardOutT<T> net_forward(const TensorT<T>& tokens, const NetParamsT<T>& params,
                           const NetConfig& cfg, int threads) {
  cfg.validate();
  if (tokens.rank() != 3) raise(ErrorCode::ShapeError, "tokens must be M x T x C");
  const std::size_t M = tokens.dim(0), Tfr = tokens.dim(1), C = tokens.dim(2);
  if (C != static_cast<std::size_t>(cfg.model_dim))
    raise(ErrorCode::ShapeError, "token dim does not match model_dim");
  if (params.pos_embed.dim(0) != Tfr || params.pos_embed.dim(1) != C)
    raise(ErrorCode::ShapeError, "positional embedding is " + params.pos_embed.shape_str() +
                                     ", need [" + std::to_string(Tfr) + "," + std::to_string(C) + "]");
  if (params.blocks.size() != static_cast<std::size_t>(cfg.blocks))
    raise(ErrorCode::ShapeError, "params block count does not match config");
  tokens.ensure_finite("input tokens");

  ForwardOutT<T> out;
  auto& trace = out.trace;
  trace.m = M;
  trace.frames = Tfr;
  trace.dim = C;

  trace.x0 = tokens;
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < Tfr; ++t) {
      T* row = trace.x0.data() + trace.x0.offset(m, t, std::size_t(0));
      const T* pos = params.pos_embed.data() + params.pos_embed.offset(t, std::size_t(0));
      for (std::size_t c = 0; c < C; ++c) row[c] += pos[c];
    }

  TensorT<T> x = trace.x0;
  trace.blocks.resize(params.blocks.size());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& bp = params.blocks[b];
    auto& bt = trace.blocks[b];
    bt.x_in = x;

    TensorT<T> yt = layer_norm_forward(bt.x_in, bp.norm_temporal, bt.ln_temporal);
    TensorT<T> ta = mha_self_forward(yt, bp.temporal, cfg.heads, bt.attn_temporal, threads);
    ta.ensure_finite(("block" + std::to_string(b) + ".temporal_attention").c_str());

    bt.xt = transpose01(bt.x_in);
    TensorT<T> ys = layer_norm_forward(bt.xt, bp.norm_spatial, bt.ln_spatial);
    TensorT<T> sa_t = mha_self_forward(ys, bp.spatial, cfg.heads, bt.attn_spatial, threads);
    sa_t.ensure_finite(("block" + std::to_string(b) + ".spatial_attention").c_str());

    TensorT<T> x_next = bt.x_in;
    for (std::size_t i = 0; i < x_next.size(); ++i) x_next[i] += ta[i];
    transpose01_add(sa_t, x_next);

    if (cfg.mlp) {
      bt.x_mid = x_next;
      bt.mlp_in = layer_norm_forward(bt.x_mid, bp.mlp.norm, bt.ln_mlp);
      const std::size_t hidden = bp.mlp.w1.dim(0);
      const std::size_t rows = M * Tfr;
      bt.mlp_h = TensorT<T>({M, Tfr, hidden});
      affine_rows(bt.mlp_in.data(), rows, C, bp.mlp.w1.data(), bp.mlp.b1.data(), hidden,
                  bt.mlp_h.data(), threads);
      bt.mlp_act = TensorT<T>(bt.mlp_h.shape());
      for (std::size_t i = 0; i < bt.mlp_h.size(); ++i) bt.mlp_act[i] = gelu(bt.mlp_h[i]);
      TensorT<T> mlp_out({M, Tfr, C});
      affine_rows(bt.mlp_act.data(), rows, hidden, bp.mlp.w2.data(), bp.mlp.b2.data(), C,
                  mlp_out.data(), threads);
      mlp_out.ensure_finite(("block" + std::to_string(b) + ".mlp").c_str());
      for (std::size_t i = 0; i < x_next.size(); ++i) x_next[i] = bt.x_mid[i] + mlp_out[i];
    }
    x = std::move(x_next);
  }
  trace.f_final = x;
  trace.f_final.ensure_finite("f_final");

  // CLS cross-attention over all M*T tokens, post-norm on the output.
  const std::size_t H = static_cast<std::size_t>(cfg.heads);
  const std::size_t d = C / H;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(d));
  const std::size_t n_tokens = M * Tfr;
  trace.cls_q = TensorT<T>({C});
  affine_rows(params.cls_token.data(), 1, C, params.cls_attn.wq.data(),
              static_cast<const T*>(nullptr), C, trace.cls_q.data(), 1);
  trace.cls_k = TensorT<T>({n_tokens, C});
  trace.cls_v = TensorT<T>({n_tokens, C});
  affine_rows(trace.f_final.data(), n_tokens, C, params.cls_attn.wk.data(),
              static_cast<const T*>(nullptr), C, trace.cls_k.data(), threads);
  affine_rows(trace.f_final.data(), n_tokens, C, params.cls_attn.wv.data(),
              static_cast<const T*>(nullptr), C, trace.cls_v.data(), threads);
  trace.cls_probs = TensorT<T>({H, n_tokens});
  trace.cls_concat = TensorT<T>({C});
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t off = h * d;
    T maxv = -std::numeric_limits<T>::infinity();
    std::vector<T> scores(n_tokens);
    for (std::size_t s = 0; s < n_tokens; ++s) {
      const T* ks = trace.cls_k.data() + trace.cls_k.offset(s, off);
      T val = 0;
      for (std::size_t e = 0; e < d; ++e) val += trace.cls_q[off + e] * ks[e];
      val *= scale;
      scores[s] = val;
      maxv = std::max(maxv, val);
    }
    T total = 0;
    for (std::size_t s = 0; s < n_tokens; ++s) {
      scores[s] = std::exp(scores[s] - maxv);
      total += scores[s];
    }
    for (std::size_t s = 0; s < n_tokens; ++s) {
      const T pth = scores[s] / total;
      trace.cls_probs(h, s) = pth;
      const T* vs = trace.cls_v.data() + trace.cls_v.offset(s, off);
      for (std::size_t e = 0; e < d; ++e) trace.cls_concat[off + e] += pth * vs[e];
    }
  }
  trace.cls_pre = TensorT<T>({C});
  affine_rows(trace.cls_concat.data(), 1, C, params.cls_attn.wo.data(),
              static_cast<const T*>(nullptr), C, trace.cls_pre.data(), 1);
  for (std::size_t c = 0; c < C; ++c) trace.cls_pre[c] += params.cls_token[c];
  trace.c_cls = layer_norm_forward(trace.cls_pre, params.cls_norm, trace.cls_ln);
  trace.c_cls.ensure_finite("c_cls");

  const std::size_t n_classes = params.classifier_w.dim(0);
  trace.logits = TensorT<T>({n_classes});
  affine_rows(trace.c_cls.data(), 1, C, params.classifier_w.data(), params.classifier_b.data(),
              n_classes, trace.logits.data(), 1);
  trace.logits.ensure_finite("logits");

  out.f_final = trace.f_final;
  out.c_cls = trace.c_cls;
  out.logits = trace.logits;
  return out;
}

template <typename T>
NetBackOutT<T> net_backward(const ForwardTraceT<T>& trace, const NetParamsT<T>& params,
                            const NetConfig& cfg, const TensorT<T>& d_logits,
                            const TensorT<T>& d_f_final, int threads) {
  cfg.validate();
  if (d_logits.size() != trace.logits.size())
    raise(ErrorCode::StaleTrace, "d_logits shape does not match the trace");
  if (!d_f_final.empty() && !d_f_final.same_shape(trace.f_final))
    raise(ErrorCode::StaleTrace, "d_f_final shape does not match the trace");
  if (params.blocks.size() != trace.blocks.size())
    raise(ErrorCode::StaleTrace, "params block count does not match the trace");

  const std::size_t M = trace.m, Tfr = trace.frames, C = trace.dim;
  const std::size_t H = static_cast<std::size_t>(cfg.heads);
  const std::size_t d = C / H;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(d));
  const std::size_t n_tokens = M * Tfr;
  const std::size_t n_classes = trace.logits.size();

  NetBackOutT<T> out;
  out.grads = zero_like(params);
  auto& g = out.grads;

  // classifier
  TensorT<T> d_c_cls({C});
  matmul_grad_input(d_logits.data(), 1, n_classes, params.classifier_w.data(), C, d_c_cls.data(), 1);
  matmul_grad_params(d_logits.data(), trace.c_cls.data(), 1, n_classes, C, g.classifier_w.data(),
                     g.classifier_b.data());

  // post-norm on the CLS output
  TensorT<T> d_pre = layer_norm_backward(d_c_cls, params.cls_norm, trace.cls_ln, g.cls_norm);

  // residual into the CLS token, plus the attention output path
  for (std::size_t c = 0; c < C; ++c) g.cls_token[c] += d_pre[c];
  TensorT<T> d_concat({C});
  matmul_grad_input(d_pre.data(), 1, C, params.cls_attn.wo.data(), C, d_concat.data(), 1);
  matmul_grad_params(d_pre.data(), trace.cls_concat.data(), 1, C, C, g.cls_attn.wo.data(),
                     static_cast<T*>(nullptr));

  TensorT<T> d_q({C});
  TensorT<T> d_k({n_tokens, C}), d_v({n_tokens, C});
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t off = h * d;
    std::vector<T> d_probs(n_tokens);
    T dot_pp = 0;
    for (std::size_t s = 0; s < n_tokens; ++s) {
      const T* vs = trace.cls_v.data() + trace.cls_v.offset(s, off);
      T dp = 0;
      for (std::size_t e = 0; e < d; ++e) dp += d_concat[off + e] * vs[e];
      d_probs[s] = dp;
      const T pth = trace.cls_probs(h, s);
      dot_pp += pth * dp;
      T* dvs = d_v.data() + d_v.offset(s, off);
      for (std::size_t e = 0; e < d; ++e) dvs[e] += pth * d_concat[off + e];
    }
    for (std::size_t s = 0; s < n_tokens; ++s) {
      const T pth = trace.cls_probs(h, s);
      const T ds = pth * (d_probs[s] - dot_pp) * scale;
      if (ds == T(0)) continue;
      const T* ks = trace.cls_k.data() + trace.cls_k.offset(s, off);
      T* dks = d_k.data() + d_k.offset(s, off);
      for (std::size_t e = 0; e < d; ++e) {
        d_q[off + e] += ds * ks[e];
        dks[e] += ds * trace.cls_q[off + e];
      }
    }
  }

  // gradients into f_final (flat view) and the CLS parameter tensors
  TensorT<T> d_x = d_f_final.empty() ? TensorT<T>({M, Tfr, C}) : d_f_final;
  {
    TensorT<T> d_flat({n_tokens, C});
    TensorT<T> tmp({n_tokens, C});
    matmul_grad_input(d_k.data(), n_tokens, C, params.cls_attn.wk.data(), C, d_flat.data(), threads);
    matmul_grad_input(d_v.data(), n_tokens, C, params.cls_attn.wv.data(), C, tmp.data(), threads);
    for (std::size_t i = 0; i < d_flat.size(); ++i) d_flat[i] += tmp[i];
    matmul_grad_params(d_k.data(), trace.f_final.data(), n_tokens, C, C, g.cls_attn.wk.data(),
                       static_cast<T*>(nullptr));
    matmul_grad_params(d_v.data(), trace.f_final.data(), n_tokens, C, C, g.cls_attn.wv.data(),
                       static_cast<T*>(nullptr));
    for (std::size_t i = 0; i < d_x.size(); ++i) d_x[i] += d_flat[i];

    TensorT<T> d_cls_from_q({C});
    matmul_grad_input(d_q.data(), 1, C, params.cls_attn.wq.data(), C, d_cls_from_q.data(), 1);
    for (std::size_t c = 0; c < C; ++c) g.cls_token[c] += d_cls_from_q[c];
    matmul_grad_params(d_q.data(), params.cls_token.data(), 1, C, C, g.cls_attn.wq.data(),
                       static_cast<T*>(nullptr));
  }

  // blocks, reversed
  for (std::size_t bi = params.blocks.size(); bi-- > 0;) {
    const auto& bp = params.blocks[bi];
    const auto& bt = trace.blocks[bi];
    auto& bg = g.blocks[bi];

    if (cfg.mlp) {
      const std::size_t hidden = bp.mlp.w1.dim(0);
      const std::size_t rows = M * Tfr;
      TensorT<T> d_act({M, Tfr, hidden});
      matmul_grad_input(d_x.data(), rows, C, bp.mlp.w2.data(), hidden, d_act.data(), threads);
      matmul_grad_params(d_x.data(), bt.mlp_act.data(), rows, C, hidden, bg.mlp.w2.data(),
                         bg.mlp.b2.data());
      TensorT<T> d_h(d_act.shape());
      for (std::size_t i = 0; i < d_h.size(); ++i) d_h[i] = d_act[i] * gelu_grad(bt.mlp_h[i]);
      TensorT<T> d_mlp_in({M, Tfr, C});
      matmul_grad_input(d_h.data(), rows, hidden, bp.mlp.w1.data(), C, d_mlp_in.data(), threads);
      matmul_grad_params(d_h.data(), bt.mlp_in.data(), rows, hidden, C, bg.mlp.w1.data(),
                         bg.mlp.b1.data());
      TensorT<T> d_mid = layer_norm_backward(d_mlp_in, bp.mlp.norm, bt.ln_mlp, bg.mlp.norm);
      for (std::size_t i = 0; i < d_x.size(); ++i) d_x[i] += d_mid[i];
    }

    // temporal branch
    TensorT<T> d_yt = mha_self_backward(d_x, bp.temporal, cfg.heads, bt.attn_temporal, bg.temporal,
                                        threads);
    TensorT<T> d_x_t = layer_norm_backward(d_yt, bp.norm_temporal, bt.ln_temporal, bg.norm_temporal);

    // spatial branch (transposed layout)
    TensorT<T> d_sa_t = transpose01(d_x);
    TensorT<T> d_ys = mha_self_backward(d_sa_t, bp.spatial, cfg.heads, bt.attn_spatial, bg.spatial,
                                        threads);
    TensorT<T> d_xt = layer_norm_backward(d_ys, bp.norm_spatial, bt.ln_spatial, bg.norm_spatial);

    // residual + both branch inputs
    for (std::size_t i = 0; i < d_x.size(); ++i) d_x[i] += d_x_t[i];
    transpose01_add(d_xt, d_x);
  }

  // positional embedding and input tokens
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t t = 0; t < Tfr; ++t) {
      const T* row = d_x.data() + d_x.offset(m, t, std::size_t(0));
      T* pos = g.pos_embed.data() + g.pos_embed.offset(t, std::size_t(0));
      for (std::size_t c = 0; c < C; ++c) pos[c] += row[c];
    }
  out.d_tokens = std::move(d_x);
  return out;
}

// explicit instantiations
template NetParamsT<float> init_net_params<float>(const NetConfig&, std::size_t, std::size_t, Rng&);
template NetParamsT<double> init_net_params<double>(const NetConfig&, std::size_t, std::size_t, Rng&);
template void for_each_param<float>(NetParamsT<float>&,
                                    const std::function<void(const std::string&, TensorT<float>&)>&);
template void for_each_param<double>(NetParamsT<double>&,
                                     const std::function<void(const std::string&, TensorT<double>&)>&);
template NetParamsT<float> zero_like<float>(const NetParamsT<float>&);
template NetParamsT<double> zero_like<double>(const NetParamsT<double>&);
template NetParamsT<double> cast_params<double, float>(const NetParamsT<float>&);
template NetParamsT<float> cast_params<float, double>(const NetParamsT<double>&);
template ForwardOutT<float> net_forward<float>(const TensorT<float>&, const NetParamsT<float>&,
                                               const NetConfig&, int);
template ForwardOutT<double> net_forward<double>(const TensorT<double>&, const NetParamsT<double>&,
                                                 const NetConfig&, int);
template NetBackOutT<float> net_backward<float>(const ForwardTraceT<float>&, const NetParamsT<float>&,
                                                const NetConfig&, const TensorT<float>&,
                                                const TensorT<float>&, int);
template NetBackOutT<double> net_backward<double>(const ForwardTraceT<double>&,
                                                  const NetParamsT<double>&, const NetConfig&,
                                                  const TensorT<double>&, const TensorT<double>&, int);

}  // namespace trajtok
