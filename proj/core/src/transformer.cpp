#include "srtk/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace srtk {

using nlohmann::json;

void LmConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1)
    throw std::invalid_argument("model dimensions must be positive");
  if (d_model % n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be positive");
  if (max_seq < 1) throw std::invalid_argument("max_seq must be positive");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  if (front_end == FrontEndKind::ClusterEmbedMlp && cluster_count < 1)
    throw std::invalid_argument("cluster front end needs cluster_count");
  if (front_end == FrontEndKind::ContinuousAdapter && input_dim < 1)
    throw std::invalid_argument("adapter front end needs input_dim");
}

namespace {

// y(S x out) = x(S x in) * W(out x in)^T + b. Runs off a transposed weight
// copy so the inner loop is a vectorizable axpy instead of a reduction.
template <typename S>
void linear_fwd(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b, Mat<S>& y) {
  int n = x.rows, in = x.cols, out = w.rows;
  Mat<S> wt(in, out);
  for (int o = 0; o < out; ++o)
    for (int k = 0; k < in; ++k) wt.at(k, o) = w.at(o, k);
  y = Mat<S>(n, out);
  for (int i = 0; i < n; ++i) {
    const S* xi = x.row(i);
    S* yi = y.row(i);
    for (int o = 0; o < out; ++o) yi[o] = b.v[static_cast<size_t>(o)];
    for (int k = 0; k < in; ++k) {
      S xv = xi[k];
      if (xv == S(0)) continue;
      const S* wk = wt.row(k);
      for (int o = 0; o < out; ++o) yi[o] += xv * wk[o];
    }
  }
}

// dx += dy * W ; dW += dy^T * x ; db += colsum(dy)
template <typename S>
void linear_bwd(const Mat<S>& x, const Mat<S>& w, const Mat<S>& dy, Mat<S>& dx, Mat<S>& dw,
                Mat<S>& db) {
  int n = x.rows, in = x.cols, out = w.rows;
  for (int i = 0; i < n; ++i) {
    const S* dyi = dy.row(i);
    const S* xi = x.row(i);
    S* dxi = dx.row(i);
    for (int o = 0; o < out; ++o) {
      S d = dyi[o];
      if (d == S(0)) continue;
      const S* wo = w.row(o);
      S* dwo = dw.row(o);
      for (int k = 0; k < in; ++k) {
        dxi[k] += d * wo[k];
        dwo[k] += d * xi[k];
      }
      db.v[static_cast<size_t>(o)] += d;
    }
  }
}

constexpr double kLnEps = 1e-5;

// y = g * xhat + b, xhat = (x - mean) * rstd per row
template <typename S>
void layernorm_fwd(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, Mat<S>& y, Mat<S>& xhat,
                   std::vector<S>& rstd) {
  int n = x.rows, d = x.cols;
  y = Mat<S>(n, d);
  xhat = Mat<S>(n, d);
  rstd.assign(static_cast<size_t>(n), S(0));
  for (int i = 0; i < n; ++i) {
    const S* xi = x.row(i);
    S mean = 0;
    for (int j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<S>(d);
    S var = 0;
    for (int j = 0; j < d; ++j) {
      S c = xi[j] - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    S rs = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + kLnEps));
    rstd[static_cast<size_t>(i)] = rs;
    S* xh = xhat.row(i);
    S* yi = y.row(i);
    for (int j = 0; j < d; ++j) {
      xh[j] = (xi[j] - mean) * rs;
      yi[j] = g.v[static_cast<size_t>(j)] * xh[j] + b.v[static_cast<size_t>(j)];
    }
  }
}

template <typename S>
void layernorm_bwd(const Mat<S>& xhat, const std::vector<S>& rstd, const Mat<S>& g, const Mat<S>& dy,
                   Mat<S>& dx, Mat<S>& dg, Mat<S>& db) {
  int n = xhat.rows, d = xhat.cols;
  for (int i = 0; i < n; ++i) {
    const S* dyi = dy.row(i);
    const S* xh = xhat.row(i);
    S mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (int j = 0; j < d; ++j) {
      S dxh = dyi[j] * g.v[static_cast<size_t>(j)];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xh[j];
      dg.v[static_cast<size_t>(j)] += dyi[j] * xh[j];
      db.v[static_cast<size_t>(j)] += dyi[j];
    }
    mean_dxhat /= static_cast<S>(d);
    mean_dxhat_xhat /= static_cast<S>(d);
    S* dxi = dx.row(i);
    S rs = rstd[static_cast<size_t>(i)];
    for (int j = 0; j < d; ++j) {
      S dxh = dyi[j] * g.v[static_cast<size_t>(j)];
      dxi[j] += rs * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <typename S>
S gelu(S x) {
  double xd = static_cast<double>(x);
  return static_cast<S>(0.5 * xd * (1.0 + std::tanh(kGeluC * (xd + kGeluA * xd * xd * xd))));
}

template <typename S>
S gelu_grad(S x) {
  double xd = static_cast<double>(x);
  double u = kGeluC * (xd + kGeluA * xd * xd * xd);
  double t = std::tanh(u);
  double du = kGeluC * (1.0 + 3.0 * kGeluA * xd * xd);
  return static_cast<S>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
}

template <typename S>
int argmax_row(const Mat<S>& m, int row) {
  int best = 0;
  for (int j = 1; j < m.cols; ++j)
    if (m.at(row, j) > m.at(row, best)) best = j;
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction and initialization
// ---------------------------------------------------------------------------

template <typename S>
ToyLm<S>::ToyLm(const LmConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  int d = cfg_.d_model, ff = cfg_.d_ff, v = cfg_.vocab_size;

  auto& P = params_;
  P.tok_emb = Mat<S>(v, d);
  P.pos_emb = Mat<S>(cfg_.max_seq, d);
  P.layers.resize(static_cast<size_t>(cfg_.n_layers));
  for (auto& L : P.layers) {
    L.ln1_g = Mat<S>(1, d, S(1));
    L.ln1_b = Mat<S>(1, d);
    L.wq = Mat<S>(d, d);
    L.bq = Mat<S>(1, d);
    L.wk = Mat<S>(d, d);
    L.bk = Mat<S>(1, d);
    L.wv = Mat<S>(d, d);
    L.bv = Mat<S>(1, d);
    L.wo = Mat<S>(d, d);
    L.bo = Mat<S>(1, d);
    L.ln2_g = Mat<S>(1, d, S(1));
    L.ln2_b = Mat<S>(1, d);
    L.w1 = Mat<S>(ff, d);
    L.b1 = Mat<S>(1, ff);
    L.w2 = Mat<S>(d, ff);
    L.b2 = Mat<S>(1, d);
  }
  P.lnf_g = Mat<S>(1, d, S(1));
  P.lnf_b = Mat<S>(1, d);
  P.out_w = Mat<S>(v, d);
  P.out_b = Mat<S>(1, v);
  if (cfg_.front_end == FrontEndKind::ClusterEmbedMlp) {
    P.cl_emb = Mat<S>(cfg_.cluster_count, d);
    P.cl_w1 = Mat<S>(d, d);
    P.cl_b1 = Mat<S>(1, d);
    P.cl_w2 = Mat<S>(d, d);
    P.cl_b2 = Mat<S>(1, d);
  } else if (cfg_.front_end == FrontEndKind::ContinuousAdapter) {
    P.ad_w1 = Mat<S>(d, cfg_.input_dim);
    P.ad_b1 = Mat<S>(1, d);
    P.ad_w2 = Mat<S>(d, d);
    P.ad_b2 = Mat<S>(1, d);
  }

  // N(0, 0.02) for weight matrices, N(0, 0.25) for the token and cluster
  // embedding tables (wide embeddings keep the continuous feedback loop's
  // decision margins large relative to its reconstruction error); biases
  // zero, norm gains one.
  Rng rng(seed);
  P.visit([&](const std::string& name, Mat<S>& m) {
    bool is_norm = name.find("ln") != std::string::npos;
    bool is_bias = !is_norm && (name.find(".b") != std::string::npos || name == "out.b");
    if (is_norm || is_bias) return;
    double std_dev = (name == "tok_emb" || name == "cluster.emb") ? 0.25 : 0.02;
    for (auto& x : m.v) x = static_cast<S>(std_dev * rng.gaussian());
  });

  adam_m_ = P;
  adam_v_ = P;
  auto zero = [](const std::string&, Mat<S>& m) { std::fill(m.v.begin(), m.v.end(), S(0)); };
  adam_m_.visit(zero);
  adam_v_.visit(zero);
}

// ---------------------------------------------------------------------------
// Front ends
// ---------------------------------------------------------------------------

template <typename S>
Mat<S> ToyLm<S>::embed_text(const std::vector<int>& tokens) const {
  Mat<S> out(static_cast<int>(tokens.size()), cfg_.d_model);
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg_.vocab_size)
      throw std::invalid_argument("text token " + std::to_string(tokens[i]) + " out of range");
    std::memcpy(out.row(static_cast<int>(i)), params_.tok_emb.row(tokens[i]),
                sizeof(S) * static_cast<size_t>(cfg_.d_model));
  }
  return out;
}

template <typename S>
Mat<S> ToyLm<S>::embed_clusters(const std::vector<int>& cluster_tokens) const {
  if (cfg_.front_end != FrontEndKind::ClusterEmbedMlp)
    throw ModeMismatch("model has no cluster front end");
  Mat<S> e(static_cast<int>(cluster_tokens.size()), cfg_.d_model);
  for (size_t i = 0; i < cluster_tokens.size(); ++i) {
    int t = cluster_tokens[i];
    if (t < 0 || t >= cfg_.cluster_count)
      throw std::invalid_argument("cluster token " + std::to_string(t) + " out of range");
    std::memcpy(e.row(static_cast<int>(i)), params_.cl_emb.row(t),
                sizeof(S) * static_cast<size_t>(cfg_.d_model));
  }
  Mat<S> h1, out;
  linear_fwd(e, params_.cl_w1, params_.cl_b1, h1);
  Mat<S> hg = h1;
  for (auto& x : hg.v) x = gelu(x);
  linear_fwd(hg, params_.cl_w2, params_.cl_b2, out);
  return out;
}

template <typename S>
Mat<S> ToyLm<S>::adapt_features(const MatF& frames) const {
  if (cfg_.front_end != FrontEndKind::ContinuousAdapter)
    throw ModeMismatch("model has no continuous adapter");
  if (frames.cols != cfg_.input_dim)
    throw DimensionMismatch("features have D=" + std::to_string(frames.cols) + ", adapter expects " +
                            std::to_string(cfg_.input_dim));
  Mat<S> x(frames.rows, frames.cols);
  for (size_t i = 0; i < frames.size(); ++i) x.v[i] = static_cast<S>(frames.v[i]);
  Mat<S> h1, out;
  linear_fwd(x, params_.ad_w1, params_.ad_b1, h1);
  Mat<S> hg = h1;
  for (auto& v : hg.v) v = gelu(v);
  linear_fwd(hg, params_.ad_w2, params_.ad_b2, out);
  return out;
}

template <typename S>
Mat<S> ToyLm<S>::embed_prompt(const Prompt& p) const {
  switch (p.kind) {
    case FrontEndKind::TextEmbed:
      return embed_text(p.tokens);
    case FrontEndKind::ClusterEmbedMlp:
      return embed_clusters(p.tokens);
    case FrontEndKind::ContinuousAdapter:
      return adapt_features(p.features);
  }
  throw std::invalid_argument("bad prompt kind");
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace {

template <typename S>
struct LayerCache {
  Mat<S> x_in;
  Mat<S> ln1_hat, ln1_out;
  std::vector<S> rstd1;
  Mat<S> q, k, v;
  std::vector<Mat<S>> att;  // per head, S x S row-softmax probabilities
  Mat<S> att_concat;
  Mat<S> x_mid;
  Mat<S> ln2_hat, ln2_out;
  std::vector<S> rstd2;
  Mat<S> h1, hg;
};

template <typename S>
struct FwdCache {
  Mat<S> x0;
  std::vector<LayerCache<S>> layers;
  Mat<S> lnf_hat;
  std::vector<S> rstdf;
  Mat<S> emb_out;
  Mat<S> logits;
};

}  // namespace

template <typename S>
struct ToyLm<S>::Prepared {
  Mat<S> emb_in;               // S x d, front-end outputs before positions
  std::vector<int> ce_targets;  // length S, -1 where no target
  bool use_mse = false;

  // gradient routing for emb_in rows
  FrontEndKind kind = FrontEndKind::TextEmbed;
  std::vector<int> prompt_tokens;  // text or cluster ids
  Mat<S> fe_in;                    // cluster-embedding rows or casted features
  Mat<S> fe_h1, fe_hg;             // front-end MLP caches
  std::vector<int> cont_tokens;    // teacher-forced text tokens after the prompt
};

namespace {

template <typename S>
void run_transformer(const LmConfig& cfg, const LmTensors<S>& P, const Mat<S>& emb_in, bool causal,
                     FwdCache<S>& C) {
  int Sl = emb_in.rows, d = cfg.d_model, H = cfg.n_heads, hd = d / H;
  if (Sl > cfg.max_seq)
    throw SequenceTooLong(std::to_string(Sl) + " positions, max_seq is " + std::to_string(cfg.max_seq));
  if (Sl < 1) throw std::invalid_argument("empty sequence");
  if (emb_in.cols != d) throw DimensionMismatch("embedding width != d_model");

  C.x0 = emb_in;
  for (int i = 0; i < Sl; ++i) {
    S* r = C.x0.row(i);
    const S* p = P.pos_emb.row(i);
    for (int j = 0; j < d; ++j) r[j] += p[j];
  }

  C.layers.clear();
  C.layers.resize(static_cast<size_t>(cfg.n_layers));
  Mat<S> x = C.x0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  for (int li = 0; li < cfg.n_layers; ++li) {
    auto& L = P.layers[static_cast<size_t>(li)];
    auto& lc = C.layers[static_cast<size_t>(li)];
    lc.x_in = x;

    layernorm_fwd(x, L.ln1_g, L.ln1_b, lc.ln1_out, lc.ln1_hat, lc.rstd1);
    linear_fwd(lc.ln1_out, L.wq, L.bq, lc.q);
    linear_fwd(lc.ln1_out, L.wk, L.bk, lc.k);
    linear_fwd(lc.ln1_out, L.wv, L.bv, lc.v);

    lc.att.assign(static_cast<size_t>(H), Mat<S>());
    lc.att_concat = Mat<S>(Sl, d);
    std::vector<double> sc(static_cast<size_t>(Sl));
    for (int h = 0; h < H; ++h) {
      Mat<S>& att = lc.att[static_cast<size_t>(h)];
      att = Mat<S>(Sl, Sl);
      int off = h * hd;
      for (int i = 0; i < Sl; ++i) {
        int jmax = causal ? i : Sl - 1;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j <= jmax; ++j) {
          double s = 0;
          const S* qi = lc.q.row(i) + off;
          const S* kj = lc.k.row(j) + off;
          for (int e = 0; e < hd; ++e) s += static_cast<double>(qi[e]) * kj[e];
          sc[static_cast<size_t>(j)] = s * scale;
          mx = std::max(mx, sc[static_cast<size_t>(j)]);
        }
        double z = 0;
        for (int j = 0; j <= jmax; ++j) {
          double e = std::exp(sc[static_cast<size_t>(j)] - mx);
          sc[static_cast<size_t>(j)] = e;
          z += e;
        }
        for (int j = 0; j <= jmax; ++j) att.at(i, j) = static_cast<S>(sc[static_cast<size_t>(j)] / z);
        S* out = lc.att_concat.row(i) + off;
        for (int e = 0; e < hd; ++e) out[e] = 0;
        for (int j = 0; j <= jmax; ++j) {
          S a = att.at(i, j);
          const S* vj = lc.v.row(j) + off;
          for (int e = 0; e < hd; ++e) out[e] += a * vj[e];
        }
      }
    }

    Mat<S> attn_out;
    linear_fwd(lc.att_concat, L.wo, L.bo, attn_out);
    lc.x_mid = x;
    for (size_t i = 0; i < lc.x_mid.size(); ++i) lc.x_mid.v[i] += attn_out.v[i];

    layernorm_fwd(lc.x_mid, L.ln2_g, L.ln2_b, lc.ln2_out, lc.ln2_hat, lc.rstd2);
    linear_fwd(lc.ln2_out, L.w1, L.b1, lc.h1);
    lc.hg = lc.h1;
    for (auto& v : lc.hg.v) v = gelu(v);
    Mat<S> mlp_out;
    linear_fwd(lc.hg, L.w2, L.b2, mlp_out);

    x = lc.x_mid;
    for (size_t i = 0; i < x.size(); ++i) x.v[i] += mlp_out.v[i];
  }

  layernorm_fwd(x, P.lnf_g, P.lnf_b, C.emb_out, C.lnf_hat, C.rstdf);
  linear_fwd(C.emb_out, P.out_w, P.out_b, C.logits);
}

// Backward through the transformer stack given d_emb_out and d_logits.
// Returns d_emb_in (gradient at the pre-positional embeddings) and adds
// parameter gradients into G.
template <typename S>
Mat<S> transformer_bwd(const LmConfig& cfg, const LmTensors<S>& P, const FwdCache<S>& C,
                       const Mat<S>& d_logits, const Mat<S>& d_emb_out_extra, LmTensors<S>& G) {
  int Sl = C.x0.rows, d = cfg.d_model, H = cfg.n_heads, hd = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat<S> d_emb_out = d_emb_out_extra.empty() ? Mat<S>(Sl, d) : d_emb_out_extra;
  linear_bwd(C.emb_out, P.out_w, d_logits, d_emb_out, G.out_w, G.out_b);

  Mat<S> dx(Sl, d);
  layernorm_bwd(C.lnf_hat, C.rstdf, P.lnf_g, d_emb_out, dx, G.lnf_g, G.lnf_b);

  for (int li = cfg.n_layers - 1; li >= 0; --li) {
    auto& L = P.layers[static_cast<size_t>(li)];
    auto& GL = G.layers[static_cast<size_t>(li)];
    auto& lc = C.layers[static_cast<size_t>(li)];

    // x_out = x_mid + mlp(ln2(x_mid))
    Mat<S> d_hg(Sl, cfg.d_ff);
    linear_bwd(lc.hg, L.w2, dx, d_hg, GL.w2, GL.b2);
    Mat<S> d_h1 = d_hg;
    for (size_t i = 0; i < d_h1.size(); ++i) d_h1.v[i] *= gelu_grad(lc.h1.v[i]);
    Mat<S> d_ln2(Sl, d);
    linear_bwd(lc.ln2_out, L.w1, d_h1, d_ln2, GL.w1, GL.b1);
    Mat<S> d_mid = dx;  // residual path
    layernorm_bwd(lc.ln2_hat, lc.rstd2, L.ln2_g, d_ln2, d_mid, GL.ln2_g, GL.ln2_b);

    // x_mid = x_in + wo(att(ln1(x_in)))
    Mat<S> d_att_concat(Sl, d);
    linear_bwd(lc.att_concat, L.wo, d_mid, d_att_concat, GL.wo, GL.bo);

    Mat<S> dq(Sl, d), dk(Sl, d), dv(Sl, d);
    for (int h = 0; h < H; ++h) {
      const Mat<S>& att = lc.att[static_cast<size_t>(h)];
      int off = h * hd;
      for (int i = 0; i < Sl; ++i) {
        const S* dout = d_att_concat.row(i) + off;
        // dv and datt
        std::vector<double> datt(static_cast<size_t>(i + 1), 0.0);
        for (int j = 0; j <= i; ++j) {
          const S* vj = lc.v.row(j) + off;
          double a = 0;
          for (int e = 0; e < hd; ++e) a += static_cast<double>(dout[e]) * vj[e];
          datt[static_cast<size_t>(j)] = a;
          S* dvj = dv.row(j) + off;
          S p = att.at(i, j);
          for (int e = 0; e < hd; ++e) dvj[e] += p * dout[e];
        }
        // softmax backward
        double dot = 0;
        for (int j = 0; j <= i; ++j) dot += static_cast<double>(att.at(i, j)) * datt[static_cast<size_t>(j)];
        for (int j = 0; j <= i; ++j) {
          double ds = static_cast<double>(att.at(i, j)) * (datt[static_cast<size_t>(j)] - dot) * scale;
          const S* kj = lc.k.row(j) + off;
          const S* qi = lc.q.row(i) + off;
          S* dqi = dq.row(i) + off;
          S* dkj = dk.row(j) + off;
          for (int e = 0; e < hd; ++e) {
            dqi[e] += static_cast<S>(ds * kj[e]);
            dkj[e] += static_cast<S>(ds * qi[e]);
          }
        }
      }
    }

    Mat<S> d_ln1(Sl, d);
    linear_bwd(lc.ln1_out, L.wq, dq, d_ln1, GL.wq, GL.bq);
    linear_bwd(lc.ln1_out, L.wk, dk, d_ln1, GL.wk, GL.bk);
    linear_bwd(lc.ln1_out, L.wv, dv, d_ln1, GL.wv, GL.bv);

    Mat<S> d_in = d_mid;  // residual path
    layernorm_bwd(lc.ln1_hat, lc.rstd1, L.ln1_g, d_ln1, d_in, GL.ln1_g, GL.ln1_b);
    dx = std::move(d_in);
  }

  // positions
  for (int i = 0; i < Sl; ++i) {
    S* gp = G.pos_emb.row(i);
    const S* r = dx.row(i);
    for (int j = 0; j < d; ++j) gp[j] += r[j];
  }
  return dx;  // equals d emb_in
}

}  // namespace

template <typename S>
ForwardOut<S> ToyLm<S>::forward(const Mat<S>& prefix_embeddings, bool causal) const {
  FwdCache<S> C;
  run_transformer(cfg_, params_, prefix_embeddings, causal, C);
  return {std::move(C.logits), std::move(C.emb_out)};
}

// ---------------------------------------------------------------------------
// Example preparation
// ---------------------------------------------------------------------------

template <typename S>
typename ToyLm<S>::Prepared ToyLm<S>::prepare(const LmExample& ex) const {
  Prepared pr;
  pr.kind = ex.prompt.kind;
  if (ex.targets.empty()) throw std::invalid_argument("example needs at least one target token");
  for (int t : ex.targets)
    if (t < 0 || t >= cfg_.vocab_size)
      throw std::invalid_argument("target token " + std::to_string(t) + " out of range");

  int P = 0;
  int d = cfg_.d_model;
  switch (ex.prompt.kind) {
    case FrontEndKind::TextEmbed: {
      pr.prompt_tokens = ex.prompt.tokens;
      P = static_cast<int>(pr.prompt_tokens.size());
      break;
    }
    case FrontEndKind::ClusterEmbedMlp: {
      if (cfg_.front_end != FrontEndKind::ClusterEmbedMlp)
        throw ModeMismatch("model has no cluster front end");
      pr.prompt_tokens = ex.prompt.tokens;
      P = static_cast<int>(pr.prompt_tokens.size());
      break;
    }
    case FrontEndKind::ContinuousAdapter: {
      if (cfg_.front_end != FrontEndKind::ContinuousAdapter)
        throw ModeMismatch("model has no continuous adapter");
      P = ex.prompt.features.rows;
      break;
    }
  }

  int Ct = static_cast<int>(ex.targets.size());
  int Sl = P + Ct - 1;
  if (Sl < 1) throw std::invalid_argument("sequence needs at least one input position");

  pr.cont_tokens.assign(ex.targets.begin(), ex.targets.end() - 1);
  pr.emb_in = Mat<S>(Sl, d);

  // front-end rows
  if (P > 0) {
    switch (ex.prompt.kind) {
      case FrontEndKind::TextEmbed: {
        Mat<S> e = embed_text(pr.prompt_tokens);
        std::memcpy(pr.emb_in.v.data(), e.v.data(), sizeof(S) * e.size());
        break;
      }
      case FrontEndKind::ClusterEmbedMlp: {
        pr.fe_in = Mat<S>(P, d);
        for (int i = 0; i < P; ++i) {
          int t = pr.prompt_tokens[static_cast<size_t>(i)];
          if (t < 0 || t >= cfg_.cluster_count)
            throw std::invalid_argument("cluster token " + std::to_string(t) + " out of range");
          std::memcpy(pr.fe_in.row(i), params_.cl_emb.row(t), sizeof(S) * static_cast<size_t>(d));
        }
        linear_fwd(pr.fe_in, params_.cl_w1, params_.cl_b1, pr.fe_h1);
        pr.fe_hg = pr.fe_h1;
        for (auto& v : pr.fe_hg.v) v = gelu(v);
        Mat<S> out;
        linear_fwd(pr.fe_hg, params_.cl_w2, params_.cl_b2, out);
        std::memcpy(pr.emb_in.v.data(), out.v.data(), sizeof(S) * out.size());
        break;
      }
      case FrontEndKind::ContinuousAdapter: {
        if (ex.prompt.features.cols != cfg_.input_dim)
          throw DimensionMismatch("features have D=" + std::to_string(ex.prompt.features.cols) +
                                  ", adapter expects " + std::to_string(cfg_.input_dim));
        pr.fe_in = Mat<S>(P, cfg_.input_dim);
        for (size_t i = 0; i < pr.fe_in.size(); ++i)
          pr.fe_in.v[i] = static_cast<S>(ex.prompt.features.v[i]);
        linear_fwd(pr.fe_in, params_.ad_w1, params_.ad_b1, pr.fe_h1);
        pr.fe_hg = pr.fe_h1;
        for (auto& v : pr.fe_hg.v) v = gelu(v);
        Mat<S> out;
        linear_fwd(pr.fe_hg, params_.ad_w2, params_.ad_b2, out);
        std::memcpy(pr.emb_in.v.data(), out.v.data(), sizeof(S) * out.size());
        break;
      }
    }
  }

  // teacher-forced continuation rows
  for (int i = 0; i < Ct - 1; ++i) {
    int tok = pr.cont_tokens[static_cast<size_t>(i)];
    std::memcpy(pr.emb_in.row(P + i), params_.tok_emb.row(tok), sizeof(S) * static_cast<size_t>(d));
  }

  // CE alignment: position P-1+i predicts targets[i]
  pr.ce_targets.assign(static_cast<size_t>(Sl), -1);
  for (int i = 0; i < Ct; ++i) {
    int pos = P - 1 + i;
    if (pos >= 0 && pos < Sl) pr.ce_targets[static_cast<size_t>(pos)] = ex.targets[static_cast<size_t>(i)];
  }

  pr.use_mse = cfg_.feedback_mode == FeedbackMode::Continuous;
  return pr;
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

template <typename S>
LossBreakdown ToyLm<S>::loss_and_grads(const std::vector<LmExample>& batch, double alpha,
                                       LmTensors<S>* grads) const {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBreakdown out;

  for (const auto& ex : batch) {
    Prepared pr = prepare(ex);
    FwdCache<S> C;
    run_transformer(cfg_, params_, pr.emb_in, /*causal=*/true, C);
    int Sl = pr.emb_in.rows, d = cfg_.d_model, V = cfg_.vocab_size;

    // cross entropy over target positions
    int n_ce = 0;
    for (int t : pr.ce_targets) n_ce += (t >= 0);
    Mat<S> d_logits(Sl, V);
    double ce = 0.0;
    if (n_ce > 0) {
      for (int i = 0; i < Sl; ++i) {
        int y = pr.ce_targets[static_cast<size_t>(i)];
        if (y < 0) continue;
        const S* z = C.logits.row(i);
        double mx = static_cast<double>(z[0]);
        for (int j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(z[j]));
        double zsum = 0.0;
        for (int j = 0; j < V; ++j) zsum += std::exp(static_cast<double>(z[j]) - mx);
        double logz = mx + std::log(zsum);
        ce += logz - static_cast<double>(z[y]);
        if (grads) {
          S* dl = d_logits.row(i);
          double inv = inv_b / n_ce;
          for (int j = 0; j < V; ++j) {
            double p = std::exp(static_cast<double>(z[j]) - logz);
            dl[j] = static_cast<S>((p - (j == y ? 1.0 : 0.0)) * inv);
          }
        }
      }
      ce /= n_ce;
    }

    // embedding-consistency term, over the teacher-forced token region: the
    // input at t+1 is a ground-truth token embedding exactly when t+1 is past
    // the prompt, which is also the region the feedback loop traverses.
    double mse = 0.0;
    Mat<S> d_emb_out;
    Mat<S> d_emb_in_direct;
    int mse_begin = std::max(Sl - 1 - static_cast<int>(pr.cont_tokens.size()), 0);
    if (pr.use_mse && mse_begin <= Sl - 2) {
      double n_mse = static_cast<double>(Sl - 1 - mse_begin) * d;
      d_emb_out = Mat<S>(Sl, d);
      d_emb_in_direct = Mat<S>(Sl, d);
      for (int t = mse_begin; t < Sl - 1; ++t) {
        const S* eo = C.emb_out.row(t);
        const S* ei = pr.emb_in.row(t + 1);
        S* deo = d_emb_out.row(t);
        S* dei = d_emb_in_direct.row(t + 1);
        for (int j = 0; j < d; ++j) {
          double diff = static_cast<double>(eo[j]) - static_cast<double>(ei[j]);
          mse += diff * diff;
          if (grads) {
            double g = alpha * 2.0 * diff / n_mse * inv_b;
            deo[j] += static_cast<S>(g);
            dei[j] -= static_cast<S>(g);
          }
        }
      }
      mse /= n_mse;
    }

    out.ce += ce * inv_b;
    out.mse += mse * inv_b;
    out.total += (ce + alpha * mse) * inv_b;

    if (!grads) continue;

    Mat<S> d_emb_in = transformer_bwd(cfg_, params_, C, d_logits, d_emb_out, *grads);
    if (!d_emb_in_direct.empty())
      for (size_t i = 0; i < d_emb_in.size(); ++i) d_emb_in.v[i] += d_emb_in_direct.v[i];

    // route embedding gradients to their sources
    int P = Sl - static_cast<int>(pr.cont_tokens.size());
    // continuation rows -> token embedding
    for (size_t i = 0; i < pr.cont_tokens.size(); ++i) {
      int tok = pr.cont_tokens[i];
      S* g = grads->tok_emb.row(tok);
      const S* r = d_emb_in.row(P + static_cast<int>(i));
      for (int j = 0; j < d; ++j) g[j] += r[j];
    }
    if (P > 0) {
      Mat<S> d_fe_out(P, d);
      for (int i = 0; i < P; ++i)
        std::memcpy(d_fe_out.row(i), d_emb_in.row(i), sizeof(S) * static_cast<size_t>(d));
      switch (pr.kind) {
        case FrontEndKind::TextEmbed: {
          for (int i = 0; i < P; ++i) {
            int tok = pr.prompt_tokens[static_cast<size_t>(i)];
            S* g = grads->tok_emb.row(tok);
            const S* r = d_fe_out.row(i);
            for (int j = 0; j < d; ++j) g[j] += r[j];
          }
          break;
        }
        case FrontEndKind::ClusterEmbedMlp: {
          Mat<S> d_hg(P, d);
          linear_bwd(pr.fe_hg, params_.cl_w2, d_fe_out, d_hg, grads->cl_w2, grads->cl_b2);
          Mat<S> d_h1 = d_hg;
          for (size_t i = 0; i < d_h1.size(); ++i) d_h1.v[i] *= gelu_grad(pr.fe_h1.v[i]);
          Mat<S> d_e(P, d);
          linear_bwd(pr.fe_in, params_.cl_w1, d_h1, d_e, grads->cl_w1, grads->cl_b1);
          for (int i = 0; i < P; ++i) {
            int tok = pr.prompt_tokens[static_cast<size_t>(i)];
            S* g = grads->cl_emb.row(tok);
            const S* r = d_e.row(i);
            for (int j = 0; j < d; ++j) g[j] += r[j];
          }
          break;
        }
        case FrontEndKind::ContinuousAdapter: {
          Mat<S> d_hg(P, d);
          linear_bwd(pr.fe_hg, params_.ad_w2, d_fe_out, d_hg, grads->ad_w2, grads->ad_b2);
          Mat<S> d_h1 = d_hg;
          for (size_t i = 0; i < d_h1.size(); ++i) d_h1.v[i] *= gelu_grad(pr.fe_h1.v[i]);
          Mat<S> d_x(P, cfg_.input_dim);  // feature inputs are constants
          linear_bwd(pr.fe_in, params_.ad_w1, d_h1, d_x, grads->ad_w1, grads->ad_b1);
          break;
        }
      }
    }
  }
  return out;
}

template <typename S>
LossBreakdown ToyLm<S>::example_loss(const LmExample& ex, double alpha) const {
  return loss_and_grads({ex}, alpha, nullptr);
}

template <typename S>
LossBreakdown ToyLm<S>::batch_loss(const std::vector<LmExample>& batch, double alpha) const {
  return loss_and_grads(batch, alpha, nullptr);
}

template <typename S>
double ToyLm<S>::loss_discrete(const std::vector<int>& input_tokens,
                               const std::vector<int>& target_tokens) const {
  if (input_tokens.size() != target_tokens.size())
    throw LengthMismatch(std::to_string(input_tokens.size()) + " inputs vs " +
                         std::to_string(target_tokens.size()) + " targets");
  if (input_tokens.empty()) throw std::invalid_argument("empty sequence");

  FwdCache<S> C;
  run_transformer(cfg_, params_, embed_text(input_tokens), true, C);
  int V = cfg_.vocab_size;
  double ce = 0.0;
  int n_ce = 0;
  for (size_t i = 0; i < target_tokens.size(); ++i) {
    int y = target_tokens[i];
    if (y < 0) continue;
    if (y >= V) throw std::invalid_argument("target token out of range");
    const S* z = C.logits.row(static_cast<int>(i));
    double mx = static_cast<double>(z[0]);
    for (int j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double zsum = 0.0;
    for (int j = 0; j < V; ++j) zsum += std::exp(static_cast<double>(z[j]) - mx);
    ce += mx + std::log(zsum) - static_cast<double>(z[y]);
    n_ce += 1;
  }
  return n_ce > 0 ? ce / n_ce : 0.0;
}

template <typename S>
double ToyLm<S>::loss_continuous(const MatF& speech_frames, const std::vector<int>& target_tokens,
                                 double alpha) const {
  if (cfg_.feedback_mode != FeedbackMode::Continuous)
    throw ModeMismatch("loss_continuous needs feedback_mode = continuous");
  LmExample ex;
  if (speech_frames.rows > 0) {
    ex.prompt.kind = FrontEndKind::ContinuousAdapter;
    ex.prompt.features = speech_frames;
  } else {
    ex.prompt.kind = FrontEndKind::TextEmbed;
  }
  ex.targets = target_tokens;
  LossBreakdown lb = example_loss(ex, alpha);
  return lb.total;
}

template <typename S>
std::vector<std::pair<std::string, Mat<S>>> ToyLm<S>::batch_gradients(
    const std::vector<LmExample>& batch, double alpha) const {
  LmTensors<S> grads = params_;
  grads.visit([](const std::string&, Mat<S>& m) { std::fill(m.v.begin(), m.v.end(), S(0)); });
  loss_and_grads(batch, alpha, &grads);
  std::vector<std::pair<std::string, Mat<S>>> out;
  grads.visit([&](const std::string& name, Mat<S>& m) { out.emplace_back(name, m); });
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

template <typename S>
TrainMetrics ToyLm<S>::train_step(const std::vector<LmExample>& batch, double lr) {
  LmTensors<S> grads = params_;
  grads.visit([](const std::string&, Mat<S>& m) { std::fill(m.v.begin(), m.v.end(), S(0)); });
  LossBreakdown lb = loss_and_grads(batch, cfg_.alpha, &grads);

  // validate every gradient before touching any state
  grads.visit([](const std::string& n, Mat<S>& m) {
    for (size_t i = 0; i < m.size(); ++i)
      if (!std::isfinite(static_cast<double>(m.v[i])))
        throw NonFiniteGradient("tensor " + n + " element " + std::to_string(i));
  });

  step_ += 1;
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double bc1 = 1.0 - std::pow(b1, step_);
  double bc2 = 1.0 - std::pow(b2, step_);

  // walk the four tensor sets in lockstep (visit order is fixed)
  std::vector<Mat<S>*> ps, ms, vs, gs;
  params_.visit([&](const std::string&, Mat<S>& m) { ps.push_back(&m); });
  adam_m_.visit([&](const std::string&, Mat<S>& m) { ms.push_back(&m); });
  adam_v_.visit([&](const std::string&, Mat<S>& m) { vs.push_back(&m); });
  grads.visit([&](const std::string&, Mat<S>& m) { gs.push_back(&m); });

  for (size_t ti = 0; ti < ps.size(); ++ti) {
    Mat<S>& p = *ps[ti];
    Mat<S>& g = *gs[ti];
    Mat<S>& m = *ms[ti];
    Mat<S>& v = *vs[ti];
    for (size_t i = 0; i < p.size(); ++i) {
      double gd = static_cast<double>(g.v[i]);
      double md = b1 * static_cast<double>(m.v[i]) + (1.0 - b1) * gd;
      double vd = b2 * static_cast<double>(v.v[i]) + (1.0 - b2) * gd * gd;
      m.v[i] = static_cast<S>(md);
      v.v[i] = static_cast<S>(vd);
      double update = lr * (md / bc1) / (std::sqrt(vd / bc2) + eps);
      p.v[i] = static_cast<S>(static_cast<double>(p.v[i]) - update);
    }
  }
  return TrainMetrics{lb, step_};
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

template <typename S>
std::vector<int> ToyLm<S>::generate(const Prompt& prompt, int max_new, int eos) const {
  Mat<S> emb = embed_prompt(prompt);
  if (emb.rows < 1) throw std::invalid_argument("generation needs a non-empty prompt");
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_new && emb.rows < cfg_.max_seq) {
    FwdCache<S> C;
    run_transformer(cfg_, params_, emb, true, C);
    int tok = argmax_row(C.logits, emb.rows - 1);
    if (tok == eos) break;
    out.push_back(tok);
    Mat<S> grown(emb.rows + 1, cfg_.d_model);
    std::memcpy(grown.v.data(), emb.v.data(), sizeof(S) * emb.size());
    std::memcpy(grown.row(emb.rows), params_.tok_emb.row(tok),
                sizeof(S) * static_cast<size_t>(cfg_.d_model));
    emb = std::move(grown);
  }
  return out;
}

template <typename S>
std::vector<int> ToyLm<S>::generate_discrete(const std::vector<int>& prompt_tokens, int max_new,
                                             int eos) const {
  Prompt p;
  p.kind = FrontEndKind::TextEmbed;
  p.tokens = prompt_tokens;
  return generate(p, max_new, eos);
}

template <typename S>
std::vector<int> ToyLm<S>::generate_continuous(const MatF& speech_frames, int max_new, int eos) const {
  if (cfg_.feedback_mode != FeedbackMode::Continuous)
    throw ModeMismatch("generate_continuous needs feedback_mode = continuous");
  Mat<S> emb = adapt_features(speech_frames);
  if (emb.rows < 1) throw std::invalid_argument("generation needs a non-empty prompt");
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_new && emb.rows < cfg_.max_seq) {
    FwdCache<S> C;
    run_transformer(cfg_, params_, emb, true, C);
    int last = emb.rows - 1;
    int tok = argmax_row(C.logits, last);
    if (tok == eos) break;
    out.push_back(tok);
    // feed the output embedding straight back as the next input
    Mat<S> grown(emb.rows + 1, cfg_.d_model);
    std::memcpy(grown.v.data(), emb.v.data(), sizeof(S) * emb.size());
    std::memcpy(grown.row(emb.rows), C.emb_out.row(last), sizeof(S) * static_cast<size_t>(cfg_.d_model));
    emb = std::move(grown);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TLM1 checkpoints
// ---------------------------------------------------------------------------

namespace {

const char* feedback_name(FeedbackMode m) {
  return m == FeedbackMode::Discrete ? "discrete" : "continuous";
}
const char* frontend_name(FrontEndKind k) {
  switch (k) {
    case FrontEndKind::TextEmbed: return "text";
    case FrontEndKind::ClusterEmbedMlp: return "cluster";
    case FrontEndKind::ContinuousAdapter: return "adapter";
  }
  return "text";
}
FeedbackMode feedback_from(const std::string& s) {
  if (s == "discrete") return FeedbackMode::Discrete;
  if (s == "continuous") return FeedbackMode::Continuous;
  throw MalformedFile("unknown feedback_mode '" + s + "'");
}
FrontEndKind frontend_from(const std::string& s) {
  if (s == "text") return FrontEndKind::TextEmbed;
  if (s == "cluster") return FrontEndKind::ClusterEmbedMlp;
  if (s == "adapter") return FrontEndKind::ContinuousAdapter;
  throw MalformedFile("unknown front_end '" + s + "'");
}

void put_u32s(std::string& out, uint32_t x) {
  char b[4] = {static_cast<char>(x & 0xFF), static_cast<char>((x >> 8) & 0xFF),
               static_cast<char>((x >> 16) & 0xFF), static_cast<char>((x >> 24) & 0xFF)};
  out.append(b, 4);
}

}  // namespace

template <typename S>
void ToyLm<S>::save(const std::string& path) const {
  json cfg{{"n_layers", cfg_.n_layers},
           {"d_model", cfg_.d_model},
           {"n_heads", cfg_.n_heads},
           {"d_ff", cfg_.d_ff},
           {"vocab_size", cfg_.vocab_size},
           {"max_seq", cfg_.max_seq},
           {"feedback_mode", feedback_name(cfg_.feedback_mode)},
           {"alpha", cfg_.alpha},
           {"front_end", frontend_name(cfg_.front_end)},
           {"cluster_count", cfg_.cluster_count},
           {"input_dim", cfg_.input_dim},
           {"step", step_},
           {"seed", seed_}};
  std::string js = cfg.dump();

  std::string out;
  out.append("TLM1");
  put_u32s(out, static_cast<uint32_t>(js.size()));
  out.append(js);

  std::vector<std::pair<std::string, const Mat<S>*>> tensors;
  params_.visit([&](const std::string& n, const Mat<S>& m) { tensors.emplace_back(n, &m); });
  adam_m_.visit([&](const std::string& n, const Mat<S>& m) { tensors.emplace_back("m." + n, &m); });
  adam_v_.visit([&](const std::string& n, const Mat<S>& m) { tensors.emplace_back("v." + n, &m); });

  put_u32s(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32s(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32s(out, static_cast<uint32_t>(m->rows));
    put_u32s(out, static_cast<uint32_t>(m->cols));
    for (size_t i = 0; i < m->size(); ++i) {
      float f = static_cast<float>(m->v[i]);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32s(out, bits);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

template <typename S>
ToyLm<S> ToyLm<S>::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string bytes = ss.str();

  size_t pos = 0;
  auto need = [&](size_t n) {
    if (pos + n > bytes.size())
      throw TruncatedFile(path + ": need " + std::to_string(n) + " bytes at offset " + std::to_string(pos));
  };
  auto u32 = [&]() {
    need(4);
    uint32_t x = 0;
    for (int i = 3; i >= 0; --i) x = (x << 8) | static_cast<unsigned char>(bytes[pos + static_cast<size_t>(i)]);
    pos += 4;
    return x;
  };

  need(4);
  if (bytes.compare(0, 4, "TLM1") != 0) throw BadMagic(path + ": expected \"TLM1\" at byte offset 0");
  pos = 4;
  uint32_t jlen = u32();
  need(jlen);
  json cfg_json;
  try {
    cfg_json = json::parse(bytes.substr(pos, jlen));
  } catch (const json::exception& e) {
    throw MalformedFile(path + ": config block: " + e.what());
  }
  pos += jlen;

  LmConfig cfg;
  cfg.n_layers = cfg_json.at("n_layers").get<int>();
  cfg.d_model = cfg_json.at("d_model").get<int>();
  cfg.n_heads = cfg_json.at("n_heads").get<int>();
  cfg.d_ff = cfg_json.at("d_ff").get<int>();
  cfg.vocab_size = cfg_json.at("vocab_size").get<int>();
  cfg.max_seq = cfg_json.at("max_seq").get<int>();
  cfg.feedback_mode = feedback_from(cfg_json.at("feedback_mode").get<std::string>());
  cfg.alpha = cfg_json.at("alpha").get<double>();
  cfg.front_end = frontend_from(cfg_json.at("front_end").get<std::string>());
  cfg.cluster_count = cfg_json.at("cluster_count").get<int>();
  cfg.input_dim = cfg_json.at("input_dim").get<int>();

  ToyLm<S> lm(cfg, cfg_json.at("seed").get<uint64_t>());
  lm.step_ = cfg_json.at("step").get<int>();

  uint32_t n_tensors = u32();
  for (uint32_t ti = 0; ti < n_tensors; ++ti) {
    uint32_t nlen = u32();
    need(nlen);
    std::string name = bytes.substr(pos, nlen);
    pos += nlen;
    uint32_t rows = u32(), cols = u32();

    Mat<S>* target = nullptr;
    auto locate = [&](LmTensors<S>& set, const std::string& key) {
      set.visit([&](const std::string& n, Mat<S>& m) {
        if (n == key) target = &m;
      });
    };
    if (name.rfind("m.", 0) == 0)
      locate(lm.adam_m_, name.substr(2));
    else if (name.rfind("v.", 0) == 0)
      locate(lm.adam_v_, name.substr(2));
    else
      locate(lm.params_, name);
    if (!target) throw MalformedFile(path + ": unknown tensor '" + name + "'");
    if (target->rows != static_cast<int>(rows) || target->cols != static_cast<int>(cols))
      throw MalformedFile(path + ": tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", expected " + std::to_string(target->rows) + "x" +
                          std::to_string(target->cols));
    for (size_t i = 0; i < target->size(); ++i) {
      uint32_t bits = u32();
      float x;
      std::memcpy(&x, &bits, 4);
      target->v[i] = static_cast<S>(x);
    }
  }
  if (pos != bytes.size())
    throw MalformedFile(path + ": " + std::to_string(bytes.size() - pos) + " trailing bytes");
  return lm;
}

template class ToyLm<float>;
template class ToyLm<double>;

}  // namespace srtk
