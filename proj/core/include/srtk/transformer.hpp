#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srtk/common.hpp"
#include "srtk/feature_io.hpp"

namespace srtk {

// ---------------------------------------------------------------------------
// Character tokenizer: fixed specials then the task character set.
// ---------------------------------------------------------------------------

struct TextVocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::string chars;  // e.g. "A".."Z" plus ' '

  explicit TextVocab(std::string charset = "") : chars(std::move(charset)) {}

  int size() const { return 4 + static_cast<int>(chars.size()); }
  int id(char c) const {
    size_t i = chars.find(c);
    return i == std::string::npos ? kUnk : 4 + static_cast<int>(i);
  }
  std::vector<int> encode(const std::string& text, bool add_eos = false) const {
    std::vector<int> out;
    out.reserve(text.size() + 1);
    for (char c : text) out.push_back(id(c));
    if (add_eos) out.push_back(kEos);
    return out;
  }
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int t : ids)
      if (t >= 4 && t < size()) out.push_back(chars[static_cast<size_t>(t - 4)]);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Model configuration.
// ---------------------------------------------------------------------------

enum class FeedbackMode { Discrete, Continuous };
enum class FrontEndKind { TextEmbed, ClusterEmbedMlp, ContinuousAdapter };

struct LmConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;  // output/text vocabulary
  int max_seq = 160;
  FeedbackMode feedback_mode = FeedbackMode::Discrete;
  double alpha = 0.0;  // weight of the embedding-consistency term

  FrontEndKind front_end = FrontEndKind::TextEmbed;
  int cluster_count = 0;  // ClusterEmbedMlp: input token range
  int input_dim = 0;      // ContinuousAdapter: feature dimensionality

  void validate() const;
};

// A training or decoding example: a prompt in one of the three input spaces,
// and the text-token continuation (ending with eos for open-ended decoding).
struct Prompt {
  FrontEndKind kind = FrontEndKind::TextEmbed;
  std::vector<int> tokens;  // TextEmbed or ClusterEmbedMlp
  MatF features;            // ContinuousAdapter
};

struct LmExample {
  Prompt prompt;
  std::vector<int> targets;
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double mse = 0.0;  // unweighted; total = ce + alpha * mse
};

struct TrainMetrics {
  LossBreakdown loss;
  int step = 0;
};

template <typename S>
struct ForwardOut {
  Mat<S> logits;   // S x vocab_size
  Mat<S> emb_out;  // S x d_model, the pre-projection hidden state
};

// Every parameter of the model, visitable in a fixed order by name. Unused
// front-end tensors stay empty and are skipped by visit().
template <typename S>
struct LmTensors {
  struct Layer {
    Mat<S> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<S> ln2_g, ln2_b, w1, b1, w2, b2;
  };

  Mat<S> tok_emb, pos_emb;
  std::vector<Layer> layers;
  Mat<S> lnf_g, lnf_b, out_w, out_b;
  Mat<S> cl_emb, cl_w1, cl_b1, cl_w2, cl_b2;  // cluster front-end
  Mat<S> ad_w1, ad_b1, ad_w2, ad_b2;          // continuous adapter

  template <typename F>
  void visit(F&& f) {
    auto v = [&](const char* name, Mat<S>& m) {
      if (!m.empty()) f(std::string(name), m);
    };
    v("tok_emb", tok_emb);
    v("pos_emb", pos_emb);
    for (size_t i = 0; i < layers.size(); ++i) {
      std::string p = "layer" + std::to_string(i) + ".";
      auto vl = [&](const char* name, Mat<S>& m) { f(p + name, m); };
      Layer& L = layers[i];
      vl("ln1.g", L.ln1_g);
      vl("ln1.b", L.ln1_b);
      vl("attn.wq", L.wq);
      vl("attn.bq", L.bq);
      vl("attn.wk", L.wk);
      vl("attn.bk", L.bk);
      vl("attn.wv", L.wv);
      vl("attn.bv", L.bv);
      vl("attn.wo", L.wo);
      vl("attn.bo", L.bo);
      vl("ln2.g", L.ln2_g);
      vl("ln2.b", L.ln2_b);
      vl("mlp.w1", L.w1);
      vl("mlp.b1", L.b1);
      vl("mlp.w2", L.w2);
      vl("mlp.b2", L.b2);
    }
    v("ln_f.g", lnf_g);
    v("ln_f.b", lnf_b);
    v("out.w", out_w);
    v("out.b", out_b);
    v("cluster.emb", cl_emb);
    v("cluster.w1", cl_w1);
    v("cluster.b1", cl_b1);
    v("cluster.w2", cl_w2);
    v("cluster.b2", cl_b2);
    v("adapter.w1", ad_w1);
    v("adapter.b1", ad_b1);
    v("adapter.w2", ad_w2);
    v("adapter.b2", ad_b2);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<LmTensors*>(this)->visit([&](const std::string& n, Mat<S>& m) {
      f(n, static_cast<const Mat<S>&>(m));
    });
  }
};

// ---------------------------------------------------------------------------
// Decoder-only transformer with manual backprop. Pre-norm blocks, learned
// positional embeddings, GELU feed-forwards, greedy decoding. S = float for
// normal runs, double for gradient checking.
//
// Sequence assembly for an example with prompt length P and C targets:
//   inputs  = front_end(prompt) ++ text_embed(targets[0..C-1))
//   CE      = position P-1+i predicts targets[i]  (prompt positions carry none)
// In continuous feedback mode the loss adds alpha * MSE(emb_out[t],
// emb_in[t+1]) as a per-element mean over the positions whose next input is a
// teacher-forced token embedding (t from P-1 to S-2) -- the region the
// feedback loop traverses at generation time. emb_in is the front-end output
// before positional embeddings.
// ---------------------------------------------------------------------------

template <typename S>
class ToyLm {
 public:
  ToyLm(const LmConfig& cfg, uint64_t seed);

  const LmConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }
  int step() const { return step_; }

  LmTensors<S>& tensors() { return params_; }
  const LmTensors<S>& tensors() const { return params_; }

  // Front ends (forward only; training routes gradients internally).
  Mat<S> embed_text(const std::vector<int>& tokens) const;
  Mat<S> embed_clusters(const std::vector<int>& cluster_tokens) const;
  Mat<S> adapt_features(const MatF& frames) const;
  Mat<S> embed_prompt(const Prompt& p) const;

  // Causal transformer pass over ready-made embeddings.
  ForwardOut<S> forward(const Mat<S>& prefix_embeddings, bool causal = true) const;

  // Mean cross-entropy of input_tokens (text-embedded) against aligned
  // target_tokens; -1 marks positions without a target.
  double loss_discrete(const std::vector<int>& input_tokens, const std::vector<int>& target_tokens) const;

  // CE over the text continuation plus alpha * MSE(emb_out, next emb_in).
  // speech_frames may be empty (pure text sequence). Continuous mode only.
  double loss_continuous(const MatF& speech_frames, const std::vector<int>& target_tokens,
                         double alpha) const;

  LossBreakdown example_loss(const LmExample& ex, double alpha) const;
  LossBreakdown batch_loss(const std::vector<LmExample>& batch, double alpha) const;

  // Analytic gradients of batch_loss, as (tensor name, gradient) pairs in
  // the visit() order.
  std::vector<std::pair<std::string, Mat<S>>> batch_gradients(const std::vector<LmExample>& batch,
                                                              double alpha) const;

  // One Adam update (betas 0.9/0.999, eps 1e-8) on the mean batch loss with
  // the model's configured alpha. Throws NonFiniteGradient.
  TrainMetrics train_step(const std::vector<LmExample>& batch, double lr);

  // Greedy decoding with discrete re-embedding of emitted tokens.
  std::vector<int> generate(const Prompt& prompt, int max_new, int eos) const;
  std::vector<int> generate_discrete(const std::vector<int>& prompt_tokens, int max_new, int eos) const;

  // Greedy decoding feeding emb_out straight back as the next input
  // embedding. Continuous mode only.
  std::vector<int> generate_continuous(const MatF& speech_frames, int max_new, int eos) const;

  void save(const std::string& path) const;
  static ToyLm load(const std::string& path);

 private:
  struct Prepared;

  Prepared prepare(const LmExample& ex) const;
  LossBreakdown loss_and_grads(const std::vector<LmExample>& batch, double alpha,
                               LmTensors<S>* grads) const;

  LmConfig cfg_;
  uint64_t seed_ = 0;
  int step_ = 0;

  LmTensors<S> params_, adam_m_, adam_v_;
};

using ToyLmF = ToyLm<float>;
using ToyLmD = ToyLm<double>;

extern template class ToyLm<float>;
extern template class ToyLm<double>;

// --- TLM1 checkpoint format -------------------------------------------------
// magic "TLM1" | u32 json_len | config JSON | u32 n_tensors |
// per tensor: u32 name_len, name, u32 rows, u32 cols, rows*cols f32 LE.
// Adam moments ride along as "m.<name>" / "v.<name>"; step in the JSON.

}  // namespace srtk
