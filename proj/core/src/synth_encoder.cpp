#include "srtk/synth_encoder.hpp"

#include <cmath>

namespace srtk {

namespace {

constexpr uint64_t kTemplateSalt = 0x7E3A91C5D208B4F1ULL;
constexpr uint64_t kVariantSalt = 0x3C8D22FA1E65B907ULL;
constexpr uint64_t kNoiseSalt = 0x1B45F09A66C3D7E2ULL;
constexpr double kTemplateGain = 4.0;
constexpr double kVariantGain = 1.0;
constexpr int kVariantCount = 3;
constexpr double kPeakProb = 0.9;

int check_char(char c, size_t pos) {
  size_t idx = synth_charset().find(c);
  if (idx == std::string::npos)
    throw UnknownCharacter(std::string("'") + c + "' at position " + std::to_string(pos));
  return static_cast<int>(idx);
}

// 2 or 3 frames per character, decided by the utterance noise stream.
int frames_for_char(Rng& rng) { return 2 + static_cast<int>(rng.next_u64() % 2); }

}  // namespace

const std::string& synth_charset() {
  static const std::string cs = "ABCDEFGHIJKLMNOPQRSTUVWXYZ ";
  return cs;
}

Vocabulary synth_ctc_vocabulary() {
  Vocabulary v;
  v.symbols.push_back("<blk>");
  for (char c : synth_charset()) v.symbols.push_back(std::string(1, c));
  v.blank_index = 0;
  v.space_index = v.size() - 1;
  return v;
}

double synth_effective_sigma(double noise_sigma, uint32_t layer_tag) {
  return noise_sigma * std::pow(0.75, static_cast<double>(layer_tag) / 8.0);
}

namespace {

std::vector<float> unit_vector(uint64_t seed, int dim, double gain) {
  Rng rng(seed);
  std::vector<double> t(static_cast<size_t>(dim));
  double norm2 = 0.0;
  for (int i = 0; i < dim; ++i) {
    t[static_cast<size_t>(i)] = rng.gaussian();
    norm2 += t[static_cast<size_t>(i)] * t[static_cast<size_t>(i)];
  }
  double inv = gain / std::sqrt(norm2);
  std::vector<float> out(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) out[static_cast<size_t>(i)] = static_cast<float>(t[static_cast<size_t>(i)] * inv);
  return out;
}

}  // namespace

std::vector<float> synth_char_template(char c, uint64_t seed, int dim) {
  return unit_vector(mix_seed(seed ^ kTemplateSalt, static_cast<uint64_t>(static_cast<unsigned char>(c))),
                     dim, kTemplateGain);
}

std::vector<float> synth_char_variant(char c, int variant, uint64_t seed, int dim) {
  uint64_t key = static_cast<uint64_t>(static_cast<unsigned char>(c)) * 16 +
                 static_cast<uint64_t>(variant % kVariantCount);
  return unit_vector(mix_seed(seed ^ kVariantSalt, key), dim, kVariantGain);
}

FeatureMatrix synth_encode_continuous(const std::string& text, const SynthOptions& opts,
                                      std::vector<int>* char_of_frame) {
  if (text.empty()) throw std::invalid_argument("synth_encode: empty text");
  double sigma = synth_effective_sigma(opts.noise_sigma, opts.layer_tag);
  Rng noise(mix_seed(mix_seed(opts.seed ^ kNoiseSalt, fnv1a(text)), opts.layer_tag));

  if (char_of_frame) char_of_frame->clear();
  std::vector<std::vector<float>> rows;
  for (size_t i = 0; i < text.size(); ++i) {
    check_char(text[i], i);
    std::vector<float> tmpl = synth_char_template(text[i], opts.seed, opts.dim);
    // position-keyed sub-character variant: the synthetic analog of phonetic
    // context, so cluster counts above the character inventory still have
    // structure to resolve; variants are text-determined, hence identical
    // across noise levels of the same utterance
    std::vector<float> var = synth_char_variant(text[i], static_cast<int>(i % kVariantCount),
                                                opts.seed, opts.dim);
    int n = frames_for_char(noise);
    for (int f = 0; f < n; ++f) {
      std::vector<float> row(opts.dim);
      for (int d = 0; d < opts.dim; ++d)
        row[d] = static_cast<float>(tmpl[d] + var[d] + sigma * noise.gaussian());
      rows.push_back(std::move(row));
      if (char_of_frame) char_of_frame->push_back(static_cast<int>(i));
    }
  }

  FeatureMatrix m;
  m.frames = MatF(static_cast<int>(rows.size()), opts.dim);
  for (size_t r = 0; r < rows.size(); ++r)
    for (int d = 0; d < opts.dim; ++d) m.frames.at(static_cast<int>(r), d) = rows[r][d];
  m.layer_tag = opts.layer_tag;
  return m;
}

CtcLattice synth_encode_ctc(const std::string& text, const SynthOptions& opts) {
  if (text.empty()) throw std::invalid_argument("synth_encode: empty text");
  double sigma = synth_effective_sigma(opts.noise_sigma, opts.layer_tag);
  Rng noise(mix_seed(mix_seed(opts.seed ^ kNoiseSalt, fnv1a(text) ^ 0x5A5AULL), opts.layer_tag));

  CtcLattice lat;
  lat.vocab = synth_ctc_vocabulary();
  int V = lat.vocab.size();
  double peak_logit = std::log(kPeakProb);
  double rest_logit = std::log((1.0 - kPeakProb) / (V - 1));

  // Frame plan: per character, one blank frame then 2..3 character frames.
  std::vector<int> dominant;
  for (size_t i = 0; i < text.size(); ++i) {
    int sym = 1 + check_char(text[i], i);  // vocab index (blank is 0)
    dominant.push_back(0);
    int n = frames_for_char(noise);
    for (int f = 0; f < n; ++f) dominant.push_back(sym);
  }

  lat.log_posteriors = MatD(static_cast<int>(dominant.size()), V);
  for (size_t t = 0; t < dominant.size(); ++t) {
    std::vector<double> logits(V);
    for (int v = 0; v < V; ++v) {
      logits[v] = (v == dominant[t] ? peak_logit : rest_logit) + sigma * noise.gaussian();
    }
    // log-softmax in double so every row normalizes exactly
    double mx = logits[0];
    for (int v = 1; v < V; ++v) mx = std::max(mx, logits[v]);
    double lse = 0.0;
    for (int v = 0; v < V; ++v) lse += std::exp(logits[v] - mx);
    lse = mx + std::log(lse);
    for (int v = 0; v < V; ++v)
      lat.log_posteriors.at(static_cast<int>(t), v) = static_cast<float>(logits[v] - lse);
  }
  return lat;
}

}  // namespace srtk
