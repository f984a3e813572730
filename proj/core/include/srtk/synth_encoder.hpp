#pragma once

#include <string>

#include "srtk/feature_io.hpp"

namespace srtk {

// Desk-scale stand-in for a pretrained speech encoder. Text over the fixed
// character set (A-Z and space) is rendered as frames:
//
//   continuous  - 2..3 frames per character, each a fixed per-character
//                 template vector plus Gaussian noise. Templates depend only
//                 on (seed, codepoint), so every utterance produced with the
//                 same seed shares them and clustering the frames recovers
//                 characters exactly when noise_sigma = 0.
//   ctc lattice - per character one blank-dominated frame followed by 2..3
//                 frames dominated by that character; noise perturbs the
//                 logits before renormalization. With noise_sigma = 0 the
//                 greedy decode of the lattice equals the input text.
//
// Outputs are deterministic given (text, options); noise streams are derived
// from the seed and the text so distinct utterances get distinct noise.
// Higher layer_tag values attenuate the noise (the synthetic analog of
// deeper, smoother encoder layers).

struct SynthOptions {
  uint64_t seed = 0;
  double noise_sigma = 0.0;
  uint32_t layer_tag = 0;
  int dim = 16;  // continuous feature dimensionality
};

const std::string& synth_charset();  // "ABC...Z "

// The lattice vocabulary: "<blk>" at index 0, then A-Z, then " ".
Vocabulary synth_ctc_vocabulary();

// char_of_frame, when given, receives the text position each frame renders.
FeatureMatrix synth_encode_continuous(const std::string& text, const SynthOptions& opts,
                                      std::vector<int>* char_of_frame = nullptr);
CtcLattice synth_encode_ctc(const std::string& text, const SynthOptions& opts);

// The per-character template the continuous mode builds frames from, and the
// smaller position-keyed variant offset layered on top of it (three variants
// per character; frame = template + variant + noise).
std::vector<float> synth_char_template(char c, uint64_t seed, int dim);
std::vector<float> synth_char_variant(char c, int variant, uint64_t seed, int dim);

// Effective noise after layer attenuation: sigma * 0.75^(layer_tag / 8).
double synth_effective_sigma(double noise_sigma, uint32_t layer_tag);

}  // namespace srtk
