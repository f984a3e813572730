#pragma once

#include <string>
#include <vector>

#include "srtk/feature_io.hpp"
#include "srtk/ngram.hpp"

namespace srtk {

// One decoding hypothesis. per_char_prob holds a confidence in (0, 1] for
// every non-space character of text, in order; spaces carry no entry.
struct DecodedHyp {
  std::string text;
  std::vector<double> per_char_prob;
  double total_log_score = 0.0;  // natural log
};

struct NBestList {
  std::vector<DecodedHyp> hyps;  // descending total_log_score, ties by text
  int n() const { return static_cast<int>(hyps.size()); }
};

// Per-frame argmax, collapse repeats, drop blanks. Character confidences are
// the mean posterior of the frames that emitted the character; the score is
// the log probability of the greedy frame path.
DecodedHyp ctc_greedy(const CtcLattice& lat);

struct BeamOptions {
  int beam = 8;
  double lm_weight = 0.0;
  double word_bonus = 0.0;
  int nbest = 1;
};

// CTC prefix beam search over (blank, non-blank) probability mass per text
// prefix, with optional shallow fusion:
//   score = ln P_ctc + lm_weight * ln P_lm + word_bonus * |words|
// The language model sees char_tokens() of the prefix conditioned on <s>;
// the final ranking adds the </s> probability. With beam >= V^T and no LM
// the search is exact. Throws EmptyLattice on a zero-frame lattice.
NBestList prefix_beam_decode(const CtcLattice& lat, const NGramModel* lm, const BeamOptions& opts);

}  // namespace srtk
