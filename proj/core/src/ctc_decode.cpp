#include "srtk/ctc_decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace srtk {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Renders a vocab symbol sequence as text. Space symbols become ' '.
std::string render(const std::vector<int>& syms, const Vocabulary& vocab) {
  std::string text;
  for (int s : syms) {
    if (vocab.space_index && s == *vocab.space_index)
      text.push_back(' ');
    else
      text += vocab.symbols[static_cast<size_t>(s)];
  }
  return text;
}

}  // namespace

DecodedHyp ctc_greedy(const CtcLattice& lat) {
  int T = lat.num_frames(), V = lat.log_posteriors.cols;
  int blank = lat.vocab.blank_index.value_or(-1);

  DecodedHyp hyp;
  std::vector<int> syms;
  int prev = -1;
  double run_sum = 0.0;
  int run_len = 0;
  bool run_is_space = false;

  auto flush_run = [&]() {
    if (run_len > 0 && !run_is_space) hyp.per_char_prob.push_back(run_sum / run_len);
    run_sum = 0.0;
    run_len = 0;
  };

  for (int t = 0; t < T; ++t) {
    int best = 0;
    for (int v = 1; v < V; ++v)
      if (lat.log_posteriors.at(t, v) > lat.log_posteriors.at(t, best)) best = v;
    hyp.total_log_score += lat.log_posteriors.at(t, best);
    if (best == blank) {
      flush_run();
      prev = -1;
      continue;
    }
    if (best == prev) {
      run_sum += std::exp(lat.log_posteriors.at(t, best));
      run_len += 1;
      continue;
    }
    flush_run();
    syms.push_back(best);
    run_sum = std::exp(lat.log_posteriors.at(t, best));
    run_len = 1;
    run_is_space = lat.vocab.space_index && best == *lat.vocab.space_index;
    prev = best;
  }
  flush_run();
  hyp.text = render(syms, lat.vocab);
  return hyp;
}

namespace {

// Per-prefix search state. CTC mass is split into paths ending in blank and
// paths ending in the prefix's last symbol.
struct PrefixState {
  double lp_blank = kNegInf;
  double lp_nonblank = kNegInf;
  double lm_ln = 0.0;  // natural-log LM score of the prefix
  int n_words = 0;
  std::vector<double> char_probs;
  double best_creation_mass = kNegInf;  // strongest single contribution seen

  double lp_total() const { return log_add_exp(lp_blank, lp_nonblank); }
};

struct Candidate {
  std::vector<int> syms;
  PrefixState st;
};

double fused_score(const PrefixState& st, const BeamOptions& opts) {
  return st.lp_total() + opts.lm_weight * st.lm_ln + opts.word_bonus * st.n_words;
}

}  // namespace

NBestList prefix_beam_decode(const CtcLattice& lat, const NGramModel* lm, const BeamOptions& opts) {
  if (lat.num_frames() < 1 || lat.log_posteriors.cols < 1) throw EmptyLattice("lattice has no frames");
  if (opts.beam < 1) throw std::invalid_argument("beam must be >= 1");
  if (opts.nbest < 1 || opts.nbest > opts.beam)
    throw std::invalid_argument("nbest must be in [1, beam]");
  if (!lat.vocab.blank_index) throw MalformedFile("prefix_beam_decode needs a blank symbol");

  int T = lat.num_frames(), V = lat.log_posteriors.cols;
  int blank = *lat.vocab.blank_index;
  int space = lat.vocab.space_index.value_or(-1);

  // ln P_lm(token | <s>, prefix tokens), via the char-token mapping. sym < 0
  // scores the sentence end.
  auto lm_increment = [&](const std::vector<int>& prefix_syms, int sym) -> double {
    if (!lm || opts.lm_weight == 0.0) return 0.0;
    std::vector<std::string> ctx;
    ctx.reserve(prefix_syms.size() + 1);
    ctx.push_back(kBos);
    for (int s : prefix_syms)
      ctx.push_back(s == space ? "<sp>" : lat.vocab.symbols[static_cast<size_t>(s)]);
    std::string tok = sym < 0 ? kEos : (sym == space ? "<sp>" : lat.vocab.symbols[static_cast<size_t>(sym)]);
    return lm->log10_cond(ctx, tok) * std::log(10.0);
  };

  std::map<std::vector<int>, PrefixState> beam;
  PrefixState root;
  root.lp_blank = 0.0;  // empty prefix, no frames consumed
  beam.emplace(std::vector<int>{}, root);

  for (int t = 0; t < T; ++t) {
    std::map<std::vector<int>, PrefixState> next;

    // Same prefix surviving the frame (blank or repeated last symbol): carry
    // its bookkeeping over and remember the mass it arrived with, so a
    // competing creation path only replaces char_probs when stronger.
    auto keep = [&](const std::vector<int>& syms, const PrefixState& st, double mass) -> PrefixState& {
      auto it = next.find(syms);
      if (it == next.end()) {
        PrefixState fresh = st;
        fresh.lp_blank = kNegInf;
        fresh.lp_nonblank = kNegInf;
        fresh.best_creation_mass = mass;
        it = next.emplace(syms, std::move(fresh)).first;
      }
      return it->second;
    };

    for (const auto& [syms, st] : beam) {
      double lp_tot = st.lp_total();
      int last = syms.empty() ? -1 : syms.back();

      // blank keeps the prefix, moves all mass to the blank stream
      {
        double add = lp_tot + lat.log_posteriors.at(t, blank);
        PrefixState& nst = keep(syms, st, add);
        nst.lp_blank = log_add_exp(nst.lp_blank, add);
      }

      for (int v = 0; v < V; ++v) {
        if (v == blank) continue;
        double lp_v = lat.log_posteriors.at(t, v);

        if (v == last && st.lp_nonblank != kNegInf) {
          // repeated symbol merges into the same prefix's non-blank stream
          double add = st.lp_nonblank + lp_v;
          PrefixState& nst = keep(syms, st, add);
          nst.lp_nonblank = log_add_exp(nst.lp_nonblank, add);
        }

        // extend the prefix with v: all mass if v != last, blank stream only
        // otherwise (a repeat needs a separating blank to emit twice)
        double src = (v == last) ? st.lp_blank : lp_tot;
        if (src == kNegInf) continue;
        double add = src + lp_v;

        std::vector<int> ext = syms;
        ext.push_back(v);
        auto it = next.find(ext);
        if (it == next.end()) {
          PrefixState fresh;
          fresh.lm_ln = st.lm_ln + lm_increment(syms, v);
          fresh.n_words = st.n_words;
          if (v != space && (syms.empty() || syms.back() == space)) fresh.n_words += 1;
          it = next.emplace(std::move(ext), std::move(fresh)).first;
        }
        PrefixState& est = it->second;
        est.lp_nonblank = log_add_exp(est.lp_nonblank, add);
        if (add > est.best_creation_mass) {
          est.best_creation_mass = add;
          est.char_probs = st.char_probs;
          if (v != space) est.char_probs.push_back(std::exp(lp_v));
        }
      }
    }

    // prune to the beam width
    std::vector<std::pair<std::vector<int>, PrefixState>> ranked(next.begin(), next.end());
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      double sa = fused_score(a.second, opts), sb = fused_score(b.second, opts);
      if (sa != sb) return sa > sb;
      return a.first < b.first;
    });
    if (static_cast<int>(ranked.size()) > opts.beam) ranked.resize(static_cast<size_t>(opts.beam));
    beam.clear();
    for (auto& [syms, st] : ranked) beam.emplace(std::move(syms), st);
  }

  // Final ranking folds in the sentence-end LM probability.
  std::vector<std::pair<std::vector<int>, PrefixState>> finals(beam.begin(), beam.end());
  for (auto& [syms, st] : finals) st.lm_ln += lm_increment(syms, -1);
  std::sort(finals.begin(), finals.end(), [&](const auto& a, const auto& b) {
    double sa = fused_score(a.second, opts), sb = fused_score(b.second, opts);
    if (sa != sb) return sa > sb;
    return render(a.first, lat.vocab) < render(b.first, lat.vocab);
  });

  NBestList out;
  for (const auto& [syms, st] : finals) {
    if (out.n() >= opts.nbest) break;
    DecodedHyp hyp;
    hyp.text = render(syms, lat.vocab);
    hyp.per_char_prob = st.char_probs;
    hyp.total_log_score = fused_score(st, opts);
    out.hyps.push_back(std::move(hyp));
  }
  return out;
}

}  // namespace srtk
