#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "srtk/common.hpp"

namespace srtk {

// Count-based backoff n-gram model over string tokens, log10 internally
// (ARPA convention). Sentence boundaries use "<s>" / "</s>"; unknown tokens
// score through "<unk>".

inline const std::string kBos = "<s>";
inline const std::string kEos = "</s>";
inline const std::string kUnk = "<unk>";

struct NGramEntry {
  double log10_prob = 0.0;
  std::optional<double> log10_backoff;  // present when the entry serves as a context
};

enum class Smoothing { AddK, WittenBell };

struct SmoothingSpec {
  Smoothing kind = Smoothing::AddK;
  double k = 1.0;  // AddK only

  static SmoothingSpec addk(double k) { return {Smoothing::AddK, k}; }
  static SmoothingSpec witten_bell() { return {Smoothing::WittenBell, 0.0}; }
};

class NGramModel {
 public:
  int order() const { return static_cast<int>(tables_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }

  // log10 P(token | context) via the standard backoff chain. The context is
  // trimmed to the last order-1 tokens; unknown tokens map to <unk>.
  double log10_cond(const std::vector<std::string>& context, const std::string& token) const;

  // log10 probability of the token sequence under the chain rule, each token
  // conditioned on all preceding ones. No implicit boundary markers.
  double score_sequence(const std::vector<std::string>& tokens) const;

  // Drops the highest-order table and the backoff weights of the new top
  // level. The result scores exactly like a model trained with order-1.
  NGramModel truncated() const;

  const NGramEntry* find(const std::vector<std::string>& ngram) const;

 private:
  friend NGramModel train_ngram(const std::vector<std::vector<std::string>>&, int, const SmoothingSpec&);
  friend NGramModel read_arpa(const std::string&);
  friend void write_arpa(const NGramModel&, const std::string&);

  std::string map_token(const std::string& tok) const;

  // tables_[n-1]: n-gram table keyed by tokens joined with '\x1f'.
  std::vector<std::unordered_map<std::string, NGramEntry>> tables_;
  std::vector<std::string> vocab_;
  bool has_unk_ = false;
};

// MLE counts with add-k or Witten-Bell smoothing. Each corpus sentence is
// padded with <s> / </s>; the vocabulary is the corpus tokens plus the three
// markers. For every context the conditional distribution sums to 1.
NGramModel train_ngram(const std::vector<std::vector<std::string>>& corpus, int order,
                       const SmoothingSpec& smoothing);

// Standard ARPA text format.
NGramModel read_arpa(const std::string& path);
void write_arpa(const NGramModel& lm, const std::string& path);

// Convenience: one token per character, spaces rendered as "<sp>" tokens.
std::vector<std::string> char_tokens(const std::string& text);

}  // namespace srtk
