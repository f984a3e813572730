#include "srtk/wer.hpp"

#include <sstream>

namespace srtk {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> words;
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

namespace {

struct Cell {
  int cost = 0;
  int s = 0, d = 0, i = 0;
};

}  // namespace

WerReport wer_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw EmptyReference("reference has no words");
  size_t R = ref.size(), H = hyp.size();

  // Forward count propagation: each cell carries its operation counts, so the
  // tie-break (substitution > deletion > insertion) fixes them uniquely.
  std::vector<std::vector<Cell>> dp(R + 1, std::vector<Cell>(H + 1));
  for (size_t i = 1; i <= R; ++i) dp[i][0] = Cell{static_cast<int>(i), 0, static_cast<int>(i), 0};
  for (size_t j = 1; j <= H; ++j) dp[0][j] = Cell{static_cast<int>(j), 0, 0, static_cast<int>(j)};

  for (size_t i = 1; i <= R; ++i) {
    for (size_t j = 1; j <= H; ++j) {
      bool match = ref[i - 1] == hyp[j - 1];
      Cell sub = dp[i - 1][j - 1];
      sub.cost += match ? 0 : 1;
      sub.s += match ? 0 : 1;
      Cell del = dp[i - 1][j];
      del.cost += 1;
      del.d += 1;
      Cell ins = dp[i][j - 1];
      ins.cost += 1;
      ins.i += 1;
      // preference order at equal cost: substitution/match, deletion, insertion
      Cell best = sub;
      if (del.cost < best.cost) best = del;
      if (ins.cost < best.cost) best = ins;
      dp[i][j] = best;
    }
  }

  const Cell& c = dp[R][H];
  WerReport rep;
  rep.substitutions = c.s;
  rep.deletions = c.d;
  rep.insertions = c.i;
  rep.ref_words = static_cast<int>(R);
  rep.wer = static_cast<double>(c.s + c.d + c.i) / static_cast<double>(R);
  return rep;
}

WerReport wer(const std::string& ref, const std::string& hyp) {
  return wer_words(split_words(ref), split_words(hyp));
}

}  // namespace srtk
