#include "srtk/prompt.hpp"

#include <cmath>
#include <sstream>

namespace srtk {

PromptMethod parse_prompt_method(const std::string& s) {
  if (s.size() == 2 && s[0] == '@' && s[1] >= '1' && s[1] <= '6')
    return static_cast<PromptMethod>(s[1] - '0');
  throw std::invalid_argument("unknown prompt method '" + s + "' (expected @1..@6)");
}

namespace {

std::string chars_joined(const DecodedHyp& hyp, bool with_probs) {
  std::string out;
  size_t pi = 0;
  for (size_t i = 0; i < hyp.text.size(); ++i) {
    if (i > 0) out += ", ";
    char c = hyp.text[i];
    if (c == ' ') {
      out += "<sp>";
      continue;
    }
    out.push_back(c);
    if (with_probs) out += "(" + format_fixed(hyp.per_char_prob.at(pi), 2) + ")";
    ++pi;
  }
  return out;
}

std::string words_with_means(const DecodedHyp& hyp) {
  std::string out;
  std::string word;
  double sum = 0.0;
  int len = 0;
  size_t pi = 0;

  auto flush = [&]() {
    if (word.empty()) return;
    if (!out.empty()) out += " ";
    out += word + "(" + format_fixed(sum / len, 2) + ")";
    word.clear();
    sum = 0.0;
    len = 0;
  };

  for (char c : hyp.text) {
    if (c == ' ') {
      flush();
      continue;
    }
    word.push_back(c);
    sum += hyp.per_char_prob.at(pi++);
    len += 1;
  }
  flush();
  return out;
}

}  // namespace

PromptText build_prompt(PromptMethod method, const DecodedHyp& greedy,
                        const std::optional<NBestList>& nbest) {
  switch (method) {
    case PromptMethod::M1:
      return chars_joined(greedy, false);
    case PromptMethod::M2:
      return chars_joined(greedy, true);
    case PromptMethod::M3:
      return greedy.text;
    case PromptMethod::M4:
      return words_with_means(greedy);
    case PromptMethod::M5:
      if (!nbest || nbest->hyps.empty()) throw MissingNBest("method @5 needs a rescored n-best list");
      return nbest->hyps[0].text;
    case PromptMethod::M6: {
      if (!nbest) throw MissingNBest("method @6 needs a rescored n-best list");
      if (nbest->n() < 3)
        throw MissingNBest("method @6 needs 3 hypotheses, have " + std::to_string(nbest->n()));
      // exp-normalize the top three scores
      double mx = nbest->hyps[0].total_log_score;
      for (int i = 1; i < 3; ++i) mx = std::max(mx, nbest->hyps[static_cast<size_t>(i)].total_log_score);
      double z = 0.0;
      for (int i = 0; i < 3; ++i) z += std::exp(nbest->hyps[static_cast<size_t>(i)].total_log_score - mx);
      std::string out;
      for (int i = 0; i < 3; ++i) {
        double s = std::exp(nbest->hyps[static_cast<size_t>(i)].total_log_score - mx) / z;
        out += std::to_string(i + 1) + ". " + nbest->hyps[static_cast<size_t>(i)].text + " (" +
               format_fixed(s, 3) + ")";
        if (i < 2) out += "\n";
      }
      return out;
    }
  }
  throw std::invalid_argument("unreachable prompt method");
}

}  // namespace srtk
