#pragma once

#include <optional>
#include <string>

#include "srtk/ctc_decode.hpp"

namespace srtk {

using PromptText = std::string;

// The six text-input constructions over a decoded hypothesis:
//   @1  characters joined by ", ", spaces rendered "<sp>"
//   @2  "c(p)" per character, p to 2 decimals, joined by ", "
//   @3  the greedy text verbatim
//   @4  per word "word(p)" with p the mean of its characters' probs
//   @5  the best rescored hypothesis verbatim
//   @6  three lines "i. text (s)", s the exp-normalized score to 3 decimals
// Methods 5 and 6 need an n-best list; 6 needs at least three hypotheses.
enum class PromptMethod { M1 = 1, M2, M3, M4, M5, M6 };

PromptMethod parse_prompt_method(const std::string& s);  // "@1".."@6"

PromptText build_prompt(PromptMethod method, const DecodedHyp& greedy,
                        const std::optional<NBestList>& nbest);

}  // namespace srtk
