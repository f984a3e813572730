#pragma once

#include <string>
#include <vector>

#include "srtk/common.hpp"

namespace srtk {

struct WerReport {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int ref_words = 0;
  double wer = 0.0;  // (S + D + I) / ref_words, may exceed 1
};

std::vector<std::string> split_words(const std::string& text);

// Word-level Levenshtein alignment with unit costs. Cost ties resolve by
// preferring substitution over deletion over insertion, applied cell by cell
// so the operation counts are fully determined. Throws EmptyReference when
// the reference has no words.
WerReport wer(const std::string& ref, const std::string& hyp);
WerReport wer_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

}  // namespace srtk
