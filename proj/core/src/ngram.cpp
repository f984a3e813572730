#include "srtk/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace srtk {

namespace {

constexpr char kSep = '\x1f';
constexpr double kLogZero = -99.0;  // ARPA convention for zero probability

std::string join_key(const std::vector<std::string>& toks, size_t begin, size_t end) {
  std::string key;
  for (size_t i = begin; i < end; ++i) {
    if (i > begin) key.push_back(kSep);
    key += toks[i];
  }
  return key;
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> toks;
  std::string cur;
  for (char c : key) {
    if (c == kSep) {
      toks.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  toks.push_back(cur);
  return toks;
}

}  // namespace

std::string NGramModel::map_token(const std::string& tok) const {
  if (tables_.empty()) return tok;
  if (tables_[0].count(tok)) return tok;
  return kUnk;
}

const NGramEntry* NGramModel::find(const std::vector<std::string>& ngram) const {
  size_t n = ngram.size();
  if (n == 0 || n > tables_.size()) return nullptr;
  auto it = tables_[n - 1].find(join_key(ngram, 0, n));
  return it == tables_[n - 1].end() ? nullptr : &it->second;
}

double NGramModel::log10_cond(const std::vector<std::string>& context, const std::string& token) const {
  std::string tok = map_token(token);
  size_t ctx_len = std::min(context.size(), static_cast<size_t>(order() - 1));

  std::vector<std::string> ctx(context.end() - static_cast<long>(ctx_len), context.end());
  for (auto& c : ctx) c = map_token(c);

  double backoff_acc = 0.0;
  for (;;) {
    std::vector<std::string> ngram = ctx;
    ngram.push_back(tok);
    if (const NGramEntry* e = find(ngram)) return backoff_acc + e->log10_prob;
    if (ctx.empty()) {
      // Unigram table covers the whole vocab of a trained model; a foreign
      // ARPA file without <unk> falls through to the floor.
      return backoff_acc + kLogZero;
    }
    if (const NGramEntry* c = find(ctx); c && c->log10_backoff) backoff_acc += *c->log10_backoff;
    ctx.erase(ctx.begin());
  }
}

double NGramModel::score_sequence(const std::vector<std::string>& tokens) const {
  double total = 0.0;
  std::vector<std::string> context;
  for (const auto& tok : tokens) {
    total += log10_cond(context, tok);
    context.push_back(tok);
  }
  return total;
}

NGramModel NGramModel::truncated() const {
  if (order() <= 1) throw std::invalid_argument("cannot truncate a unigram model");
  NGramModel out = *this;
  out.tables_.pop_back();
  for (auto& [key, entry] : out.tables_.back()) entry.log10_backoff.reset();
  return out;
}

NGramModel train_ngram(const std::vector<std::vector<std::string>>& corpus, int order,
                       const SmoothingSpec& smoothing) {
  if (corpus.empty()) throw EmptyCorpus("train_ngram requires at least one sentence");
  if (order < 1) throw std::invalid_argument("order must be >= 1");

  // Padded sentences and raw counts for every n-gram length.
  std::vector<std::map<std::string, long>> counts(static_cast<size_t>(order));
  std::set<std::string> vocab_set{kBos, kEos, kUnk};
  for (const auto& sent : corpus) {
    std::vector<std::string> toks;
    toks.push_back(kBos);
    toks.insert(toks.end(), sent.begin(), sent.end());
    toks.push_back(kEos);
    for (const auto& t : toks) vocab_set.insert(t);
    for (int n = 1; n <= order; ++n)
      for (size_t i = 0; i + n <= toks.size(); ++i)
        counts[n - 1][join_key(toks, i, i + n)]++;
  }

  NGramModel lm;
  lm.vocab_.assign(vocab_set.begin(), vocab_set.end());
  lm.has_unk_ = true;
  lm.tables_.resize(static_cast<size_t>(order));
  double V = static_cast<double>(lm.vocab_.size());

  // Unigrams: smoothed over the full vocabulary so every token is covered.
  {
    long C = 0;
    for (const auto& [key, c] : counts[0]) C += c;
    double T = static_cast<double>(counts[0].size());  // distinct unigram types
    for (const auto& w : lm.vocab_) {
      long c = 0;
      if (auto it = counts[0].find(w); it != counts[0].end()) c = it->second;
      double p;
      if (smoothing.kind == Smoothing::AddK) {
        p = (c + smoothing.k) / (C + smoothing.k * V);
      } else {
        p = c / (C + T) + T / ((C + T) * V);
      }
      lm.tables_[0][w] = NGramEntry{p > 0.0 ? std::log10(p) : kLogZero, std::nullopt};
    }
  }

  // Higher orders, bottom-up, Katz-style backoff mass allocation.
  for (int n = 2; n <= order; ++n) {
    // Group continuations by context.
    std::map<std::string, std::vector<std::pair<std::string, long>>> by_ctx;
    for (const auto& [key, c] : counts[n - 1]) {
      auto toks = split_key(key);
      by_ctx[join_key(toks, 0, toks.size() - 1)].push_back({toks.back(), c});
    }
    for (const auto& [ctx_key, conts] : by_ctx) {
      auto ctx = split_key(ctx_key);
      long ctx_count = 0;
      for (const auto& [w, c] : conts) ctx_count += c;
      double T = static_cast<double>(conts.size());

      double seen_mass = 0.0;    // sum of discounted probs stored at this level
      double lower_mass = 0.0;   // same continuations under the already-built lower levels
      std::vector<std::string> lower_ctx(ctx.begin() + 1, ctx.end());
      for (const auto& [w, c] : conts) {
        double p;
        if (smoothing.kind == Smoothing::AddK) {
          p = (c + smoothing.k) / (ctx_count + smoothing.k * V);
        } else {
          p = c / (ctx_count + T);
        }
        seen_mass += p;
        lower_mass += std::pow(10.0, lm.log10_cond(lower_ctx, w));
        lm.tables_[n - 1][ctx_key + kSep + w] = NGramEntry{p > 0.0 ? std::log10(p) : kLogZero, std::nullopt};
      }

      double leftover = 1.0 - seen_mass;
      double denom = 1.0 - lower_mass;
      double alpha = (leftover <= 0.0 || denom <= 0.0) ? 0.0 : leftover / denom;
      auto& ctx_entry = lm.tables_[n - 2][ctx_key];
      ctx_entry.log10_backoff = alpha > 0.0 ? std::log10(alpha) : kLogZero;
    }
  }
  return lm;
}

// --- ARPA ------------------------------------------------------------------

void write_arpa(const NGramModel& lm, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out << "\\data\\\n";
  for (int n = 1; n <= lm.order(); ++n)
    out << "ngram " << n << "=" << lm.tables_[n - 1].size() << "\n";
  for (int n = 1; n <= lm.order(); ++n) {
    out << "\n\\" << n << "-grams:\n";
    // Sorted for deterministic output.
    std::map<std::string, const NGramEntry*> sorted;
    for (const auto& [key, e] : lm.tables_[n - 1]) sorted[key] = &e;
    for (const auto& [key, e] : sorted) {
      auto toks = split_key(key);
      out << format_fixed(e->log10_prob, 6);
      for (const auto& t : toks) out << (&t == &toks.front() ? "\t" : " ") << t;
      if (e->log10_backoff) out << "\t" << format_fixed(*e->log10_backoff, 6);
      out << "\n";
    }
  }
  out << "\n\\end\\\n";
  if (!out) throw IoError("short write to " + path);
}

NGramModel read_arpa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  auto fail = [&](int lineno, const std::string& why) -> MalformedArpa {
    return MalformedArpa(path + ":" + std::to_string(lineno) + ": " + why);
  };

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }

  size_t i = 0;
  auto skip_blank = [&]() {
    while (i < lines.size() && lines[i].empty()) ++i;
  };

  skip_blank();
  if (i >= lines.size() || lines[i] != "\\data\\") throw fail(static_cast<int>(i + 1), "expected \\data\\");
  ++i;

  std::vector<size_t> declared;
  while (i < lines.size() && lines[i].rfind("ngram ", 0) == 0) {
    size_t eq = lines[i].find('=');
    if (eq == std::string::npos) throw fail(static_cast<int>(i + 1), "bad ngram count line");
    int n = std::stoi(lines[i].substr(6, eq - 6));
    long cnt = std::stol(lines[i].substr(eq + 1));
    if (n != static_cast<int>(declared.size()) + 1)
      throw fail(static_cast<int>(i + 1), "ngram orders must be consecutive from 1");
    declared.push_back(static_cast<size_t>(cnt));
    ++i;
  }
  if (declared.empty()) throw fail(static_cast<int>(i + 1), "no ngram count lines");

  NGramModel lm;
  lm.tables_.resize(declared.size());

  bool saw_end = false;
  for (int n = 1; n <= static_cast<int>(declared.size()); ++n) {
    skip_blank();
    std::string header = "\\" + std::to_string(n) + "-grams:";
    if (i >= lines.size() || lines[i] != header)
      throw fail(static_cast<int>(i + 1), "expected " + header);
    ++i;
    while (i < lines.size() && !lines[i].empty() && lines[i][0] != '\\') {
      std::istringstream ls(lines[i]);
      double lp;
      if (!(ls >> lp)) throw fail(static_cast<int>(i + 1), "bad probability");
      std::vector<std::string> fields;
      std::string f;
      while (ls >> f) fields.push_back(f);
      bool has_backoff = fields.size() == static_cast<size_t>(n) + 1;
      if (!has_backoff && fields.size() != static_cast<size_t>(n))
        throw fail(static_cast<int>(i + 1), "expected " + std::to_string(n) + " tokens");
      NGramEntry e;
      e.log10_prob = lp;
      std::string key;
      for (int t = 0; t < n; ++t) {
        if (t) key.push_back(kSep);
        key += fields[static_cast<size_t>(t)];
      }
      if (has_backoff) {
        try {
          e.log10_backoff = std::stod(fields.back());
        } catch (const std::exception&) {
          throw fail(static_cast<int>(i + 1), "bad backoff weight");
        }
      }
      lm.tables_[n - 1][key] = e;
      ++i;
    }
    if (lm.tables_[n - 1].size() != declared[static_cast<size_t>(n - 1)])
      throw fail(static_cast<int>(i + 1), "section " + std::to_string(n) + " has " +
                                              std::to_string(lm.tables_[n - 1].size()) + " entries, header declared " +
                                              std::to_string(declared[static_cast<size_t>(n - 1)]));
  }
  skip_blank();
  if (i < lines.size() && lines[i] == "\\end\\") saw_end = true;
  if (!saw_end) throw fail(static_cast<int>(i + 1), "missing \\end\\");

  for (const auto& [key, e] : lm.tables_[0]) lm.vocab_.push_back(key);
  std::sort(lm.vocab_.begin(), lm.vocab_.end());
  lm.has_unk_ = lm.tables_[0].count(kUnk) > 0;
  return lm;
}

std::vector<std::string> char_tokens(const std::string& text) {
  std::vector<std::string> toks;
  toks.reserve(text.size());
  // Spaces become "<sp>" so the tokens survive whitespace-delimited formats.
  for (char c : text) toks.push_back(c == ' ' ? std::string("<sp>") : std::string(1, c));
  return toks;
}

}  // namespace srtk
