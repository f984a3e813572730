#include "srtk/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "srtk/ctc_decode.hpp"

namespace srtk {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Synthetic task text
// ---------------------------------------------------------------------------

std::vector<std::string> make_task_words(int n_words, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x574F5244ULL));  // "WORD"
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (static_cast<int>(words.size()) < n_words) {
    int len = 3 + static_cast<int>(rng.uniform_int(5));
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('A' + rng.uniform_int(26)));
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

std::vector<std::string> make_task_sentences(int n, uint64_t seed) {
  std::vector<std::string> words = make_task_words(50, seed);
  Rng rng(mix_seed(seed, 0x53454E54ULL));  // "SENT"
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int len = 3 + static_cast<int>(rng.uniform_int(6));
    std::string s;
    for (int w = 0; w < len; ++w) {
      if (w) s.push_back(' ');
      s += words[rng.uniform_int(words.size())];
    }
    out.push_back(std::move(s));
  }
  return out;
}

const std::string& harness_charset() {
  // transcripts plus every character the prompt templates can emit
  static const std::string cs = "ABCDEFGHIJKLMNOPQRSTUVWXYZ sp0123456789,.()<>\n";
  return cs;
}

FeatureMatrix lattice_posterior_features(const CtcLattice& lat) {
  FeatureMatrix m;
  m.frames = MatF(lat.log_posteriors.rows, lat.log_posteriors.cols);
  for (size_t i = 0; i < m.frames.size(); ++i)
    m.frames.v[i] = static_cast<float>(std::exp(lat.log_posteriors.v[i]));
  m.layer_tag = 0;
  return m;
}

// ---------------------------------------------------------------------------
// Spec parsing
// ---------------------------------------------------------------------------

std::string rep_type_name(RepType t) {
  switch (t) {
    case RepType::DiscUnsup: return "disc-unsup";
    case RepType::DiscSup: return "disc-sup";
    case RepType::ContUnsup: return "cont-unsup";
    case RepType::ContSup: return "cont-sup";
  }
  return "?";
}

RepType rep_type_from(const std::string& s) {
  if (s == "disc-unsup") return RepType::DiscUnsup;
  if (s == "disc-sup") return RepType::DiscSup;
  if (s == "cont-unsup") return RepType::ContUnsup;
  if (s == "cont-sup") return RepType::ContSup;
  throw std::invalid_argument("unknown rep_type '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (id.empty()) throw std::invalid_argument("spec needs an id");
  bool needs_k = rep_type == RepType::DiscUnsup;
  if (needs_k != k_clusters.has_value())
    throw std::invalid_argument(id + ": k_clusters must be present exactly for disc-unsup");
  bool needs_method = rep_type == RepType::DiscSup;
  if (needs_method != prompt_method.has_value())
    throw std::invalid_argument(id + ": prompt_method must be present exactly for disc-sup");
  if (seeds.empty()) throw std::invalid_argument(id + ": needs at least one seed");
  if (sigma < 0.0) throw std::invalid_argument(id + ": sigma must be >= 0");
  if (train_steps < 1 || batch_size < 1) throw std::invalid_argument(id + ": bad training parameters");
  if (k_clusters && *k_clusters < 2) throw std::invalid_argument(id + ": k_clusters must be >= 2");
  if (prompt_method && (*prompt_method == PromptMethod::M6) && beam < 3)
    throw std::invalid_argument(id + ": method @6 needs beam >= 3");
  if (augment < 1) throw std::invalid_argument(id + ": augment must be >= 1");
}

std::vector<ExperimentSpec> read_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw MalformedFile(path + ": " + e.what());
  }
  if (!j.is_array()) throw MalformedFile(path + ": expected a JSON array of specs");

  std::vector<ExperimentSpec> specs;
  for (const auto& o : j) {
    ExperimentSpec s;
    s.id = o.at("id").get<std::string>();
    s.rep_type = rep_type_from(o.at("rep_type").get<std::string>());
    if (o.contains("layer")) s.layer_tag = o.at("layer").get<uint32_t>();
    if (o.contains("k")) s.k_clusters = o.at("k").get<int>();
    if (o.contains("method")) s.prompt_method = parse_prompt_method(o.at("method").get<std::string>());
    if (o.contains("seeds")) s.seeds = o.at("seeds").get<std::vector<uint64_t>>();
    if (o.contains("sigma")) s.sigma = o.at("sigma").get<double>();
    if (o.contains("sigma_other")) s.sigma_other = o.at("sigma_other").get<double>();
    if (o.contains("data_seed")) s.data_seed = o.at("data_seed").get<uint64_t>();
    if (o.contains("holdout")) s.holdout = o.at("holdout").get<int>();
    if (o.contains("use_files")) s.use_files = o.at("use_files").get<bool>();
    if (o.contains("train_steps")) s.train_steps = o.at("train_steps").get<int>();
    if (o.contains("batch_size")) s.batch_size = o.at("batch_size").get<int>();
    if (o.contains("lr")) s.lr = o.at("lr").get<double>();
    if (o.contains("beam")) s.beam = o.at("beam").get<int>();
    if (o.contains("lm_weight")) s.lm_weight = o.at("lm_weight").get<double>();
    if (o.contains("word_bonus")) s.word_bonus = o.at("word_bonus").get<double>();
    if (o.contains("ngram_order")) s.ngram_order = o.at("ngram_order").get<int>();
    if (o.contains("kmeans_subset")) s.kmeans_subset = o.at("kmeans_subset").get<int>();
    if (o.contains("augment")) s.augment = o.at("augment").get<int>();
    if (o.contains("lm")) {
      const auto& l = o.at("lm");
      if (l.contains("n_layers")) s.lm.n_layers = l.at("n_layers").get<int>();
      if (l.contains("d_model")) s.lm.d_model = l.at("d_model").get<int>();
      if (l.contains("n_heads")) s.lm.n_heads = l.at("n_heads").get<int>();
      if (l.contains("d_ff")) s.lm.d_ff = l.at("d_ff").get<int>();
      if (l.contains("alpha")) s.lm.alpha = l.at("alpha").get<double>();
      if (l.contains("max_seq")) s.lm.max_seq = l.at("max_seq").get<int>();
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Matrix runner
// ---------------------------------------------------------------------------

namespace {

struct Utt {
  std::string id;
  std::string ref;
  std::string path;
  int variant = 0;  // augmentation noise variant; 0 is the base stream
};

// Per-utterance modality data at one noise level.
struct RepData {
  std::vector<FeatureMatrix> features;  // cont-unsup / cont-sup / disc-unsup
  std::vector<CtcLattice> lattices;     // disc-sup
};

RepData build_rep_data(const ExperimentSpec& spec, const std::vector<Utt>& utts, double sigma) {
  RepData out;
  for (const auto& u : utts) {
    SynthOptions so;
    so.seed = u.variant == 0 ? spec.data_seed
                             : mix_seed(spec.data_seed, static_cast<uint64_t>(u.variant));
    so.noise_sigma = sigma;
    so.layer_tag = spec.layer_tag;
    if (spec.use_files) {
      std::string magic = u.path.empty() ? "" : sniff_magic(u.path);
      switch (spec.rep_type) {
        case RepType::ContUnsup:
        case RepType::DiscUnsup:
          if (magic != "SFM1")
            throw MissingArtifact(spec.id + ": " + u.id + " needs an SFM1 feature file, got '" +
                                  u.path + "'");
          out.features.push_back(read_feature_matrix(u.path));
          break;
        case RepType::ContSup:
        case RepType::DiscSup:
          if (magic != "CLG1")
            throw MissingArtifact(spec.id + ": " + u.id + " needs a CLG1 lattice file, got '" +
                                  u.path + "'");
          if (spec.rep_type == RepType::ContSup)
            out.features.push_back(lattice_posterior_features(read_ctc_lattice(u.path)));
          else
            out.lattices.push_back(read_ctc_lattice(u.path));
          break;
      }
      continue;
    }
    switch (spec.rep_type) {
      case RepType::ContUnsup:
      case RepType::DiscUnsup:
        out.features.push_back(synth_encode_continuous(u.ref, so));
        break;
      case RepType::ContSup:
        out.features.push_back(lattice_posterior_features(synth_encode_ctc(u.ref, so)));
        break;
      case RepType::DiscSup:
        out.lattices.push_back(synth_encode_ctc(u.ref, so));
        break;
    }
  }
  return out;
}

// Turns modality data into LM examples. The codebook / n-gram, when present,
// come from the training portion only.
std::vector<LmExample> build_examples(const ExperimentSpec& spec, const TextVocab& vocab,
                                      const std::vector<Utt>& utts, const RepData& rep,
                                      const Codebook* codebook, const NGramModel* ngram) {
  std::vector<LmExample> out;
  out.reserve(utts.size());
  for (size_t i = 0; i < utts.size(); ++i) {
    LmExample ex;
    ex.targets = vocab.encode(utts[i].ref, /*add_eos=*/true);
    switch (spec.rep_type) {
      case RepType::ContUnsup:
      case RepType::ContSup:
        ex.prompt.kind = FrontEndKind::ContinuousAdapter;
        ex.prompt.features = rep.features[i].frames;
        break;
      case RepType::DiscUnsup: {
        ex.prompt.kind = FrontEndKind::ClusterEmbedMlp;
        ex.prompt.tokens = dedup(quantize(*codebook, rep.features[i])).tokens;
        break;
      }
      case RepType::DiscSup: {
        const CtcLattice& lat = rep.lattices[i];
        DecodedHyp greedy = ctc_greedy(lat);
        std::optional<NBestList> nbest;
        PromptMethod m = *spec.prompt_method;
        if (m == PromptMethod::M5 || m == PromptMethod::M6) {
          BeamOptions bo;
          bo.beam = spec.beam;
          bo.nbest = m == PromptMethod::M6 ? 3 : 1;
          bo.lm_weight = spec.lm_weight;
          bo.word_bonus = spec.word_bonus;
          nbest = prefix_beam_decode(lat, ngram, bo);
        }
        std::string prompt = build_prompt(m, greedy, nbest);
        ex.prompt.kind = FrontEndKind::TextEmbed;
        ex.prompt.tokens = vocab.encode(prompt);
        break;
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

double corpus_wer_percent(const std::vector<std::string>& refs, const std::vector<std::string>& hyps) {
  long err = 0, words = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    WerReport r = wer(refs[i], hyps[i]);
    err += r.substitutions + r.deletions + r.insertions;
    words += r.ref_words;
  }
  return words == 0 ? 0.0 : 100.0 * static_cast<double>(err) / static_cast<double>(words);
}

struct SeedRun {
  double wer_clean = 0.0;
  double wer_other = 0.0;
};

SeedRun run_one_seed(const ExperimentSpec& spec, uint64_t seed, const std::vector<Utt>& train_base,
                     const std::vector<Utt>& eval_utts, double sigma_other) {
  TextVocab vocab(harness_charset());

  // Optional augmentation: extra noise variants of every training utterance
  // (synthetic route only), so quantized representations expose their
  // variability to the model.
  std::vector<Utt> train = train_base;
  if (!spec.use_files) {
    for (int v = 1; v < spec.augment; ++v)
      for (const auto& u : train_base) {
        Utt a = u;
        a.variant = v;
        train.push_back(std::move(a));
      }
  }

  RepData train_rep = build_rep_data(spec, train, spec.sigma);
  RepData eval_clean = build_rep_data(spec, eval_utts, spec.sigma);
  RepData eval_other =
      spec.use_files ? RepData{} : build_rep_data(spec, eval_utts, sigma_other);

  // training-portion artifacts
  Codebook codebook;
  if (spec.rep_type == RepType::DiscUnsup) {
    std::vector<FeatureMatrix> pool = train_rep.features;
    if (spec.kmeans_subset > 0) {
      std::vector<FeatureMatrix> subset;
      int budget = spec.kmeans_subset;
      for (const auto& f : pool) {
        if (budget <= 0) break;
        subset.push_back(f);
        budget -= f.num_frames();
      }
      pool = std::move(subset);
    }
    KMeansOptions ko;
    ko.seed = mix_seed(seed, 0xC0DEULL);
    codebook = train_kmeans(pool, *spec.k_clusters, ko);
  }

  NGramModel ngram;
  bool needs_ngram = spec.rep_type == RepType::DiscSup &&
                     (*spec.prompt_method == PromptMethod::M5 || *spec.prompt_method == PromptMethod::M6);
  if (needs_ngram) {
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(train.size());
    for (const auto& u : train) corpus.push_back(char_tokens(u.ref));
    ngram = train_ngram(corpus, spec.ngram_order, SmoothingSpec::witten_bell());
  }

  std::vector<LmExample> train_ex = build_examples(spec, vocab, train, train_rep,
                                                   &codebook, needs_ngram ? &ngram : nullptr);
  std::vector<LmExample> eval_ex_clean = build_examples(spec, vocab, eval_utts, eval_clean,
                                                        &codebook, needs_ngram ? &ngram : nullptr);
  std::vector<LmExample> eval_ex_other =
      spec.use_files ? std::vector<LmExample>{}
                     : build_examples(spec, vocab, eval_utts, eval_other, &codebook,
                                      needs_ngram ? &ngram : nullptr);

  // model configuration
  LmConfig cfg = spec.lm;
  cfg.vocab_size = vocab.size();
  bool continuous = spec.rep_type == RepType::ContUnsup || spec.rep_type == RepType::ContSup;
  cfg.feedback_mode = continuous ? FeedbackMode::Continuous : FeedbackMode::Discrete;
  if (cfg.alpha < 0.0) cfg.alpha = continuous ? 100.0 : 0.0;
  switch (spec.rep_type) {
    case RepType::ContUnsup:
    case RepType::ContSup:
      cfg.front_end = FrontEndKind::ContinuousAdapter;
      cfg.input_dim = train_ex.front().prompt.features.cols;
      break;
    case RepType::DiscUnsup:
      cfg.front_end = FrontEndKind::ClusterEmbedMlp;
      cfg.cluster_count = *spec.k_clusters;
      break;
    case RepType::DiscSup:
      cfg.front_end = FrontEndKind::TextEmbed;
      break;
  }
  if (cfg.max_seq <= 0) {
    int need = 1;
    auto scan = [&](const std::vector<LmExample>& exs) {
      for (const auto& ex : exs) {
        int P = ex.prompt.kind == FrontEndKind::ContinuousAdapter
                    ? ex.prompt.features.rows
                    : static_cast<int>(ex.prompt.tokens.size());
        int C = static_cast<int>(ex.targets.size());
        need = std::max(need, P + C + 6);
      }
    };
    scan(train_ex);
    scan(eval_ex_clean);
    scan(eval_ex_other);
    cfg.max_seq = need;
  }

  ToyLmF lm(cfg, seed);
  Rng batch_rng(mix_seed(seed, 0xBA7C4ULL));
  // linear warmup then a late decay step; stabilizes the small-batch runs
  int warmup = std::max(1, std::min(100, spec.train_steps / 5));
  for (int step = 1; step <= spec.train_steps; ++step) {
    std::vector<LmExample> batch;
    batch.reserve(static_cast<size_t>(spec.batch_size));
    for (int b = 0; b < spec.batch_size; ++b)
      batch.push_back(train_ex[batch_rng.uniform_int(train_ex.size())]);
    double lr = spec.lr * std::min(1.0, static_cast<double>(step) / warmup);
    if (step > spec.train_steps * 3 / 4) lr *= 0.3;
    lm.train_step(batch, lr);
  }

  auto decode_all = [&](const std::vector<LmExample>& exs) {
    std::vector<std::string> hyps;
    hyps.reserve(exs.size());
    for (const auto& ex : exs) {
      int prompt_len = ex.prompt.kind == FrontEndKind::ContinuousAdapter
                           ? ex.prompt.features.rows
                           : static_cast<int>(ex.prompt.tokens.size());
      if (prompt_len == 0) {  // nothing decodable came out of this input
        hyps.emplace_back();
        continue;
      }
      int max_new = static_cast<int>(ex.targets.size()) + 4;
      std::vector<int> ids;
      if (continuous)
        ids = lm.generate_continuous(ex.prompt.features, max_new, TextVocab::kEos);
      else
        ids = lm.generate(ex.prompt, max_new, TextVocab::kEos);
      hyps.push_back(vocab.decode(ids));
    }
    return hyps;
  };

  std::vector<std::string> refs;
  refs.reserve(eval_utts.size());
  for (const auto& u : eval_utts) refs.push_back(u.ref);

  SeedRun r;
  r.wer_clean = corpus_wer_percent(refs, decode_all(eval_ex_clean));
  r.wer_other = spec.use_files ? r.wer_clean : corpus_wer_percent(refs, decode_all(eval_ex_other));
  return r;
}

std::string spec_params(const ExperimentSpec& s) {
  std::string p = "layer=" + std::to_string(s.layer_tag);
  if (s.k_clusters) p += " k=" + std::to_string(*s.k_clusters);
  if (s.prompt_method) p += " method=@" + std::to_string(static_cast<int>(*s.prompt_method));
  p += " sigma=" + format_fixed(s.sigma, 2);
  return p;
}

}  // namespace

bool MatrixReport::all_ok() const {
  for (const auto& r : rows)
    if (!r.ok) return false;
  return true;
}

std::string MatrixReport::to_tsv() const {
  std::string out = "id\trep_type\tparams\tseeds\twer_clean\twer_other\tstatus\terror\n";
  for (const auto& r : rows) {
    out += r.id + "\t" + rep_type_name(r.rep_type) + "\t" + r.params + "\t" +
           std::to_string(r.per_seed_clean.size()) + "\t";
    if (r.ok) {
      out += format_fixed(r.wer_clean, 2) + "\t" + format_fixed(r.wer_other, 2) + "\tok\t\n";
    } else {
      out += "-\t-\terror\t" + r.error + "\n";
    }
  }
  return out;
}

MatrixReport run_matrix(const std::vector<ExperimentSpec>& specs, const Manifest& manifest,
                        const std::string& out_path) {
  MatrixReport report;
  for (const auto& spec : specs) {
    SpecResult row;
    row.id = spec.id;
    row.rep_type = spec.rep_type;
    row.params = spec_params(spec);
    try {
      spec.validate();
      if (manifest.entries.empty()) throw MissingArtifact(spec.id + ": manifest is empty");
      int n = static_cast<int>(manifest.entries.size());
      int holdout = std::min(spec.holdout, n - 1);
      std::vector<Utt> train, eval_utts;
      for (int i = 0; i < n; ++i) {
        Utt u{manifest.entries[static_cast<size_t>(i)].id, manifest.entries[static_cast<size_t>(i)].ref,
              manifest.entries[static_cast<size_t>(i)].path};
        if (holdout > 0 && i >= n - holdout)
          eval_utts.push_back(std::move(u));
        else
          train.push_back(std::move(u));
      }
      if (holdout <= 0) eval_utts = train;

      double sigma_other = spec.sigma_other >= 0.0 ? spec.sigma_other : spec.sigma * 1.5 + 0.1;
      double sum_clean = 0.0, sum_other = 0.0;
      for (uint64_t seed : spec.seeds) {
        SeedRun r = run_one_seed(spec, seed, train, eval_utts, sigma_other);
        row.per_seed_clean.push_back(r.wer_clean);
        sum_clean += r.wer_clean;
        sum_other += r.wer_other;
      }
      row.wer_clean = sum_clean / static_cast<double>(spec.seeds.size());
      row.wer_other = sum_other / static_cast<double>(spec.seeds.size());
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot create " + out_path);
    out << report.to_tsv();
    if (!out) throw IoError("short write to " + out_path);
  }
  return report;
}

}  // namespace srtk
