// srtk: speech-representation toolkit command line.
//
// Subcommands cover the full desk-scale pipeline: synthesizing encoder
// outputs, k-means codebooks, CTC decoding with n-gram fusion, prompt
// construction, n-gram and toy-LM training, WER scoring, and the experiment
// matrix runner.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "srtk/ctc_decode.hpp"
#include "srtk/experiment.hpp"
#include "srtk/feature_io.hpp"
#include "srtk/kmeans.hpp"
#include "srtk/ngram.hpp"
#include "srtk/prompt.hpp"
#include "srtk/synth_encoder.hpp"
#include "srtk/transformer.hpp"
#include "srtk/wer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace srtk;

namespace {

struct SynthArgs {
  std::string out_dir;
  int sentences = 30;
  uint64_t text_seed = 77;
  uint64_t data_seed = 1234;
  double sigma = 0.0;
  uint32_t layer = 0;
  std::string mode = "both";  // features | lattices | both
};

int cmd_synth(const SynthArgs& a) {
  fs::create_directories(a.out_dir);
  auto sents = make_task_sentences(a.sentences, a.text_seed);
  SynthOptions so;
  so.seed = a.data_seed;
  so.noise_sigma = a.sigma;
  so.layer_tag = a.layer;

  bool feats = a.mode == "features" || a.mode == "both";
  bool lats = a.mode == "lattices" || a.mode == "both";
  Manifest fman, lman;
  for (int i = 0; i < a.sentences; ++i) {
    std::string id = "utt" + std::to_string(i);
    if (feats) {
      std::string p = a.out_dir + "/" + id + ".sfm";
      write_feature_matrix(synth_encode_continuous(sents[static_cast<size_t>(i)], so), p);
      fman.entries.push_back({id, fs::path(p).filename().string(), sents[static_cast<size_t>(i)]});
    }
    if (lats) {
      std::string p = a.out_dir + "/" + id + ".clg";
      write_ctc_lattice(synth_encode_ctc(sents[static_cast<size_t>(i)], so), p);
      lman.entries.push_back({id, fs::path(p).filename().string(), sents[static_cast<size_t>(i)]});
    }
  }
  if (feats) write_manifest(fman, a.out_dir + "/features.jsonl");
  if (lats) write_manifest(lman, a.out_dir + "/lattices.jsonl");
  std::cout << "wrote " << a.sentences << " utterances to " << a.out_dir << "\n";
  return 0;
}

struct TrainKmeansArgs {
  std::string manifest;
  std::string out;
  int k = 16;
  uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-4;
  int subset = 0;  // frame budget for codebook training; 0 = all frames
};

int cmd_train_kmeans(const TrainKmeansArgs& a) {
  Manifest man = read_manifest(a.manifest);
  std::vector<FeatureMatrix> data;
  int budget = a.subset;
  for (const auto& e : man.entries) {
    if (a.subset > 0 && budget <= 0) break;
    FeatureMatrix m = read_feature_matrix(e.path);
    budget -= m.num_frames();
    data.push_back(std::move(m));
  }
  KMeansOptions ko;
  ko.seed = a.seed;
  ko.max_iters = a.max_iters;
  ko.tol = a.tol;
  Codebook cb = train_kmeans(data, a.k, ko);
  write_codebook(cb, a.out);
  std::cout << "k=" << cb.k() << " d=" << cb.dim() << " iters=" << cb.train_meta.iterations_run
            << " inertia=" << cb.train_meta.final_inertia << " -> " << a.out << "\n";
  return 0;
}

struct QuantizeArgs {
  std::string codebook;
  std::string features;
  bool no_dedup = false;
};

int cmd_quantize(const QuantizeArgs& a) {
  Codebook cb = read_codebook(a.codebook);
  DiscreteTokenSeq seq = quantize(cb, read_feature_matrix(a.features));
  if (!a.no_dedup) seq = dedup(seq);
  for (size_t i = 0; i < seq.tokens.size(); ++i)
    std::cout << (i ? " " : "") << seq.tokens[i];
  std::cout << "\n";
  return 0;
}

struct CtcDecodeArgs {
  std::string lattice;
  std::string manifest;
  std::string lm_path;
  std::string method = "@3";
  std::string out;
  int beam = 8;
  double lm_weight = 0.0;
  double word_bonus = 0.0;
  int nbest = 1;
};

int cmd_ctc_decode(const CtcDecodeArgs& a) {
  if (a.lattice.empty() == a.manifest.empty())
    throw std::invalid_argument("give exactly one of --lattice or --manifest");

  NGramModel lm;
  bool have_lm = !a.lm_path.empty();
  if (have_lm) lm = read_arpa(a.lm_path);

  PromptMethod method = parse_prompt_method(a.method);
  bool needs_nbest = method == PromptMethod::M5 || method == PromptMethod::M6;

  auto decode_one = [&](const CtcLattice& lat) {
    DecodedHyp greedy = ctc_greedy(lat);
    std::optional<NBestList> nbest;
    if (needs_nbest || a.nbest > 1 || have_lm) {
      BeamOptions bo;
      bo.beam = a.beam;
      bo.nbest = std::max(a.nbest, method == PromptMethod::M6 ? 3 : 1);
      bo.lm_weight = a.lm_weight;
      bo.word_bonus = a.word_bonus;
      nbest = prefix_beam_decode(lat, have_lm ? &lm : nullptr, bo);
    }
    return build_prompt(method, greedy, nbest);
  };

  if (!a.lattice.empty()) {
    std::cout << decode_one(read_ctc_lattice(a.lattice)) << "\n";
    return 0;
  }
  Manifest man = read_manifest(a.manifest);
  std::ofstream out;
  if (!a.out.empty()) {
    out.open(a.out, std::ios::trunc);
    if (!out) throw IoError("cannot create " + a.out);
  }
  std::ostream& os = a.out.empty() ? std::cout : out;
  for (const auto& e : man.entries)
    os << e.id << "\t" << decode_one(read_ctc_lattice(e.path)) << "\n";
  return 0;
}

struct TrainNgramArgs {
  std::string manifest;
  std::string text;
  std::string out;
  int order = 4;
  std::string smoothing = "wittenbell";  // or addk:<k>
  bool word_level = false;
};

int cmd_train_ngram(const TrainNgramArgs& a) {
  if (a.manifest.empty() == a.text.empty())
    throw std::invalid_argument("give exactly one of --manifest or --text");
  std::vector<std::string> lines;
  if (!a.manifest.empty()) {
    for (const auto& e : read_manifest(a.manifest, /*check_files=*/false).entries)
      lines.push_back(e.ref);
  } else {
    std::ifstream in(a.text);
    if (!in) throw IoError("cannot open " + a.text);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) lines.push_back(line);
  }
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(lines.size());
  for (const auto& l : lines) corpus.push_back(a.word_level ? split_words(l) : char_tokens(l));

  SmoothingSpec sm;
  if (a.smoothing == "wittenbell") {
    sm = SmoothingSpec::witten_bell();
  } else if (a.smoothing.rfind("addk:", 0) == 0) {
    sm = SmoothingSpec::addk(std::stod(a.smoothing.substr(5)));
  } else {
    throw std::invalid_argument("smoothing must be 'wittenbell' or 'addk:<k>'");
  }
  NGramModel lm = train_ngram(corpus, a.order, sm);
  write_arpa(lm, a.out);
  std::cout << "order " << lm.order() << ", vocab " << lm.vocab().size() << " -> " << a.out << "\n";
  return 0;
}

struct TrainLmArgs {
  std::string config;
  std::string manifest;
  std::string mode = "text";  // text | cluster | adapter
  std::string codebook;
  std::string out;
  double alpha = -1.0;
  double lr = 0.01;
  uint64_t seed = 1;
  int steps = 600;
  int batch = 4;
};

std::vector<LmExample> manifest_examples(const Manifest& man, const std::string& mode,
                                         const Codebook* cb, const TextVocab& vocab) {
  std::vector<LmExample> exs;
  for (const auto& e : man.entries) {
    LmExample ex;
    ex.targets = vocab.encode(e.ref, /*add_eos=*/true);
    if (mode == "text") {
      ex.prompt.kind = FrontEndKind::TextEmbed;
      ex.prompt.tokens = vocab.encode(e.ref.substr(0, 1));  // minimal prompt, pure LM use
    } else if (mode == "cluster") {
      ex.prompt.kind = FrontEndKind::ClusterEmbedMlp;
      ex.prompt.tokens = dedup(quantize(*cb, read_feature_matrix(e.path))).tokens;
    } else {
      ex.prompt.kind = FrontEndKind::ContinuousAdapter;
      ex.prompt.features = read_feature_matrix(e.path).frames;
    }
    exs.push_back(std::move(ex));
  }
  return exs;
}

int cmd_train_lm(const TrainLmArgs& a) {
  Manifest man = read_manifest(a.manifest, /*check_files=*/a.mode != "text");
  TextVocab vocab(harness_charset());

  Codebook cb;
  if (a.mode == "cluster") {
    if (a.codebook.empty()) throw std::invalid_argument("--mode cluster needs --codebook");
    cb = read_codebook(a.codebook);
  }
  std::vector<LmExample> exs = manifest_examples(man, a.mode, &cb, vocab);

  LmConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot open " + a.config);
    json j;
    in >> j;
    if (j.contains("n_layers")) cfg.n_layers = j.at("n_layers").get<int>();
    if (j.contains("d_model")) cfg.d_model = j.at("d_model").get<int>();
    if (j.contains("n_heads")) cfg.n_heads = j.at("n_heads").get<int>();
    if (j.contains("d_ff")) cfg.d_ff = j.at("d_ff").get<int>();
    if (j.contains("max_seq")) cfg.max_seq = j.at("max_seq").get<int>();
  }
  cfg.vocab_size = vocab.size();
  if (a.mode == "cluster") {
    cfg.front_end = FrontEndKind::ClusterEmbedMlp;
    cfg.cluster_count = cb.k();
  } else if (a.mode == "adapter") {
    cfg.front_end = FrontEndKind::ContinuousAdapter;
    cfg.feedback_mode = FeedbackMode::Continuous;
    cfg.input_dim = exs.front().prompt.features.cols;
  }
  cfg.alpha = a.alpha >= 0.0 ? a.alpha
                             : (cfg.feedback_mode == FeedbackMode::Continuous ? 10.0 : 0.0);
  int need = cfg.max_seq;
  for (const auto& ex : exs) {
    int p = ex.prompt.kind == FrontEndKind::ContinuousAdapter ? ex.prompt.features.rows
                                                              : static_cast<int>(ex.prompt.tokens.size());
    need = std::max(need, p + static_cast<int>(ex.targets.size()) + 6);
  }
  cfg.max_seq = need;

  ToyLmF lm(cfg, a.seed);
  Rng brng(mix_seed(a.seed, 0xBA7C4ULL));
  int warmup = std::max(1, std::min(100, a.steps / 5));
  for (int step = 1; step <= a.steps; ++step) {
    std::vector<LmExample> batch;
    for (int b = 0; b < a.batch; ++b) batch.push_back(exs[brng.uniform_int(exs.size())]);
    double lr = a.lr * std::min(1.0, static_cast<double>(step) / warmup);
    if (step > a.steps * 3 / 4) lr *= 0.3;
    TrainMetrics tm = lm.train_step(batch, lr);
    if (step % 100 == 0 || step == a.steps)
      std::cout << "step " << step << " loss " << tm.loss.total << " ce " << tm.loss.ce << " mse "
                << tm.loss.mse << "\n";
  }
  lm.save(a.out);
  std::cout << "saved " << a.out << "\n";
  return 0;
}

struct DecodeArgs {
  std::string ckpt;
  std::string manifest;
  std::string codebook;
  std::string mode;  // empty: infer from checkpoint front end
  int max_new = 64;
  bool score = false;
};

int cmd_decode(const DecodeArgs& a) {
  ToyLmF lm = ToyLmF::load(a.ckpt);
  TextVocab vocab(harness_charset());
  std::string mode = a.mode;
  if (mode.empty()) {
    switch (lm.config().front_end) {
      case FrontEndKind::TextEmbed: mode = "text"; break;
      case FrontEndKind::ClusterEmbedMlp: mode = "cluster"; break;
      case FrontEndKind::ContinuousAdapter: mode = "adapter"; break;
    }
  }
  Manifest man = read_manifest(a.manifest, /*check_files=*/mode != "text");
  Codebook cb;
  if (mode == "cluster") {
    if (a.codebook.empty()) throw std::invalid_argument("--mode cluster needs --codebook");
    cb = read_codebook(a.codebook);
  }
  std::vector<LmExample> exs = manifest_examples(man, mode, &cb, vocab);

  long err = 0, words = 0;
  for (size_t i = 0; i < exs.size(); ++i) {
    std::vector<int> ids;
    if (lm.config().feedback_mode == FeedbackMode::Continuous && mode == "adapter")
      ids = lm.generate_continuous(exs[i].prompt.features, a.max_new, TextVocab::kEos);
    else
      ids = lm.generate(exs[i].prompt, a.max_new, TextVocab::kEos);
    std::string hyp = vocab.decode(ids);
    std::cout << man.entries[i].id << "\t" << hyp << "\n";
    if (a.score) {
      WerReport r = wer(man.entries[i].ref, hyp);
      err += r.substitutions + r.deletions + r.insertions;
      words += r.ref_words;
    }
  }
  if (a.score && words > 0)
    std::cout << "WER " << format_fixed(100.0 * static_cast<double>(err) / static_cast<double>(words), 2)
              << "%\n";
  return 0;
}

int cmd_wer(const std::string& ref, const std::string& hyp) {
  WerReport r = wer(ref, hyp);
  std::cout << "S=" << r.substitutions << " D=" << r.deletions << " I=" << r.insertions
            << " ref_words=" << r.ref_words << " WER " << format_fixed(100.0 * r.wer, 2) << "%\n";
  return 0;
}

int cmd_run_matrix(const std::string& specs_path, const std::string& manifest_path,
                   const std::string& out_path) {
  std::vector<ExperimentSpec> specs = read_specs(specs_path);
  Manifest man = read_manifest(manifest_path, /*check_files=*/false);
  MatrixReport rep = run_matrix(specs, man, out_path);
  std::cout << rep.to_tsv();
  return rep.all_ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech representation toolkit"};
  app.require_subcommand(1);

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "synthesize a desk-scale dataset");
  synth->add_option("--out-dir", sy.out_dir, "output directory")->required();
  synth->add_option("--sentences", sy.sentences, "number of utterances");
  synth->add_option("--text-seed", sy.text_seed, "sentence sampling seed");
  synth->add_option("--data-seed", sy.data_seed, "encoder noise seed");
  synth->add_option("--sigma", sy.sigma, "noise level");
  synth->add_option("--layer", sy.layer, "encoder layer tag (0, 8, 16, 24)");
  synth->add_option("--mode", sy.mode, "features | lattices | both");

  TrainKmeansArgs km;
  auto* tkm = app.add_subcommand("train-kmeans", "train a codebook on SFM1 features");
  tkm->add_option("--manifest", km.manifest)->required();
  tkm->add_option("--out", km.out)->required();
  tkm->add_option("--k", km.k, "number of clusters");
  tkm->add_option("--seed", km.seed);
  tkm->add_option("--max-iters", km.max_iters);
  tkm->add_option("--tol", km.tol);
  tkm->add_option("--subset", km.subset, "frame budget for training (0 = all)");

  QuantizeArgs qa;
  auto* qz = app.add_subcommand("quantize", "map features to discrete units");
  qz->add_option("--codebook", qa.codebook)->required();
  qz->add_option("--features", qa.features)->required();
  qz->add_flag("--no-dedup", qa.no_dedup, "keep consecutive duplicates");

  CtcDecodeArgs cd;
  auto* ctc = app.add_subcommand("ctc-decode", "decode CLG1 lattices into prompt text");
  ctc->add_option("--lattice", cd.lattice, "single lattice file");
  ctc->add_option("--manifest", cd.manifest, "lattice manifest");
  ctc->add_option("--lm", cd.lm_path, "ARPA model for shallow fusion");
  ctc->add_option("--beam", cd.beam);
  ctc->add_option("--lm-weight", cd.lm_weight);
  ctc->add_option("--word-bonus", cd.word_bonus);
  ctc->add_option("--nbest", cd.nbest);
  ctc->add_option("--method", cd.method, "prompt construction @1..@6");
  ctc->add_option("--out", cd.out, "write id\\tprompt lines here instead of stdout");

  TrainNgramArgs ng;
  auto* tng = app.add_subcommand("train-ngram", "train a backoff n-gram, write ARPA");
  tng->add_option("--manifest", ng.manifest, "take text from manifest refs");
  tng->add_option("--text", ng.text, "plain text file, one sentence per line");
  tng->add_option("--out", ng.out)->required();
  tng->add_option("--order", ng.order);
  tng->add_option("--smoothing", ng.smoothing, "wittenbell | addk:<k>");
  tng->add_flag("--word-level", ng.word_level, "word tokens instead of characters");

  TrainLmArgs tl;
  auto* tlm = app.add_subcommand("train-lm", "train the toy transformer LM");
  tlm->add_option("--config", tl.config, "JSON with n_layers/d_model/n_heads/d_ff/max_seq");
  tlm->add_option("--manifest", tl.manifest)->required();
  tlm->add_option("--mode", tl.mode, "text | cluster | adapter")->required();
  tlm->add_option("--codebook", tl.codebook, "KMB1 codebook for cluster mode");
  tlm->add_option("--alpha", tl.alpha, "consistency weight (default 10 continuous, 0 discrete)");
  tlm->add_option("--lr", tl.lr);
  tlm->add_option("--seed", tl.seed);
  tlm->add_option("--steps", tl.steps);
  tlm->add_option("--batch", tl.batch);
  tlm->add_option("--out", tl.out)->required();

  DecodeArgs da;
  auto* dec = app.add_subcommand("decode", "greedy decoding from a TLM1 checkpoint");
  dec->add_option("--ckpt", da.ckpt)->required();
  dec->add_option("--manifest", da.manifest)->required();
  dec->add_option("--codebook", da.codebook);
  dec->add_option("--mode", da.mode, "text | cluster | adapter (default: from checkpoint)");
  dec->add_option("--max-new", da.max_new);
  dec->add_flag("--score", da.score, "also print corpus WER against the refs");

  std::string wref, whyp;
  auto* wcmd = app.add_subcommand("wer", "word error rate of hyp against ref");
  wcmd->add_option("--ref", wref)->required();
  wcmd->add_option("--hyp", whyp)->required();

  std::string mx_specs, mx_manifest, mx_out;
  auto* mx = app.add_subcommand("run-matrix", "run an experiment spec matrix");
  mx->add_option("--specs", mx_specs)->required();
  mx->add_option("--manifest", mx_manifest)->required();
  mx->add_option("--out", mx_out, "TSV report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(sy);
    if (*tkm) return cmd_train_kmeans(km);
    if (*qz) return cmd_quantize(qa);
    if (*ctc) return cmd_ctc_decode(cd);
    if (*tng) return cmd_train_ngram(ng);
    if (*tlm) return cmd_train_lm(tl);
    if (*dec) return cmd_decode(da);
    if (*wcmd) return cmd_wer(wref, whyp);
    if (*mx) return cmd_run_matrix(mx_specs, mx_manifest, mx_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
