#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srtk/feature_io.hpp"
#include "srtk/kmeans.hpp"
#include "srtk/ngram.hpp"
#include "srtk/prompt.hpp"
#include "srtk/synth_encoder.hpp"
#include "srtk/transformer.hpp"
#include "srtk/wer.hpp"

namespace srtk {

// ---------------------------------------------------------------------------
// Synthetic task: sentences over a fixed 50-word vocabulary of 3-7 letter
// words, 3-8 words per sentence. All deterministic from the seed.
// ---------------------------------------------------------------------------

std::vector<std::string> make_task_words(int n_words, uint64_t seed);
std::vector<std::string> make_task_sentences(int n, uint64_t seed);

// Character set covering transcripts and every prompt-template character.
const std::string& harness_charset();

// Posterior features: exp of the lattice rows, a supervised continuous
// representation aligned with the text.
FeatureMatrix lattice_posterior_features(const CtcLattice& lat);

// ---------------------------------------------------------------------------
// Experiment matrix
// ---------------------------------------------------------------------------

enum class RepType { DiscUnsup, DiscSup, ContUnsup, ContSup };

std::string rep_type_name(RepType t);
RepType rep_type_from(const std::string& s);

struct ExperimentSpec {
  ExperimentSpec() {
    lm.max_seq = 0;   // auto-sized to the data by the runner
    lm.alpha = -1.0;  // auto: 100 in continuous mode, 0 in discrete
  }

  std::string id;
  RepType rep_type = RepType::ContUnsup;
  uint32_t layer_tag = 0;
  std::optional<int> k_clusters;              // present iff disc-unsup
  std::optional<PromptMethod> prompt_method;  // present iff disc-sup
  std::vector<uint64_t> seeds{1};

  // data
  double sigma = 0.25;
  double sigma_other = -1.0;  // < 0: defaults to sigma * 1.5 + 0.1
  uint64_t data_seed = 1234;
  int holdout = 0;  // eval on the last N manifest entries; 0 = eval on train
  bool use_files = false;  // read manifest paths instead of synthesizing
  int augment = 1;  // training noise variants per utterance (synth route only)

  // training
  int train_steps = 600;
  int batch_size = 4;
  double lr = 0.01;
  LmConfig lm;  // vocab/front-end/mode fields are filled by the runner

  // disc-sup decoding
  int beam = 8;
  double lm_weight = 0.5;
  double word_bonus = 0.0;
  int ngram_order = 3;

  // disc-unsup clustering
  int kmeans_subset = 0;  // frames used for codebook training; 0 = all

  void validate() const;
};

std::vector<ExperimentSpec> read_specs(const std::string& path);  // JSON array

struct SpecResult {
  std::string id;
  std::string params;  // human-readable parameter summary
  RepType rep_type = RepType::ContUnsup;
  bool ok = false;
  std::string error;
  double wer_clean = 0.0;  // percent, averaged over seeds
  double wer_other = 0.0;
  std::vector<double> per_seed_clean;
};

struct MatrixReport {
  std::vector<SpecResult> rows;
  bool all_ok() const;
  std::string to_tsv() const;
};

// Runs every spec against the manifest (ids + reference transcripts; paths
// only consulted when a spec sets use_files). A failing spec is recorded and
// the rest continue. With out_path nonempty the TSV report is written there.
MatrixReport run_matrix(const std::vector<ExperimentSpec>& specs, const Manifest& manifest,
                        const std::string& out_path);

}  // namespace srtk
