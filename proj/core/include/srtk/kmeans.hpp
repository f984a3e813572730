#pragma once

#include <string>
#include <vector>

#include "srtk/feature_io.hpp"

namespace srtk {

struct KMeansTrainMeta {
  int iterations_run = 0;
  double final_inertia = 0.0;
  // Inertia recorded after every assignment step; non-increasing.
  std::vector<double> inertia_history;
};

struct Codebook {
  MatF centroids;  // K x D
  KMeansTrainMeta train_meta;

  int k() const { return centroids.rows; }
  int dim() const { return centroids.cols; }
};

struct DiscreteTokenSeq {
  std::vector<int> tokens;  // each in [0, K)
  bool deduped = false;
};

struct KMeansOptions {
  uint64_t seed = 0;
  int max_iters = 100;
  double tol = 1e-4;  // stop when the max centroid coordinate shift drops below this
};

// Lloyd's algorithm with k-means++ seeding. A cluster that loses all members
// is re-seeded at the point farthest from its assigned centroid.
// Throws TooFewFrames if the data has fewer frames than k, DimensionMismatch
// if the matrices disagree on D.
Codebook train_kmeans(const std::vector<FeatureMatrix>& data, int k, const KMeansOptions& opts = {});

// Nearest centroid per frame (squared Euclidean, ties to the lowest index).
DiscreteTokenSeq quantize(const Codebook& cb, const FeatureMatrix& m);

// Collapses consecutive duplicate tokens. Idempotent.
DiscreteTokenSeq dedup(const DiscreteTokenSeq& seq);

// --- KMB1 codebook format: magic "KMB1" | u32 K | u32 D | K*D f32 ----------
void write_codebook(const Codebook& cb, const std::string& path);
Codebook read_codebook(const std::string& path);

}  // namespace srtk
