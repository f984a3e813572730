#include "srtk/kmeans.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace srtk {

namespace {

double sq_dist(const float* a, const float* b, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += diff * diff;
  }
  return s;
}

// D^2-weighted k-means++ seeding; duplicate points get weight 0 once chosen.
MatF kmeans_plus_plus(const MatF& pts, int k, Rng& rng) {
  int n = pts.rows, d = pts.cols;
  MatF centers(k, d);
  std::vector<double> dist2(n, std::numeric_limits<double>::infinity());

  int first = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
  std::memcpy(centers.row(0), pts.row(first), sizeof(float) * d);

  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], sq_dist(pts.row(i), centers.row(c - 1), d));
      total += dist2[i];
    }
    int chosen;
    if (total <= 0.0) {
      // every remaining point coincides with a center; fall back to uniform
      chosen = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      double acc = 0.0;
      chosen = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > r) {
          chosen = i;
          break;
        }
      }
    }
    std::memcpy(centers.row(c), pts.row(chosen), sizeof(float) * d);
  }
  return centers;
}

}  // namespace

Codebook train_kmeans(const std::vector<FeatureMatrix>& data, int k, const KMeansOptions& opts) {
  if (k < 2) throw std::invalid_argument("train_kmeans: k must be >= 2");
  int d = -1;
  size_t total_frames = 0;
  for (const auto& m : data) {
    if (d < 0) d = m.dim();
    if (m.dim() != d)
      throw DimensionMismatch("feature matrices disagree on D: " + std::to_string(d) + " vs " +
                              std::to_string(m.dim()));
    total_frames += static_cast<size_t>(m.num_frames());
  }
  if (total_frames < static_cast<size_t>(k))
    throw TooFewFrames(std::to_string(total_frames) + " frames for k=" + std::to_string(k));

  MatF pts(static_cast<int>(total_frames), d);
  int r = 0;
  for (const auto& m : data)
    for (int t = 0; t < m.num_frames(); ++t, ++r)
      std::memcpy(pts.row(r), m.frames.row(t), sizeof(float) * d);
  int n = pts.rows;

  Rng rng(opts.seed);
  MatF centers = kmeans_plus_plus(pts, k, rng);

  Codebook cb;
  std::vector<int> assign(n, -1);
  std::vector<double> ptdist(n, 0.0);

  auto assign_all = [&]() {
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int bestc = 0;
      for (int c = 0; c < k; ++c) {
        double dd = sq_dist(pts.row(i), centers.row(c), d);
        if (dd < best) {
          best = dd;
          bestc = c;
        }
      }
      assign[i] = bestc;
      ptdist[i] = best;
      inertia += best;
    }
    return inertia;
  };

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    double inertia = assign_all();

    // Empty-cluster repair: re-seed at the point currently farthest from its
    // assigned centroid, then redo the assignment.
    for (bool repaired = true; repaired;) {
      repaired = false;
      std::vector<int> counts(k, 0);
      for (int i = 0; i < n; ++i) counts[assign[i]]++;
      for (int c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i)
          if (ptdist[i] > fd) {
            fd = ptdist[i];
            far = i;
          }
        std::memcpy(centers.row(c), pts.row(far), sizeof(float) * d);
        inertia = assign_all();
        repaired = true;
        break;
      }
    }

    cb.train_meta.inertia_history.push_back(inertia);
    cb.train_meta.iterations_run = iter + 1;

    // Means of the assigned points, accumulated in double.
    MatD sums(k, d);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      counts[assign[i]]++;
      const float* p = pts.row(i);
      double* srow = sums.row(assign[i]);
      for (int j = 0; j < d; ++j) srow[j] += p[j];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // cannot happen after repair
      for (int j = 0; j < d; ++j) {
        float nv = static_cast<float>(sums.at(c, j) / counts[c]);
        shift = std::max(shift, std::abs(static_cast<double>(nv) - centers.at(c, j)));
        centers.at(c, j) = nv;
      }
    }
    if (shift < opts.tol) break;
  }

  cb.train_meta.final_inertia = assign_all();
  cb.centroids = std::move(centers);
  return cb;
}

DiscreteTokenSeq quantize(const Codebook& cb, const FeatureMatrix& m) {
  if (m.dim() != cb.dim())
    throw DimensionMismatch("frames have D=" + std::to_string(m.dim()) + " but codebook has D=" +
                            std::to_string(cb.dim()));
  DiscreteTokenSeq seq;
  seq.tokens.reserve(static_cast<size_t>(m.num_frames()));
  for (int t = 0; t < m.num_frames(); ++t) {
    double best = std::numeric_limits<double>::infinity();
    int bestc = 0;
    for (int c = 0; c < cb.k(); ++c) {
      double dd = sq_dist(m.frames.row(t), cb.centroids.row(c), cb.dim());
      if (dd < best) {
        best = dd;
        bestc = c;
      }
    }
    seq.tokens.push_back(bestc);
  }
  return seq;
}

DiscreteTokenSeq dedup(const DiscreteTokenSeq& seq) {
  DiscreteTokenSeq out;
  out.deduped = true;
  for (int t : seq.tokens)
    if (out.tokens.empty() || out.tokens.back() != t) out.tokens.push_back(t);
  return out;
}

namespace {

void put_u32(std::ofstream& out, uint32_t x) {
  char b[4] = {static_cast<char>(x & 0xFF), static_cast<char>((x >> 8) & 0xFF),
               static_cast<char>((x >> 16) & 0xFF), static_cast<char>((x >> 24) & 0xFF)};
  out.write(b, 4);
}

}  // namespace

void write_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write("KMB1", 4);
  put_u32(out, static_cast<uint32_t>(cb.k()));
  put_u32(out, static_cast<uint32_t>(cb.dim()));
  for (size_t i = 0; i < cb.centroids.size(); ++i) {
    if (!std::isfinite(cb.centroids.v[i])) throw NonFiniteValue(path + ": centroid value " + std::to_string(i));
    uint32_t bits;
    std::memcpy(&bits, &cb.centroids.v[i], 4);
    put_u32(out, bits);
  }
  if (!out) throw IoError("short write to " + path);
}

Codebook read_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  if (bytes.size() < 4 || bytes.compare(0, 4, "KMB1") != 0)
    throw BadMagic(path + ": expected \"KMB1\" at byte offset 0");
  auto u32_at = [&](size_t off) {
    if (off + 4 > bytes.size())
      throw TruncatedFile(path + ": need 4 bytes at offset " + std::to_string(off));
    uint32_t x = 0;
    for (int i = 3; i >= 0; --i) x = (x << 8) | static_cast<unsigned char>(bytes[off + i]);
    return x;
  };
  uint32_t k = u32_at(4), d = u32_at(8);
  if (k < 2 || d < 1) throw MalformedFile(path + ": bad K or D in header");
  Codebook cb;
  cb.centroids = MatF(static_cast<int>(k), static_cast<int>(d));
  size_t need = 12 + cb.centroids.size() * 4;
  if (bytes.size() != need)
    throw TruncatedFile(path + ": expected " + std::to_string(need) + " bytes, have " +
                        std::to_string(bytes.size()));
  for (size_t i = 0; i < cb.centroids.size(); ++i) {
    uint32_t bits = u32_at(12 + i * 4);
    float x;
    std::memcpy(&x, &bits, 4);
    if (!std::isfinite(x)) throw NonFiniteValue(path + ": value at byte offset " + std::to_string(12 + i * 4));
    cb.centroids.v[i] = x;
  }
  return cb;
}

}  // namespace srtk
