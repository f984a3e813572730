#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace srtk {

// ---------------------------------------------------------------------------
// Errors. One class per failure kind so callers (and tests) can catch them
// individually; all carry a human-readable message with file offsets / line
// numbers where that is meaningful.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SRTK_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

SRTK_DEFINE_ERROR(BadMagic);
SRTK_DEFINE_ERROR(TruncatedFile);
SRTK_DEFINE_ERROR(NonFiniteValue);
SRTK_DEFINE_ERROR(IoError);
SRTK_DEFINE_ERROR(MalformedFile);
SRTK_DEFINE_ERROR(UnknownCharacter);
SRTK_DEFINE_ERROR(TooFewFrames);
SRTK_DEFINE_ERROR(DimensionMismatch);
SRTK_DEFINE_ERROR(EmptyLattice);
SRTK_DEFINE_ERROR(MissingNBest);
SRTK_DEFINE_ERROR(EmptyCorpus);
SRTK_DEFINE_ERROR(MalformedArpa);
SRTK_DEFINE_ERROR(SequenceTooLong);
SRTK_DEFINE_ERROR(LengthMismatch);
SRTK_DEFINE_ERROR(ModeMismatch);
SRTK_DEFINE_ERROR(NonFiniteGradient);
SRTK_DEFINE_ERROR(EmptyReference);
SRTK_DEFINE_ERROR(MissingArtifact);

#undef SRTK_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Row-major dense matrix. Deliberately minimal: the whole toolkit runs at
// desk scale and favors bit-exact, single-threaded arithmetic over BLAS.
// ---------------------------------------------------------------------------

template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c, T fill = T(0)) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

  T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distributions are hand-rolled because std::normal_distribution is not
// bit-reproducible across standard library implementations.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) { return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n; }

  // Standard normal via Box-Muller; generates pairs, caches the second.
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// FNV-1a, used to derive per-utterance noise streams from text.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Fixed-point decimal formatting ("0.90", "12.35"); snprintf keeps the
// rounding identical everywhere.
std::string format_fixed(double value, int decimals);

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace srtk
