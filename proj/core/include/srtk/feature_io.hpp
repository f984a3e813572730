#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srtk/common.hpp"

namespace srtk {

// T x D matrix of encoder activations. layer_tag records which encoder layer
// produced the frames; frame_rate_hz is in-memory metadata and is not part
// of the on-disk format.
struct FeatureMatrix {
  MatF frames;
  uint32_t layer_tag = 0;
  float frame_rate_hz = 50.0f;

  int num_frames() const { return frames.rows; }
  int dim() const { return frames.cols; }
};

// Ordered symbol table. blank_index / space_index are optional roles used by
// CTC lattices and text rendering.
struct Vocabulary {
  std::vector<std::string> symbols;
  std::optional<int> blank_index;
  std::optional<int> space_index;

  int size() const { return static_cast<int>(symbols.size()); }
  // Throws MalformedFile if symbols are not distinct or an index is out of range.
  void validate() const;
};

// T x V per-frame log posteriors over `vocab`. Every row must satisfy
// |sum(exp(row)) - 1| < 1e-5.
struct CtcLattice {
  MatD log_posteriors;
  Vocabulary vocab;

  int num_frames() const { return log_posteriors.rows; }
  void validate() const;
};

struct ManifestEntry {
  std::string id;
  std::string path;
  std::string ref;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

// --- SFM1 feature matrix format -------------------------------------------
// magic "SFM1" | u32 T | u32 D | u32 layer_tag | T*D f32, row major. All LE.

void write_feature_matrix(const FeatureMatrix& m, const std::string& path);
FeatureMatrix read_feature_matrix(const std::string& path);

// --- CLG1 lattice format ---------------------------------------------------
// magic "CLG1" | u32 T | u32 V | i32 blank_index | i32 space_index |
// V x { u32 len, UTF-8 bytes } | T*V f32 log posteriors, row major.
// Absent blank/space indices are stored as -1.

void write_ctc_lattice(const CtcLattice& lat, const std::string& path);
CtcLattice read_ctc_lattice(const std::string& path);

// Peeks at the first four bytes: "SFM1", "CLG1" or "" for anything else.
std::string sniff_magic(const std::string& path);

// --- Manifest: UTF-8 JSON lines, one {"id","path","ref"} object per line ---
// Relative paths are resolved against the manifest's directory. With
// check_files set, a missing referenced file raises MissingArtifact.

Manifest read_manifest(const std::string& path, bool check_files = true);
void write_manifest(const Manifest& m, const std::string& path);

}  // namespace srtk
