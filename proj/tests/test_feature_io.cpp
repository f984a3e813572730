#include <doctest.h>

#include <cstring>
#include <map>
#include <set>
#include <fstream>

#include "oracles.hpp"
#include "srtk/ctc_decode.hpp"
#include "srtk/feature_io.hpp"
#include "srtk/kmeans.hpp"
#include "srtk/synth_encoder.hpp"

using namespace srtk;

namespace {

FeatureMatrix make_matrix(int t, int d, uint32_t layer, std::initializer_list<float> vals) {
  FeatureMatrix m;
  m.frames = MatF(t, d);
  size_t i = 0;
  for (float v : vals) m.frames.v[i++] = v;
  m.layer_tag = layer;
  return m;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("sfm1 round-trips a 3x2 matrix bit-exactly") {
  FeatureMatrix m = make_matrix(3, 2, 8, {1, 2, 3, 4, 5, 6});
  auto path = oracles::temp_path("sfm_roundtrip");
  write_feature_matrix(m, path);
  FeatureMatrix r = read_feature_matrix(path);
  CHECK(r.frames == m.frames);
  CHECK(r.layer_tag == 8);
}

TEST_CASE("sfm1 1x1 zero matrix") {
  FeatureMatrix m = make_matrix(1, 1, 0, {0.0f});
  auto path = oracles::temp_path("sfm_min");
  write_feature_matrix(m, path);
  CHECK(read_feature_matrix(path).frames == m.frames);
}

TEST_CASE("sfm1 byte layout: 1x1 [[1.0]] is 20 bytes ending 00 00 80 3F") {
  FeatureMatrix m = make_matrix(1, 1, 0, {1.0f});
  auto path = oracles::temp_path("sfm_bytes");
  write_feature_matrix(m, path);
  std::string b = file_bytes(path);
  REQUIRE(b.size() == 20);
  CHECK(b.substr(0, 4) == "SFM1");
  CHECK(static_cast<unsigned char>(b[16]) == 0x00);
  CHECK(static_cast<unsigned char>(b[17]) == 0x00);
  CHECK(static_cast<unsigned char>(b[18]) == 0x80);
  CHECK(static_cast<unsigned char>(b[19]) == 0x3F);
}

TEST_CASE("sfm1 2x3 matrix writes 40 bytes") {
  FeatureMatrix m = make_matrix(2, 3, 16, {1, 2, 3, 4, 5, 6});
  auto path = oracles::temp_path("sfm_size");
  write_feature_matrix(m, path);
  CHECK(file_bytes(path).size() == 40);
}

TEST_CASE("sfm1 bad magic") {
  auto path = oracles::temp_path("sfm_badmagic");
  std::ofstream(path, std::ios::binary) << "XXXX123456789012345678";
  CHECK_THROWS_AS(read_feature_matrix(path), BadMagic);
}

TEST_CASE("sfm1 truncation names the offset") {
  FeatureMatrix m = make_matrix(2, 2, 0, {1, 2, 3, 4});
  auto path = oracles::temp_path("sfm_trunc");
  write_feature_matrix(m, path);
  std::string b = file_bytes(path).substr(0, 22);
  std::ofstream(path, std::ios::binary | std::ios::trunc) << b;
  try {
    read_feature_matrix(path);
    FAIL("expected TruncatedFile");
  } catch (const TruncatedFile& e) {
    CHECK(std::string(e.what()).find("offset 20") != std::string::npos);
  }
}

TEST_CASE("sfm1 rejects NaN on write") {
  FeatureMatrix m = make_matrix(1, 2, 0, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(write_feature_matrix(m, oracles::temp_path("sfm_nan")), NonFiniteValue);
}

TEST_CASE("sfm1 rejects non-finite on read") {
  FeatureMatrix m = make_matrix(1, 1, 0, {1.0f});
  auto path = oracles::temp_path("sfm_inf");
  write_feature_matrix(m, path);
  std::string b = file_bytes(path);
  b[16] = 0x00; b[17] = 0x00; b[18] = static_cast<char>(0x80); b[19] = 0x7F;  // +inf
  std::ofstream(path, std::ios::binary | std::ios::trunc) << b;
  CHECK_THROWS_AS(read_feature_matrix(path), NonFiniteValue);
}

TEST_CASE("sfm1 property: random shapes round-trip bit-exactly") {
  Rng rng(20260808);
  for (int it = 0; it < 120; ++it) {
    int t = 1 + static_cast<int>(rng.uniform_int(64));
    int d = 1 + static_cast<int>(rng.uniform_int(32));
    FeatureMatrix m;
    m.frames = MatF(t, d);
    for (auto& v : m.frames.v) v = static_cast<float>(rng.gaussian() * 10.0);
    m.layer_tag = static_cast<uint32_t>(rng.uniform_int(32));
    auto path = oracles::temp_path("sfm_prop");
    write_feature_matrix(m, path);
    FeatureMatrix r = read_feature_matrix(path);
    REQUIRE(r.frames == m.frames);
    REQUIRE(r.layer_tag == m.layer_tag);
  }
}

TEST_CASE("clg1 round-trip and validation") {
  SynthOptions so;
  so.seed = 11;
  so.noise_sigma = 0.4;
  CtcLattice lat = synth_encode_ctc("HELLO WORLD", so);
  auto path = oracles::temp_path("clg_roundtrip");
  write_ctc_lattice(lat, path);
  CtcLattice r = read_ctc_lattice(path);
  CHECK(r.vocab.symbols == lat.vocab.symbols);
  CHECK(r.vocab.blank_index == lat.vocab.blank_index);
  CHECK(r.vocab.space_index == lat.vocab.space_index);
  REQUIRE(r.log_posteriors.rows == lat.log_posteriors.rows);
  // values are stored as f32; the in-memory lattice is already f32-quantized
  CHECK(r.log_posteriors.v == lat.log_posteriors.v);
}

TEST_CASE("clg1 bad magic and truncation") {
  auto path = oracles::temp_path("clg_bad");
  std::ofstream(path, std::ios::binary) << "NOPE";
  CHECK_THROWS_AS(read_ctc_lattice(path), BadMagic);
  SynthOptions so;
  so.seed = 3;
  CtcLattice lat = synth_encode_ctc("AB", so);
  write_ctc_lattice(lat, path);
  std::string b = file_bytes(path);
  std::ofstream(path, std::ios::binary | std::ios::trunc) << b.substr(0, b.size() - 3);
  CHECK_THROWS_AS(read_ctc_lattice(path), TruncatedFile);
}

TEST_CASE("manifest round-trip, duplicate ids, missing files") {
  auto feat_path = oracles::temp_path("man_feat");
  write_feature_matrix(make_matrix(1, 1, 0, {0.5f}), feat_path);

  Manifest m;
  m.entries.push_back({"utt1", feat_path, "HELLO"});
  m.entries.push_back({"utt2", feat_path, "WORLD AGAIN"});
  auto path = oracles::temp_path("manifest");
  write_manifest(m, path);
  Manifest r = read_manifest(path);
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].id == "utt1");
  CHECK(r.entries[1].ref == "WORLD AGAIN");

  std::ofstream(path, std::ios::app) << "{\"id\": \"utt1\", \"path\": \"" << feat_path
                                     << "\", \"ref\": \"X\"}\n";
  CHECK_THROWS_AS(read_manifest(path), MalformedFile);

  Manifest missing;
  missing.entries.push_back({"u", "/nonexistent/file.sfm", "A"});
  auto path2 = oracles::temp_path("manifest2");
  write_manifest(missing, path2);
  CHECK_THROWS_AS(read_manifest(path2), MissingArtifact);
  CHECK(read_manifest(path2, /*check_files=*/false).entries.size() == 1);
}

TEST_CASE("synth continuous is deterministic and built from per-character templates") {
  SynthOptions so;
  so.seed = 7;
  so.noise_sigma = 0.0;
  FeatureMatrix a = synth_encode_continuous("AB", so);
  FeatureMatrix b = synth_encode_continuous("AB", so);
  CHECK(a.frames == b.frames);
  CHECK(a.num_frames() >= 4);  // at least two frames per character
  // with zero noise every frame is its character's template plus the
  // position-keyed variant offset
  auto tmpl = synth_char_template('A', 7, so.dim);
  auto var = synth_char_variant('A', 0, 7, so.dim);
  for (int j = 0; j < so.dim; ++j) CHECK(a.frames.at(0, j) == tmpl[j] + var[j]);
}

TEST_CASE("noiseless k-means at the charset size recovers characters exactly") {
  SynthOptions so;
  so.seed = 21;
  so.noise_sigma = 0.0;
  std::vector<std::string> texts = {"THE QUICK BROWN FOX JUMPS OVER A LAZY DOG",
                                    "PACK MY BOX WITH FIVE DOZEN JUGS", "VEXW YZK"};
  std::vector<FeatureMatrix> feats;
  std::vector<std::vector<int>> aligns(texts.size());
  for (size_t i = 0; i < texts.size(); ++i)
    feats.push_back(synth_encode_continuous(texts[i], so, &aligns[i]));

  int n_chars = static_cast<int>(synth_charset().size());
  // char clusters are the global optimum; a handful of seeded restarts finds it
  Codebook cb;
  double best = std::numeric_limits<double>::infinity();
  for (uint64_t seed = 0; seed < 12; ++seed) {
    Codebook c = train_kmeans(feats, n_chars, {.seed = seed});
    if (c.train_meta.final_inertia < best) {
      best = c.train_meta.final_inertia;
      cb = std::move(c);
    }
  }

  // every frame of a character lands in one cluster, and no two characters
  // share a cluster
  std::map<char, int> char_cluster;
  bool consistent = true;
  for (size_t ti = 0; ti < texts.size(); ++ti) {
    DiscreteTokenSeq seq = quantize(cb, feats[ti]);
    for (size_t frame = 0; frame < seq.tokens.size(); ++frame) {
      char c = texts[ti][static_cast<size_t>(aligns[ti][frame])];
      auto it = char_cluster.find(c);
      if (it == char_cluster.end())
        char_cluster[c] = seq.tokens[frame];
      else
        consistent = consistent && it->second == seq.tokens[frame];
    }
  }
  CHECK(consistent);
  std::set<int> used;
  for (auto& [c, cl] : char_cluster) used.insert(cl);
  CHECK(used.size() == char_cluster.size());
}

TEST_CASE("synth continuous rejects unknown characters") {
  SynthOptions so;
  CHECK_THROWS_AS(synth_encode_continuous("a?", so), UnknownCharacter);
}

TEST_CASE("synth lattice greedy-decodes to its text at zero noise") {
  SynthOptions so;
  so.seed = 1;
  so.noise_sigma = 0.0;
  CtcLattice lat = synth_encode_ctc("CAT", so);
  CHECK(ctc_greedy(lat).text == "CAT");
  CtcLattice lat2 = synth_encode_ctc("THE FAT CAT", so);
  CHECK(ctc_greedy(lat2).text == "THE FAT CAT");
}

TEST_CASE("synth lattice rows normalize under noise") {
  SynthOptions so;
  so.seed = 1;
  so.noise_sigma = 0.5;
  CtcLattice lat = synth_encode_ctc("CAT", so);
  for (int t = 0; t < lat.num_frames(); ++t) {
    double sum = 0.0;
    for (int v = 0; v < lat.log_posteriors.cols; ++v) sum += std::exp(lat.log_posteriors.at(t, v));
    CHECK(std::abs(sum - 1.0) < 1e-5);
  }
}

TEST_CASE("higher layer tags attenuate noise") {
  CHECK(synth_effective_sigma(1.0, 0) == doctest::Approx(1.0));
  CHECK(synth_effective_sigma(1.0, 8) < synth_effective_sigma(1.0, 0));
  CHECK(synth_effective_sigma(1.0, 24) < synth_effective_sigma(1.0, 16));
}
