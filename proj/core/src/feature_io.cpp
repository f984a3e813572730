#include "srtk/feature_io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace srtk {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

void Vocabulary::validate() const {
  std::set<std::string> seen;
  for (const auto& s : symbols) {
    if (!seen.insert(s).second) throw MalformedFile("duplicate vocabulary symbol '" + s + "'");
  }
  if (blank_index && (*blank_index < 0 || *blank_index >= size()))
    throw MalformedFile("blank_index " + std::to_string(*blank_index) + " out of range");
  if (space_index && (*space_index < 0 || *space_index >= size()))
    throw MalformedFile("space_index " + std::to_string(*space_index) + " out of range");
}

void CtcLattice::validate() const {
  vocab.validate();
  if (log_posteriors.cols != vocab.size())
    throw DimensionMismatch("lattice has " + std::to_string(log_posteriors.cols) +
                            " columns but vocabulary has " + std::to_string(vocab.size()) + " symbols");
  for (int t = 0; t < log_posteriors.rows; ++t) {
    double sum = 0.0;
    for (int v = 0; v < log_posteriors.cols; ++v) {
      double lp = log_posteriors.at(t, v);
      if (!std::isfinite(lp) && lp != -std::numeric_limits<double>::infinity())
        throw NonFiniteValue("lattice row " + std::to_string(t));
      sum += std::exp(lp);
    }
    if (std::abs(sum - 1.0) >= 1e-5)
      throw MalformedFile("lattice row " + std::to_string(t) + " sums to " + std::to_string(sum));
  }
}

namespace {

void put_u32(std::string& out, uint32_t x) {
  char b[4] = {static_cast<char>(x & 0xFF), static_cast<char>((x >> 8) & 0xFF),
               static_cast<char>((x >> 16) & 0xFF), static_cast<char>((x >> 24) & 0xFF)};
  out.append(b, 4);
}

void put_f32(std::string& out, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  size_t offset() const { return pos_; }

  uint32_t u32() {
    need(4);
    uint32_t x = 0;
    for (int i = 3; i >= 0; --i) x = (x << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
    pos_ += 4;
    return x;
  }

  int32_t i32() { return static_cast<int32_t>(u32()); }

  float f32() {
    uint32_t bits = u32();
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
  }

  std::string raw(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void expect_magic(const char* magic) {
    if (bytes_.size() < 4 || bytes_.compare(0, 4, magic) != 0)
      throw BadMagic(path_ + ": expected \"" + magic + "\" at byte offset 0");
    pos_ = 4;
  }

  void expect_end() const {
    if (pos_ != bytes_.size())
      throw MalformedFile(path_ + ": " + std::to_string(bytes_.size() - pos_) +
                          " trailing bytes at offset " + std::to_string(pos_));
  }

 private:
  void need(size_t n) {
    if (pos_ + n > bytes_.size())
      throw TruncatedFile(path_ + ": need " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + " but file has " + std::to_string(bytes_.size()));
  }

  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace

void write_feature_matrix(const FeatureMatrix& m, const std::string& path) {
  if (m.frames.rows < 1 || m.frames.cols < 1)
    throw std::invalid_argument("feature matrix must be at least 1x1");
  std::string out;
  out.reserve(16 + m.frames.size() * 4);
  out.append("SFM1");
  put_u32(out, static_cast<uint32_t>(m.frames.rows));
  put_u32(out, static_cast<uint32_t>(m.frames.cols));
  put_u32(out, m.layer_tag);
  for (size_t i = 0; i < m.frames.size(); ++i) {
    if (!std::isfinite(m.frames.v[i]))
      throw NonFiniteValue(path + ": value " + std::to_string(i) + " at byte offset " +
                           std::to_string(16 + i * 4));
    put_f32(out, m.frames.v[i]);
  }
  spit(path, out);
}

FeatureMatrix read_feature_matrix(const std::string& path) {
  ByteReader r(slurp(path), path);
  r.expect_magic("SFM1");
  uint32_t t = r.u32();
  uint32_t d = r.u32();
  uint32_t layer = r.u32();
  if (t < 1 || d < 1) throw MalformedFile(path + ": zero dimension in header");
  FeatureMatrix m;
  m.frames = MatF(static_cast<int>(t), static_cast<int>(d));
  m.layer_tag = layer;
  for (size_t i = 0; i < m.frames.size(); ++i) {
    size_t off = r.offset();
    float x = r.f32();
    if (!std::isfinite(x)) throw NonFiniteValue(path + ": value at byte offset " + std::to_string(off));
    m.frames.v[i] = x;
  }
  r.expect_end();
  return m;
}

void write_ctc_lattice(const CtcLattice& lat, const std::string& path) {
  lat.validate();
  if (lat.log_posteriors.rows < 1) throw std::invalid_argument("lattice must have at least one frame");
  std::string out;
  out.append("CLG1");
  put_u32(out, static_cast<uint32_t>(lat.log_posteriors.rows));
  put_u32(out, static_cast<uint32_t>(lat.log_posteriors.cols));
  put_u32(out, static_cast<uint32_t>(lat.vocab.blank_index.value_or(-1)));
  put_u32(out, static_cast<uint32_t>(lat.vocab.space_index.value_or(-1)));
  for (const auto& sym : lat.vocab.symbols) {
    put_u32(out, static_cast<uint32_t>(sym.size()));
    out.append(sym);
  }
  for (size_t i = 0; i < lat.log_posteriors.size(); ++i)
    put_f32(out, static_cast<float>(lat.log_posteriors.v[i]));
  spit(path, out);
}

CtcLattice read_ctc_lattice(const std::string& path) {
  ByteReader r(slurp(path), path);
  r.expect_magic("CLG1");
  uint32_t t = r.u32();
  uint32_t v = r.u32();
  int32_t blank = r.i32();
  int32_t space = r.i32();
  if (t < 1 || v < 1) throw MalformedFile(path + ": zero dimension in header");
  CtcLattice lat;
  for (uint32_t i = 0; i < v; ++i) {
    uint32_t len = r.u32();
    lat.vocab.symbols.push_back(r.raw(len));
  }
  if (blank >= 0) lat.vocab.blank_index = blank;
  if (space >= 0) lat.vocab.space_index = space;
  lat.log_posteriors = MatD(static_cast<int>(t), static_cast<int>(v));
  for (size_t i = 0; i < lat.log_posteriors.size(); ++i) {
    size_t off = r.offset();
    float x = r.f32();
    if (std::isnan(x) || x > 1e-3f)
      throw NonFiniteValue(path + ": bad log posterior at byte offset " + std::to_string(off));
    lat.log_posteriors.v[i] = x;
  }
  r.expect_end();
  lat.validate();
  return lat;
}

std::string sniff_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4) return "";
  std::string m(magic, 4);
  if (m == "SFM1" || m == "CLG1") return m;
  return "";
}

Manifest read_manifest(const std::string& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  fs::path base = fs::path(path).parent_path();
  Manifest m;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw MalformedFile(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("path") || !j.contains("ref"))
      throw MalformedFile(path + ":" + std::to_string(lineno) + ": entry needs id, path, ref");
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.ref = j.at("ref").get<std::string>();
    std::string p = j.at("path").get<std::string>();
    e.path = (!p.empty() && fs::path(p).is_relative()) ? (base / p).string() : p;
    if (!ids.insert(e.id).second)
      throw MalformedFile(path + ":" + std::to_string(lineno) + ": duplicate id '" + e.id + "'");
    if (check_files && !e.path.empty() && !fs::exists(e.path))
      throw MissingArtifact(path + ":" + std::to_string(lineno) + ": no such file " + e.path);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  for (const auto& e : m.entries) {
    json j{{"id", e.id}, {"path", e.path}, {"ref", e.ref}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace srtk
