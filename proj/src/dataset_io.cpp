#include "dg/dataset_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace dg {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'D', 'S', 'E', 'T', '0', '1'};
constexpr uint64_t kVersion = 1;

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    require(out.good(), "dataset: cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u64(uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    u64(u);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream in;
  std::string path;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    require(in.good(), "dataset: cannot open '" + p + "'");
  }
  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    require(in.gcount() == static_cast<std::streamsize>(n),
            "dataset: truncated file '" + path + "'");
  }
  uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() {
    const uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str(uint64_t max_len = 1ULL << 24) {
    const uint64_t n = u64();
    require(n <= max_len, "dataset: corrupt string length in '" + path + "'");
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
};

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 8);
  w.u64(kVersion);
  w.str(ds.config_text);

  w.u64(ds.scenes.size());
  for (const Scene& s : ds.scenes) {
    w.i64(s.id);
    w.i64(s.points.rows());
    w.i64(s.points.cols());
    for (int64_t i = 0; i < s.points.rows() * s.points.cols(); ++i) w.f64(s.points.data()[i]);
    w.u64(s.objects.size());
    for (const SceneObject& o : s.objects) {
      for (int d = 0; d < 3; ++d) w.f64(o.box.center[d]);
      for (int d = 0; d < 3; ++d) w.f64(o.box.size[d]);
      w.i64(o.class_id);
    }
  }

  w.u64(ds.samples.size());
  for (const DenseSample& smp : ds.samples) {
    w.i64(smp.scene_index);
    w.i64(smp.k);
    w.u64(smp.sentences.size());
    for (const Sentence& sen : smp.sentences) {
      w.u64(sen.tokens.size());
      for (int64_t t : sen.tokens) w.i64(t);
      w.i64(sen.target);
      w.str(sen.text);
      w.u64(sen.flagged ? 1 : 0);
    }
    w.u64(smp.valid.size());
    for (uint8_t v : smp.valid) w.u64(v);
  }
  require(w.out.good(), "dataset: write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  require(std::memcmp(magic, kMagic, 8) == 0, "dataset: bad magic in '" + path + "'");
  const uint64_t version = r.u64();
  require(version == kVersion,
          "dataset: unsupported version " + std::to_string(version) + " in '" + path + "'");

  Dataset ds;
  ds.config_text = r.str();

  const uint64_t num_scenes = r.u64();
  require(num_scenes <= 1u << 20, "dataset: corrupt scene count in '" + path + "'");
  ds.scenes.resize(num_scenes);
  for (Scene& s : ds.scenes) {
    s.id = r.i64();
    const int64_t rows = r.i64(), cols = r.i64();
    require(rows >= 0 && cols > 0 && rows * cols <= (1LL << 30),
            "dataset: corrupt point shape in '" + path + "'");
    s.points = Tensor({rows, cols});
    for (int64_t i = 0; i < rows * cols; ++i) s.points.data()[i] = r.f64();
    const uint64_t num_objects = r.u64();
    require(num_objects <= 1u << 16, "dataset: corrupt object count in '" + path + "'");
    s.objects.resize(num_objects);
    for (SceneObject& o : s.objects) {
      for (int d = 0; d < 3; ++d) o.box.center[d] = r.f64();
      for (int d = 0; d < 3; ++d) o.box.size[d] = r.f64();
      o.class_id = r.i64();
    }
  }

  const uint64_t num_samples = r.u64();
  require(num_samples <= 1u << 20, "dataset: corrupt sample count in '" + path + "'");
  ds.samples.resize(num_samples);
  for (DenseSample& smp : ds.samples) {
    smp.scene_index = r.i64();
    smp.k = r.i64();
    const uint64_t slots = r.u64();
    require(slots <= 1u << 10, "dataset: corrupt slot count in '" + path + "'");
    smp.sentences.resize(slots);
    for (Sentence& sen : smp.sentences) {
      const uint64_t nt = r.u64();
      require(nt <= 1u << 10, "dataset: corrupt token count in '" + path + "'");
      sen.tokens.resize(nt);
      for (uint64_t t = 0; t < nt; ++t) sen.tokens[t] = r.i64();
      sen.target = r.i64();
      sen.text = r.str();
      sen.flagged = r.u64() != 0;
    }
    const uint64_t nv = r.u64();
    require(nv <= 1u << 10, "dataset: corrupt valid count in '" + path + "'");
    smp.valid.resize(nv);
    for (uint64_t i = 0; i < nv; ++i) smp.valid[i] = static_cast<uint8_t>(r.u64());
  }
  return ds;
}

std::string dataset_manifest(const RunConfig& cfg, uint64_t seed, int64_t train_scenes,
                             int64_t eval_scenes) {
  std::ostringstream os;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(cfg.hash()));
  os << "config_hash=" << hex << "\n";
  os << "eval_scenes=" << eval_scenes << "\n";
  os << "format_version=" << kVersion << "\n";
  os << "seed=" << seed << "\n";
  os << "train_scenes=" << train_scenes << "\n";
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io: cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  require(out.good(), "io: write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io: cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace dg
