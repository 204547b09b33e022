#include "dg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace dg {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void wr(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void wr_u32(std::ostream& os, uint32_t x) { wr(os, &x, 4); }
void wr_i32(std::ostream& os, int32_t x) { wr(os, &x, 4); }
void wr_i64(std::ostream& os, int64_t x) { wr(os, &x, 8); }
void wr_u64(std::ostream& os, uint64_t x) { wr(os, &x, 8); }
void wr_str(std::ostream& os, const std::string& s) {
  wr_u64(os, s.size());
  wr(os, s.data(), s.size());
}
void wr_tensor(std::ostream& os, const Tensor& t) {
  wr_u64(os, t.shape.size());
  for (int64_t d : t.shape) wr_i64(os, d);
  wr(os, t.v.data(), t.v.size() * sizeof(double));
}

void rd(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  require(static_cast<size_t>(is.gcount()) == n, "checkpoint: truncated file");
}
uint32_t rd_u32(std::istream& is) {
  uint32_t x;
  rd(is, &x, 4);
  return x;
}
int32_t rd_i32(std::istream& is) {
  int32_t x;
  rd(is, &x, 4);
  return x;
}
int64_t rd_i64(std::istream& is) {
  int64_t x;
  rd(is, &x, 8);
  return x;
}
uint64_t rd_u64(std::istream& is) {
  uint64_t x;
  rd(is, &x, 8);
  return x;
}
std::string rd_str(std::istream& is) {
  uint64_t n = rd_u64(is);
  require(n < (1ull << 32), "checkpoint: absurd string length");
  std::string s(n, '\0');
  rd(is, s.data(), n);
  return s;
}
Tensor rd_tensor(std::istream& is) {
  uint64_t nd = rd_u64(is);
  require(nd >= 1 && nd <= 4, "checkpoint: bad tensor rank");
  std::vector<int64_t> shape(nd);
  for (auto& d : shape) d = rd_i64(is);
  Tensor t(shape);
  rd(is, t.v.data(), t.v.size() * sizeof(double));
  return t;
}

void read_header(std::istream& is, TrainState& st) {
  char magic[4];
  rd(is, magic, 4);
  require(std::memcmp(magic, kMagic, 4) == 0, "checkpoint: bad magic");
  uint32_t ver = rd_u32(is);
  require(ver == kVersion, "checkpoint: unsupported version " + std::to_string(ver));
  st.stage = rd_i32(is);
  st.step = rd_i64(is);
  st.config_text = rd_str(is);
  st.rng_state = rd_str(is);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps, const AdamW* opt,
                     const TrainState& st) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "checkpoint: cannot open for write: " + path);
  wr(os, kMagic, 4);
  wr_u32(os, kVersion);
  wr_i32(os, st.stage);
  wr_i64(os, st.step);
  wr_str(os, st.config_text);
  wr_str(os, st.rng_state);

  auto names = ps.names();
  wr_u64(os, names.size());
  for (const auto& n : names) {
    wr_str(os, n);
    wr_tensor(os, ps.at(n).value);
  }

  uint8_t has_opt = opt ? 1 : 0;
  wr(os, &has_opt, 1);
  if (opt) {
    wr_i64(os, opt->steps_done());
    wr_u64(os, opt->slots().size());
    for (const auto& [name, slot] : opt->slots()) {
      wr_str(os, name);
      wr_tensor(os, slot.m);
      wr_tensor(os, slot.v);
    }
  }
  os.flush();
  require(os.good(), "checkpoint: write failed: " + path);
}

TrainState load_checkpoint(const std::string& path, ParamStore& ps, AdamW* opt) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "checkpoint: cannot open: " + path);
  TrainState st;
  read_header(is, st);

  uint64_t n = rd_u64(is);
  require(n == ps.names().size(),
          "checkpoint: parameter count mismatch (file " + std::to_string(n) + ", model " +
              std::to_string(ps.names().size()) + ")");
  for (uint64_t i = 0; i < n; ++i) {
    std::string name = rd_str(is);
    Tensor t = rd_tensor(is);
    require(ps.has(name), "checkpoint: unknown parameter " + name);
    Param& p = ps.at(name);
    require(p.value.shape == t.shape, "checkpoint: shape mismatch for " + name);
    p.value = std::move(t);
  }

  uint8_t has_opt = 0;
  rd(is, &has_opt, 1);
  if (has_opt && opt) {
    opt->step_counter() = rd_i64(is);
    uint64_t ns = rd_u64(is);
    opt->slots().clear();
    for (uint64_t i = 0; i < ns; ++i) {
      std::string name = rd_str(is);
      require(ps.has(name), "checkpoint: moment for unknown parameter " + name);
      AdamW::Slot slot;
      slot.m = rd_tensor(is);
      slot.v = rd_tensor(is);
      require(slot.m.shape == ps.at(name).value.shape, "checkpoint: moment shape for " + name);
      opt->slots().emplace(std::move(name), std::move(slot));
    }
  }
  return st;
}

std::string peek_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "checkpoint: cannot open: " + path);
  TrainState st;
  read_header(is, st);
  return st.config_text;
}

}  // namespace dg
