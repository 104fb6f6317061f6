#include "appledet/cli/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "appledet/common/error.hpp"

namespace appledet::cli {

namespace {

constexpr char kMagic[8] = {'A', 'P', 'D', 'T', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw InvalidInput("checkpoint: truncated at byte " + std::to_string(pos_));
    }
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    need(4 * n);
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::vector<float> narrow(std::span<const double> v) {
  return std::vector<float>(v.begin(), v.end());
}

}  // namespace

Checkpoint capture(blocks::LayerGraph& graph, const std::string& network_text,
                   std::uint64_t step, std::uint32_t epoch) {
  Checkpoint c;
  c.network = network_text;
  c.step = step;
  c.epoch = epoch;
  for (auto* p : graph.parameters()) {
    c.parameters[p->name] = ParameterBlob{p->value.shape(), narrow(p->value.data()), narrow(p->momentum)};
  }
  for (auto& [name, st] : graph.batchnorm_states()) {
    c.batchnorms[name] = BatchNormBlob{narrow(st->running_mean), narrow(st->running_var)};
  }
  return c;
}

void restore(const Checkpoint& ckpt, blocks::LayerGraph& graph) {
  auto params = graph.parameters();
  require(params.size() == ckpt.parameters.size(),
          "checkpoint: holds " + std::to_string(ckpt.parameters.size()) +
              " parameters, the network has " + std::to_string(params.size()));
  for (auto* p : params) {
    const auto it = ckpt.parameters.find(p->name);
    require(it != ckpt.parameters.end(), "checkpoint: missing parameter " + p->name);
    require(it->second.shape == p->value.shape(),
            "checkpoint: shape mismatch for " + p->name + ": " + it->second.shape.str() +
                " vs " + p->value.shape().str());
    auto dst = p->value.data();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
    std::copy(it->second.momentum.begin(), it->second.momentum.end(), p->momentum.begin());
  }
  for (auto& [name, st] : graph.batchnorm_states()) {
    const auto it = ckpt.batchnorms.find(name);
    require(it != ckpt.batchnorms.end(), "checkpoint: missing batchnorm statistics " + name);
    require(it->second.running_mean.size() == st->running_mean.size(),
            "checkpoint: batchnorm channel mismatch for " + name);
    std::copy(it->second.running_mean.begin(), it->second.running_mean.end(), st->running_mean.begin());
    std::copy(it->second.running_var.begin(), it->second.running_var.end(), st->running_var.begin());
  }
}

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(c.version);
  w.str(c.network);
  w.u64(c.step);
  w.u32(c.epoch);
  w.u32(static_cast<std::uint32_t>(c.parameters.size()));
  for (const auto& [name, p] : c.parameters) {
    w.str(name);
    for (int d : {p.shape.n, p.shape.c, p.shape.h, p.shape.w}) w.u32(static_cast<std::uint32_t>(d));
    for (float v : p.values) w.f32(v);
    for (std::size_t i = 0; i < p.values.size(); ++i) w.f32(i < p.momentum.size() ? p.momentum[i] : 0.0f);
  }
  w.u32(static_cast<std::uint32_t>(c.batchnorms.size()));
  for (const auto& [name, b] : c.batchnorms) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(b.running_mean.size()));
    for (float v : b.running_mean) w.f32(v);
    for (float v : b.running_var) w.f32(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw InvalidInput("checkpoint: bad magic at byte 0");
  }
  r.skip(sizeof kMagic);
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw InvalidInput("checkpoint: unsupported version " + std::to_string(c.version));
  }
  c.network = r.str();
  c.step = r.u64();
  c.epoch = r.u32();
  const std::uint32_t n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    ParameterBlob p;
    p.shape.n = static_cast<int>(r.u32());
    p.shape.c = static_cast<int>(r.u32());
    p.shape.h = static_cast<int>(r.u32());
    p.shape.w = static_cast<int>(r.u32());
    p.values = r.floats(p.shape.numel());
    p.momentum = r.floats(p.shape.numel());
    c.parameters.emplace(std::move(name), std::move(p));
  }
  const std::uint32_t n_bn = r.u32();
  for (std::uint32_t i = 0; i < n_bn; ++i) {
    std::string name = r.str();
    const std::uint32_t ch = r.u32();
    BatchNormBlob b;
    b.running_mean = r.floats(ch);
    b.running_var = r.floats(ch);
    c.batchnorms.emplace(std::move(name), std::move(b));
  }
  if (!r.done()) throw InvalidInput("checkpoint: trailing bytes at " + std::to_string(r.pos()));
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InvalidInput("checkpoint: cannot write " + tmp.string());
    const std::string bytes = encode_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("checkpoint: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace appledet::cli
