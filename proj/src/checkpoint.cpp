#include "hrg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hrg {

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint " + path_ + ": truncated file");
  }
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensorf* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : records) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".manifest");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto records = ckpt.records;
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].first == records[i - 1].first) {
      throw std::invalid_argument("checkpoint: duplicate record '" + records[i].first + "'");
    }
  }

  std::string buf = "HRGC";
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, t] : records) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    const Shape& s = t.shape();
    for (Index d : {s.n, s.c, s.h, s.w}) put_u32(buf, static_cast<std::uint32_t>(d));
    for (Index i = 0; i < t.size(); ++i) put_u32(buf, std::bit_cast<std::uint32_t>(t[i]));
  }
  const std::string meta = ckpt.meta.to_text();
  put_u32(buf, static_cast<std::uint32_t>(meta.size()));
  buf += meta;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());

  std::ofstream man(manifest_path(path));
  if (!man) throw std::runtime_error("cannot write manifest " + manifest_path(path).string());
  man << ckpt.meta.to_text();
  for (const auto& [name, t] : records) {
    const Shape& s = t.shape();
    man << "tensor " << name << " " << s.n << " " << s.c << " " << s.h << " " << s.w << "\n";
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str(), path.string());

  if (r.raw(4) != "HRGC") throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.raw(r.u32());
    Shape s;
    s.n = r.u32();
    s.c = r.u32();
    s.h = r.u32();
    s.w = r.u32();
    Tensorf t(s);
    for (Index k = 0; k < t.size(); ++k) t[k] = std::bit_cast<float>(r.u32());
    ckpt.records.emplace_back(std::move(name), std::move(t));
  }
  ckpt.meta = Config::parse(r.raw(r.u32()), path.string());
  if (!r.done()) throw std::runtime_error("checkpoint " + path.string() + ": trailing bytes");
  return ckpt;
}

}  // namespace hrg
