#include "csyn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace csyn {

namespace {

// All integers little-endian; doubles as IEEE-754 bit patterns.
void put_u16(std::ostream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 8);
}

uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  out.write("CSYN", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const Parameter* p : params) {
    if (p->name.size() > 0xffff) throw CheckpointError("tensor name too long");
    put_u16(out, static_cast<uint16_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    out.put(static_cast<char>(p->shape.size()));
    for (int d : p->shape) put_u32(out, static_cast<uint32_t>(d));
    for (double v : p->value) put_f64(out, v);
  }
  if (!out) throw CheckpointError("write failed: " + path);
}

std::map<std::string, TensorBlob> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CSYN", 4) != 0) {
    throw CheckpointError(path + " is not a CSYN checkpoint");
  }
  const uint32_t version = get_u32(in);
  if (version > kCheckpointVersion) {
    throw CheckpointError(path + " has format version " + std::to_string(version) +
                          " but this build reads up to " + std::to_string(kCheckpointVersion));
  }
  const uint32_t count = get_u32(in);

  std::map<std::string, TensorBlob> loaded;
  for (uint32_t k = 0; k < count; ++k) {
    const uint16_t name_len = get_u16(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const int rank = in.get();
    if (rank < 0) throw CheckpointError("truncated checkpoint " + path);
    TensorBlob blob;
    blob.shape.resize(static_cast<size_t>(rank));
    int64_t total = 1;
    for (auto& d : blob.shape) {
      d = static_cast<int>(get_u32(in));
      total *= d;
    }
    blob.data.resize(static_cast<size_t>(total));
    for (auto& v : blob.data) v = get_f64(in);
    if (!in) throw CheckpointError("truncated checkpoint " + path);
    loaded[name] = std::move(blob);
  }
  return loaded;
}

void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
  const auto loaded = read_checkpoint(path);
  for (Parameter* p : params) {
    auto it = loaded.find(p->name);
    if (it == loaded.end()) {
      throw CheckpointError(path + " is missing tensor '" + p->name + "'");
    }
    if (it->second.shape != p->shape) {
      throw CheckpointError(path + ": tensor '" + p->name + "' has an unexpected shape");
    }
    p->value = it->second.data;
    p->zero_grad();
  }
}

}  // namespace csyn
