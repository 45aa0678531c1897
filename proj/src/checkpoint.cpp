#include "siamreid/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

namespace siamreid {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'R', '1'};
constexpr std::uint8_t kDtypeF32 = 0;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <class U>
  void put(U v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <class U>
  U get(const char* what) {
    U v;
    take(&v, sizeof(U), what);
    return v;
  }
  void take(void* out, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint " + source_ + " is truncated while reading " +
                                                                  what + " at byte " + std::to_string(pos_));
    }
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* to_string(CheckpointError::Kind kind) {
  switch (kind) {
    case CheckpointError::Kind::io: return "io";
    case CheckpointError::Kind::bad_magic: return "bad_magic";
    case CheckpointError::Kind::truncated: return "truncated";
    case CheckpointError::Kind::bad_dtype: return "bad_dtype";
    case CheckpointError::Kind::unknown_name: return "unknown_name";
    case CheckpointError::Kind::shape_mismatch: return "shape_mismatch";
    case CheckpointError::Kind::missing_tensor: return "missing_tensor";
  }
  return "unknown";
}

void export_checkpoint(const ParamMap<float>& params, const std::filesystem::path& file) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError(CheckpointError::Kind::io, "tensor name too long: " + name.substr(0, 64) + "...");
    }
    w.put(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put(kDtypeF32);
    w.put(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put(static_cast<std::uint32_t>(d));
    w.put_bytes(t.data().data(), t.size() * sizeof(float));
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + file.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "failed writing " + file.string());
}

ParamMap<float> read_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), file.string());

  char magic[4] = {};
  try {
    r.take(magic, sizeof magic, "magic");
  } catch (const CheckpointError&) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, file.string() + " is not an SVR1 checkpoint");
  }
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, file.string() + " is not an SVR1 checkpoint (bad magic)");
  }
  const auto count = r.get<std::uint32_t>("entry count");
  ParamMap<float> out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name(len, '\0');
    r.take(name.data(), len, "name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != kDtypeF32) {
      throw CheckpointError(CheckpointError::Kind::bad_dtype,
                            "tensor '" + name + "' has unsupported dtype tag " + std::to_string(dtype));
    }
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>("dims");
    std::vector<float> data(shape_numel(shape));
    r.take(data.data(), data.size() * sizeof(float), "payload");
    try {
      out.insert_or_assign(name, Tensor<float>(shape, std::move(data)));
    } catch (const ContractViolation& e) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch, "tensor '" + name + "': " + e.what());
    }
  }
  if (!r.at_end()) {
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint " + file.string() + " has trailing bytes");
  }
  return out;
}

ParamMap<float> import_checkpoint(const ParamMap<float>& like, const std::filesystem::path& file) {
  ParamMap<float> loaded = read_checkpoint(file);
  ParamMap<float> out;
  for (auto& [name, t] : loaded) {
    auto it = like.find(name);
    if (it == like.end()) {
      throw CheckpointError(CheckpointError::Kind::unknown_name, "checkpoint tensor '" + name + "' is not a model parameter");
    }
    if (it->second.shape() != t.shape()) {
      throw CheckpointError(CheckpointError::Kind::shape_mismatch, "tensor '" + name + "' has shape " +
                                                                       shape_str(t.shape()) + ", model expects " +
                                                                       shape_str(it->second.shape()));
    }
    out.emplace(name, std::move(t));
  }
  for (const auto& [name, t] : like) {
    if (!out.contains(name)) {
      throw CheckpointError(CheckpointError::Kind::missing_tensor, "checkpoint is missing tensor '" + name + "'");
    }
  }
  return out;
}

}  // namespace siamreid
