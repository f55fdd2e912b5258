#include "sisr/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "sisr/error.hpp"

namespace sisr::io {

namespace {

constexpr char kMagic[4] = {'S', 'I', 'S', 'R'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw, raw + sizeof(T));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string_view take_bytes(std::size_t n) {
    need(n);
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw IoError("truncated tensor container at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const ad::Tensor* TensorBundle::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

const ad::Tensor& TensorBundle::get(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw IoError("tensor '" + std::string(name) + "' not found in container");
}

std::string encode_bundle(const TensorBundle& bundle) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.tensors.size()));
  for (const auto& [name, tensor] : bundle.tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError("tensor name too long: " + name.substr(0, 32) + "...");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    const auto& shape = tensor.shape();
    if (shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw IoError("tensor '" + name + "' has too many dimensions");
    }
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.data()) put<double>(out, v);
  }
  if (!bundle.metadata_json.empty()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.metadata_json.size()));
    out += bundle.metadata_json;
  }
  return out;
}

TensorBundle decode_bundle(std::string_view bytes) {
  Reader in(bytes);
  auto magic = in.take_bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw IoError("not a SISR tensor container (bad magic)");
  }
  const auto version = in.take<std::uint32_t>();
  if (version != kFormatVersion) {
    throw IoError("unsupported tensor container version " + std::to_string(version));
  }
  const auto count = in.take<std::uint32_t>();
  TensorBundle bundle;
  bundle.tensors.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = in.take<std::uint16_t>();
    std::string name(in.take_bytes(name_len));
    const auto rank = in.take<std::uint8_t>();
    ad::Shape shape(rank);
    for (auto& d : shape) d = in.take<std::uint32_t>();
    const std::size_t n = ad::numel_of(shape);
    if (n * sizeof(double) > in.remaining()) {
      throw IoError("truncated payload for tensor '" + name + "'");
    }
    std::vector<double> values(n);
    for (auto& v : values) v = in.take<double>();
    bundle.tensors.push_back({std::move(name), ad::Tensor(std::move(shape), std::move(values))});
  }
  if (in.remaining() > 0) {
    const auto len = in.take<std::uint32_t>();
    bundle.metadata_json = std::string(in.take_bytes(len));
    if (in.remaining() != 0) throw IoError("trailing bytes after container metadata");
  }
  return bundle;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_bundle(const std::filesystem::path& path, const TensorBundle& bundle) {
  write_file(path, encode_bundle(bundle));
}

TensorBundle read_bundle(const std::filesystem::path& path) {
  try {
    return decode_bundle(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace sisr::io
