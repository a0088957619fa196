#include "gradformer/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gradformer {

namespace {

constexpr std::string_view kTensorMagic = "GRDT";
constexpr std::string_view kCheckpointMagic = "GRCK";
constexpr std::uint8_t kTensorVersion = 1;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t& pos, std::size_t base) : bytes_(bytes), pos_(pos), base_(base) {}

  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, offset());
  }
  std::size_t offset() const { return base_ + pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t& pos_;
  std::size_t base_;
};

}  // namespace

template <Real T>
Tensor<T> StoredTensor::as() const {
  if constexpr (std::is_same_v<T, double>) {
    return values;
  } else {
    const auto src = values.data();
    std::vector<T> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<T>(src[i]);
    return Tensor<T>(values.shape(), std::move(out));
  }
}

template <Real T>
std::string encode_tensor(const Tensor<T>& t) {
  if (t.rank() > 255) throw DimensionError("tensor rank exceeds 255");
  std::string out(kTensorMagic);
  out.push_back(static_cast<char>(kTensorVersion));
  out.push_back(static_cast<char>(dtype_of<T>()));
  out.push_back(static_cast<char>(t.rank()));
  out.push_back(0);
  for (auto d : t.shape()) put_le(out, static_cast<std::uint64_t>(d), 8);
  out.reserve(out.size() + t.numel() * sizeof(T));
  for (const T v : t.data()) {
    if constexpr (sizeof(T) == 4) {
      put_le(out, std::bit_cast<std::uint32_t>(v), 4);
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
  }
  return out;
}

StoredTensor decode_tensor(std::string_view bytes, std::size_t& pos, std::size_t base) {
  Reader r(bytes, pos, base);
  const auto magic_at = r.offset();
  if (r.take(4, "tensor magic") != kTensorMagic) throw FormatError("bad tensor magic, expected GRDT", magic_at);
  const auto version_at = r.offset();
  const auto version = r.le(1, "tensor header");
  if (version != kTensorVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(version), version_at);
  }
  const auto dtype_at = r.offset();
  const auto dtype = r.le(1, "tensor header");
  if (dtype > 1) throw FormatError("unknown tensor dtype " + std::to_string(dtype), dtype_at);
  const auto ndim = r.le(1, "tensor header");
  const auto reserved_at = r.offset();
  if (r.le(1, "tensor header") != 0) throw FormatError("reserved tensor header byte must be 0", reserved_at);
  if (ndim == 0) throw FormatError("tensor rank must be at least 1", reserved_at - 1);
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint64_t i = 0; i < ndim; ++i) {
    const auto at = r.offset();
    const auto d = r.le(8, "tensor dims");
    if (d == 0 || d > (std::uint64_t{1} << 40) || count > (std::uint64_t{1} << 40) / d) {
      throw FormatError("invalid tensor extent " + std::to_string(d), at);
    }
    count *= d;
    shape.push_back(static_cast<std::int64_t>(d));
  }
  const std::size_t width = dtype == 0 ? 4 : 8;
  r.need(count * width, "tensor payload");
  std::vector<double> values(count);
  for (auto& v : values) {
    v = width == 4 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4, "payload"))))
                   : std::bit_cast<double>(r.le(8, "payload"));
  }
  return {dtype == 0 ? DType::kFloat32 : DType::kFloat64, Tensor<double>(std::move(shape), std::move(values))};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

template <Real T>
void write_tensor(const std::string& path, const Tensor<T>& t) {
  write_file(path, encode_tensor(t));
}

template <Real T>
Tensor<T> read_tensor(const std::string& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  auto stored = decode_tensor(bytes, pos);
  if (pos != bytes.size()) throw FormatError("trailing bytes after tensor payload", pos);
  return stored.as<T>();
}

template <Real T>
void save_checkpoint(const std::string& path, const GradFormer<T>& model, const RunConfig& config) {
  const auto params = model.parameters();
  std::string out(kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_le(out, params.size(), 4);
  for (const auto& p : params) {
    if (p.name.size() > 0xFFFF) throw ContractError("parameter name too long: " + p.name);
    put_le(out, p.name.size(), 2);
    out += p.name;
    out += encode_tensor(p.tensor);
  }
  const auto text = to_config_text(config);
  put_le(out, text.size(), 4);
  out += text;
  write_file(path, out);
}

CheckpointData read_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  Reader r(bytes, pos, 0);
  if (r.take(4, "checkpoint magic") != kCheckpointMagic) throw FormatError("bad checkpoint magic, expected GRCK", 0);
  CheckpointData data;
  const auto version_at = r.offset();
  data.version = static_cast<std::uint8_t>(r.le(1, "checkpoint header"));
  if (data.version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(data.version), version_at);
  }
  const auto count = r.le(4, "checkpoint header");
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    const auto len = r.le(2, "entry name length");
    std::string name(r.take(len, "entry name"));
    if (!names.insert(name).second) throw FormatError("duplicate checkpoint entry '" + name + "'", at);
    auto t = decode_tensor(bytes, pos);
    data.entries.push_back({std::move(name), std::move(t)});
  }
  const auto len = r.le(4, "config length");
  data.config_text = std::string(r.take(len, "config block"));
  if (r.pos() != bytes.size()) throw FormatError("trailing bytes after checkpoint config", r.offset());
  return data;
}

template <Real T>
void apply_checkpoint(const CheckpointData& data, GradFormer<T>& model) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& e : data.entries) by_name[e.name] = &e.tensor;
  auto params = model.parameters();
  // Validate everything before touching the model.
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing entry '" + p.name + "'");
    if (it->second->values.shape() != p.tensor.shape()) {
      throw FormatError("checkpoint entry '" + p.name + "' has shape " + shape_str(it->second->values.shape()) +
                        " but the model expects " + shape_str(p.tensor.shape()));
    }
  }
  if (by_name.size() != params.size()) {
    std::set<std::string> expected;
    for (const auto& p : params) expected.insert(p.name);
    for (const auto& e : data.entries) {
      if (!expected.count(e.name)) throw FormatError("checkpoint has unexpected entry '" + e.name + "'");
    }
  }
  for (auto& p : params) {
    const auto src = by_name.at(p.name)->template as<T>();
    auto dst = p.tensor.mutable_data();
    const auto s = src.data();
    std::copy(s.begin(), s.end(), dst.begin());
  }
}

template <Real T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  const auto data = read_checkpoint(path);
  const auto config = parse_config(data.config_text);
  auto model = GradFormer<T>::build(config.model);
  apply_checkpoint(data, model);
  return {std::move(model), config};
}

// --- netpbm ------------------------------------------------------------------

namespace {

struct PnmHeader {
  int channels = 0;
  std::int64_t width = 0, height = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_pnm(const std::string& bytes, const std::string& path) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("'" + path + "' is not a binary P5/P6 netpbm file", 0);
  }
  PnmHeader h;
  h.channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  auto next_number = [&](const char* what) -> std::int64_t {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const auto start = pos;
    std::int64_t v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])) && v < (1 << 24)) {
      v = v * 10 + (bytes[pos++] - '0');
    }
    if (pos == start || v <= 0) throw FormatError(std::string("bad netpbm ") + what + " in '" + path + "'", start);
    return v;
  };
  h.width = next_number("width");
  h.height = next_number("height");
  const auto maxval_at = pos;
  if (next_number("maxval") != 255) throw FormatError("netpbm maxval must be 255 in '" + path + "'", maxval_at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("missing whitespace after netpbm header in '" + path + "'", pos);
  }
  h.data_offset = pos + 1;
  const auto need = static_cast<std::size_t>(h.width * h.height * h.channels);
  if (bytes.size() - h.data_offset < need) throw FormatError("truncated netpbm raster in '" + path + "'", bytes.size());
  return h;
}

std::string pnm_header(char kind, std::int64_t width, std::int64_t height) {
  return std::string("P") + kind + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

unsigned char quantize(float v) {
  const double scaled = std::floor(static_cast<double>(v) * 255.0 + 0.5);
  return static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0));
}

}  // namespace

Tensor<float> read_image(const std::string& path) {
  const auto bytes = read_file(path);
  const auto h = parse_pnm(bytes, path);
  if (h.channels != 3) throw FormatError("expected a P6 colour image in '" + path + "'", 0);
  const auto plane = h.width * h.height;
  std::vector<float> values(static_cast<std::size_t>(3 * plane));
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) values[c * plane + i] = static_cast<float>(px[3 * i + c] / 255.0);
  }
  return Tensor<float>({3, h.height, h.width}, std::move(values));
}

void write_image(const std::string& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.shape()[0] != 3) {
    throw DimensionError("write_image: expected [3,H,W], got " + shape_str(image.shape()));
  }
  const auto height = image.shape()[1], width = image.shape()[2], plane = height * width;
  auto out = pnm_header('6', width, height);
  const auto v = image.data();
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) out.push_back(static_cast<char>(quantize(v[c * plane + i])));
  }
  write_file(path, out);
}

BinaryMask read_mask(const std::string& path) {
  const auto bytes = read_file(path);
  const auto h = parse_pnm(bytes, path);
  if (h.channels != 1) throw FormatError("expected a P5 mask in '" + path + "'", 0);
  BinaryMask mask(1, h.height, h.width);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::int64_t i = 0; i < mask.size(); ++i) mask.values[i] = px[i] >= 128 ? 1 : 0;
  return mask;
}

void write_mask(const std::string& path, const BinaryMask& mask, std::int64_t b) {
  if (b < 0 || b >= mask.batch) throw DimensionError("write_mask: sample index out of range");
  auto out = pnm_header('5', mask.width, mask.height);
  const auto plane = mask.height * mask.width;
  for (std::int64_t i = 0; i < plane; ++i) out.push_back(static_cast<char>(mask.values[b * plane + i] ? 255 : 0));
  write_file(path, out);
}

#define GRADFORMER_INSTANTIATE_IO(T)                                                         \
  template Tensor<T> StoredTensor::as<T>() const;                                            \
  template std::string encode_tensor(const Tensor<T>&);                                      \
  template void write_tensor(const std::string&, const Tensor<T>&);                          \
  template Tensor<T> read_tensor<T>(const std::string&);                                     \
  template void save_checkpoint(const std::string&, const GradFormer<T>&, const RunConfig&); \
  template void apply_checkpoint(const CheckpointData&, GradFormer<T>&);                     \
  template LoadedCheckpoint<T> load_checkpoint<T>(const std::string&);

GRADFORMER_INSTANTIATE_IO(float)
GRADFORMER_INSTANTIATE_IO(double)

}  // namespace gradformer
