#pragma once

// Bit-exact persistence: the GRDT tensor container, GRCK checkpoints and
// 8-bit netpbm images (P6 colour, P5 masks). All multi-byte integers and
// scalars are little-endian regardless of host.

#include <string>
#include <string_view>
#include <vector>

#include "gradformer/config.hpp"
#include "gradformer/mask.hpp"
#include "gradformer/model.hpp"

namespace gradformer {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

template <Real T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::kFloat32 : DType::kFloat64;
}

// Tensor values widened to double together with the dtype they were stored
// as; float -> double -> float is exact, so nothing is lost.
struct StoredTensor {
  DType dtype = DType::kFloat32;
  Tensor<double> values;

  template <Real T>
  Tensor<T> as() const;
};

template <Real T>
std::string encode_tensor(const Tensor<T>& t);
// Parses one container starting at `pos` and advances it. `base` is added to
// reported byte offsets when the container is embedded in a larger file.
StoredTensor decode_tensor(std::string_view bytes, std::size_t& pos, std::size_t base = 0);

template <Real T>
void write_tensor(const std::string& path, const Tensor<T>& t);
// Converts to T if the file holds the other precision.
template <Real T>
Tensor<T> read_tensor(const std::string& path);

struct CheckpointEntry {
  std::string name;
  StoredTensor tensor;
};

struct CheckpointData {
  std::uint8_t version = 1;
  std::vector<CheckpointEntry> entries;
  std::string config_text;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

template <Real T>
void save_checkpoint(const std::string& path, const GradFormer<T>& model, const RunConfig& config);
CheckpointData read_checkpoint(const std::string& path);
// Copies every named entry into the model. Missing, extra or mis-shaped
// entries raise FormatError naming the first offending entry.
template <Real T>
void apply_checkpoint(const CheckpointData& data, GradFormer<T>& model);

template <Real T>
struct LoadedCheckpoint {
  GradFormer<T> model;
  RunConfig config;
};

// Rebuilds the model from the stored config, then applies the weights.
template <Real T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

// P6 -> [3,H,W] with v/255.
Tensor<float> read_image(const std::string& path);
// [3,H,W] in [0,1] -> P6, rounding half up after scaling by 255.
void write_image(const std::string& path, const Tensor<float>& image);
// P5 -> [1,H,W] mask, 1 where the byte is >= 128.
BinaryMask read_mask(const std::string& path);
// Writes sample `b` of the mask as P5 with 0 -> 0 and 1 -> 255.
void write_mask(const std::string& path, const BinaryMask& mask, std::int64_t b = 0);

}  // namespace gradformer
