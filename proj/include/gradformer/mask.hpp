#pragma once

#include <cstdint>
#include <vector>

namespace gradformer {

// Binary change maps [B,H,W] with values in {0,1} (1 = change).
struct BinaryMask {
  std::int64_t batch = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(std::int64_t b, std::int64_t h, std::int64_t w, std::uint8_t fill = 0)
      : batch(b), height(h), width(w), values(static_cast<std::size_t>(b * h * w), fill) {}

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
  std::uint8_t& at(std::int64_t b, std::int64_t y, std::int64_t x) { return values[(b * height + y) * width + x]; }
  std::uint8_t at(std::int64_t b, std::int64_t y, std::int64_t x) const {
    return values[(b * height + y) * width + x];
  }
  bool same_shape(const BinaryMask& o) const { return batch == o.batch && height == o.height && width == o.width; }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

}  // namespace gradformer
