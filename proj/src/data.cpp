#include "gradformer/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gradformer/io.hpp"

namespace gradformer {

namespace fs = std::filesystem;

namespace {

constexpr int kGrid = 8;
constexpr double kNoiseSigma = 0.02;
constexpr double kMaxBrightnessShift = 0.15;
constexpr double kMaxChannelGain = 0.1;

float quantize8(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::floor(v * 255.0 + 0.5) / 255.0);
}

// Bilinear (corner-aligned) upsampling of an 8x8 grid per channel.
std::vector<double> smooth_background(Xorshift64Star& rng, int size) {
  std::vector<double> grid(3 * kGrid * kGrid);
  for (auto& g : grid) g = rng.uniform(0.2, 0.8);
  std::vector<double> out(static_cast<std::size_t>(3) * size * size);
  const double scale = static_cast<double>(kGrid - 1) / std::max(size - 1, 1);
  for (int c = 0; c < 3; ++c) {
    const double* g = grid.data() + c * kGrid * kGrid;
    for (int y = 0; y < size; ++y) {
      const double fy = y * scale;
      const int y0 = std::min(static_cast<int>(fy), kGrid - 2);
      const double ty = fy - y0;
      for (int x = 0; x < size; ++x) {
        const double fx = x * scale;
        const int x0 = std::min(static_cast<int>(fx), kGrid - 2);
        const double tx = fx - x0;
        const double top = g[y0 * kGrid + x0] * (1 - tx) + g[y0 * kGrid + x0 + 1] * tx;
        const double bottom = g[(y0 + 1) * kGrid + x0] * (1 - tx) + g[(y0 + 1) * kGrid + x0 + 1] * tx;
        out[(static_cast<std::size_t>(c) * size + y) * size + x] = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

}  // namespace

BitemporalSample synth_sample(Xorshift64Star& rng, int size, bool distractor_only) {
  if (size <= 0 || size % 32 != 0) throw ConfigError("size must be divisible by 32");
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  auto pre = smooth_background(rng, size);
  auto post = pre;
  BinaryMask mask(1, size, size);

  if (!distractor_only) {
    const int shapes = 1 + static_cast<int>(rng.below(4));
    const int lo = size / 8, hi = size / 3;
    for (int s = 0; s < shapes; ++s) {
      const bool ellipse = rng.below(2) == 1;
      const int w = lo + static_cast<int>(rng.below(hi - lo + 1));
      const int h = lo + static_cast<int>(rng.below(hi - lo + 1));
      const int x0 = static_cast<int>(rng.below(size - w + 1));
      const int y0 = static_cast<int>(rng.below(size - h + 1));
      auto& target = rng.below(2) == 0 ? post : pre;
      // Contrast against the background at the shape centre: dark shapes on
      // bright ground, bright shapes on dark ground.
      const auto centre = static_cast<std::size_t>(y0 + h / 2) * size + (x0 + w / 2);
      const double ground = (pre[centre] + pre[plane + centre] + pre[2 * plane + centre]) / 3.0;
      const double level = ground > 0.5 ? rng.uniform(0.0, 0.15) : rng.uniform(0.85, 1.0);
      double colour[3];
      for (auto& c : colour) c = std::clamp(level + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      const double cx = x0 + (w - 1) / 2.0, cy = y0 + (h - 1) / 2.0;
      const double rx = w / 2.0, ry = h / 2.0;
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          if (ellipse) {
            const double dx = (x - cx) / rx, dy = (y - cy) / ry;
            if (dx * dx + dy * dy > 1.0) continue;
          }
          const auto i = static_cast<std::size_t>(y) * size + x;
          for (int c = 0; c < 3; ++c) target[c * plane + i] = colour[c];
          mask.values[i] = 1;
        }
      }
    }
  }

  // Pseudo-changes: global brightness shift and per-channel gain, post only.
  const double shift = rng.uniform(-kMaxBrightnessShift, kMaxBrightnessShift);
  double gain[3];
  for (auto& g : gain) g = 1.0 + rng.uniform(-kMaxChannelGain, kMaxChannelGain);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) post[c * plane + i] = post[c * plane + i] * gain[c] + shift;
  }

  std::vector<float> pre_q(pre.size()), post_q(post.size());
  for (std::size_t i = 0; i < pre.size(); ++i) pre_q[i] = quantize8(pre[i] + kNoiseSigma * rng.normal());
  for (std::size_t i = 0; i < post.size(); ++i) post_q[i] = quantize8(post[i] + kNoiseSigma * rng.normal());

  BitemporalSample s;
  s.pre = Tensor<float>({3, size, size}, std::move(pre_q));
  s.post = Tensor<float>({3, size, size}, std::move(post_q));
  s.mask = std::move(mask);
  return s;
}

namespace {

std::string basename_for(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

}  // namespace

Dataset synth_dataset(const SynthOptions& options) {
  if (options.num < 0) throw ConfigError("number of samples must be nonnegative");
  Xorshift64Star rng(options.seed);
  Dataset d;
  for (int i = 0; i < options.num; ++i) {
    auto s = synth_sample(rng, options.size, options.distractor_only);
    s.name = basename_for(i);
    d.samples.push_back(std::move(s));
  }
  return d;
}

SplitSizes split_sizes(int n) {
  SplitSizes s;
  s.train = n * 8 / 10;
  s.val = n / 10;
  s.test = n - s.train - s.val;
  return s;
}

void synth_generate(const SynthOptions& options, const fs::path& out_dir) {
  if (options.size <= 0 || options.size % 32 != 0) throw ConfigError("size must be divisible by 32");
  const auto data = synth_dataset(options);
  for (const char* sub : {"A", "B", "label"}) fs::create_directories(out_dir / sub);
  for (const auto& s : data.samples) {
    write_image((out_dir / "A" / (s.name + ".ppm")).string(), s.pre);
    write_image((out_dir / "B" / (s.name + ".ppm")).string(), s.post);
    write_mask((out_dir / "label" / (s.name + ".pgm")).string(), s.mask);
  }
  const auto sizes = split_sizes(options.num);
  const std::pair<const char*, std::pair<int, int>> lists[] = {
      {"train.txt", {0, sizes.train}},
      {"val.txt", {sizes.train, sizes.train + sizes.val}},
      {"test.txt", {sizes.train + sizes.val, options.num}},
  };
  for (const auto& [file, range] : lists) {
    std::string text;
    for (int i = range.first; i < range.second; ++i) text += basename_for(i) + "\n";
    write_file((out_dir / file).string(), text);
  }
}

Dataset load_split(const fs::path& dir, const std::string& split) {
  const auto list = dir / (split + ".txt");
  std::ifstream in(list);
  if (!in) throw std::runtime_error("split file '" + list.string() + "' not found");
  Dataset d;
  std::string name;
  while (std::getline(in, name)) {
    if (!name.empty() && name.back() == '\r') name.pop_back();
    if (name.empty()) continue;
    BitemporalSample s;
    s.name = name;
    s.pre = read_image((dir / "A" / (name + ".ppm")).string());
    s.post = read_image((dir / "B" / (name + ".ppm")).string());
    s.mask = read_mask((dir / "label" / (name + ".pgm")).string());
    if (s.pre.shape() != s.post.shape() || s.mask.height != s.pre.shape()[1] || s.mask.width != s.pre.shape()[2]) {
      throw DimensionError("sample '" + name + "': A, B and label sizes differ");
    }
    if (!d.samples.empty() && s.pre.shape() != d.samples.front().pre.shape()) {
      throw DimensionError("sample '" + name + "' size differs from the rest of the split");
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

template <Real T>
Batch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices, const std::vector<FlipChoice>& flips) {
  if (indices.empty()) throw ContractError("make_batch: empty batch");
  const auto& first = data.samples.at(indices.front());
  const auto h = first.height(), w = first.width(), plane = h * w;
  const auto b = static_cast<std::int64_t>(indices.size());
  std::vector<T> pre(static_cast<std::size_t>(b * 3 * plane)), post(pre.size()), target(static_cast<std::size_t>(b * plane));
  BinaryMask mask(b, h, w);
  for (std::int64_t n = 0; n < b; ++n) {
    const auto& s = data.samples.at(indices[n]);
    if (s.height() != h || s.width() != w) throw DimensionError("make_batch: samples differ in size");
    const FlipChoice flip = flips.empty() ? FlipChoice{} : flips.at(n);
    const auto pa = s.pre.data(), pb = s.post.data();
    for (std::int64_t y = 0; y < h; ++y) {
      const auto sy = flip.vertical ? h - 1 - y : y;
      for (std::int64_t x = 0; x < w; ++x) {
        const auto sx = flip.horizontal ? w - 1 - x : x;
        const auto src = sy * w + sx, dst = y * w + x;
        for (int c = 0; c < 3; ++c) {
          pre[(n * 3 + c) * plane + dst] = static_cast<T>(pa[c * plane + src]);
          post[(n * 3 + c) * plane + dst] = static_cast<T>(pb[c * plane + src]);
        }
        const auto m = s.mask.values[src];
        mask.values[n * plane + dst] = m;
        target[n * plane + dst] = static_cast<T>(m);
      }
    }
  }
  return {Tensor<T>({b, 3, h, w}, std::move(pre)), Tensor<T>({b, 3, h, w}, std::move(post)),
          Tensor<T>({b, h, w}, std::move(target)), std::move(mask)};
}

template Batch<float> make_batch(const Dataset&, const std::vector<std::size_t>&, const std::vector<FlipChoice>&);
template Batch<double> make_batch(const Dataset&, const std::vector<std::size_t>&, const std::vector<FlipChoice>&);

}  // namespace gradformer
