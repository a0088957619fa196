#pragma once

// Synthetic bitemporal scenes and the on-disk A/B/label dataset layout.

#include <filesystem>
#include <string>
#include <vector>

#include "gradformer/mask.hpp"
#include "gradformer/random.hpp"
#include "gradformer/tensor.hpp"

namespace gradformer {

struct BitemporalSample {
  std::string name;
  Tensor<float> pre;   // [3,H,W] in [0,1]
  Tensor<float> post;  // [3,H,W] in [0,1]
  BinaryMask mask;     // [1,H,W]

  std::int64_t height() const { return pre.shape()[1]; }
  std::int64_t width() const { return pre.shape()[2]; }
};

struct Dataset {
  std::vector<BitemporalSample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
};

struct SynthOptions {
  int num = 10;
  int size = 64;
  std::uint64_t seed = 0;
  // Only illumination distractors, no true changes: every mask is empty.
  bool distractor_only = false;
};

// Draws one sample from `rng`. Values are quantized to multiples of 1/255 so
// the in-memory sample equals what round-trips through netpbm.
BitemporalSample synth_sample(Xorshift64Star& rng, int size, bool distractor_only = false);

// Samples 0..num-1 from a single stream seeded by `seed`.
Dataset synth_dataset(const SynthOptions& options);

struct SplitSizes {
  int train = 0, val = 0, test = 0;
};
// 80/10/10 by index: floor(0.8n), floor(0.1n), and the remainder.
SplitSizes split_sizes(int n);

// Writes out_dir/{A,B,label}/NNNNN.{ppm,pgm} plus train.txt, val.txt and
// test.txt. Throws ConfigError unless size is divisible by 32.
void synth_generate(const SynthOptions& options, const std::filesystem::path& out_dir);

// Reads the basenames listed in DIR/<split>.txt.
Dataset load_split(const std::filesystem::path& dir, const std::string& split);

// [B,3,H,W] stacks of the selected samples' pre and post images, and the
// [B,H,W] target as 0/1 values.
template <Real T>
struct Batch {
  Tensor<T> pre, post, target;
  BinaryMask mask;
};

struct FlipChoice {
  bool horizontal = false;
  bool vertical = false;
};

template <Real T>
Batch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                    const std::vector<FlipChoice>& flips = {});

}  // namespace gradformer
