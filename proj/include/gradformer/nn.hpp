#pragma once

#include <string>
#include <vector>

#include "gradformer/ops.hpp"
#include "gradformer/random.hpp"
#include "gradformer/tensor.hpp"

namespace gradformer {

// A trainable tensor together with its stable hierarchical name.
template <Real T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <Real T>
using ParameterList = std::vector<NamedParameter<T>>;

enum class InitPolicy {
  kFanInNormal,  // N(0, 2 / fan_in)
  kZeros,
  kOnes,
  kNormal,  // N(0, std^2) with an explicit std
};

// Allocates a leaf tensor that requires grad. Values are drawn in double and
// rounded to T, so float and double builds from one seed agree.
template <Real T>
Tensor<T> make_parameter(const Shape& shape, InitPolicy policy, Xorshift64Star& rng, double fan_in_or_std = 0.0);

template <Real T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(std::int64_t in_channels, std::int64_t out_channels, int kernel, Xorshift64Star& rng, int stride = 1,
              int padding = 0, int groups = 1, bool with_bias = true);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  std::int64_t in_channels() const { return weight.shape()[1] * geometry.groups; }
  std::int64_t out_channels() const { return weight.shape()[0]; }

  Tensor<T> weight;  // [out, in/groups, k, k]
  Tensor<T> bias;    // [out] or undefined
  Conv2dGeometry geometry;
};

template <Real T>
class ConvTranspose2dLayer {
 public:
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(std::int64_t in_channels, std::int64_t out_channels, int kernel, int stride, int padding,
                       Xorshift64Star& rng, bool with_bias = true);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  Tensor<T> weight;  // [in, out, k, k]
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;
};

// Per-sample, per-channel normalization over the spatial axes, then an affine
// gain/shift per channel.
template <Real T>
class InstanceNormLayer {
 public:
  static constexpr double kDefaultEps = 1e-5;

  InstanceNormLayer() = default;
  explicit InstanceNormLayer(std::int64_t channels, double eps = kDefaultEps);

  Tensor<T> forward(const Tensor<T>& x) const;
  // The pre-affine normalized map.
  Tensor<T> normalize(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  Tensor<T> gain;   // [C], init 1
  Tensor<T> shift;  // [C], init 0
  double eps = kDefaultEps;
};

// project(gelu(expand(x))) with 1x1 convolutions; C -> ratio*C -> C.
template <Real T>
class ConvMlpLayer {
 public:
  ConvMlpLayer() = default;
  ConvMlpLayer(std::int64_t channels, int ratio, Xorshift64Star& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  Conv2dLayer<T> expand;
  Conv2dLayer<T> project;
  int ratio = 4;
};

// Strided convolution followed by instance normalization. The convolution has
// no bias: the normalization would cancel it.
template <Real T>
class PatchEmbedLayer {
 public:
  PatchEmbedLayer() = default;
  PatchEmbedLayer(std::int64_t in_channels, std::int64_t out_channels, int kernel, int stride, int padding,
                  Xorshift64Star& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect_parameters(const std::string& prefix, ParameterList<T>& out) const;

  int stride() const { return conv.geometry.stride; }

  Conv2dLayer<T> conv;
  InstanceNormLayer<T> norm;
};

// Checks x is [B, channels, H, W]; throws DimensionError naming `who`.
template <Real T>
void expect_channels(const Tensor<T>& x, std::int64_t channels, const char* who);

}  // namespace gradformer
