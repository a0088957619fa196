#include "gradformer/fusion.hpp"

namespace gradformer {

template <Real T>
Tensor<T> da_concat(const Tensor<T>& pre, const Tensor<T>& post) {
  if (pre.shape() != post.shape() || pre.rank() != 4) {
    throw DimensionError("da: pre " + shape_str(pre.shape()) + " and post " + shape_str(post.shape()) +
                         " must be equal [B,C,H,W] shapes");
  }
  return concat<T>({pre, post, sub(post, pre)}, 1);
}

template <Real T>
Tensor<T> da_preactivation(const Tensor<T>& pre, const Tensor<T>& post, const DaModule<T>& module) {
  expect_channels(pre, module.channels(), "da_forward");
  return module.proj.forward(da_concat(pre, post));
}

template <Real T>
Tensor<T> da_forward(const Tensor<T>& pre, const Tensor<T>& post, const DaModule<T>& module) {
  return gelu(da_preactivation(pre, post, module));
}

#define GRADFORMER_INSTANTIATE_FUSION(T)                                                    \
  template Tensor<T> da_concat(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> da_preactivation(const Tensor<T>&, const Tensor<T>&, const DaModule<T>&); \
  template Tensor<T> da_forward(const Tensor<T>&, const Tensor<T>&, const DaModule<T>&);

GRADFORMER_INSTANTIATE_FUSION(float)
GRADFORMER_INSTANTIATE_FUSION(double)

}  // namespace gradformer
