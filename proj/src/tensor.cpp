#include "gradformer/tensor.hpp"

#include <sstream>

namespace gradformer {

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

template <Real T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel_of(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                         " elements");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <Real T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  return Tensor(shape, std::vector<T>(static_cast<std::size_t>(numel_of(shape)), value));
}

template <Real T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1) throw ContractError("item() needs a one-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

template <Real T>
Tensor<T> Tensor<T>::grad_tensor() const {
  if (impl_->grad.empty()) return zeros(impl_->shape);
  return Tensor(impl_->shape, impl_->grad);
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <Real T>
Tape<T>& Tape<T>::active() {
  thread_local Tape<T> tape;
  return tape;
}

template <Real T>
void Tape<T>::replay_backward() {
  // Swap out first so backward rules never observe a half-consumed tape.
  std::vector<TapeNode<T>> nodes;
  nodes.swap(nodes_);
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->backward(*it);
  }
}

template <Real T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "<null>"));
  }
  if (!loss.requires_grad()) {
    Tape<T>::active().clear();
    return;
  }
  auto& impl = *loss.impl();
  impl.grad_buffer()[0] += T(1);
  Tape<T>::active().replay_backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace gradformer
