#include "rlns/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rlns {

namespace {
thread_local Tape* g_current_tape = nullptr;
thread_local GradSink* g_active_sink = nullptr;
}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

std::vector<double>& GradSink::buffer_for(TensorImpl* t) {
  auto& buf = buffers[t];
  if (buf.empty()) buf.assign(t->data.size(), 0.0);
  return buf;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), 0.0);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), v);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor({1}, {v}, requires_grad); }

void Tensor::zero_grad() const { impl_->grad.clear(); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

double Tensor::at(int64_t r, int64_t c) const {
  return impl_->data[static_cast<size_t>(r * impl_->shape[1] + c)];
}

double& Tensor::at(int64_t r, int64_t c) {
  return impl_->data[static_cast<size_t>(r * impl_->shape[1] + c)];
}

bool Tensor::all_finite() const {
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::detached() const {
  Tensor t(impl_->shape, impl_->data, false);
  return t;
}

Tensor Tensor::clone_with_grad_flag() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::shared_ptr<TensorImpl> out, std::function<void()> backward_fn) {
  nodes_.push_back(Node{std::move(out), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss, GradSink* sink) {
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
  // Reset intermediate gradients so repeated backward calls accumulate only
  // into leaves.
  for (auto& node : nodes_) {
    if (!node.out->leaf && !node.out->grad.empty()) {
      std::fill(node.out->grad.begin(), node.out->grad.end(), 0.0);
    }
  }
  loss.impl()->ensure_grad()[0] += 1.0;
  g_active_sink = sink;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->fn();
  }
  g_active_sink = nullptr;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }

TapeScope::~TapeScope() { g_current_tape = previous_; }

std::span<double> grad_dst(TensorImpl* t) {
  if (t->leaf && g_active_sink != nullptr) return g_active_sink->buffer_for(t);
  return t->ensure_grad();
}

}  // namespace rlns
