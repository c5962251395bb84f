#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace rlns {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first gradient write
  bool requires_grad = false;
  bool leaf = true;  // false once produced by a recorded op

  std::vector<double>& ensure_grad();
};

// Per-backward gradient buffers for leaf tensors. Lets several samples run
// backward against shared parameters without touching the shared grad
// buffers; the caller reduces sinks in a fixed order afterwards.
class GradSink {
 public:
  std::vector<double>& buffer_for(TensorImpl* t);
  std::unordered_map<TensorImpl*, std::vector<double>> buffers;
};

// Dense row-major f64 tensor. Value handle: copies share storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  // Handles share storage; constness is shallow (shared_ptr semantics).
  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  std::span<const double> grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) const { impl_->requires_grad = rg; }

  double item() const;                       // scalar tensors only
  double at(int64_t r, int64_t c) const;     // 2-d convenience
  double& at(int64_t r, int64_t c);

  bool all_finite() const;
  Tensor detached() const;  // value copy outside the graph
  Tensor clone_with_grad_flag() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Append-only record of differentiable operations. Backward replays the
// records in strict reverse append order, which fixes the gradient
// accumulation order and keeps results bit-reproducible.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(std::shared_ptr<TensorImpl> out, std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse. Gradients of
  // non-leaf tensors are reset first; leaf gradients accumulate across
  // calls (or land in `sink` when given).
  void backward(const Tensor& loss, GradSink* sink = nullptr);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<TensorImpl> out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  friend struct TapeScope;
};

// Installs a tape as the thread's recording target for its lifetime.
struct TapeScope {
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Destination buffer for gradient accumulation into `t`. Routes leaf
// tensors to the active sink when one is installed.
std::span<double> grad_dst(TensorImpl* t);

}  // namespace rlns
