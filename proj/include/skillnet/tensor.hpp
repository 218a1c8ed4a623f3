#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace skillnet {

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

struct TensorImpl {
  std::vector<int> dims;
  std::vector<double> v;
  bool requires_grad = false;
  std::vector<double> g;    // same size as v when requires_grad
  bool grad_ready = false;  // set once backward deposits into g
  std::vector<TensorImplPtr> parents;
  // Reads self.g (upstream gradient) and self.v; writes into parents' g.
  std::function<void(const TensorImpl& self)> backprop;
};

/// Dense row-major tensor of 64-bit floats participating in reverse-mode
/// differentiation. A Tensor is a shared handle: copies alias the storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> dims, bool requires_grad = false);
  static Tensor full(std::vector<int> dims, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int> dims, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(int n);
  static Tensor wrap(TensorImplPtr impl) { return Tensor(std::move(impl)); }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& dims() const { return impl_->dims; }
  int dim(int axis) const { return impl_->dims[size_t(axis)]; }
  int rank() const { return int(impl_->dims.size()); }
  int64_t size() const { return int64_t(impl_->v.size()); }

  // A Tensor is a handle; const-ness of the handle does not freeze the
  // storage, so mutating accessors stay callable on const handles.
  const std::vector<double>& values() const { return impl_->v; }
  std::vector<double>& mutable_values() const { return impl_->v; }
  double value() const;  // scalar tensors only
  double at(std::initializer_list<int> idx) const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool grad_ready() const { return impl_->grad_ready; }
  const std::vector<double>& grad() const { return impl_->g; }
  std::vector<double>& mutable_grad() const { return impl_->g; }
  void zero_grad() const;

  TensorImpl* impl() const { return impl_.get(); }
  TensorImplPtr handle() const { return impl_; }

 private:
  explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}
  TensorImplPtr impl_;
};

// While a guard is alive no computation graph edges are recorded; forward
// values are unaffected. Used for evaluation and inference.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Low-level node constructor for custom differentiable operations.
Tensor make_op_node(std::vector<int> dims, std::vector<double> values,
                    std::vector<Tensor> parents,
                    std::function<void(const TensorImpl&)> backprop);

std::string dims_str(const std::vector<int>& dims);

// ---- primitives ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // v added to every row
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul_colvec(const Tensor& m, const Tensor& v);  // row i scaled by v[i]
Tensor scale(const Tensor& a, double c);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, std::vector<int> dims);
Tensor rows_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor scatter_rows(const Tensor& rows, const std::vector<int>& ids, int out_rows);
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h, int stride_w);
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride_t, int stride_h, int stride_w);
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon = 1e-12);
Tensor row_normalize(const Tensor& x);          // divide each row by its sum
Tensor l2_normalize_rows(const Tensor& x, double epsilon = 1e-12);
Tensor sum(const Tensor& x);                    // scalar
Tensor mean(const Tensor& x);                   // scalar
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets);

// Output-side conv length: floor((len - kernel) / stride) + 1.
int conv_out_len(int len, int kernel, int stride);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// requires-grad tensor reachable from the loss; unreachable trainables keep
// their zero-filled buffers and stay unmarked.
void backward(const Tensor& loss);

}  // namespace skillnet
