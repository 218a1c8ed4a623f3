#pragma once

#include "skillnet/rng.hpp"
#include "skillnet/tensor.hpp"

namespace skillnet {

// Affine map y = x W + b with W [in, out], b [out].
struct Linear {
  Tensor w;
  Tensor b;

  Linear() = default;
  Linear(int in, int out, Rng& rng, double init_std = 0.02) {
    std::vector<double> wv((size_t)(in) * out);
    for (auto& v : wv) v = rng.truncated_normal(init_std);
    w = Tensor::from_values({in, out}, std::move(wv), true);
    b = Tensor::zeros({out}, true);
  }

  Tensor apply(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }
};

}  // namespace skillnet
