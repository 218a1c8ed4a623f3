#pragma once

#include <vector>

namespace skillnet {

// Plain row-major matrix with no gradient machinery. Used for acoustic
// features, attention traces and test oracles.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v((size_t)(r) * c, 0.0) {}

  double& at(int r, int c) { return v[size_t(r) * cols + c]; }
  double at(int r, int c) const { return v[size_t(r) * cols + c]; }
};

}  // namespace skillnet
