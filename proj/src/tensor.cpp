#include "skillnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "skillnet/errors.hpp"

namespace skillnet {

namespace {

thread_local int g_no_grad_depth = 0;

int64_t product(const std::vector<int>& dims) {
  int64_t n = 1;
  for (int d : dims) n *= d;
  return n;
}

void check_dims_positive(const std::vector<int>& dims, const char* who) {
  for (int d : dims) {
    if (d <= 0) throw ShapeError(std::string(who) + ": non-positive dim in " + dims_str(dims));
  }
}

TensorImplPtr make_impl(std::vector<int> dims, std::vector<double> values, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->dims = std::move(dims);
  impl->v = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->g.assign(impl->v.size(), 0.0);
  return impl;
}

bool any_requires(const std::vector<Tensor>& ts) {
  for (const auto& t : ts) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// Accumulate into a parent's gradient buffer, allocating on first touch.
void accum(TensorImpl& p, int64_t idx, double val) { p.g[size_t(idx)] += val; }

void prepare_parent(TensorImpl& p) {
  if (p.g.size() != p.v.size()) p.g.assign(p.v.size(), 0.0);
  p.grad_ready = true;
}

}  // namespace

std::string dims_str(const std::vector<int>& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ",";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor Tensor::zeros(std::vector<int> dims, bool requires_grad) {
  check_dims_positive(dims, "zeros");
  int64_t n = product(dims);
  return Tensor(make_impl(std::move(dims), std::vector<double>((size_t)(n), 0.0), requires_grad));
}

Tensor Tensor::full(std::vector<int> dims, double value, bool requires_grad) {
  check_dims_positive(dims, "full");
  int64_t n = product(dims);
  return Tensor(make_impl(std::move(dims), std::vector<double>((size_t)(n), value), requires_grad));
}

Tensor Tensor::from_values(std::vector<int> dims, std::vector<double> values, bool requires_grad) {
  check_dims_positive(dims, "from_values");
  if (product(dims) != int64_t(values.size())) {
    throw ShapeError("from_values: " + dims_str(dims) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  return Tensor(make_impl(std::move(dims), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.mutable_values()[size_t(i) * n + i] = 1.0;
  return t;
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("value(): tensor is not scalar, dims " + dims_str(dims()));
  return impl_->v[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const auto& d = impl_->dims;
  if (idx.size() != d.size()) throw ShapeError("at(): rank mismatch");
  int64_t off = 0;
  size_t i = 0;
  for (int ix : idx) {
    off = off * d[i] + ix;
    ++i;
  }
  return impl_->v[size_t(off)];
}

void Tensor::zero_grad() const {
  impl_->g.assign(impl_->v.size(), 0.0);
  impl_->grad_ready = false;
}

Tensor make_op_node(std::vector<int> dims, std::vector<double> values,
                    std::vector<Tensor> parents,
                    std::function<void(const TensorImpl&)> backprop) {
  bool req = grad_enabled() && any_requires(parents);
  auto impl = make_impl(std::move(dims), std::move(values), req);
  if (req) {
    for (auto& p : parents) impl->parents.push_back(p.handle());
    impl->backprop = std::move(backprop);
  }
  return Tensor::wrap(impl);
}

int conv_out_len(int len, int kernel, int stride) {
  if (kernel > len) {
    throw ShapeError("conv: kernel " + std::to_string(kernel) + " does not fit input length " +
                     std::to_string(len));
  }
  return (len - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: need rank-2 operands, got " + dims_str(a.dims()) + " and " +
                     dims_str(b.dims()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dims differ, " + dims_str(a.dims()) + " vs " +
                     dims_str(b.dims()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out((size_t)(m) * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int i = 0; i < m; ++i) {
    double* orow = out.data() + size_t(i) * n;
    const double* arow = av + size_t(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = bv + size_t(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  auto pa = a.handle(), pb = b.handle();
  return make_op_node(
      {m, n}, std::move(out), {a, b},
      [pa, pb, m, k, n](const TensorImpl& self) {
        const double* g = self.g.data();
        if (pa->requires_grad) {
          prepare_parent(*pa);
          const double* bv = pb->v.data();
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
              const double gij = g[size_t(i) * n + j];
              if (gij == 0.0) continue;
              for (int kk = 0; kk < k; ++kk) {
                accum(*pa, int64_t(i) * k + kk, gij * bv[size_t(kk) * n + j]);
              }
            }
          }
        }
        if (pb->requires_grad) {
          prepare_parent(*pb);
          const double* av = pa->v.data();
          for (int i = 0; i < m; ++i) {
            for (int kk = 0; kk < k; ++kk) {
              const double aik = av[size_t(i) * k + kk];
              if (aik == 0.0) continue;
              for (int j = 0; j < n; ++j) {
                accum(*pb, int64_t(kk) * n + j, aik * g[size_t(i) * n + j]);
              }
            }
          }
        }
      });
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d: need rank-2, got " + dims_str(a.dims()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out((size_t)(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out[size_t(j) * m + i] = a.values()[size_t(i) * n + j];
  }
  auto pa = a.handle();
  return make_op_node({n, m}, std::move(out), {a}, [pa, m, n](const TensorImpl& self) {
    if (!pa->requires_grad) return;
    prepare_parent(*pa);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) {
        accum(*pa, int64_t(i) * n + j, self.g[size_t(j) * m + i]);
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("add: dims differ, " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  }
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  auto pa = a.handle(), pb = b.handle();
  return make_op_node(a.dims(), std::move(out), {a, b}, [pa, pb](const TensorImpl& self) {
    for (auto* p : {pa.get(), pb.get()}) {
      if (!p->requires_grad) continue;
      prepare_parent(*p);
      for (size_t i = 0; i < self.g.size(); ++i) accum(*p, int64_t(i), self.g[i]);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.size() != m.dim(1)) {
    throw ShapeError("add_rowvec: " + dims_str(m.dims()) + " vs vector " + dims_str(v.dims()));
  }
  const int rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.values());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out[size_t(i) * cols + j] += v.values()[size_t(j)];
  }
  auto pm = m.handle(), pv = v.handle();
  return make_op_node({rows, cols}, std::move(out), {m, v},
                      [pm, pv, rows, cols](const TensorImpl& self) {
                        if (pm->requires_grad) {
                          prepare_parent(*pm);
                          for (size_t i = 0; i < self.g.size(); ++i) accum(*pm, int64_t(i), self.g[i]);
                        }
                        if (pv->requires_grad) {
                          prepare_parent(*pv);
                          for (int i = 0; i < rows; ++i) {
                            for (int j = 0; j < cols; ++j) {
                              accum(*pv, j, self.g[size_t(i) * cols + j]);
                            }
                          }
                        }
                      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError("mul: dims differ, " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  }
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  auto pa = a.handle(), pb = b.handle();
  return make_op_node(a.dims(), std::move(out), {a, b}, [pa, pb](const TensorImpl& self) {
    if (pa->requires_grad) {
      prepare_parent(*pa);
      for (size_t i = 0; i < self.g.size(); ++i) accum(*pa, int64_t(i), self.g[i] * pb->v[i]);
    }
    if (pb->requires_grad) {
      prepare_parent(*pb);
      for (size_t i = 0; i < self.g.size(); ++i) accum(*pb, int64_t(i), self.g[i] * pa->v[i]);
    }
  });
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.size() != m.dim(0)) {
    throw ShapeError("mul_colvec: " + dims_str(m.dims()) + " vs vector " + dims_str(v.dims()));
  }
  const int rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.values());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out[size_t(i) * cols + j] *= v.values()[size_t(i)];
  }
  auto pm = m.handle(), pv = v.handle();
  return make_op_node({rows, cols}, std::move(out), {m, v},
                      [pm, pv, rows, cols](const TensorImpl& self) {
                        if (pm->requires_grad) {
                          prepare_parent(*pm);
                          for (int i = 0; i < rows; ++i) {
                            for (int j = 0; j < cols; ++j) {
                              accum(*pm, int64_t(i) * cols + j, self.g[size_t(i) * cols + j] * pv->v[size_t(i)]);
                            }
                          }
                        }
                        if (pv->requires_grad) {
                          prepare_parent(*pv);
                          for (int i = 0; i < rows; ++i) {
                            double s = 0.0;
                            for (int j = 0; j < cols; ++j) {
                              s += self.g[size_t(i) * cols + j] * pm->v[size_t(i) * cols + j];
                            }
                            accum(*pv, i, s);
                          }
                        }
                      });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& x : out) x *= c;
  auto pa = a.handle();
  return make_op_node(a.dims(), std::move(out), {a}, [pa, c](const TensorImpl& self) {
    if (!pa->requires_grad) return;
    prepare_parent(*pa);
    for (size_t i = 0; i < self.g.size(); ++i) accum(*pa, int64_t(i), c * self.g[i]);
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const int rank = parts[0].rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
  std::vector<int> dims = parts[0].dims();
  int total_axis = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.dim(d) != dims[size_t(d)]) {
        throw ShapeError("concat: dims differ off-axis, " + dims_str(dims) + " vs " +
                         dims_str(p.dims()));
      }
    }
    total_axis += p.dim(axis);
  }
  dims[size_t(axis)] = total_axis;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= dims[size_t(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= dims[size_t(d)];

  std::vector<double> out((size_t)(outer) * total_axis * inner);
  int64_t axis_off = 0;
  for (const auto& p : parts) {
    const int pa = p.dim(axis);
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = p.values().data() + o * pa * inner;
      double* dst = out.data() + (o * total_axis + axis_off) * inner;
      std::copy(src, src + int64_t(pa) * inner, dst);
    }
    axis_off += pa;
  }

  std::vector<TensorImplPtr> handles;
  std::vector<int> axis_sizes;
  for (const auto& p : parts) {
    handles.push_back(p.handle());
    axis_sizes.push_back(p.dim(axis));
  }
  return make_op_node(dims, std::move(out), parts,
                      [handles, axis_sizes, outer, inner, total_axis](const TensorImpl& self) {
                        int64_t axis_off = 0;
                        for (size_t pi = 0; pi < handles.size(); ++pi) {
                          auto& p = *handles[pi];
                          const int pa = axis_sizes[pi];
                          if (p.requires_grad) {
                            prepare_parent(p);
                            for (int64_t o = 0; o < outer; ++o) {
                              const double* src = self.g.data() + (o * total_axis + axis_off) * inner;
                              for (int64_t i = 0; i < int64_t(pa) * inner; ++i) {
                                accum(p, o * pa * inner + i, src[i]);
                              }
                            }
                          }
                          axis_off += pa;
                        }
                      });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  const int rank = a.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("slice: bad axis");
  if (start < 0 || len <= 0 || start + len > a.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") outside axis of size " + std::to_string(a.dim(axis)));
  }
  std::vector<int> dims = a.dims();
  const int full_axis = dims[size_t(axis)];
  dims[size_t(axis)] = len;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= a.dim(d);

  std::vector<double> out((size_t)(outer) * len * inner);
  for (int64_t o = 0; o < outer; ++o) {
    const double* src = a.values().data() + (o * full_axis + start) * inner;
    std::copy(src, src + int64_t(len) * inner, out.data() + o * len * inner);
  }
  auto pa = a.handle();
  return make_op_node(dims, std::move(out), {a},
                      [pa, outer, inner, full_axis, start, len](const TensorImpl& self) {
                        if (!pa->requires_grad) return;
                        prepare_parent(*pa);
                        for (int64_t o = 0; o < outer; ++o) {
                          const double* src = self.g.data() + o * len * inner;
                          for (int64_t i = 0; i < int64_t(len) * inner; ++i) {
                            accum(*pa, (o * full_axis + start) * inner + i, src[i]);
                          }
                        }
                      });
}

Tensor reshape(const Tensor& a, std::vector<int> dims) {
  check_dims_positive(dims, "reshape");
  if (product(dims) != a.size()) {
    throw ShapeError("reshape: " + dims_str(a.dims()) + " to " + dims_str(dims) +
                     " changes element count");
  }
  auto pa = a.handle();
  return make_op_node(std::move(dims), a.values(), {a}, [pa](const TensorImpl& self) {
    if (!pa->requires_grad) return;
    prepare_parent(*pa);
    for (size_t i = 0; i < self.g.size(); ++i) accum(*pa, int64_t(i), self.g[i]);
  });
}

Tensor rows_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ShapeError("rows_lookup: table must be rank-2");
  const int rows = table.dim(0), cols = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= rows) {
      throw ContractError("rows_lookup: id " + std::to_string(id) + " outside table of " +
                          std::to_string(rows) + " rows");
    }
  }
  const int n = int(ids.size());
  if (n == 0) throw ShapeError("rows_lookup: empty id list");
  std::vector<double> out((size_t)(n) * cols);
  for (int i = 0; i < n; ++i) {
    const double* src = table.values().data() + size_t(ids[size_t(i)]) * cols;
    std::copy(src, src + cols, out.data() + size_t(i) * cols);
  }
  auto pt = table.handle();
  return make_op_node({n, cols}, std::move(out), {table}, [pt, ids, cols](const TensorImpl& self) {
    if (!pt->requires_grad) return;
    prepare_parent(*pt);
    for (size_t i = 0; i < ids.size(); ++i) {
      for (int j = 0; j < cols; ++j) {
        accum(*pt, int64_t(ids[i]) * cols + j, self.g[i * cols + j]);
      }
    }
  });
}

Tensor scatter_rows(const Tensor& rows, const std::vector<int>& ids, int out_rows) {
  if (rows.rank() != 2) throw ShapeError("scatter_rows: rows must be rank-2");
  if (int(ids.size()) != rows.dim(0)) {
    throw ShapeError("scatter_rows: " + std::to_string(ids.size()) + " ids for " +
                     std::to_string(rows.dim(0)) + " rows");
  }
  const int cols = rows.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= out_rows) throw ContractError("scatter_rows: id out of range");
  }
  std::vector<double> out((size_t)(out_rows) * cols, 0.0);
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* src = rows.values().data() + i * cols;
    double* dst = out.data() + size_t(ids[i]) * cols;
    for (int j = 0; j < cols; ++j) dst[j] += src[j];
  }
  auto pr = rows.handle();
  return make_op_node({out_rows, cols}, std::move(out), {rows},
                      [pr, ids, cols](const TensorImpl& self) {
                        if (!pr->requires_grad) return;
                        prepare_parent(*pr);
                        for (size_t i = 0; i < ids.size(); ++i) {
                          for (int j = 0; j < cols; ++j) {
                            accum(*pr, int64_t(i) * cols + j, self.g[size_t(ids[i]) * cols + j]);
                          }
                        }
                      });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  if (x.rank() != 2 || w.rank() != 3) {
    throw ShapeError("conv1d: x " + dims_str(x.dims()) + ", w " + dims_str(w.dims()));
  }
  const int ci = x.dim(0), len = x.dim(1);
  const int co = w.dim(0), wci = w.dim(1), k = w.dim(2);
  if (wci != ci) {
    throw ShapeError("conv1d: channel mismatch, x " + dims_str(x.dims()) + " vs w " +
                     dims_str(w.dims()));
  }
  if (b.size() != co) throw ShapeError("conv1d: bias size " + dims_str(b.dims()));
  const int lo = conv_out_len(len, k, stride);
  std::vector<double> out((size_t)(co) * lo);
  for (int o = 0; o < co; ++o) {
    for (int t = 0; t < lo; ++t) {
      double acc = b.values()[size_t(o)];
      const int base = t * stride;
      for (int c = 0; c < ci; ++c) {
        const double* xrow = x.values().data() + size_t(c) * len + base;
        const double* wrow = w.values().data() + ((size_t)(o) * ci + c) * k;
        for (int kk = 0; kk < k; ++kk) acc += xrow[kk] * wrow[kk];
      }
      out[size_t(o) * lo + t] = acc;
    }
  }
  auto px = x.handle(), pw = w.handle(), pb = b.handle();
  return make_op_node(
      {co, lo}, std::move(out), {x, w, b},
      [px, pw, pb, ci, len, co, k, stride, lo](const TensorImpl& self) {
        const double* g = self.g.data();
        if (px->requires_grad) prepare_parent(*px);
        if (pw->requires_grad) prepare_parent(*pw);
        if (pb->requires_grad) prepare_parent(*pb);
        for (int o = 0; o < co; ++o) {
          for (int t = 0; t < lo; ++t) {
            const double go = g[size_t(o) * lo + t];
            if (go == 0.0) continue;
            if (pb->requires_grad) accum(*pb, o, go);
            const int base = t * stride;
            for (int c = 0; c < ci; ++c) {
              const int64_t xoff = int64_t(c) * len + base;
              const int64_t woff = (int64_t(o) * ci + c) * k;
              for (int kk = 0; kk < k; ++kk) {
                if (px->requires_grad) accum(*px, xoff + kk, go * pw->v[size_t(woff + kk)]);
                if (pw->requires_grad) accum(*pw, woff + kk, go * px->v[size_t(xoff + kk)]);
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_h, int stride_w) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw ShapeError("conv2d: x " + dims_str(x.dims()) + ", w " + dims_str(w.dims()));
  }
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co = w.dim(0), wci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (wci != ci) {
    throw ShapeError("conv2d: channel mismatch, x " + dims_str(x.dims()) + " vs w " +
                     dims_str(w.dims()));
  }
  if (b.size() != co) throw ShapeError("conv2d: bias size " + dims_str(b.dims()));
  const int ho = conv_out_len(h, kh, stride_h);
  const int wo = conv_out_len(wd, kw, stride_w);
  std::vector<double> out((size_t)(co) * ho * wo);
  for (int o = 0; o < co; ++o) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        double acc = b.values()[size_t(o)];
        for (int c = 0; c < ci; ++c) {
          for (int a = 0; a < kh; ++a) {
            const double* xrow =
                x.values().data() + ((size_t)(c) * h + i * stride_h + a) * wd + j * stride_w;
            const double* wrow = w.values().data() + (((size_t)(o) * ci + c) * kh + a) * kw;
            for (int bb = 0; bb < kw; ++bb) acc += xrow[bb] * wrow[bb];
          }
        }
        out[((size_t)(o) * ho + i) * wo + j] = acc;
      }
    }
  }
  auto px = x.handle(), pw = w.handle(), pb = b.handle();
  return make_op_node(
      {co, ho, wo}, std::move(out), {x, w, b},
      [px, pw, pb, ci, h, wd, co, kh, kw, stride_h, stride_w, ho, wo](const TensorImpl& self) {
        if (px->requires_grad) prepare_parent(*px);
        if (pw->requires_grad) prepare_parent(*pw);
        if (pb->requires_grad) prepare_parent(*pb);
        for (int o = 0; o < co; ++o) {
          for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
              const double go = self.g[((size_t)(o) * ho + i) * wo + j];
              if (go == 0.0) continue;
              if (pb->requires_grad) accum(*pb, o, go);
              for (int c = 0; c < ci; ++c) {
                for (int a = 0; a < kh; ++a) {
                  const int64_t xoff = (int64_t(c) * h + i * stride_h + a) * wd + j * stride_w;
                  const int64_t woff = ((int64_t(o) * ci + c) * kh + a) * kw;
                  for (int bb = 0; bb < kw; ++bb) {
                    if (px->requires_grad) accum(*px, xoff + bb, go * pw->v[size_t(woff + bb)]);
                    if (pw->requires_grad) accum(*pw, woff + bb, go * px->v[size_t(xoff + bb)]);
                  }
                }
              }
            }
          }
        }
      });
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_t, int stride_h,
              int stride_w) {
  if (x.rank() != 4 || w.rank() != 5) {
    throw ShapeError("conv3d: x " + dims_str(x.dims()) + ", w " + dims_str(w.dims()));
  }
  const int ci = x.dim(0), td = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), wci = w.dim(1), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (wci != ci) {
    throw ShapeError("conv3d: channel mismatch, x " + dims_str(x.dims()) + " vs w " +
                     dims_str(w.dims()));
  }
  if (b.size() != co) throw ShapeError("conv3d: bias size " + dims_str(b.dims()));
  const int to = conv_out_len(td, kt, stride_t);
  const int ho = conv_out_len(h, kh, stride_h);
  const int wo = conv_out_len(wd, kw, stride_w);
  std::vector<double> out((size_t)(co) * to * ho * wo);
  auto xat = [&](int c, int t, int i, int j) {
    return x.values()[(((size_t)(c) * td + t) * h + i) * wd + j];
  };
  auto wat = [&](int o, int c, int a, int p, int q) {
    return w.values()[((((size_t)(o) * ci + c) * kt + a) * kh + p) * kw + q];
  };
  for (int o = 0; o < co; ++o) {
    for (int t = 0; t < to; ++t) {
      for (int i = 0; i < ho; ++i) {
        for (int j = 0; j < wo; ++j) {
          double acc = b.values()[size_t(o)];
          for (int c = 0; c < ci; ++c) {
            for (int a = 0; a < kt; ++a) {
              for (int p = 0; p < kh; ++p) {
                for (int q = 0; q < kw; ++q) {
                  acc += xat(c, t * stride_t + a, i * stride_h + p, j * stride_w + q) *
                         wat(o, c, a, p, q);
                }
              }
            }
          }
          out[(((size_t)(o) * to + t) * ho + i) * wo + j] = acc;
        }
      }
    }
  }
  auto px = x.handle(), pw = w.handle(), pb = b.handle();
  return make_op_node(
      {co, to, ho, wo}, std::move(out), {x, w, b},
      [px, pw, pb, ci, td, h, wd, co, kt, kh, kw, stride_t, stride_h, stride_w, to, ho,
       wo](const TensorImpl& self) {
        if (px->requires_grad) prepare_parent(*px);
        if (pw->requires_grad) prepare_parent(*pw);
        if (pb->requires_grad) prepare_parent(*pb);
        for (int o = 0; o < co; ++o) {
          for (int t = 0; t < to; ++t) {
            for (int i = 0; i < ho; ++i) {
              for (int j = 0; j < wo; ++j) {
                const double go = self.g[(((size_t)(o) * to + t) * ho + i) * wo + j];
                if (go == 0.0) continue;
                if (pb->requires_grad) accum(*pb, o, go);
                for (int c = 0; c < ci; ++c) {
                  for (int a = 0; a < kt; ++a) {
                    for (int p = 0; p < kh; ++p) {
                      for (int q = 0; q < kw; ++q) {
                        const int64_t xoff =
                            ((int64_t(c) * td + t * stride_t + a) * h + i * stride_h + p) * wd +
                            j * stride_w + q;
                        const int64_t woff =
                            (((int64_t(o) * ci + c) * kt + a) * kh + p) * kw + q;
                        if (px->requires_grad) accum(*px, xoff, go * pw->v[size_t(woff)]);
                        if (pw->requires_grad) accum(*pw, woff, go * px->v[size_t(xoff)]);
                      }
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  const double inv_sqrt2 = 0.7071067811865475244;
  const double inv_sqrt2pi = 0.3989422804014326779;
  std::vector<double> out(x.values());
  for (auto& v : out) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  auto px = x.handle();
  return make_op_node(x.dims(), std::move(out), {x},
                      [px, inv_sqrt2, inv_sqrt2pi](const TensorImpl& self) {
                        if (!px->requires_grad) return;
                        prepare_parent(*px);
                        for (size_t i = 0; i < self.g.size(); ++i) {
                          const double v = px->v[i];
                          const double d = 0.5 * (1.0 + std::erf(v * inv_sqrt2)) +
                                           v * inv_sqrt2pi * std::exp(-0.5 * v * v);
                          accum(*px, int64_t(i), self.g[i] * d);
                        }
                      });
}

namespace {

// Iterate lanes along `axis` of a row-major tensor: calls fn(base, stride, n).
template <typename F>
void for_each_lane(const std::vector<int>& dims, int axis, F fn) {
  const int rank = int(dims.size());
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= dims[size_t(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= dims[size_t(d)];
  const int n = dims[size_t(axis)];
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      fn(o * n * inner + i, inner, n);
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const int rank = x.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax: bad axis");
  std::vector<double> out(x.values());
  for_each_lane(x.dims(), axis, [&](int64_t base, int64_t stride, int n) {
    double mx = out[size_t(base)];
    for (int t = 1; t < n; ++t) mx = std::max(mx, out[size_t(base + t * stride)]);
    double z = 0.0;
    for (int t = 0; t < n; ++t) {
      double e = std::exp(out[size_t(base + t * stride)] - mx);
      out[size_t(base + t * stride)] = e;
      z += e;
    }
    for (int t = 0; t < n; ++t) out[size_t(base + t * stride)] /= z;
  });
  auto px = x.handle();
  auto dims = x.dims();
  return make_op_node(dims, std::move(out), {x}, [px, dims, axis](const TensorImpl& self) {
    if (!px->requires_grad) return;
    prepare_parent(*px);
    for_each_lane(dims, axis, [&](int64_t base, int64_t stride, int n) {
      double dot = 0.0;
      for (int t = 0; t < n; ++t) {
        dot += self.g[size_t(base + t * stride)] * self.v[size_t(base + t * stride)];
      }
      for (int t = 0; t < n; ++t) {
        const size_t i = size_t(base + t * stride);
        accum(*px, int64_t(i), self.v[i] * (self.g[i] - dot));
      }
    });
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("log_softmax_rows: need rank-2, got " + dims_str(x.dims()));
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.values());
  for (int i = 0; i < rows; ++i) {
    double* row = out.data() + size_t(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < cols; ++j) row[j] -= lse;
  }
  auto px = x.handle();
  return make_op_node({rows, cols}, std::move(out), {x}, [px, rows, cols](const TensorImpl& self) {
    if (!px->requires_grad) return;
    prepare_parent(*px);
    for (int i = 0; i < rows; ++i) {
      double gsum = 0.0;
      for (int j = 0; j < cols; ++j) gsum += self.g[size_t(i) * cols + j];
      for (int j = 0; j < cols; ++j) {
        const size_t o = size_t(i) * cols + j;
        accum(*px, int64_t(o), self.g[o] - std::exp(self.v[o]) * gsum);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const int n = x.dim(x.rank() - 1);
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias " + dims_str(gain.dims()) + "/" +
                     dims_str(bias.dims()) + " vs last axis " + std::to_string(n));
  }
  const int64_t rows = x.size() / n;
  std::vector<double> out(x.values().size());
  std::vector<double> inv_std(static_cast<size_t>(rows));
  std::vector<double> norm(x.values().size());  // saved for backward
  for (int64_t i = 0; i < rows; ++i) {
    const double* row = x.values().data() + i * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    inv_std[size_t(i)] = inv;
    for (int j = 0; j < n; ++j) {
      const double nm = (row[j] - mean) * inv;
      norm[size_t(i * n + j)] = nm;
      out[size_t(i * n + j)] = gain.values()[size_t(j)] * nm + bias.values()[size_t(j)];
    }
  }
  auto px = x.handle(), pg = gain.handle(), pb = bias.handle();
  return make_op_node(
      x.dims(), std::move(out), {x, gain, bias},
      [px, pg, pb, rows, n, inv_std, norm](const TensorImpl& self) {
        if (pg->requires_grad) prepare_parent(*pg);
        if (pb->requires_grad) prepare_parent(*pb);
        if (px->requires_grad) prepare_parent(*px);
        for (int64_t i = 0; i < rows; ++i) {
          const double* g = self.g.data() + i * n;
          const double* nm = norm.data() + i * n;
          if (pg->requires_grad || pb->requires_grad) {
            for (int j = 0; j < n; ++j) {
              if (pg->requires_grad) accum(*pg, j, g[j] * nm[j]);
              if (pb->requires_grad) accum(*pb, j, g[j]);
            }
          }
          if (px->requires_grad) {
            double mean_gp = 0.0, mean_gpn = 0.0;
            for (int j = 0; j < n; ++j) {
              const double gp = g[j] * pg->v[size_t(j)];
              mean_gp += gp;
              mean_gpn += gp * nm[j];
            }
            mean_gp /= n;
            mean_gpn /= n;
            for (int j = 0; j < n; ++j) {
              const double gp = g[j] * pg->v[size_t(j)];
              accum(*px, i * n + j, inv_std[size_t(i)] * (gp - mean_gp - nm[j] * mean_gpn));
            }
          }
        }
      });
}

Tensor row_normalize(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("row_normalize: need rank-2");
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.values());
  std::vector<double> sums(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += out[size_t(i) * cols + j];
    if (s == 0.0) throw ContractError("row_normalize: row " + std::to_string(i) + " sums to zero");
    sums[size_t(i)] = s;
    for (int j = 0; j < cols; ++j) out[size_t(i) * cols + j] /= s;
  }
  auto px = x.handle();
  return make_op_node({rows, cols}, std::move(out), {x},
                      [px, rows, cols, sums](const TensorImpl& self) {
                        if (!px->requires_grad) return;
                        prepare_parent(*px);
                        for (int i = 0; i < rows; ++i) {
                          double dot = 0.0;
                          for (int j = 0; j < cols; ++j) {
                            dot += self.g[size_t(i) * cols + j] * self.v[size_t(i) * cols + j];
                          }
                          for (int j = 0; j < cols; ++j) {
                            accum(*px, int64_t(i) * cols + j,
                                  (self.g[size_t(i) * cols + j] - dot) / sums[size_t(i)]);
                          }
                        }
                      });
}

Tensor l2_normalize_rows(const Tensor& x, double epsilon) {
  if (x.rank() != 2) throw ShapeError("l2_normalize_rows: need rank-2");
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.values());
  std::vector<double> inv_norm(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += out[size_t(i) * cols + j] * out[size_t(i) * cols + j];
    const double inv = 1.0 / std::sqrt(s + epsilon);
    inv_norm[size_t(i)] = inv;
    for (int j = 0; j < cols; ++j) out[size_t(i) * cols + j] *= inv;
  }
  auto px = x.handle();
  return make_op_node({rows, cols}, std::move(out), {x},
                      [px, rows, cols, inv_norm](const TensorImpl& self) {
                        if (!px->requires_grad) return;
                        prepare_parent(*px);
                        for (int i = 0; i < rows; ++i) {
                          const double inv = inv_norm[size_t(i)];
                          double dot = 0.0;
                          for (int j = 0; j < cols; ++j) {
                            dot += self.g[size_t(i) * cols + j] * px->v[size_t(i) * cols + j];
                          }
                          for (int j = 0; j < cols; ++j) {
                            const size_t o = size_t(i) * cols + j;
                            accum(*px, int64_t(o),
                                  self.g[o] * inv - px->v[o] * dot * inv * inv * inv);
                          }
                        }
                      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto px = x.handle();
  return make_op_node({1}, {s}, {x}, [px](const TensorImpl& self) {
    if (!px->requires_grad) return;
    prepare_parent(*px);
    for (size_t i = 0; i < px->v.size(); ++i) accum(*px, int64_t(i), self.g[0]);
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / double(x.size())); }

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be rank-2");
  const int rows = logits.dim(0), cols = logits.dim(1);
  if (int(targets.size()) != rows) {
    throw ContractError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(rows) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= cols) {
      throw ContractError("cross_entropy: target " + std::to_string(t) + " outside " +
                          std::to_string(cols) + " classes");
    }
  }
  // Stable log-softmax, saved probabilities for the backward pass.
  std::vector<double> probs((size_t)(rows) * cols);
  double loss = 0.0;
  for (int i = 0; i < rows; ++i) {
    const double* row = logits.values().data() + size_t(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < cols; ++j) probs[size_t(i) * cols + j] = std::exp(row[j] - lse);
    loss += lse - row[targets[size_t(i)]];
  }
  loss /= rows;
  auto pl = logits.handle();
  return make_op_node({1}, {loss}, {logits},
                      [pl, probs, targets, rows, cols](const TensorImpl& self) {
                        if (!pl->requires_grad) return;
                        prepare_parent(*pl);
                        const double g = self.g[0] / rows;
                        for (int i = 0; i < rows; ++i) {
                          for (int j = 0; j < cols; ++j) {
                            double d = probs[size_t(i) * cols + j];
                            if (j == targets[size_t(i)]) d -= 1.0;
                            accum(*pl, int64_t(i) * cols + j, g * d);
                          }
                        }
                      });
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, dims " + dims_str(loss.dims()));
  }
  if (!loss.requires_grad()) return;  // nothing trainable in the graph

  // Post-order DFS over parents; reversed order is a valid topological sweep.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  struct Frame {
    TensorImpl* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.impl(), 0});
  seen.insert(loss.impl());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  auto* root = loss.impl();
  if (root->g.size() != root->v.size()) root->g.assign(root->v.size(), 0.0);
  root->g[0] += 1.0;
  root->grad_ready = true;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backprop) node->backprop(*node);
  }
}

}  // namespace skillnet
