#include <cmath>

#include "doctest.h"
#include "skillnet/errors.hpp"
#include "skillnet/nn.hpp"
#include "skillnet/optim.hpp"
#include "skillnet/tensor.hpp"
#include "testutil.hpp"

using namespace skillnet;
using testutil::gradient_check;
using testutil::random_tensor;

namespace {

// Independent length oracle for strided valid convolution.
int conv_len_oracle(int len, int kernel, int stride) {
  int n = 0;
  for (int start = 0; start + kernel <= len; start += stride) ++n;
  return n;
}

}  // namespace

TEST_CASE("matmul identity and shape errors") {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(a, Tensor::identity(2));
  CHECK(out.values() == std::vector<double>{1, 2, 3, 4});

  Tensor bad = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(matmul(a, bad), ShapeError);
  try {
    matmul(a, bad);
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,2]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
}

TEST_CASE("conv1d output length follows the strided recurrence") {
  Rng rng(7);
  Tensor x = random_tensor({1, 400}, rng, false);
  Tensor w = random_tensor({1, 1, 10}, rng, false);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv1d(x, w, b, 5);
  CHECK(y.dim(1) == 79);
  CHECK(y.dim(1) == conv_len_oracle(400, 10, 5));

  for (int len : {17, 33, 100, 481}) {
    for (int k : {2, 3, 10}) {
      for (int s : {1, 2, 5}) {
        if (k > len) continue;
        Tensor xi = random_tensor({1, len}, rng, false);
        Tensor wi = random_tensor({1, 1, k}, rng, false);
        CHECK(conv1d(xi, wi, b, s).dim(1) == conv_len_oracle(len, k, s));
      }
    }
  }
  CHECK_THROWS_AS(conv1d(random_tensor({1, 4}, rng, false), w, b, 5), ShapeError);
}

TEST_CASE("concat joins dims on the chosen axis") {
  Rng rng(3);
  Tensor a = random_tensor({2, 3}, rng, false);
  Tensor b = random_tensor({2, 5}, rng, false);
  Tensor c = concat({a, b}, 1);
  CHECK(c.dims() == std::vector<int>{2, 8});
  CHECK(c.at({1, 2}) == a.at({1, 2}));
  CHECK(c.at({1, 4}) == b.at({1, 1}));
  CHECK_THROWS_AS(concat({a, random_tensor({3, 5}, rng, false)}, 1), ShapeError);
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
  Tensor u = Tensor::from_values({3}, {0, 0, 0});
  Tensor su = softmax(u);
  for (double v : su.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Tensor x = Tensor::from_values({2}, {0.0, std::log(3.0)});
  Tensor sx = softmax(x);
  CHECK(sx.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sx.values()[1] == doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(11);
  Tensor r = random_tensor({4, 6}, rng, false, 3.0);
  Tensor sr = softmax(r, -1);
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 6; ++j) {
      double v = sr.at({i, j});
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
  // shift invariance
  std::vector<double> shifted = r.values();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 6; ++j) shifted[size_t(i) * 6 + j] += 17.5;
  }
  Tensor sr2 = softmax(Tensor::from_values({4, 6}, shifted), -1);
  for (size_t i = 0; i < sr.values().size(); ++i) {
    CHECK(sr.values()[i] == doctest::Approx(sr2.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax along a non-terminal axis") {
  Tensor x = Tensor::from_values({2, 2}, {0, 10, std::log(3.0), 10});
  Tensor s = softmax(x, 0);  // columns
  CHECK(s.at({0, 0}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s.at({1, 0}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(s.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("layer_norm normalizes rows and handles constant rows") {
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});
  Tensor x = Tensor::from_values({1, 3}, {1, 2, 3});
  Tensor y = layer_norm(x, gain, bias);
  double m = 0, var = 0;
  for (double v : y.values()) m += v;
  m /= 3;
  for (double v : y.values()) var += (v - m) * (v - m);
  var /= 3;
  CHECK(std::fabs(m) <= 1e-9);
  CHECK(std::fabs(var - 1.0) <= 1e-6);

  Tensor c = Tensor::from_values({1, 3}, {5, 5, 5});
  Tensor bias2 = Tensor::from_values({3}, {0.5, 0.5, 0.5});
  Tensor yc = layer_norm(c, gain, bias2);
  for (double v : yc.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("layer_norm gradient matches central differences") {
  Rng rng(21);
  Tensor x = random_tensor({3, 5}, rng, true, 2.0);
  Tensor gain = random_tensor({5}, rng, true, 1.0);
  Tensor bias = random_tensor({5}, rng, true, 1.0);
  auto rep = gradient_check([&] { return sum(mul(layer_norm(x, gain, bias), layer_norm(x, gain, bias))); },
                            {x, gain, bias});
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("backward needs a scalar loss and computes simple analytics") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor loss = mul(x, x);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));

  Tensor nonscalar = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(backward(nonscalar), ContractError);
}

TEST_CASE("softmax+cross-entropy gradient equals probabilities minus one-hot") {
  Tensor logits = Tensor::from_values({1, 4}, {0.3, -1.2, 2.0, 0.1}, true);
  Tensor loss = cross_entropy_mean(logits, {2});
  backward(loss);
  Tensor p = softmax(Tensor::from_values({1, 4}, logits.values()), -1);
  for (int j = 0; j < 4; ++j) {
    double expect = p.values()[size_t(j)] - (j == 2 ? 1.0 : 0.0);
    CHECK(logits.grad()[size_t(j)] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("matmul chain gradients match central differences") {
  Rng rng(5);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto rep = gradient_check([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b});
  CHECK(rep.max_rel_err <= 1e-5);
}

TEST_CASE("every differentiable primitive passes a finite-difference check") {
  Rng rng(31);
  const double tol = 1e-4;

  {
    Tensor x = random_tensor({2, 6}, rng);
    auto rep = gradient_check([&] { return sum(mul(softmax(x, -1), softmax(x, -1))); }, {x});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({3, 4}, rng);
    auto rep = gradient_check([&] { return sum(mul(gelu(x), gelu(x))); }, {x});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({2, 5}, rng);
    auto rep = gradient_check([&] { return sum(mul(log_softmax_rows(x), log_softmax_rows(x))); }, {x});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({4, 3}, rng);
    Tensor v = random_tensor({4}, rng);
    auto rep = gradient_check([&] { return sum(mul(mul_colvec(x, v), mul_colvec(x, v))); }, {x, v});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({3, 4}, rng);
    Tensor v = random_tensor({4}, rng);
    auto rep = gradient_check([&] { return sum(mul(add_rowvec(x, v), add_rowvec(x, v))); }, {x, v});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({1, 20}, rng);
    Tensor w = random_tensor({2, 1, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    auto rep = gradient_check([&] { return sum(mul(conv1d(x, w, b, 2), conv1d(x, w, b, 2))); },
                              {x, w, b});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({2, 6, 8}, rng);
    Tensor w = random_tensor({3, 2, 2, 2}, rng);
    Tensor b = random_tensor({3}, rng);
    auto rep = gradient_check([&] { return sum(mul(conv2d(x, w, b, 2, 2), conv2d(x, w, b, 2, 2))); },
                              {x, w, b});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({2, 4, 4, 4}, rng);
    Tensor w = random_tensor({3, 2, 2, 2, 2}, rng);
    Tensor b = random_tensor({3}, rng);
    auto rep = gradient_check(
        [&] { return sum(mul(conv3d(x, w, b, 2, 2, 2), conv3d(x, w, b, 2, 2, 2))); }, {x, w, b});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor t = random_tensor({5, 3}, rng);
    std::vector<int> ids{0, 2, 2, 4};
    auto rep = gradient_check([&] { return sum(mul(rows_lookup(t, ids), rows_lookup(t, ids))); }, {t});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor r = random_tensor({3, 4}, rng);
    std::vector<int> ids{4, 0, 2};
    auto rep = gradient_check(
        [&] { return sum(mul(scatter_rows(r, ids, 6), scatter_rows(r, ids, 6))); }, {r});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 5}, rng);
    auto rep = gradient_check([&] { return sum(mul(concat({a, b}, 1), concat({a, b}, 1))); }, {a, b});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor a = random_tensor({4, 5}, rng);
    auto rep = gradient_check(
        [&] {
          return add(sum(mul(slice(a, 0, 1, 2), slice(a, 0, 1, 2))),
                     sum(mul(transpose2d(a), transpose2d(a))));
        },
        {a});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor x = random_tensor({3, 4}, rng, true, 2.0);
    auto rep = gradient_check(
        [&] { return sum(mul(l2_normalize_rows(x), l2_normalize_rows(x))); }, {x});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    // positive entries keep row sums away from zero
    Tensor x = random_tensor({3, 4}, rng);
    for (auto& v : x.mutable_values()) v = std::fabs(v) + 0.5;
    auto rep = gradient_check([&] { return sum(mul(row_normalize(x), row_normalize(x))); }, {x});
    CHECK(rep.max_rel_err <= tol);
  }
  {
    Tensor logits = random_tensor({3, 5}, rng, true, 2.0);
    std::vector<int> targets{4, 0, 2};
    auto rep = gradient_check([&] { return cross_entropy_mean(logits, targets); }, {logits});
    CHECK(rep.max_rel_err <= tol);
  }
}

TEST_CASE("results stay finite through a mixed op chain") {
  Rng rng(41);
  Tensor x = random_tensor({4, 8}, rng, true, 4.0);
  Tensor g = Tensor::full({8}, 1.0, true);
  Tensor b = Tensor::zeros({8}, true);
  Tensor y = layer_norm(gelu(matmul(softmax(x, -1), Tensor::identity(8))), g, b);
  Tensor loss = mean(mul(y, y));
  backward(loss);
  for (double v : y.values()) CHECK(std::isfinite(v));
  for (double v : x.grad()) CHECK(std::isfinite(v));
}

TEST_CASE("unreachable trainables keep exact zero gradients") {
  Rng rng(9);
  Tensor used = random_tensor({2, 2}, rng);
  Tensor unused = random_tensor({2, 2}, rng);
  Tensor loss = sum(matmul(used, used));
  backward(loss);
  CHECK(used.grad_ready());
  CHECK_FALSE(unused.grad_ready());
  for (double v : unused.grad()) CHECK(v == 0.0);
}

TEST_CASE("adamw first step and no-op behavior") {
  // bias-corrected first step: g=1, wd=0 -> delta = lr / (1 + eps)
  Tensor theta = Tensor::scalar(1.0, true);
  AdamW::Options opts;
  opts.weight_decay = 0.0;
  AdamW opt({{"theta", theta}}, opts);
  theta.zero_grad();
  theta.mutable_grad()[0] = 1.0;
  theta.impl()->grad_ready = true;
  const double lr = 0.1;
  opt.step(lr);
  CHECK(theta.value() == doctest::Approx(1.0 - lr / (1.0 + opts.epsilon)).epsilon(1e-12));

  // zero grad (populated), zero decay -> bitwise unchanged
  Tensor theta2 = Tensor::scalar(0.75, true);
  AdamW opt2({{"theta2", theta2}}, opts);
  theta2.zero_grad();
  theta2.impl()->grad_ready = true;
  const double before = theta2.value();
  opt2.step(lr);
  CHECK(std::memcmp(&before, &theta2.values()[0], sizeof(double)) == 0);
}

TEST_CASE("adamw matches a hand-rolled scalar recurrence with weight decay") {
  const double wd = 0.01, lr = 0.05;
  Tensor theta = Tensor::scalar(2.0, true);
  AdamW::Options opts;
  opts.weight_decay = wd;
  AdamW opt({{"theta", theta}}, opts);

  // independent scalar recurrence
  double ref = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = 1.0;
    m = opts.beta1 * m + (1 - opts.beta1) * g;
    v = opts.beta2 * v + (1 - opts.beta2) * g * g;
    const double mhat = m / (1 - std::pow(opts.beta1, t));
    const double vhat = v / (1 - std::pow(opts.beta2, t));
    ref -= lr * (mhat / (std::sqrt(vhat) + opts.epsilon) + wd * ref);

    theta.zero_grad();
    theta.mutable_grad()[0] = 1.0;
    theta.impl()->grad_ready = true;
    opt.step(lr);
    CHECK(theta.value() == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("adamw skips parameters without populated gradients, bitwise") {
  Rng rng(13);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  AdamW opt({{"a", a}, {"b", b}});
  opt.zero_grads();
  Tensor loss = sum(matmul(Tensor::full({1, 2}, 1.0), matmul(a, Tensor::full({3, 1}, 1.0))));
  backward(loss);
  const auto b_before = b.values();
  auto report = opt.step(1e-2);
  CHECK(report.stepped == 1);
  CHECK(report.skipped == 1);
  REQUIRE(report.skipped_names.size() == 1);
  CHECK(report.skipped_names[0] == "b");
  CHECK(testutil::bitwise_equal(b.values(), b_before));
}

TEST_CASE("lr schedule is piecewise linear with one breakpoint") {
  LrSchedule sched(0.002, 1000, 5000);
  CHECK(sched.at(1000) == doctest::Approx(0.002).epsilon(1e-15));
  CHECK(sched.at(500) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(sched.at(5000) == 0.0);
  CHECK(sched.at(0) == 0.0);
  CHECK_THROWS_AS(sched.at(5001), ContractError);
  CHECK_THROWS_AS(sched.at(-1), ContractError);

  // nonnegative, continuous at the breakpoint
  for (long s = 0; s <= 5000; s += 97) CHECK(sched.at(s) >= 0.0);
  CHECK(sched.at(999) == doctest::Approx(sched.at(1000)).epsilon(2e-3));
  CHECK(sched.at(1001) == doctest::Approx(sched.at(1000)).epsilon(2e-3));
}

TEST_CASE("identical seeds give bitwise identical pipelines") {
  auto run = [] {
    Rng rng(123);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    Tensor y = layer_norm(matmul(gelu(a), softmax(b, -1)), Tensor::full({4}, 1.0),
                          Tensor::zeros({4}));
    Tensor loss = sum(mul(y, y));
    backward(loss);
    auto out = y.values();
    auto g = a.grad();
    out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  CHECK(testutil::bitwise_equal(run(), run()));
}

TEST_CASE("no-grad mode records no graph") {
  Rng rng(2);
  Tensor a = random_tensor({2, 2}, rng);
  NoGradGuard guard;
  Tensor y = matmul(a, a);
  CHECK_FALSE(y.requires_grad());
}
