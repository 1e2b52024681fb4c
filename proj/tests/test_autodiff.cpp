#include <cmath>

#include "doctest.h"
#include "avpfusion/autodiff.hpp"
#include "support/gradcheck.hpp"

using namespace avp;
using namespace avp::ad;
using avp::testing::grad_check;
using avp::testing::project;
using avp::testing::random_tensor;

namespace {

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Runs `configs` random instances; `make` fills the inputs for one instance.
double worst_rel(int configs, std::uint64_t seed,
                 const std::function<std::vector<Tensor>(Rng&)>& make, const Fn& f) {
  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < configs; ++c) {
    auto inputs = make(rng);
    worst = std::max(worst, grad_check(inputs, f, 1e-5).max_rel_error);
  }
  return worst;
}

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); }

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("forward values") {
  Tape t;
  auto a = t.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = t.constant(Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12}));
  CHECK(matmul(a, b).value().vec() == std::vector<double>{58, 64, 139, 154});
  CHECK(transpose(a).value().vec() == std::vector<double>{1, 4, 2, 5, 3, 6});
  auto v = t.constant(Tensor::vector({1, 2, 3}));
  CHECK(matmul(a, v).value().vec() == std::vector<double>{14, 32});
  CHECK(logsumexp(v).item() == doctest::Approx(std::log(std::exp(1) + std::exp(2) + std::exp(3))));
  auto s = softmax(v).value();
  CHECK(s[0] + s[1] + s[2] == doctest::Approx(1.0));
  CHECK(cosine_similarity(v, v).item() == doctest::Approx(1.0));
  CHECK(concat({t.constant(Tensor::scalar(5)), v}).value().vec() == std::vector<double>{5, 1, 2, 3});
  CHECK(reverse_rows(a).value().vec() == std::vector<double>{4, 5, 6, 1, 2, 3});
  CHECK(slice_cols(a, 1, 3).value().vec() == std::vector<double>{2, 3, 5, 6});
}

TEST_CASE("conv1d hand example") {
  Tape t;
  // L=3, Cin=1, K=1, H=2: out[j] = w0 x[j] + w1 x[j+1] + b
  auto x = t.constant(Tensor({3, 1}, {1, 2, 3}));
  auto w = t.constant(Tensor({1, 2, 1}, {10, 1}));
  auto b = t.constant(Tensor::vector({0.5}));
  CHECK(conv1d(x, w, b).value().vec() == std::vector<double>{12.5, 23.5});
}

TEST_CASE("fused ops equal their materialized forms") {
  Rng rng(1);
  for (int c = 0; c < 10; ++c) {
    const std::size_t L = dim(rng, 3, 8), de = dim(rng, 1, 4), df = dim(rng, 1, 5), K = dim(rng, 1, 4),
                      H = dim(rng, 1, 3), off = dim(rng, 0, 3);
    Tape t;
    auto emb = t.constant(random_tensor(rng, {L, de}));
    auto desc = t.constant(random_tensor(rng, {df}));
    auto rows = concat_cols(emb, broadcast_rows(desc, L));
    auto w = t.constant(random_tensor(rng, {K, H, de + df}));
    auto b = t.constant(random_tensor(rng, {K}));
    auto x = conv1d(rows, w, b).value();
    auto y = fused_conv1d(emb, desc, w, b).value();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-12));
    auto wa = t.constant(random_tensor(rng, {K, off + de + df}));
    auto direct = add_rowwise(matmul(rows, transpose(slice_cols(wa, off, off + de + df))), b).value();
    auto fused = fused_affine(emb, desc, wa, b, off).value();
    for (std::size_t i = 0; i < direct.size(); ++i) CHECK(direct[i] == doctest::Approx(fused[i]).epsilon(1e-12));
  }
}

TEST_CASE("elementwise gradients") {
  auto two = [](Rng& rng) {
    const Shape s{dim(rng, 1, 4), dim(rng, 1, 4)};
    return std::vector<Tensor>{random_tensor(rng, s), random_tensor(rng, s)};
  };
  auto one = [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {dim(rng, 1, 6)}, 2.0)}; };
  auto positive = [](Rng& rng) {
    Tensor t = random_tensor(rng, {dim(rng, 1, 6)});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.2 + std::fabs(t[i]);
    return std::vector<Tensor>{t};
  };
  CHECK(worst_rel(20, 1, two, [](Tape&, const auto& v) { return project(add(v[0], v[1])); }) < kTol);
  CHECK(worst_rel(20, 2, two, [](Tape&, const auto& v) { return project(sub(v[0], v[1])); }) < kTol);
  CHECK(worst_rel(20, 3, two, [](Tape&, const auto& v) { return project(mul(v[0], v[1])); }) < kTol);
  CHECK(worst_rel(20, 4, one, [](Tape&, const auto& v) { return project(scale(v[0], -1.7)); }) < kTol);
  CHECK(worst_rel(20, 5, one, [](Tape&, const auto& v) { return project(add_scalar(v[0], 0.3)); }) < kTol);
  CHECK(worst_rel(20, 6, one, [](Tape&, const auto& v) { return project(sigmoid(v[0])); }) < kTol);
  CHECK(worst_rel(20, 7, one, [](Tape&, const auto& v) { return project(ad::tanh(v[0])); }) < kTol);
  CHECK(worst_rel(20, 8, one, [](Tape&, const auto& v) { return project(relu(v[0])); }) < kTol);
  CHECK(worst_rel(20, 9, one, [](Tape&, const auto& v) { return project(ad::exp(v[0])); }) < kTol);
  CHECK(worst_rel(20, 10, positive, [](Tape&, const auto& v) { return project(ad::log(v[0])); }) < kTol);
  CHECK(worst_rel(20, 11, positive, [](Tape&, const auto& v) { return project(pow_scalar(v[0], 2.5)); }) < kTol);
  CHECK(worst_rel(20, 12, one, [](Tape&, const auto& v) { return project(clamp(v[0], -0.55, 0.65)); }) < kTol);
  CHECK(worst_rel(20, 13, [](Rng& rng) {
          return std::vector<Tensor>{random_tensor(rng, {dim(rng, 1, 5)}), random_tensor(rng, {})};
        },
        [](Tape&, const auto& v) { return project(mul_scalar(v[0], v[1])); }) < kTol);
}

TEST_CASE("linear algebra gradients") {
  CHECK(worst_rel(20, 20, [](Rng& rng) {
          const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 4), n = dim(rng, 1, 4);
          return std::vector<Tensor>{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})};
        },
        [](Tape&, const auto& v) { return project(matmul(v[0], v[1])); }) < kTol);
  CHECK(worst_rel(20, 21, [](Rng& rng) {
          const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 4);
          return std::vector<Tensor>{random_tensor(rng, {m, k}), random_tensor(rng, {k})};
        },
        [](Tape&, const auto& v) { return project(matmul(v[0], v[1])); }) < kTol);
  CHECK(worst_rel(20, 22, [](Rng& rng) {
          const std::size_t k = dim(rng, 1, 4), n = dim(rng, 1, 4);
          return std::vector<Tensor>{random_tensor(rng, {k}), random_tensor(rng, {k, n})};
        },
        [](Tape&, const auto& v) { return project(matmul(v[0], v[1])); }) < kTol);
  CHECK(worst_rel(20, 23, [](Rng& rng) {
          return std::vector<Tensor>{random_tensor(rng, {dim(rng, 1, 4), dim(rng, 1, 4)})};
        },
        [](Tape&, const auto& v) { return project(transpose(v[0])); }) < kTol);
  CHECK(worst_rel(20, 24, [](Rng& rng) {
          const std::size_t m = dim(rng, 1, 4), n = dim(rng, 1, 4);
          return std::vector<Tensor>{random_tensor(rng, {m, n}), random_tensor(rng, {n})};
        },
        [](Tape&, const auto& v) { return project(add_rowwise(v[0], v[1])); }) < kTol);
  auto pair = [](Rng& rng) {
    const std::size_t n = dim(rng, 2, 6);
    return std::vector<Tensor>{random_tensor(rng, {n}), random_tensor(rng, {n})};
  };
  CHECK(worst_rel(20, 25, pair, [](Tape&, const auto& v) { return dot(v[0], v[1]); }) < kTol);
  CHECK(worst_rel(20, 26, pair, [](Tape&, const auto& v) { return cosine_similarity(v[0], v[1]); }) < kTol);
}

TEST_CASE("convolution and fused affine gradients") {
  CHECK(worst_rel(20, 30, [](Rng& rng) {
          const std::size_t L = dim(rng, 3, 7), cin = dim(rng, 1, 3), K = dim(rng, 1, 3), H = dim(rng, 1, 3);
          return std::vector<Tensor>{random_tensor(rng, {L, cin}), random_tensor(rng, {K, H, cin}),
                                     random_tensor(rng, {K})};
        },
        [](Tape&, const auto& v) { return project(conv1d(v[0], v[1], v[2])); }) < kTol);
  CHECK(worst_rel(20, 31, [](Rng& rng) {
          const std::size_t L = dim(rng, 3, 7), de = dim(rng, 1, 3), df = dim(rng, 1, 3), K = dim(rng, 1, 3),
                            H = dim(rng, 1, 3);
          return std::vector<Tensor>{random_tensor(rng, {L, de}), random_tensor(rng, {df}),
                                     random_tensor(rng, {K, H, de + df}), random_tensor(rng, {K})};
        },
        [](Tape&, const auto& v) { return project(fused_conv1d(v[0], v[1], v[2], v[3])); }) < kTol);
  CHECK(worst_rel(20, 32, [](Rng& rng) {
          const std::size_t L = dim(rng, 1, 5), de = dim(rng, 1, 3), df = dim(rng, 1, 3), n = dim(rng, 1, 3),
                            off = dim(rng, 0, 2);
          return std::vector<Tensor>{random_tensor(rng, {L, de}), random_tensor(rng, {df}),
                                     random_tensor(rng, {n, off + de + df}), random_tensor(rng, {n})};
        },
        [](Tape&, const auto& v) {
          const std::size_t off = v[2].shape()[1] - v[0].shape()[1] - v[1].shape()[0];
          return project(fused_affine(v[0], v[1], v[2], v[3], off));
        }) < kTol);
}

TEST_CASE("reduction gradients") {
  auto one = [](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, {dim(rng, 1, 7)}, 3.0)}; };
  CHECK(worst_rel(20, 40, one, [](Tape&, const auto& v) { return sum(v[0]); }) < kTol);
  CHECK(worst_rel(20, 41, one, [](Tape&, const auto& v) { return mean(v[0]); }) < kTol);
  CHECK(worst_rel(20, 42, one, [](Tape&, const auto& v) { return project(softmax(v[0])); }) < kTol);
  CHECK(worst_rel(20, 43, one, [](Tape&, const auto& v) { return logsumexp(v[0]); }) < kTol);
}

TEST_CASE("shape gradients") {
  auto mat = [](Rng& rng) {
    return std::vector<Tensor>{random_tensor(rng, {dim(rng, 2, 4), dim(rng, 2, 4)}),
                               random_tensor(rng, {dim(rng, 2, 4)})};
  };
  CHECK(worst_rel(20, 50, mat, [](Tape&, const auto& v) {
          return project(concat({element(v[1], 0), v[1], row(v[0], 1)}));
        }) < kTol);
  CHECK(worst_rel(20, 51, mat, [](Tape&, const auto& v) {
          return project(concat_cols(v[0], broadcast_rows(v[1], v[0].shape()[0])));
        }) < kTol);
  CHECK(worst_rel(20, 52, mat, [](Tape&, const auto& v) {
          return project(mul(slice(v[1], 1, 2), slice(v[1], 0, 1)));
        }) < kTol);
  CHECK(worst_rel(20, 53, mat, [](Tape&, const auto& v) { return project(slice_cols(v[0], 1, 2)); }) < kTol);
  CHECK(worst_rel(20, 54, mat, [](Tape&, const auto& v) {
          return project(stack_rows({row(v[0], 1), row(v[0], 0), row(v[0], 1)}));
        }) < kTol);
  CHECK(worst_rel(20, 55, mat, [](Tape&, const auto& v) { return project(reverse_rows(v[0])); }) < kTol);
  CHECK(worst_rel(20, 56, mat, [](Tape&, const auto& v) {
          return project(reshape(v[0], {v[0].size()}));
        }) < kTol);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  Tape t;
  auto x = t.leaf(Tensor::vector({0.5, -1.0}));
  auto y = add(mul(x, x), x);
  t.backward(sum(y));
  auto g = t.grad(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(-1.0));
}

TEST_CASE("parameter gradients accumulate across passes") {
  Parameter p("w", Tensor::vector({1.0, 2.0}));
  for (int pass = 0; pass < 2; ++pass) {
    Tape t;
    auto w = t.param(p);
    t.backward(dot(w, w));
  }
  CHECK(p.grad.vec() == std::vector<double>{4.0, 8.0});
  p.zero_grad();
  CHECK(p.grad.vec() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("unreached nodes get zero gradient") {
  Tape t;
  auto x = t.leaf(Tensor::vector({1.0}));
  auto z = t.leaf(Tensor::vector({2.0}));
  t.backward(sum(x));
  CHECK(t.grad(z).vec() == std::vector<double>{0.0});
}

TEST_CASE("numeric errors") {
  Tape t;
  auto x = t.constant(Tensor::vector({0.0, 1.0}));
  CHECK_THROWS_AS(ad::log(x), NumericError);
  CHECK_THROWS_AS(cosine_similarity(x, t.constant(Tensor::vector({0.0, 0.0}))), NumericError);
  CHECK_THROWS_AS(ad::exp(t.constant(Tensor::vector({1000.0}))), NumericError);
  CHECK_THROWS_AS(t.constant(Tensor::vector({NAN})), NumericError);
  CHECK_THROWS_AS(add(x, t.constant(Tensor::vector({1.0}))), NumericError);
  CHECK_THROWS_AS(matmul(t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4})), t.constant(Tensor::vector({1, 2, 3}))),
                  NumericError);
  CHECK_THROWS_AS(t.backward(x), NumericError);
  Tape other;
  CHECK_THROWS_AS(add(x, other.constant(Tensor::vector({1.0, 2.0}))), NumericError);
}
