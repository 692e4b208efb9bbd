#include <doctest.h>

#include <cmath>
#include <random>

#include "pdgsim/autodiff.hpp"
#include "pdgsim/errors.hpp"

using namespace pdgsim;
using ad::Value;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

}  // namespace

TEST_CASE("gradient of a linear sum is all ones") {
  ad::ParamStore ps;
  ps.add("W", Matrix::Random(2, 2));
  ad::backward(ad::sum(ps.get("W")), ps);
  CHECK(ps.get("W").grad() == Matrix::Ones(2, 2));
}

TEST_CASE("gradient of a squared sum is 2W") {
  ad::ParamStore ps;
  const Matrix w = Matrix::Random(3, 2);
  ps.add("W", w);
  ad::backward(ad::sum(ad::hadamard(ps.get("W"), ps.get("W"))), ps);
  CHECK((ps.get("W").grad() - 2.0 * w).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward rejects non-scalar losses and shape errors surface") {
  ad::ParamStore ps;
  ps.add("W", Matrix::Ones(2, 2));
  CHECK_THROWS_AS(ad::backward(ps.get("W"), ps), NotScalar);
  CHECK_THROWS_AS(ad::matmul(ps.get("W"), ad::constant(Matrix::Ones(3, 1))), ShapeError);
}

TEST_CASE("grad_check on smooth functions") {
  std::mt19937_64 rng(1);
  ad::ParamStore ps;
  ps.add("W", random_matrix(3, 3, rng));
  const auto squares = ad::grad_check([&] { return ad::sum(ad::hadamard(ps.get("W"), ps.get("W"))); },
                                      ps, 1e-4);
  CHECK(squares.max_relative_error < 1e-8);

  const auto chain = ad::grad_check(
      [&] {
        Value v = ps.get("W");
        for (int i = 0; i < 5; ++i) v = ad::sigmoid(v);
        return ad::sum(v);
      },
      ps, 1e-4);
  CHECK(chain.max_relative_error < 1e-6);
}

TEST_CASE("every op passes a finite-difference check") {
  std::mt19937_64 rng(2);
  ad::ParamStore ps;
  ps.add("a", random_matrix(4, 3, rng));
  ps.add("b", random_matrix(3, 5, rng));
  ps.add("c", random_matrix(4, 3, rng));
  ps.add("r", random_matrix(1, 3, rng));
  ps.add("u", random_matrix(4, 1, rng));
  ps.add("v", random_matrix(5, 1, rng));
  ps.add("p", Matrix::Constant(4, 3, 0.3) + 0.1 * random_matrix(4, 3, rng).cwiseAbs());
  const Matrix probe = random_matrix(4, 5, rng);
  const Matrix probe_sq = random_matrix(4, 4, rng);
  const Matrix probe_seg = random_matrix(3, 6, rng);
  Matrix mask = Matrix::Ones(4, 4);
  mask(0, 2) = 0;
  mask(3, 1) = 0;

  auto check = [&](const std::string& name, std::function<Value()> f) {
    INFO(name);
    CHECK(ad::grad_check(f, ps, 1e-4).max_relative_error < 1e-6);
  };
  auto p = [&](const char* n) { return ps.get(n); };
  check("matmul", [&] { return ad::sum(ad::hadamard(ad::matmul(p("a"), p("b")), ad::constant(probe))); });
  check("add/sub", [&] { return ad::sum(ad::hadamard(ad::sub(ad::add(p("a"), p("c")), p("a")), p("c"))); });
  check("add_row", [&] { return ad::sum(ad::tanh(ad::add_row(p("a"), p("r")))); });
  check("concat/slice", [&] {
    Value cat = ad::concat_cols({p("a"), p("c")});
    return ad::add(ad::sum(ad::hadamard(ad::col_slice(cat, 2, 3), ad::col_slice(cat, 0, 3))),
                   ad::sum(ad::tanh(ad::row_slice(cat, 1, 2))));
  });
  check("outer_add", [&] { return ad::sum(ad::sigmoid(ad::outer_add(p("u"), p("v")))); });
  check("sum_rows/transpose", [&] { return ad::sum(ad::tanh(ad::transpose(ad::sum_rows(p("a"))))); });
  check("scale/add_scalar", [&] { return ad::sum(ad::tanh(ad::add_scalar(ad::scale(p("a"), -0.7), 0.2))); });
  check("log/clamp", [&] { return ad::sum(ad::log(ad::clamp(p("p"), 1e-7, 0.99))); });
  check("softmax", [&] {
    Value s = ad::masked_row_softmax(ad::matmul(p("a"), ad::transpose(p("c"))), mask);
    return ad::sum(ad::hadamard(s, ad::constant(probe_sq)));
  });
  check("segment ops", [&] {
    Value x = ad::concat_cols({p("a"), p("c")});
    Value pooled = ad::segment_sum(x, {0, 1, 4}, false);
    Value mean = ad::segment_sum(x, {0, 3, 4}, true);
    return ad::sum(ad::hadamard(ad::gather_rows(ad::add(pooled, mean), {1, 0, 1}),
                                ad::constant(probe_seg)));
  });
}

TEST_CASE("leaky relu gradient and kink handling") {
  ad::ParamStore ps;
  Matrix w(1, 3);
  w << -1.0, 0.5, 2.0;
  ps.add("w", w);
  ad::backward(ad::sum(ad::leaky_relu(ps.get("w"), 0.02)), ps);
  Matrix expected(1, 3);
  expected << 0.02, 1.0, 1.0;
  CHECK(ps.get("w").grad() == expected);

  // An entry within h of the kink is skipped instead of compared.
  Matrix near(1, 2);
  near << 5e-5, 1.0;
  ad::ParamStore q;
  q.add("w", near);
  const auto r = ad::grad_check([&] { return ad::sum(ad::leaky_relu(q.get("w"), 0.02)); }, q, 1e-4);
  CHECK(r.entries_skipped == 1);
  CHECK(r.max_relative_error < 1e-8);
}

TEST_CASE("segment attention normalizes each row over its mask") {
  std::mt19937_64 rng(5);
  const Value z = ad::constant(random_matrix(5, 3, rng));
  const Value a = ad::constant(random_matrix(6, 1, rng));
  Matrix m1 = Matrix::Identity(2, 2);
  m1(1, 0) = 1;
  Matrix m2 = Matrix::Identity(3, 3);
  m2(0, 2) = 1;
  m2(2, 1) = 1;
  std::vector<Matrix> alphas;
  ad::segment_attention(z, a, {0, 2, 5}, {m1, m2}, 0.02, &alphas);
  REQUIRE(alphas.size() == 2);
  CHECK(std::abs(alphas[0].row(1).sum() - 1.0) < 1e-12);
  CHECK(alphas[0](0, 1) == 0.0);
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(std::abs(alphas[1].row(r).sum() - 1.0) < 1e-12);
  CHECK(alphas[1](1, 0) == 0.0);
}

TEST_CASE("detach blocks gradients") {
  ad::ParamStore ps;
  ps.add("w", Matrix::Ones(2, 1));
  ad::backward(ad::sum(ad::hadamard(ps.get("w"), ad::detach(ps.get("w")))), ps);
  CHECK(ps.get("w").grad() == Matrix::Ones(2, 1));
}
