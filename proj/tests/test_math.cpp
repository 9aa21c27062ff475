#include "shrinkcl/common.hpp"
#include "shrinkcl/parallel.hpp"
#include "shrinkcl/rng.hpp"
#include "shrinkcl/tape.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

using namespace shrinkcl;
using ad::Tape;
using ad::Var;

TEST_CASE("pcg32 streams are deterministic and distinct") {
  Pcg32 a(42), b(42), c(43), d(42, 1);
  for (int i = 0; i < 64; ++i) CHECK(a.next_u32() == b.next_u32());
  bool differs_seed = false, differs_stream = false;
  Pcg32 a2(42);
  for (int i = 0; i < 64; ++i) {
    const auto x = a2.next_u32();
    differs_seed |= x != c.next_u32();
    differs_stream |= x != d.next_u32();
  }
  CHECK(differs_seed);
  CHECK(differs_stream);
}

TEST_CASE("next_double stays in [0,1)") {
  Pcg32 rng(7);
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("next_below is unbiased enough and in range") {
  Pcg32 rng(9);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const auto v = rng.next_below(5);
    REQUIRE(v < 5);
    counts[static_cast<std::size_t>(v)]++;
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);  // ~4 sigma is 190
}

TEST_CASE("normal draws match N(0,1) moments at 1e5 samples") {
  Pcg32 rng(123);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);       // 4 sigma bound: 4/sqrt(1e5) = 0.0126
  CHECK(std::abs(var - 1.0) < 0.03);  // 4 sigma bound: 4*sqrt(2/1e5) = 0.0179
}

TEST_CASE("gaussian_sample: std=0 gives the constant matrix without consuming draws") {
  Pcg32 a(5), b(5);
  const Matrix m = gaussian_sample(a, 3, 4, 2.5, 0.0);
  CHECK((m.array() == 2.5).all());
  CHECK(a.next_u32() == b.next_u32());  // stream untouched
}

TEST_CASE("gaussian_sample is reproducible and negative std is rejected") {
  Pcg32 a(17), b(17);
  const Matrix m1 = gaussian_sample(a, 4, 6, 0.0, 1.0);
  const Matrix m2 = gaussian_sample(b, 4, 6, 0.0, 1.0);
  CHECK(m1 == m2);
  Pcg32 c(17);
  CHECK_THROWS_AS(gaussian_sample(c, 2, 2, 0.0, -1.0), Error);
}

TEST_CASE("shuffled_indices is a seeded permutation") {
  Pcg32 a(3), b(3);
  const auto p = shuffled_indices(50, a);
  CHECK(p == shuffled_indices(50, b));
  std::vector<bool> seen(50, false);
  for (Index i : p) {
    REQUIRE(i >= 0);
    REQUIRE(i < 50);
    CHECK(!seen[static_cast<std::size_t>(i)]);
    seen[static_cast<std::size_t>(i)] = true;
  }
}

TEST_CASE("mix64 separates streams") {
  CHECK(mix64(1, 2) != mix64(1, 3));
  CHECK(mix64(1, 2) != mix64(2, 2));
  CHECK(splitmix64(0) != splitmix64(1));
}

TEST_CASE("worker_threads is at least one and parallel_runs covers every slot") {
  CHECK(worker_threads() >= 1);
  std::vector<int> out(1000, -1);
  parallel_runs(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i * i % 97); });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i % 97));
}

TEST_CASE("ensure_finite rejects NaN and infinity") {
  Matrix m = Matrix::Zero(2, 2);
  CHECK_NOTHROW(ensure_finite(m, "m"));
  m(1, 0) = std::nan("");
  CHECK_THROWS_AS(ensure_finite(m, "m"), Error);
  m(1, 0) = INFINITY;
  CHECK_THROWS_AS(ensure_finite(m, "m"), Error);
}

TEST_CASE("plain matmul matches hand examples and the triple-loop oracle") {
  Matrix a(2, 2), b(2, 1);
  a << 1, 2, 3, 4;
  b << 0, 1;
  const Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 2);
  CHECK(c(1, 0) == 4);

  const Matrix id = Matrix::Identity(3, 3);
  Pcg32 rng(1);
  const Matrix m = oracle::random_matrix(rng, 3, 5);
  CHECK(matmul(id, m) == m);

  const Matrix x = oracle::random_matrix(rng, 5, 7);
  const Matrix y = oracle::random_matrix(rng, 7, 3);
  const Matrix got = matmul(x, y);
  const Matrix want = oracle::naive_matmul(x, y);
  CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(matmul(x, x), Error);  // 5x7 times 5x7
}

TEST_CASE("tape matmul forward agrees with the oracle") {
  Pcg32 rng(2);
  const Matrix x = oracle::random_matrix(rng, 5, 7);
  const Matrix y = oracle::random_matrix(rng, 7, 3);
  Tape t;
  const Var vx = t.input(x), vy = t.input(y);
  const Var prod = ad::matmul(vx, vy);
  CHECK((prod.value() - oracle::naive_matmul(x, y)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("f(x) = x*x has gradient 2x") {
  Tape t;
  Matrix x(1, 1);
  x << 3.0;
  const Var vx = t.input(x);
  const Var f = ad::hadamard(vx, vx);
  t.backward(f);
  CHECK(t.grad(vx)(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("log-sum-exp gradient sums to one") {
  Pcg32 rng(4);
  Tape t;
  const Var vx = t.input(oracle::random_matrix(rng, 1, 9));
  const Var f = ad::log(ad::sum(ad::exp(vx)));
  t.backward(f);
  CHECK(t.grad(vx).sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("vars from one tape cannot be used on another") {
  Tape t1, t2;
  const Var a = t1.input(Matrix::Ones(2, 2));
  const Var b = t2.input(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(ad::add(a, b), Error);
  CHECK_THROWS_AS(t2.grad(a), Error);
}

namespace {

// Checks reverse-mode gradients of `build` (which assembles a scalar from
// tape inputs) against central finite differences on the same construction.
void check_gradients(const std::vector<Matrix>& inputs,
                     const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                     double tol = 1e-4) {
  auto value = [&](const std::vector<Matrix>& ps) {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(ps.size());
    for (const Matrix& p : ps) vars.push_back(t.input(p));
    return build(t, vars).scalar();
  };

  Tape t;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Matrix& p : inputs) vars.push_back(t.input(p));
  const Var out = build(t, vars);
  t.backward(out);
  std::vector<Matrix> got;
  got.reserve(vars.size());
  for (const Var& v : vars) got.push_back(t.grad(v));

  const std::vector<Matrix> want = oracle::fd_gradients(value, inputs);
  CHECK(oracle::max_grad_error(got, want) <= tol);
}

// Reduces a matrix-valued node to a scalar through fixed random weights so
// the pullback is not uniform across entries.
Var weighted(Tape& t, const Var& v, std::uint64_t seed) {
  Pcg32 rng(seed);
  return ad::sum(ad::hadamard(v, t.constant(oracle::random_matrix(rng, v.rows(), v.cols()))));
}

}  // namespace

TEST_CASE("every tape primitive matches finite differences") {
  Pcg32 rng(100);
  const Matrix a34 = oracle::random_matrix(rng, 3, 4);
  const Matrix b42 = oracle::random_matrix(rng, 4, 2);
  const Matrix a33 = oracle::random_matrix(rng, 3, 3);
  const Matrix b33 = oracle::random_matrix(rng, 3, 3);
  const Matrix row13 = oracle::random_matrix(rng, 1, 3);

  SUBCASE("matmul") {
    check_gradients({a34, b42}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::matmul(v[0], v[1]), 1);
    });
  }
  SUBCASE("transpose") {
    check_gradients({a34}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::transpose(v[0]), 2);
    });
  }
  SUBCASE("add sub scale") {
    check_gradients({a33, b33}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::add(v[0], v[1]), 3) - weighted(t, ad::sub(v[0], v[1]), 4) +
             weighted(t, ad::scale(v[0], 2.5), 5);
    });
  }
  SUBCASE("hadamard") {
    check_gradients({a33, b33}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::hadamard(v[0], v[1]), 6);
    });
  }
  SUBCASE("cdiv") {
    // keep the denominator away from zero
    const Matrix denom = b33.cwiseAbs().array() + 0.5;
    check_gradients({a33, denom}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::cdiv(v[0], v[1]), 7);
    });
  }
  SUBCASE("add_row_broadcast") {
    check_gradients({a34, oracle::random_matrix(rng, 1, 4)},
                    [](Tape& t, const std::vector<Var>& v) {
                      return weighted(t, ad::add_row_broadcast(v[0], v[1]), 8);
                    });
  }
  SUBCASE("relu") {
    // push entries away from the kink so finite differences stay valid
    Matrix m = a33;
    for (Index i = 0; i < m.size(); ++i) {
      double& x = m.data()[i];
      x = (x >= 0 ? 1.0 : -1.0) * (std::abs(x) + 0.1);
    }
    check_gradients({m}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::relu(v[0]), 9);
    });
  }
  SUBCASE("exp log") {
    const Matrix pos = a33.cwiseAbs().array() + 0.5;
    check_gradients({pos}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::exp(v[0]), 10) + weighted(t, ad::log(v[0]), 11);
    });
  }
  SUBCASE("row_softmax") {
    check_gradients({a34}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::row_softmax(v[0]), 12);
    });
  }
  SUBCASE("row_l2_normalize") {
    check_gradients({a34}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::row_l2_normalize(v[0]), 13);
    });
  }
  SUBCASE("reductions") {
    check_gradients({a34}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::row_sums(v[0]), 14) + weighted(t, ad::col_sums(v[0]), 15) +
             ad::sum(v[0]) + ad::sumsq(v[0]);
    });
  }
  SUBCASE("concat_rows") {
    check_gradients({a33, oracle::random_matrix(rng, 4, 3)},
                    [](Tape& t, const std::vector<Var>& v) {
                      return weighted(t, ad::concat_rows(v[0], v[1]), 16);
                    });
  }
  SUBCASE("xlogx") {
    const Matrix pos = a33.cwiseAbs().array() + 0.1;  // clear of the eps clamp
    check_gradients({pos}, [](Tape& t, const std::vector<Var>& v) {
      return weighted(t, ad::xlogx(v[0], 1e-12), 17);
    });
  }
  SUBCASE("info_nce_rows") {
    const Matrix sims = oracle::random_matrix(rng, 6, 6);
    check_gradients({sims}, [](Tape& t, const std::vector<Var>& v) {
      return ad::info_nce_rows(v[0], 0.5, true, 3);
    });
    check_gradients({sims}, [](Tape& t, const std::vector<Var>& v) {
      return ad::info_nce_rows(v[0], 0.5, false, 3);
    });
  }
  SUBCASE("marginal_negentropy") {
    const Matrix probs = shrinkcl::row_softmax(oracle::random_matrix(rng, 5, 3));
    check_gradients({probs}, [](Tape& t, const std::vector<Var>& v) {
      return ad::marginal_negentropy(v[0], 1e-12);
    });
  }
}

TEST_CASE("backward through a small composite graph matches finite differences") {
  Pcg32 rng(200);
  const Matrix x = oracle::random_matrix(rng, 4, 3);
  const Matrix w = oracle::random_matrix(rng, 3, 5);
  const Matrix b = oracle::random_matrix(rng, 1, 5);
  check_gradients({x, w, b}, [](Tape& t, const std::vector<Var>& v) {
    const Var h = ad::relu(ad::add_row_broadcast(ad::matmul(v[0], v[1]), v[2]));
    const Var y = ad::row_softmax(h);
    return ad::sum(ad::xlogx(y, 1e-12)) + 0.5 * ad::sumsq(h);
  });
}
