#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "csyn/rng.hpp"
#include "csyn/tensor.hpp"

using namespace csyn;

namespace {

std::vector<double> rand_vec(size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.next_normal() * scale;
  return v;
}

// Central finite differences of f on `data` against the analytic gradient.
// f builds the scalar loss from a leaf holding `data`.
double gradcheck(const std::vector<int>& shape, std::vector<double> data,
                 const std::function<Tensor(Tape&, Tensor)>& f, double eps = 1e-6) {
  Tape tape;
  Tensor x = tape.leaf(shape, data, true);
  Tensor loss = f(tape, x);
  tape.backward(loss);
  const std::vector<double> analytic = x.grad();

  std::vector<double> fd(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    auto eval = [&](double delta) {
      std::vector<double> d2 = data;
      d2[i] += delta;
      Tape t2;
      Tensor x2 = t2.leaf(shape, d2, false);
      return f(t2, x2).scalar();
    };
    fd[i] = (eval(eps) - eval(-eps)) / (2.0 * eps);
  }
  return max_relative_error(analytic, fd);
}

constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("basic forward values") {
  Tape tape;
  Tensor a = tape.leaf({2, 2}, {1, 2, 3, 4}, false);
  Tensor b = tape.leaf({2, 2}, {5, 6, 7, 8}, false);
  CHECK(tape.add(a, b).value() == std::vector<double>{6, 8, 10, 12});
  CHECK(tape.mul(a, b).value() == std::vector<double>{5, 12, 21, 32});
  CHECK(tape.matmul(a, b).value() == std::vector<double>{19, 22, 43, 50});
  CHECK(tape.transpose(a).value() == std::vector<double>{1, 3, 2, 4});
  CHECK_THROWS_AS(tape.add(a, tape.leaf({1, 2}, {1, 2}, false)), ShapeMismatch);
}

TEST_CASE("matmul against identity and closed-form gradient") {
  Tape tape;
  Tensor eye = tape.leaf({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, false);
  Rng rng(3);
  const auto a_data = rand_vec(9, rng);
  Tensor a = tape.leaf({3, 3}, a_data, true);
  CHECK(tape.matmul(eye, a).value() == a_data);
  // d sum(A B) / dA = row-broadcast of B's column sums.
  const auto b_data = rand_vec(12, rng);
  Tensor b = tape.leaf({3, 4}, b_data, false);
  Tensor loss = tape.sum_all(tape.matmul(a, b));
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) {
    for (int p = 0; p < 3; ++p) {
      double colsum = 0.0;
      for (int j = 0; j < 4; ++j) colsum += b_data[static_cast<size_t>(p) * 4 + j];
      CHECK(a.grad()[static_cast<size_t>(i) * 3 + p] == doctest::Approx(colsum).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax of a singleton row is one with zero gradient") {
  Tape tape;
  Tensor x = tape.leaf({1, 1}, {3.7}, true);
  Tensor y = tape.softmax_rows(x);
  CHECK(y.value()[0] == 1.0);
  tape.backward(tape.sum_all(y));
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(5);
  Tape tape;
  Tensor x = tape.leaf({4, 7}, rand_vec(28, rng, 3.0), false);
  const auto y = tape.softmax_rows(x).value();
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 7; ++j) s += y[static_cast<size_t>(i) * 7 + j];
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("gradcheck: every op on random 3x4 inputs") {
  Rng rng(11);
  const std::vector<int> shape{3, 4};
  const auto data = rand_vec(12, rng);

  SUBCASE("add+mul composite") {
    auto aux = rand_vec(12, rng);
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            Tensor c = t.leaf(shape, aux, false);
            return t.sum_all(t.mul(t.add(x, c), x));
          }) < kTol);
  }
  SUBCASE("sub") {
    auto aux = rand_vec(12, rng);
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.sum_all(t.mul(t.sub(x, t.leaf(shape, aux, false)), x));
          }) < kTol);
  }
  SUBCASE("scale and scale_by and recip") {
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            Tensor s = t.sum_all(x);
            return t.sum_all(t.scale_by(t.scale(x, 0.7), t.recip(s)));
          }) < kTol);
  }
  SUBCASE("exp") {
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.sum_all(t.mul(t.exp(x), x));
          }) < kTol);
  }
  SUBCASE("matmul both sides") {
    auto aux = rand_vec(20, rng);
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            Tensor w = t.leaf({4, 5}, aux, false);
            return t.sum_all(t.matmul(x, w));
          }) < kTol);
    CHECK(gradcheck({4, 5}, rand_vec(20, rng), [&](Tape& t, Tensor x) {
            Tensor a = t.leaf(shape, data, false);
            Tensor y = t.matmul(a, x);
            return t.sum_all(t.mul(y, y));
          }) < kTol);
  }
  SUBCASE("transpose, slice, concat, broadcast") {
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            Tensor xt = t.transpose(x);
            Tensor s1 = t.slice_rows(xt, 1, 3);
            Tensor s2 = t.slice_cols(x, 0, 2);
            Tensor c = t.concat_cols({s2, t.transpose(s1)});
            Tensor r = t.concat_rows({c, c});
            Tensor v = t.leaf({4}, {0.3, -0.2, 1.1, 0.4}, false);
            return t.sum_all(t.mul(r, t.broadcast_rows(v, r.rows())));
          }) < kTol);
  }
  SUBCASE("add_rowvec both arguments") {
    auto vdata = rand_vec(4, rng);
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            Tensor v = t.leaf({4}, vdata, false);
            Tensor y = t.add_rowvec(x, v);
            return t.sum_all(t.mul(y, y));
          }) < kTol);
    CHECK(gradcheck({4}, vdata, [&](Tape& t, Tensor v) {
            Tensor x = t.leaf(shape, data, false);
            Tensor y = t.add_rowvec(x, v);
            return t.sum_all(t.mul(y, y));
          }) < kTol);
  }
  SUBCASE("softmax_rows") {
    auto aux = rand_vec(12, rng);
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.sum_all(t.mul(t.softmax_rows(x), t.leaf(shape, aux, false)));
          }) < kTol);
  }
  SUBCASE("log_softmax_rows") {
    auto aux = rand_vec(12, rng);
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.sum_all(t.mul(t.log_softmax_rows(x), t.leaf(shape, aux, false)));
          }) < kTol);
  }
  SUBCASE("relu") {
    // Shift away from the kink so finite differences are clean.
    auto shifted = data;
    for (auto& x : shifted) x += x >= 0 ? 0.5 : -0.5;
    CHECK(gradcheck(shape, shifted, [&](Tape& t, Tensor x) {
            return t.sum_all(t.mul(t.relu(x), x));
          }) < kTol);
  }
  SUBCASE("gelu") {
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.sum_all(t.mul(t.gelu(x), x));
          }) < kTol);
  }
  SUBCASE("sigmoid") {
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.sum_all(t.mul(t.sigmoid(x), x));
          }) < kTol);
  }
  SUBCASE("layer_norm input, gain and bias") {
    auto gain = rand_vec(4, rng, 0.5);
    for (auto& g : gain) g += 1.0;
    auto bias = rand_vec(4, rng, 0.2);
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            Tensor g = t.leaf({4}, gain, false);
            Tensor b = t.leaf({4}, bias, false);
            Tensor y = t.layer_norm_rows(x, g, b);
            return t.sum_all(t.mul(y, y));
          }) < kTol);
    CHECK(gradcheck({4}, gain, [&](Tape& t, Tensor g) {
            Tensor x = t.leaf(shape, data, false);
            Tensor b = t.leaf({4}, bias, false);
            Tensor y = t.layer_norm_rows(x, g, b);
            return t.sum_all(t.mul(y, y));
          }) < kTol);
    CHECK(gradcheck({4}, bias, [&](Tape& t, Tensor b) {
            Tensor x = t.leaf(shape, data, false);
            Tensor g = t.leaf({4}, gain, false);
            Tensor y = t.layer_norm_rows(x, g, b);
            return t.sum_all(t.mul(y, y));
          }) < kTol);
  }
  SUBCASE("mean_all") {
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.mean_all(t.mul(x, x));
          }) < kTol);
  }
  SUBCASE("embedding_lookup") {
    CHECK(gradcheck({5, 3}, rand_vec(15, rng), [&](Tape& t, Tensor table) {
            Tensor e = t.embedding_lookup(table, {4, 0, 2, 0});
            return t.sum_all(t.mul(e, e));
          }) < kTol);
  }
  SUBCASE("cross_entropy") {
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            return t.cross_entropy(x, {1, 3, 0}, {1, 0, 1});
          }) < kTol);
  }
  SUBCASE("binary_cross_entropy") {
    CHECK(gradcheck({1}, {0.3}, [&](Tape& t, Tensor x) {
            return t.binary_cross_entropy(t.sigmoid(x), 1.0);
          }) < kTol);
    CHECK(gradcheck({1}, {-0.8}, [&](Tape& t, Tensor x) {
            return t.binary_cross_entropy(t.sigmoid(x), 0.0);
          }) < kTol);
  }
  SUBCASE("dropout with a fixed mask") {
    // Same rng seed in every evaluation keeps the mask constant.
    CHECK(gradcheck(shape, data, [&](Tape& t, Tensor x) {
            Rng rng2(123);
            return t.sum_all(t.mul(t.dropout(x, 0.4, rng2), x));
          }) < kTol);
  }
  SUBCASE("straight_through gradient equals the soft path's") {
    // The forward value is the (constant) hard input, so the FD oracle runs
    // on the soft relaxation: d sum(st(h, s(x)) * w)/dx == d sum(s(x) * w)/dx.
    auto w = rand_vec(12, rng);
    Tape t;
    Tensor x = t.leaf(shape, data, true);
    Tensor soft = t.softmax_rows(x);
    std::vector<double> hard(12, 0.0);
    for (int i = 0; i < 3; ++i) hard[static_cast<size_t>(i) * 4] = 1.0;
    Tensor st = t.straight_through(t.leaf({3, 4}, hard, false), soft);
    t.backward(t.sum_all(t.mul(st, t.leaf(shape, w, false))));
    const auto analytic = x.grad();

    std::vector<double> fd(data.size());
    const double eps = 1e-6;
    for (size_t i = 0; i < data.size(); ++i) {
      auto eval = [&](double delta) {
        auto d2 = data;
        d2[i] += delta;
        Tape t2(false);
        Tensor x2 = t2.leaf(shape, d2, false);
        Tensor s2 = t2.softmax_rows(x2);
        return t2.sum_all(t2.mul(s2, t2.leaf(shape, w, false))).scalar();
      };
      fd[i] = (eval(eps) - eval(-eps)) / (2.0 * eps);
    }
    CHECK(max_relative_error(analytic, fd) < kTol);
  }
}

TEST_CASE("straight_through forward equals the hard input") {
  Tape tape;
  Tensor h = tape.leaf({2, 3}, {1, 0, 0, 0, 0, 1}, false);
  Tensor s = tape.leaf({2, 3}, {0.5, 0.3, 0.2, 0.1, 0.2, 0.7}, true);
  Tensor st = tape.straight_through(h, s);
  CHECK(st.value() == h.value());
  // grad of sum(st * W) wrt soft equals grad of sum(s * W).
  Tensor w = tape.leaf({2, 3}, {1, 2, 3, 4, 5, 6}, false);
  tape.backward(tape.sum_all(tape.mul(st, w)));
  CHECK(s.grad() == w.value());
}

TEST_CASE("backward basics") {
  SUBCASE("product rule") {
    Tape tape;
    Tensor x = tape.leaf({1}, {3.0}, true);
    Tensor y = tape.leaf({1}, {4.0}, true);
    tape.backward(tape.mul(x, y));
    CHECK(x.grad()[0] == 4.0);
    CHECK(y.grad()[0] == 3.0);
  }
  SUBCASE("non-scalar loss rejected") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(tape.backward(x), NonScalarLoss);
  }
  SUBCASE("unused leaf keeps a zero gradient") {
    Tape tape;
    Tensor x = tape.leaf({1}, {3.0}, true);
    Tensor unused = tape.leaf({1}, {5.0}, true);
    tape.backward(tape.mul(x, x));
    CHECK(unused.grad()[0] == 0.0);
  }
  SUBCASE("repeated backward accumulates into leaves") {
    Tape tape;
    Tensor x = tape.leaf({1}, {3.0}, true);
    Tensor loss = tape.mul(x, x);
    tape.backward(loss);
    tape.backward(loss);
    CHECK(x.grad()[0] == 12.0);  // 2 * (2x)
  }
  SUBCASE("chain through softmax and matmul matches fd") {
    Rng rng(17);
    CHECK(gradcheck({2, 3}, rand_vec(6, rng), [&](Tape& t, Tensor x) {
            Tensor w = t.leaf({3, 3}, {0.2, -0.1, 0.4, 0.5, 0.3, -0.2, 0.1, 0.6, -0.3}, false);
            return t.mean_all(t.softmax_rows(t.matmul(x, w)));
          }) < kTol);
  }
  SUBCASE("parameter binding accumulates into Parameter::grad") {
    Parameter p("w", {2});
    p.value = {1.0, 2.0};
    Tape tape;
    Tensor w = tape.param(p);
    tape.backward(tape.sum_all(tape.mul(w, w)));
    CHECK(p.grad[0] == doctest::Approx(2.0));
    CHECK(p.grad[1] == doctest::Approx(4.0));
  }
}

TEST_CASE("no-graph mode matches graph mode values") {
  Rng rng(19);
  const auto data = rand_vec(12, rng);
  const auto wdata = rand_vec(8, rng);
  auto run = [&](bool recording) {
    Tape tape(recording);
    Tensor x = tape.leaf({3, 4}, data, true);
    Tensor w = tape.leaf({4, 2}, wdata, false);
    return tape.sum_all(tape.softmax_rows(tape.matmul(tape.gelu(x), w))).scalar();
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("determinism: identical losses over repeated runs") {
  auto run = [&]() {
    Rng rng(101);
    Tape tape;
    Tensor x = tape.leaf({4, 4}, rand_vec(16, rng), true);
    Tensor y = tape.softmax_rows(tape.matmul(x, x));
    Tensor loss = tape.mean_all(y);
    tape.backward(loss);
    return std::make_pair(loss.scalar(), x.grad());
  };
  const auto a = run();
  for (int i = 0; i < 10; ++i) {
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
}
