/*
 * Copyright 2026 The Anchorfuse Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <sstream>

#include <doctest.h>

#include "anchorfuse/errors.hpp"
#include "anchorfuse/numeric/compose.hpp"
#include "anchorfuse/numeric/gradcheck.hpp"
#include "anchorfuse/numeric/params.hpp"
#include "anchorfuse/numeric/rng.hpp"
#include "anchorfuse/numeric/tape.hpp"

using namespace anchorfuse;
using namespace anchorfuse::numeric;

namespace {

Array random_array(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  Array a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

}  // namespace

TEST_CASE("array rejects inconsistent shapes and non-finite data") {
  CHECK_THROWS_AS(Array({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Array({1}, std::vector<double>{NAN}), NumericalError);
  CHECK_THROWS_AS(Array({1}, std::vector<double>{INFINITY}), NumericalError);
  CHECK(Array({2, 3}).size() == 6);
  CHECK_THROWS_AS(Array({2, 3}).reshaped({4, 2}), DimensionError);
}

TEST_CASE("matmul hand values") {
  CHECK(matmul(Array::matrix({{1, 0}, {0, 1}}), Array::matrix({{3}, {4}})) == Array::matrix({{3}, {4}}));
  CHECK(matmul(Array::matrix({{1, 2}}), Array::matrix({{3}, {4}})) == Array::matrix({{11}}));
  CHECK_THROWS_AS(matmul(Array({2, 3}), Array({2, 3})), DimensionError);
}

TEST_CASE("matmul against a triple loop") {
  Rng rng(1);
  const Array a = random_array(rng, {5, 7}), b = random_array(rng, {7, 3});
  const Array c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 7; ++k) acc += a.at(i, k) * b.at(k, j);
      CHECK(std::abs(c.at(i, j) - acc) <= 1e-12);
    }
  }
}

TEST_CASE("softmax rows") {
  const Array u = softmax_lastdim(Array({3}, {0.0, 0.0, 0.0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Array big = softmax_lastdim(Array({2}, {1000.0, 0.0}));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] >= 0.0);
  CHECK(big[1] < 1e-300);

  Rng rng(2);
  const Array s = softmax_lastdim(random_array(rng, {4, 6}, -5, 5));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 6; ++c) {
      CHECK(s.at(r, c) > 0.0);
      total += s.at(r, c);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("bilinear sampling") {
  Rng rng(3);
  const Array map = random_array(rng, {4, 5, 3});
  SUBCASE("on grid") {
    const std::vector<double> uv{2.0, 1.0};  // u = column 2, v = row 1
    const auto s = bilinear_sample(map, uv);
    REQUIRE(s.valid[0]);
    for (std::size_t c = 0; c < 3; ++c) CHECK(s.values.at(0, c) == map[(1 * 5 + 2) * 3 + c]);
  }
  SUBCASE("midpoint of four cells") {
    Array m({2, 2, 1}, {0.0, 0.0, 0.0, 4.0});
    const std::vector<double> uv{0.5, 0.5};
    CHECK(bilinear_sample(m, uv).values[0] == 1.0);
  }
  SUBCASE("outside") {
    const std::vector<double> uv{-5.0, -5.0};
    const auto s = bilinear_sample(map, uv);
    CHECK_FALSE(s.valid[0]);
    for (std::size_t c = 0; c < 3; ++c) CHECK(s.values.at(0, c) == 0.0);
  }
  SUBCASE("linear along each axis between grid points") {
    for (double t : {0.0, 0.25, 0.5, 0.9}) {
      const std::vector<double> uv{1.0 + t, 2.0};
      const double want = (1 - t) * map[(2 * 5 + 1) * 3] + t * map[(2 * 5 + 2) * 3];
      CHECK(bilinear_sample(map, uv).values[0] == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("backward hand derivatives") {
  Tape tape;
  Var x = tape.variable(Array({2}, {1.0, 2.0}));
  Var y = sum(mul(x, x));
  tape.backward(y);
  CHECK(tape.grad(x) == Array({2}, {2.0, 4.0}));

  Tape t2;
  Var z = t2.variable(Array::scalar(3.0));
  t2.backward(z);
  CHECK(t2.grad(z) == Array::scalar(1.0));
}

TEST_CASE("backward rejects a mismatched seed") {
  Tape tape;
  Var x = tape.variable(Array({3}, {1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(tape.backward(x, Array({2}, {1.0, 1.0})), DimensionError);
}

TEST_CASE("log of a non-positive input is a numerical error") {
  Tape tape;
  CHECK_THROWS_AS(numeric::log(tape.constant(Array({2}, {1.0, 0.0}))), NumericalError);
}

TEST_CASE("checked tape reports overflow") {
  Tape tape(true);
  CHECK_THROWS_AS(numeric::exp(tape.constant(Array({1}, {1000.0}))), NumericalError);
}

TEST_CASE("gradients reach every parameter, untouched ones as zeros") {
  ParamStore s;
  s.add("used", Array({2}, {1.0, 2.0}));
  s.add("unused", Array({3}));
  Tape tape;
  const auto g = tape.backward(sum(tape.param(s, "used")));
  CHECK(g.at("used") == Array({2}, {1.0, 1.0}));
  CHECK(g.at("unused") == Array({3}));
}

TEST_CASE("mlp forward") {
  SUBCASE("zero weights give the bias") {
    ParamStore s;
    s.add_mlp("m", {3, 2});
    s.fill("m.0.weight", 0.0);
    s.get_mut("m.0.bias") = Array({2}, {0.5, -1.5});
    const Array y = mlp_forward(s, "m", Array({4, 3}, std::vector<double>(12, 7.0)));
    for (std::size_t r = 0; r < 4; ++r) {
      CHECK(y.at(r, 0) == 0.5);
      CHECK(y.at(r, 1) == -1.5);
    }
  }
  SUBCASE("identity layer") {
    ParamStore s;
    s.add("id.0.weight", Array::matrix({{1, 0}, {0, 1}}));
    s.add("id.0.bias", Array({2}));
    const Array x = Array::matrix({{0.25, -3.0}, {1.0, 2.0}});
    CHECK(mlp_forward(s, "id", x) == x);
  }
  SUBCASE("two layers against a hand-rolled evaluation") {
    Rng rng(4);
    ParamStore s(9);
    s.add_mlp("m", {3, 5, 2});
    const Array x = random_array(rng, {4, 3});
    const Array y = mlp_forward(s, "m", x);
    const Array &w0 = s.get("m.0.weight"), &b0 = s.get("m.0.bias"), &w1 = s.get("m.1.weight"),
                &b1 = s.get("m.1.bias");
    for (std::size_t r = 0; r < 4; ++r) {
      double hidden[5];
      for (std::size_t j = 0; j < 5; ++j) {
        double acc = b0[j];
        for (std::size_t i = 0; i < 3; ++i) acc += x.at(r, i) * w0.at(i, j);
        hidden[j] = acc > 0 ? acc : 0;
      }
      for (std::size_t k = 0; k < 2; ++k) {
        double acc = b1[k];
        for (std::size_t j = 0; j < 5; ++j) acc += hidden[j] * w1.at(j, k);
        CHECK(std::abs(y.at(r, k) - acc) <= 1e-12);
      }
    }
  }
  SUBCASE("errors") {
    ParamStore s;
    s.add_mlp("m", {3, 2});
    CHECK_THROWS_AS(mlp_forward(s, "nope", Array({1, 3})), std::out_of_range);
    CHECK_THROWS_AS(mlp_forward(s, "m", Array({1, 4})), DimensionError);
  }
}

TEST_CASE("parameter initialization is uniform within the fan-in bound and seed-derived") {
  ParamStore a(5), b(5), c(6);
  for (ParamStore* s : {&a, &b, &c}) s->add_uniform("w", {16, 8}, 16);
  CHECK(a == b);
  CHECK_FALSE(a.get("w") == c.get("w"));
  for (double v : a.get("w").data()) CHECK(std::abs(v) <= 0.25);
}

TEST_CASE("checkpoint round trip and corruption") {
  ParamStore s(3);
  s.add_mlp("net", {4, 3, 2});
  std::stringstream buf;
  s.save(buf);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "AFPS");
  std::stringstream in(bytes);
  CHECK(ParamStore::load(in) == s);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(ParamStore::load(truncated), CodecError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream wrong_magic(bad);
  CHECK_THROWS_AS(ParamStore::load(wrong_magic), CodecError);
}

TEST_CASE("finite difference checker") {
  ParamStore s(1);
  s.add("x", Array({3}, {0.3, -1.2, 2.0}));
  SUBCASE("linear function is exact") {
    const LossFn f = [](Tape& t, const ParamStore& p) {
      return sum(mul(t.param(p, "x"), t.constant(Array({3}, {2.0, -1.0, 0.5}))));
    };
    const auto r = finite_diff_check(f, s);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-9);
  }
  const LossFn soft = [](Tape& t, const ParamStore& p) {
    return sum(mul(softmax_lastdim(t.param(p, "x")), t.constant(Array({3}, {1.0, 2.0, -3.0}))));
  };
  SUBCASE("softmax function") { CHECK(finite_diff_check(soft, s).max_rel_error <= 1e-4); }
  SUBCASE("corrupted gradient is reported") {
    GradCheckOptions o;
    o.corrupt = [](Gradients& g) { g.params.at("x")[1] += 0.1; };
    const auto r = finite_diff_check(soft, s, o);
    CHECK_FALSE(r.passed);
    CHECK(r.worst_param == "x");
    CHECK(r.worst_index == 1);
  }
}

TEST_CASE("straight-through carries a value forward and the gradient back") {
  Tape tape;
  Var x = tape.variable(Array({2}, {1.0, 2.0}));
  Var y = straight_through(x, Array({2}, {1.5, 2.5}));
  CHECK(y.value() == Array({2}, {1.5, 2.5}));
  tape.backward(sum(mul(y, tape.constant(Array({2}, {3.0, -1.0})))));
  CHECK(tape.grad(x) == Array({2}, {3.0, -1.0}));
}

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng c(42);
  Rng f1 = c.fork(3);
  Rng d(42);
  Rng f2 = d.fork(3);
  CHECK(f1.next() == f2.next());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
}
