#include <doctest.h>

#include <cmath>

#include "graphbert/optimizer.hpp"
#include "graphbert/tensor.hpp"

using namespace graphbert;

namespace {

Tensor<double> randn(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0,
                     double keep_away_from = 0.0, double margin = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> data(numel(shape));
  for (auto& x : data) {
    do {
      x = u(rng);
    } while (margin > 0 && std::abs(x - keep_away_from) < margin);
  }
  return Tensor<double>::from(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("softmax of zeros is uniform") {
  auto t = Tensor<double>::zeros({2, 5});
  auto s = softmax_last(t);
  for (double v : s.data()) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  auto t = randn({4, 9}, rng, -30.0, 30.0);
  auto s = softmax_last(t);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0;
    for (std::size_t j = 0; j < 9; ++j) sum += s.data()[r * 9 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("matmul identity") {
  Rng rng(1);
  auto x = randn({3, 4}, rng);
  std::vector<double> id(9, 0.0);
  for (int i = 0; i < 3; ++i) id[std::size_t(i) * 3 + std::size_t(i)] = 1.0;
  auto y = matmul(Tensor<double>::from({3, 3}, id), x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("matmul broadcasts leading batch axes") {
  Rng rng(2);
  auto a = randn({2, 3, 4}, rng);
  auto b = randn({4, 5}, rng);
  auto c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 5});
  // spot-check one batch against flat 2-d matmul
  auto a1 = Tensor<double>::from({3, 4}, std::vector<double>(a.data().begin() + 12, a.data().end()));
  auto c1 = matmul(a1, b);
  for (std::size_t i = 0; i < 15; ++i) CHECK(c.data()[15 + i] == doctest::Approx(c1.data()[i]));
}

TEST_CASE("gradient of sum of squares") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  auto y = sum_all(square(x));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("shape errors name the op and both shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({4, 5});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), ShapeError);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2,3)"), ShapeError);
}

TEST_CASE("layer norm output has zero mean and unit variance before scale/shift") {
  Rng rng(5);
  auto x = randn({6, 16}, rng);
  auto g = Tensor<double>::filled({16}, 1.0);
  auto b = Tensor<double>::zeros({16});
  auto y = layer_norm(x, g, b);
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < 16; ++j) mean += y.data()[r * 16 + j];
    mean /= 16;
    for (std::size_t j = 0; j < 16; ++j) {
      double c = y.data()[r * 16 + j] - mean;
      var += c * c;
    }
    var /= 16;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("dropout: rate zero is identity, masks reproducible with fixed seed") {
  Rng rng(11);
  auto x = randn({5, 7}, rng);
  Rng r0(1);
  auto y = dropout(x, 0.0, r0, true);
  CHECK(y.data() == x.data());
  Rng r1(99), r2(99);
  auto a = dropout(x, 0.4, r1, true);
  auto b = dropout(x, 0.4, r2, true);
  CHECK(a.data() == b.data());  // bit-for-bit
  Rng r3(1);
  auto c = dropout(x, 0.4, r3, false);
  CHECK(c.data() == x.data());  // inference mode is identity
}

TEST_CASE("cross entropy matches analytic uniform value") {
  auto logits = Tensor<double>::zeros({2, 7});
  auto loss = cross_entropy_sum(logits, {3, 5});
  CHECK(loss.item() == doctest::Approx(2.0 * std::log(7.0)));
}

TEST_CASE("grad_check throws on NaN forward") {
  auto x = Tensor<double>::from({1}, {0.5});
  CHECK_THROWS_AS(grad_check<double>(
                      [](Tensor<double>& t) {
                        return scalar_mul(sum_all(t), std::numeric_limits<double>::quiet_NaN());
                      },
                      x),
                  NumericError);
}

TEST_CASE("grad_check harness on closed-form examples") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0});
  CHECK(grad_check<double>([](Tensor<double>& t) { return sum_all(square(t)); }, x) < 1e-7);
  auto logits = Tensor<double>::from({1, 3}, {0.3, -0.7, 1.1});
  CHECK(grad_check<double>(
            [](Tensor<double>& t) { return cross_entropy_sum(t, {2}); }, logits) < 1e-5);
}

TEST_CASE("property: every primitive passes grad_check over 100 random shapes") {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> dim(1, 5);
    std::size_t a = dim(rng), b = dim(rng), c = dim(rng), d = dim(rng);
    auto track = [&](double err) { worst = std::max(worst, err); };

    {  // elementwise binary with broadcasting
      auto x = randn({a, b, c}, rng);
      auto y = randn({b, c}, rng, 0.3, 2.0);  // away from 0 for div
      track(grad_check<double>(
          [&](Tensor<double>& t) { return sum_all(div(mul(add(t, y), sub(t, y)), y)); }, x));
    }
    {  // matmul with batch broadcast + transpose
      auto x = randn({a, b, c}, rng);
      auto w = randn({c, d}, rng);
      track(grad_check<double>(
          [&](Tensor<double>& t) {
            return sum_all(matmul(transpose_last2(matmul(t, w)), t));
          },
          x));
    }
    {  // softmax, relu, gelu, reductions
      auto x = randn({a, c}, rng, -2.0, 2.0, 0.0, 0.02);  // keep relu off its kink
      track(grad_check<double>(
          [&](Tensor<double>& t) {
            return add(mean_all(softmax_last(t)), sum_all(add(relu(t), gelu(t))));
          },
          x));
    }
    {  // layer norm with learnable scale/shift; check x, gamma and beta
      auto x = randn({a, 2 * c}, rng);
      auto g = randn({2 * c}, rng, 0.5, 1.5);
      auto bb = randn({2 * c}, rng);
      track(grad_check<double>(
          [&](Tensor<double>& t) { return sum_all(layer_norm(t, g, bb)); }, x));
      track(grad_check<double>(
          [&](Tensor<double>& t) { return sum_all(layer_norm(x, t, bb)); }, g));
      track(grad_check<double>(
          [&](Tensor<double>& t) { return sum_all(layer_norm(x, g, t)); }, bb));
    }
    {  // slice + concat + reshape + mean_axis
      auto x = randn({a, b, 4}, rng);
      track(grad_check<double>(
          [&](Tensor<double>& t) {
            auto parts = std::vector<Tensor<double>>{slice_last(t, 2, 2), slice_last(t, 0, 2)};
            return sum_all(mean_axis(concat_last(parts), 1));
          },
          x));
    }
    {  // embedding lookup
      auto table = randn({5, c}, rng);
      std::vector<std::uint32_t> ids{0, 4, 2, 2};
      track(grad_check<double>(
          [&](Tensor<double>& t) { return sum_all(square(embedding_lookup(t, ids))); }, table));
    }
    {  // cross entropy
      auto logits = randn({b, 4}, rng);
      std::vector<std::uint32_t> labels(b);
      std::uniform_int_distribution<std::uint32_t> lab(0, 3);
      for (auto& l : labels) l = lab(rng);
      track(grad_check<double>(
          [&](Tensor<double>& t) { return cross_entropy_sum(t, labels); }, logits));
    }
    {  // sqrt / L2 norm / frobenius / cosine-similarity composite
      auto z = randn({a + 1, 4}, rng, 0.3, 2.0);
      auto s = randn({a + 1, a + 1}, rng);
      track(grad_check<double>(
          [&](Tensor<double>& t) {
            return add(l2_norm(t),
                       squared_frobenius_distance(cosine_similarity_matrix(t), s));
          },
          z));
    }
    {  // dropout with a replayable mask
      auto x = randn({a, b}, rng);
      track(grad_check<double>(
          [&, seed](Tensor<double>& t) {
            Rng mask_rng(seed + 1000);
            return sum_all(dropout(t, 0.3, mask_rng, true));
          },
          x));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("adam: bias-corrected first step and decoupled decay") {
  ParamSet<float> params;
  auto& p = params.add("w", {1});
  p.data()[0] = 1.0f;

  AdamW<float> opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.0;
  SUBCASE("constant gradient 1 moves by about -lr") {
    p.grad()[0] = 1.0f;
    opt.step(params);
    CHECK(p.data()[0] == doctest::Approx(0.9).epsilon(1e-4));
  }
  SUBCASE("zero gradient, zero decay: unchanged") {
    opt.step(params);
    CHECK(p.data()[0] == 1.0f);
  }
  SUBCASE("zero gradient with decay: pure shrink by lr*wd*value") {
    opt.weight_decay = 5e-4;
    opt.step(params);
    CHECK(p.data()[0] == doctest::Approx(1.0 - 0.1 * 5e-4 * 1.0));
  }
  SUBCASE("NaN gradient aborts naming the parameter") {
    p.grad()[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_WITH_AS(opt.step(params), doctest::Contains("'w'"), NumericError);
  }
}
