#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "sleepnet/gradcheck.hpp"
#include "sleepnet/graph.hpp"

using namespace sleepnet;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, T lo = T(-1), T hi = T(1)) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = lo + (hi - lo) * static_cast<T>(rng.uniform());
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand-computed products") {
  Graph<double> g;
  auto eye = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto v = g.constant(Tensor<double>({2, 1}, {3, 4}));
  auto out = g.matmul(eye, v);
  CHECK(g.value(out).values()[0] == 3.0);
  CHECK(g.value(out).values()[1] == 4.0);

  auto a = g.constant(Tensor<double>({1, 2}, {1, 2}));
  auto b = g.constant(Tensor<double>({2, 1}, {3, 4}));
  CHECK(g.scalar(g.matmul(a, b)) == doctest::Approx(11.0).epsilon(1e-12));
}

TEST_CASE("matmul rejects mismatched inner dimensions, reporting both shapes") {
  Graph<double> g;
  auto a = g.constant(Tensor<double>::zeros({2, 3}));
  auto b = g.constant(Tensor<double>::zeros({4, 2}));
  try {
    g.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients match central finite differences") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}) {
    Rng rng(seed);
    std::vector<Tensor<double>> in{random_tensor<double>({3, 4}, rng),
                                   random_tensor<double>({4, 2}, rng)};
    Tensor<double> w = random_tensor<double>({3, 2}, rng);
    auto check = check_gradients<double>(
        "matmul", in,
        [&](Graph<double>& g, std::vector<Graph<double>::Var>& v) {
          return g.sum(g.mul(g.matmul(v[0], v[1]), g.constant(w)));
        },
        1e-5, 1e-4);
    CHECK(check.pass);
    CHECK(check.max_rel_err < 1e-4);
  }
}

TEST_CASE("conv2d zero input maps to zero output") {
  Graph<float> g;
  Rng rng(3);
  auto input = g.constant(Tensor<float>::zeros({1, 1, 4, 4}));
  auto kernel = g.constant(random_tensor<float>({2, 1, 3, 3}, rng));
  auto out = g.conv2d(input, kernel, 1);
  for (const float v : g.value(out).values()) CHECK(v == 0.0f);
}

TEST_CASE("conv2d with a centered delta kernel is the identity") {
  Graph<float> g;
  Rng rng(4);
  Tensor<float> kernel = Tensor<float>::zeros({1, 1, 3, 3});
  kernel[4] = 1.0f;  // center tap
  auto input = g.constant(random_tensor<float>({1, 1, 3, 3}, rng));
  auto out = g.conv2d(g.constant(g.value(input)), g.constant(kernel), 1);
  const auto& in_vals = g.value(input).values();
  const auto& out_vals = g.value(out).values();
  for (std::size_t i = 0; i < in_vals.size(); ++i) {
    CHECK(out_vals[i] == doctest::Approx(in_vals[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv2d stride-2 output shape and float32 finite differences") {
  Rng rng(5);
  std::vector<Tensor<float>> in{random_tensor<float>({2, 3, 8, 8}, rng),
                                random_tensor<float>({4, 3, 3, 3}, rng)};
  {
    Graph<float> g;
    auto out = g.conv2d(g.constant(in[0]), g.constant(in[1]), 2);
    CHECK(g.value(out).shape() == Shape{2, 4, 4, 4});
  }
  // conv is linear in both operands, so a wide step carries no truncation
  // error and beats float32 roundoff.
  Tensor<float> w = random_tensor<float>({2, 4, 4, 4}, rng);
  auto check = check_gradients<float>(
      "conv2d_f32", in,
      [&](Graph<float>& g, std::vector<Graph<float>::Var>& v) {
        return g.sum(g.mul(g.conv2d(v[0], v[1], 2), g.constant(w)));
      },
      1e-1, 1e-3, 40);
  CHECK(check.pass);
  CHECK(check.max_rel_err < 1e-3);
}

TEST_CASE("conv2d rejects channel mismatches") {
  Graph<float> g;
  auto input = g.constant(Tensor<float>::zeros({1, 2, 4, 4}));
  auto kernel = g.constant(Tensor<float>::zeros({3, 5, 3, 3}));
  CHECK_THROWS_AS(g.conv2d(input, kernel, 1), ShapeError);
}

TEST_CASE("relu clamps negatives") {
  Graph<double> g;
  auto out = g.relu(g.constant(Tensor<double>({3}, {-1, 0, 2})));
  CHECK(g.value(out).values()[0] == 0.0);
  CHECK(g.value(out).values()[1] == 0.0);
  CHECK(g.value(out).values()[2] == 2.0);
}

TEST_CASE("softmax of equal logits is uniform; backward matches FD to 1e-5") {
  Graph<double> g;
  auto out = g.softmax(g.constant(Tensor<double>({2}, {0, 0})));
  CHECK(g.value(out).values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.value(out).values()[1] == doctest::Approx(0.5).epsilon(1e-12));

  for (std::uint64_t seed : {11, 12, 13, 14, 15, 16, 17, 18, 19, 20}) {
    Rng rng(seed);
    std::vector<Tensor<double>> in{random_tensor<double>({5}, rng)};
    Tensor<double> w = random_tensor<double>({5}, rng);
    auto check = check_gradients<double>(
        "softmax", in,
        [&](Graph<double>& g2, std::vector<Graph<double>::Var>& v) {
          return g2.sum(g2.mul(g2.softmax(v[0]), g2.constant(w)));
        },
        1e-5, 1e-5);
    CHECK(check.pass);
  }
}

TEST_CASE("gaussian_sample reparameterization identities and gradients") {
  Rng rng(6);
  Tensor<double> mu = random_tensor<double>({2, 5}, rng);
  Tensor<double> lv = random_tensor<double>({2, 5}, rng, -0.5, 0.5);

  {
    Graph<double> g;
    auto out = g.gaussian_sample(g.constant(mu), g.constant(lv), Tensor<double>::zeros({2, 5}));
    for (std::size_t i = 0; i < mu.numel(); ++i) CHECK(g.value(out).values()[i] == mu[i]);
  }
  {
    Graph<double> g;
    Tensor<double> noise = random_tensor<double>({2, 5}, rng);
    auto out = g.gaussian_sample(g.constant(mu), g.constant(Tensor<double>::zeros({2, 5})), noise);
    for (std::size_t i = 0; i < mu.numel(); ++i) {
      CHECK(g.value(out).values()[i] == doctest::Approx(mu[i] + noise[i]).epsilon(1e-12));
    }
  }
  for (std::uint64_t seed : {21, 22, 23, 24, 25, 26, 27, 28, 29, 30}) {
    Rng r2(seed);
    std::vector<Tensor<double>> in{random_tensor<double>({2, 5}, r2),
                                   random_tensor<double>({2, 5}, r2, -0.5, 0.5)};
    Tensor<double> noise = random_tensor<double>({2, 5}, r2);
    Tensor<double> w = random_tensor<double>({2, 5}, r2);
    auto check = check_gradients<double>(
        "gaussian_sample", in,
        [&](Graph<double>& g, std::vector<Graph<double>::Var>& v) {
          return g.sum(g.mul(g.gaussian_sample(v[0], v[1], noise), g.constant(w)));
        },
        1e-5, 1e-5);
    CHECK(check.pass);
  }
  {
    Graph<double> g;
    CHECK_THROWS_AS(g.gaussian_sample(g.constant(mu), g.constant(Tensor<double>::zeros({2, 4})),
                                      Tensor<double>::zeros({2, 5})),
                    ShapeError);
  }
}

TEST_CASE("backward populates leaf gradients with the expected closed forms") {
  {
    Graph<double> g;
    auto w = g.leaf(Tensor<double>({4}, {1, 2, 3, 4}), true);
    g.backward(g.sum(w));
    for (const double v : g.grad(w)) CHECK(v == 1.0);
  }
  {
    Graph<double> g;
    auto w = g.leaf(Tensor<double>({1}, {3}), true);
    g.backward(g.sum(g.mul(w, w)));
    CHECK(g.grad(w)[0] == doctest::Approx(6.0).epsilon(1e-12));
  }
}

TEST_CASE("backward errors: non-scalar loss, double backward, unreachable leaves") {
  {
    Graph<double> g;
    auto w = g.leaf(Tensor<double>({3}, {1, 2, 3}), true);
    CHECK_THROWS_AS(g.backward(w), ShapeError);
  }
  {
    Graph<double> g;
    auto w = g.leaf(Tensor<double>({2}, {1, 2}), true);
    auto loss = g.sum(w);
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), Error);
  }
  {
    Graph<double> g;
    auto used = g.leaf(Tensor<double>({2}, {1, 2}), true);
    auto unused = g.leaf(Tensor<double>({2}, {5, 6}), true);
    g.backward(g.sum(used));
    for (const double v : g.grad(unused)) CHECK(v == 0.0);
  }
  {
    Graph<double> g;
    auto w = g.leaf(Tensor<double>({2}, {1, 2}), true);
    CHECK_THROWS_AS(g.grad(w), Error);  // no backward yet
  }
}

TEST_CASE("log rejects non-positive inputs") {
  Graph<double> g;
  CHECK_THROWS_AS(g.log(g.constant(Tensor<double>({2}, {0.5, 0.0}))), NumericError);
  CHECK_THROWS_AS(g.log(g.constant(Tensor<double>({1}, {-1.0}))), NumericError);
}

TEST_CASE("composite MLP loss matches finite differences on every parameter") {
  for (std::uint64_t seed : {31, 32, 33}) {
    Rng rng(seed);
    std::vector<Tensor<double>> params{
        random_tensor<double>({6, 8}, rng, -0.5, 0.5), random_tensor<double>({8}, rng, -0.1, 0.1),
        random_tensor<double>({8, 3}, rng, -0.5, 0.5), random_tensor<double>({3}, rng, -0.1, 0.1)};
    Tensor<double> x = random_tensor<double>({5, 6}, rng);
    std::vector<int> labels{0, 1, 2, 1, 0};
    auto check = check_gradients<double>(
        "mlp", params,
        [&](Graph<double>& g, std::vector<Graph<double>::Var>& v) {
          auto h = g.relu(g.add_rowwise(g.matmul(g.constant(x), v[0]), v[1]));
          auto logits = g.add_rowwise(g.matmul(h, v[2]), v[3]);
          return g.cross_entropy(logits, labels, {});
        },
        1e-5, 1e-4);
    CHECK(check.pass);
    CHECK(check.checked == 6 * 8 + 8 + 8 * 3 + 3);
  }
}

TEST_CASE("gradient accumulation is linear in the loss") {
  Rng rng(40);
  Tensor<double> w0 = random_tensor<double>({4, 4}, rng);
  Tensor<double> t1 = random_tensor<double>({4, 4}, rng);
  Tensor<double> t2 = random_tensor<double>({4, 4}, rng);
  const double alpha = 0.7, beta = -1.3;

  auto grad_of = [&](double a, double b) {
    Graph<double> g;
    auto w = g.leaf(w0, true);
    auto l1 = g.squared_error(w, t1);
    auto l2 = g.mean(g.mul(w, g.constant(t2)));
    g.backward(g.add(g.scale(l1, a), g.scale(l2, b)));
    auto span = g.grad(w);
    return std::vector<double>(span.begin(), span.end());
  };

  const auto combined = grad_of(alpha, beta);
  const auto g1 = grad_of(1.0, 0.0);
  const auto g2 = grad_of(0.0, 1.0);
  for (std::size_t i = 0; i < combined.size(); ++i) {
    CHECK(combined[i] == doctest::Approx(alpha * g1[i] + beta * g2[i]).epsilon(1e-12));
  }
}

TEST_CASE("identical seeds produce bit-identical forward values") {
  auto run = [] {
    Rng rng(77);
    Graph<float> g;
    auto a = g.leaf(random_tensor<float>({8, 8}, rng), true);
    auto b = g.leaf(random_tensor<float>({8, 8}, rng), true);
    auto out = g.relu(g.matmul(a, b));
    const auto vals = g.value(out).values();
    return std::vector<float>(vals.begin(), vals.end());
  };
  const auto first = run();
  const auto second = run();
  CHECK(std::memcmp(first.data(), second.data(), first.size() * sizeof(float)) == 0);
}

TEST_CASE("full primitive sweep passes finite-difference checks") {
  for (std::uint64_t seed : {101, 202}) {
    for (const auto& check : gradcheck_primitives(seed)) {
      INFO(check.name, " max rel err ", check.max_rel_err);
      CHECK(check.pass);
    }
  }
}
