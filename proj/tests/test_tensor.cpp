#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "como/optim.hpp"
#include "como/tensor.hpp"
#include "testing.hpp"

using namespace como;
using namespace como::testing;

namespace {

// Reference convolution: direct quadruple loop, accumulation over (c,kh,kw).
template <class S>
std::vector<S> conv2d_naive(const std::vector<S>& in, int N, int C, int H, int W,
                            const std::vector<S>& wt, int O, int k, int stride, int pad, int OH,
                            int OW) {
  std::vector<S> out(static_cast<size_t>(N) * O * OH * OW, S(0));
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int oi = 0; oi < OH; ++oi)
        for (int oj = 0; oj < OW; ++oj) {
          S acc = 0;
          for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                int ii = oi * stride - pad + ki;
                int jj = oj * stride - pad + kj;
                if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                acc += in[((static_cast<size_t>(n) * C + c) * H + ii) * W + jj] *
                       wt[((static_cast<size_t>(o) * C + c) * k + ki) * k + kj];
              }
          out[((static_cast<size_t>(n) * O + o) * OH + oi) * OW + oj] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("elementwise examples") {
  auto x = Tensor::from_data({2}, {2.0f, 4.0f});
  CHECK(mean_all(x).item() == doctest::Approx(3.0));
  CHECK(l2_distance(x, x).item() == doctest::Approx(0.0));

  auto z = Tensor64::from_data({1}, {0.0});
  z.set_requires_grad(true);
  auto y = tanh_t(z);
  backward(sum_all(y));
  CHECK(z.grad()[0] == doctest::Approx(1.0));  // 1 - tanh^2(0)
}

TEST_CASE("broadcast add/mul over singleton dims") {
  auto x = Tensor::from_data({2, 2, 1, 1}, {1, 2, 3, 4});
  auto b = Tensor::from_data({1, 2, 1, 1}, {10, 20});
  auto y = add(x, b);
  CHECK(y.data() == std::vector<float>{11, 22, 13, 24});
  CHECK_THROWS_AS(add(x, Tensor::from_data({1, 3, 1, 1}, {1, 2, 3})), DimensionError);
  CHECK_THROWS_AS(add(x, Tensor::from_data({2, 2}, {1, 2, 3, 4})), DimensionError);
}

TEST_CASE("conv2d scalar scaling and identity kernel") {
  auto x = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto k2 = Tensor::from_data({1, 1, 1, 1}, {2.0f});
  auto doubled = conv2d(x, k2, 1, 0);
  CHECK(doubled.data() == std::vector<float>{2, 4, 6, 8, 10, 12, 14, 16, 18});

  std::vector<float> delta(9, 0.0f);
  delta[4] = 1.0f;  // center-1 kernel
  auto kd = Tensor::from_data({1, 1, 3, 3}, delta);
  auto same = conv2d(x, kd, 1, 1);
  CHECK(same.data() == x.data());
}

TEST_CASE("conv2d matches the naive-loop oracle on a random case") {
  std::mt19937 rng(7);
  auto x = Tensor64::randn({2, 3, 8, 8}, rng);
  auto w = Tensor64::randn({4, 3, 3, 3}, rng);
  auto y = conv2d(x, w, 1, 0);
  auto ref = conv2d_naive(x.data(), 2, 3, 8, 8, w.data(), 4, 3, 1, 0, 6, 6);
  CHECK(max_abs_diff64(y.data(), ref) < 1e-6);
}

TEST_CASE("conv2d is bit-for-bit with the oracle on exhaustive small shapes") {
  std::mt19937 rng(11);
  for (int N : {1, 2, 3})
    for (int C : {1, 2, 3})
      for (int O : {1, 3})
        for (int k : {1, 2, 3})
          for (int H : {2, 3})
            for (int stride : {1, 2})
              for (int pad : {0, 1}) {
                int W = H;
                int OH = (H + 2 * pad - k) / stride + 1;
                int OW = OH;
                if (OH <= 0) continue;
                auto x = Tensor64::randn({N, C, H, W}, rng);
                auto w = Tensor64::randn({O, C, k, k}, rng);
                auto y = conv2d(x, w, stride, pad);
                auto ref =
                    conv2d_naive(x.data(), N, C, H, W, w.data(), O, k, stride, pad, OH, OW);
                REQUIRE(y.data() == ref);
              }
}

TEST_CASE("conv2d shape errors carry both shapes") {
  auto x = Tensor::zeros({1, 2, 4, 4});
  auto w = Tensor::zeros({1, 3, 3, 3});
  try {
    conv2d(x, w, 1, 1);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("(1,2,4,4)") != std::string::npos);
    CHECK(msg.find("(1,3,3,3)") != std::string::npos);
  }
}

TEST_CASE("instance_stats examples") {
  auto c = Tensor::full({1, 1, 2, 2}, 3.25f);
  auto [m, s] = instance_stats(c);
  CHECK(m.item() == doctest::Approx(3.25));
  CHECK(s.item() == doctest::Approx(std::sqrt(kInstanceStatsEps)));

  auto x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  auto [m2, s2] = instance_stats(x);
  CHECK(m2.item() == doctest::Approx(2.5));
  CHECK(s2.item() == doctest::Approx(std::sqrt(1.25 + kInstanceStatsEps)));

  // shift equivariance
  auto shifted = affine(x, 1.0f, 10.0f);
  auto [m3, s3] = instance_stats(shifted);
  CHECK(m3.item() == doctest::Approx(12.5));
  CHECK(s3.item() == doctest::Approx(s2.item()));
}

TEST_CASE("backward basics") {
  auto x = Tensor64::from_data({3}, {1, 2, 3});
  x.set_requires_grad(true);
  backward(sum_all(x));
  CHECK(x.grad() == std::vector<double>{1, 1, 1});

  auto w = Tensor64::from_data({1}, {3.0});
  w.set_requires_grad(true);
  backward(mean_all(square(w)));
  CHECK(w.grad()[0] == doctest::Approx(6.0));

  CHECK_THROWS_AS(backward(Tensor64::from_data({2}, {1, 2})), ContractError);
}

TEST_CASE("non-finite gradients are diagnosed with the op name") {
  auto x = Tensor64::from_data({1}, {0.0});
  x.set_requires_grad(true);
  auto y = log_t(x);  // -inf value, infinite gradient path
  try {
    backward(sum_all(y));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("gradient check: every op") {
  for (unsigned seed = 1; seed <= 10; ++seed) {
    std::mt19937 rng(seed);
    auto x = random_away_from_zero<double>({2, 2, 4, 4}, rng);
    auto y = random_away_from_zero<double>({2, 2, 4, 4}, rng);
    auto cvec = random_away_from_zero<double>({1, 2, 1, 1}, rng);

    gradcheck({&x, &y}, [&] { return mean_all(add(x, y)); });
    gradcheck({&x, &y}, [&] { return mean_all(square(sub(x, y))); });
    gradcheck({&x, &y}, [&] { return mean_all(mul(x, y)); });
    gradcheck({&x, &cvec}, [&] { return mean_all(mul(x, cvec)); });  // broadcast
    gradcheck({&x}, [&] { return mean_all(affine(x, 3.0, -0.5)); });
    gradcheck({&x}, [&] { return mean_all(abs_t(x)); });
    gradcheck({&x}, [&] { return mean_all(relu(x)); });
    gradcheck({&x}, [&] { return mean_all(leaky_relu(x)); });
    gradcheck({&x}, [&] { return mean_all(tanh_t(x)); });
    gradcheck({&x}, [&] { return mean_all(exp_t(x)); });
    gradcheck({&x}, [&] { return sum_all(mul(x, y)); });
    gradcheck({&x}, [&] { return mean_all(square(spatial_mean(x))); });
    gradcheck({&x}, [&] { return mean_all(square(upsample_nearest2(x))); });
    gradcheck({&x}, [&] { return mean_all(square(avgpool2(x))); });
    gradcheck({&x, &y}, [&] { return mean_all(square(concat_channels(x, y))); });
    // keep |x - far| away from the abs kink
    std::vector<double> far_data(y.data());
    for (auto& v : far_data) v += 3.0;
    auto far = Tensor64::from_data(y.shape(), far_data);
    gradcheck({&x}, [&] { return l1_distance(x, far); });
    gradcheck({&x, &y}, [&] { return l2_distance(x, y); });
    gradcheck({&x}, [&] { return mean_all(square(standardize(x))); });
    gradcheck({&x}, [&] {
      auto [m, s] = instance_stats(x);
      return add(mean_all(square(m)), mean_all(square(s)));
    });

    auto pos = TensorT<double>::uniform({2, 2, 3, 3}, rng, 0.5, 1.5);
    gradcheck({&pos}, [&] { return mean_all(log_t(pos)); });

    auto xin = random_away_from_zero<double>({2, 3, 5, 5}, rng);
    auto w = random_away_from_zero<double>({2, 3, 3, 3}, rng);
    gradcheck({&xin, &w}, [&] { return mean_all(square(conv2d(xin, w, 1, 1))); });
    gradcheck({&xin, &w}, [&] { return mean_all(square(conv2d(xin, w, 2, 0))); });
  }
}

TEST_CASE("gradient check: 3-layer conv/relu composite") {
  std::mt19937 rng(23);
  auto x = random_away_from_zero<double>({1, 2, 6, 6}, rng);
  auto w1 = Tensor64::randn({3, 2, 3, 3}, rng, 0.4);
  auto w2 = Tensor64::randn({3, 3, 3, 3}, rng, 0.4);
  auto w3 = Tensor64::randn({1, 3, 3, 3}, rng, 0.4);
  auto target = Tensor64::randn({1, 1, 6, 6}, rng);
  gradcheck({&x, &w1, &w2, &w3}, [&] {
    auto h1 = relu(conv2d(x, w1, 1, 1));
    auto h2 = relu(conv2d(h1, w2, 1, 1));
    auto h3 = conv2d(h2, w3, 1, 1);
    return l2_distance(h3, target);
  });
}

TEST_CASE("linearity of backward") {
  std::mt19937 rng(5);
  auto x = Tensor64::randn({4, 4}, rng);

  auto grad_of = [&](double a, double b) {
    x.set_requires_grad(true);
    x.zero_grad();
    auto f = mean_all(square(x));
    auto g = sum_all(mul(x, x));  // same value, distinct graph path
    backward(add(scale(f, a), scale(g, b)));
    return x.grad();
  };
  auto g_f = grad_of(1.0, 0.0);
  auto g_g = grad_of(0.0, 1.0);
  auto g_mix = grad_of(2.0, 3.0);
  for (size_t i = 0; i < g_mix.size(); ++i)
    CHECK(rel_err(g_mix[i], 2.0 * g_f[i] + 3.0 * g_g[i]) < 1e-6);
}

TEST_CASE("stop_grad blocks the tape") {
  auto x = Tensor64::from_data({2}, {1, 2});
  x.set_requires_grad(true);
  auto y = stop_grad(square(x));
  CHECK_FALSE(y.requires_grad());
  auto z = add(square(x), y);
  backward(sum_all(z));
  CHECK(x.grad() == std::vector<double>{2, 4});  // only the live branch
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamT<float> p("w", Tensor::from_data({2}, {1.0f, -2.0f}));
  p.value.ensure_grad();
  Adam opt({&p});
  opt.step();
  CHECK(opt.step_count() == 1);
  CHECK(p.value.data() == std::vector<float>{1.0f, -2.0f});
}

TEST_CASE("adam: first step has magnitude ~ lr in the gradient sign") {
  ParamT<float> p("w", Tensor::from_data({2}, {0.0f, 0.0f}));
  Adam::Options o;
  o.lr = 0.01f;
  Adam opt({&p}, o);
  backward(mean_all(mul(p.value, Tensor::from_data({2}, {4.0f, -6.0f}))));
  opt.step();
  CHECK(p.value.data()[0] == doctest::Approx(-0.01).epsilon(1e-3));
  CHECK(p.value.data()[1] == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("adam: missing grad names the parameter") {
  ParamT<float> p("gen.enc.conv1.weight", Tensor::from_data({1}, {1.0f}));
  Adam opt({&p});
  try {
    opt.step();
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("gen.enc.conv1.weight") != std::string::npos);
  }
}

TEST_CASE("adam: 100 steps on (w-5)^2 converge, matching the scalar recurrence") {
  // Reference recurrence in plain doubles.
  double w_ref = 0.0, m = 0.0, v = 0.0;
  double lr = 0.1, b1 = 0.5, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    double g = 2.0 * (w_ref - 5.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, t));
    double vh = v / (1 - std::pow(b2, t));
    w_ref -= lr * mh / (std::sqrt(vh) + eps);
  }
  CHECK(std::abs(w_ref - 5.0) < 0.5);

  ParamT<double> p("w", TensorT<double>::from_data({1}, {0.0}));
  typename AdamT<double>::Options o;
  o.lr = 0.1;
  AdamT<double> opt({&p}, o);
  for (int t = 1; t <= 100; ++t) {
    p.value.zero_grad();
    auto target = TensorT<double>::from_data({1}, {5.0});
    backward(mean_all(square(sub(p.value, target))));
    opt.step();
  }
  CHECK(p.value.data()[0] == doctest::Approx(w_ref).epsilon(1e-9));
  CHECK(std::abs(p.value.data()[0] - 5.0) < 0.5);
}

TEST_CASE("optimizer trajectories are deterministic under a fixed seed") {
  auto run = [] {
    std::mt19937 rng(99);
    ParamT<float> w("w", Tensor::randn({4, 3, 3, 3}, rng, 0.1f));
    Adam opt({&w});
    auto x = Tensor::randn({2, 3, 6, 6}, rng);
    for (int i = 0; i < 5; ++i) {
      w.value.zero_grad();
      backward(mean_all(square(conv2d(x, w.value, 1, 1))));
      opt.step();
    }
    return w.value.data();
  };
  CHECK(run() == run());
}
