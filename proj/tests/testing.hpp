#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "como/tensor.hpp"

namespace como::testing {

inline double rel_err(double a, double b) {
  double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Central finite differences in 64-bit mode against the recorded backward.
// loss_fn must rebuild the forward pass from the current tensor contents.
template <class F>
void gradcheck(const std::vector<TensorT<double>*>& wrt, F&& loss_fn, double tol = 1e-4,
               double h = 1e-3) {
  for (auto* t : wrt) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  TensorT<double> loss = loss_fn();
  REQUIRE(loss.numel() == 1);
  backward(loss);
  std::vector<std::vector<double>> grads;
  grads.reserve(wrt.size());
  for (auto* t : wrt) {
    REQUIRE(t->has_grad());
    grads.push_back(t->grad());
  }
  for (size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& data = wrt[ti]->mutable_data();
    for (size_t i = 0; i < data.size(); ++i) {
      double orig = data[i];
      double fp, fm;
      {
        NoGradGuard ng;
        data[i] = orig + h;
        fp = loss_fn().item();
        data[i] = orig - h;
        fm = loss_fn().item();
      }
      data[i] = orig;
      double fd = (fp - fm) / (2.0 * h);
      double g = grads[ti][i];
      bool both_tiny = std::abs(fd) < 1e-7 && std::abs(g) < 1e-7;
      INFO("tensor ", ti, " coord ", i, " analytic ", g, " fd ", fd);
      CHECK((both_tiny || rel_err(g, fd) < tol));
    }
  }
  for (auto* t : wrt) t->zero_grad();
}

// Random tensor with entries nudged away from zero (for kinked ops).
template <class S>
TensorT<S> random_away_from_zero(const Shape& shape, std::mt19937& rng, double margin = 0.05) {
  std::uniform_real_distribution<double> mag(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<S> v(static_cast<size_t>(numel_of(shape)));
  for (auto& x : v) x = static_cast<S>(sign(rng) ? mag(rng) : -mag(rng));
  return TensorT<S>::from_data(shape, std::move(v));
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

inline double max_abs_diff64(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace como::testing
