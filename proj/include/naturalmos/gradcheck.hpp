#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "naturalmos/lstm.hpp"
#include "naturalmos/ops.hpp"
#include "naturalmos/rng.hpp"
#include "naturalmos/tensor.hpp"

namespace naturalmos {

namespace detail {

/// loss = sum_i r_i * out_i with fixed random positive weights, so that every
/// upstream gradient is generically nonzero (a plain sum makes some
/// batch-norm gradients structurally zero).
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& t, const std::vector<T>& r) {
  T acc = T(0);
  for (std::size_t i = 0; i < t.numel(); ++i) acc += t.data()[i] * r[i];
  auto backward = [r](typename Tensor<T>::Node& self) {
    auto& in_node = *self.parents[0];
    if (!in_node.requires_grad) return;
    for (std::size_t i = 0; i < in_node.grad.size(); ++i)
      in_node.grad[i] += self.grad[0] * r[i];
  };
  return Tensor<T>::make_op({1}, {acc}, {t}, std::move(backward));
}

}  // namespace detail

/// A differentiable function under test: fresh tensors in, one output tensor
/// out. It must rebuild its graph on every call.
using GradCheckFn =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Central-difference gradient verification in 64-bit mode.
///
/// The output is reduced to a scalar with fixed random weights, backward()
/// supplies analytic gradients, and every input coordinate is perturbed by
/// +-h to form (f(x+h) - f(x-h)) / 2h. Returns the max relative error over
/// all coordinates, with the denominator floored at 1e-3 so coordinates with
/// near-zero gradients compare on an absolute scale.
inline double finite_diff_gradcheck(const GradCheckFn& fn,
                                    const std::vector<std::vector<double>>& input_values,
                                    const std::vector<std::vector<std::size_t>>& input_shapes,
                                    double h = 1e-5, std::uint64_t weight_seed = 1234) {
  auto build = [&](int perturb_input, std::size_t perturb_idx, double delta,
                   bool with_grad) {
    std::vector<Tensor<double>> tensors;
    tensors.reserve(input_values.size());
    for (std::size_t i = 0; i < input_values.size(); ++i) {
      auto vals = input_values[i];
      if (static_cast<int>(i) == perturb_input) vals[perturb_idx] += delta;
      tensors.push_back(
          Tensor<double>::from_values(input_shapes[i], std::move(vals), with_grad));
    }
    return tensors;
  };

  auto probe = fn(build(-1, 0, 0.0, false));
  RngStream wstream(weight_seed, "gradcheck-weights");
  std::vector<double> r(probe.numel());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 0.5 + wstream.uniform(i);

  auto eval_scalar = [&](int pi, std::size_t pj, double delta) {
    auto out = fn(build(pi, pj, delta, false));
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += out.data()[i] * r[i];
    return acc;
  };

  auto inputs = build(-1, 0, 0.0, true);
  auto out = fn(inputs);
  auto loss = detail::weighted_sum(out, r);
  backward(loss);

  double max_rel = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& grad = inputs[i].grad();
    for (std::size_t j = 0; j < grad.size(); ++j) {
      const double analytic = grad[j];
      const double numeric =
          (eval_scalar(static_cast<int>(i), j, h) - eval_scalar(static_cast<int>(i), j, -h)) /
          (2.0 * h);
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
      max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
    }
  }
  return max_rel;
}

struct GradCheckCase {
  std::string name;
  double threshold;
  double max_rel_err;
  bool passed;
};

/// The standard verification suite: each layer at `points` randomized points,
/// seeds fixed, all in 64-bit mode. Used by both the command-line `gradcheck`
/// subcommand and the acceptance tests.
inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 1234,
                                                      int points = 5) {
  std::vector<GradCheckCase> results;

  auto fill = [](RngStream& s, std::size_t n, std::size_t& cursor) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = s.uniform(cursor++, -1.0, 1.0);
    return v;
  };

  auto run_case = [&](const std::string& name, double threshold, const GradCheckFn& fn,
                      const std::vector<std::vector<std::size_t>>& shapes) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
      RngStream s(seed, "gradcheck/" + name + "/" + std::to_string(p));
      std::size_t cursor = 0;
      std::vector<std::vector<double>> values;
      values.reserve(shapes.size());
      for (const auto& sh : shapes) values.push_back(fill(s, detail::shape_numel(sh), cursor));
      worst = std::max(worst,
                       finite_diff_gradcheck(fn, values, shapes, 1e-5, seed + p));
    }
    results.push_back({name, threshold, worst, worst < threshold});
  };

  run_case(
      "linear", 1e-7,
      [](const std::vector<Tensor<double>>& in) { return linear(in[0], in[1], in[2]); },
      {{3, 5}, {4, 5}, {4}});

  run_case(
      "conv2d", 1e-6,
      [](const std::vector<Tensor<double>>& in) { return conv2d(in[0], in[1], in[2]); },
      {{2, 2, 4, 5}, {3, 2, 3, 3}, {3}});

  run_case(
      "batchnorm2d_train", 1e-5,
      [](const std::vector<Tensor<double>>& in) {
        auto rm = Tensor<double>({in[0].dim(1)});
        auto rv = Tensor<double>({in[0].dim(1)}, 1.0);
        return batchnorm2d(in[0], in[1], in[2], rm, rv, true);
      },
      {{2, 3, 3, 4}, {3}, {3}});

  run_case(
      "bilstm", 1e-5,
      [](const std::vector<Tensor<double>>& in) {
        return bilstm(in[0], in[1], in[2], in[3], in[4], in[5], in[6], in[0].dim(0));
      },
      {{3, 3}, {16, 3}, {16, 4}, {16}, {16, 3}, {16, 4}, {16}});

  run_case(
      "mse_loss", 1e-6,
      [](const std::vector<Tensor<double>>& in) { return mse_loss(in[0], in[1]); },
      {{6}, {6}});

  run_case(
      "relu", 1e-6,
      [](const std::vector<Tensor<double>>& in) { return relu(in[0]); },
      {{4, 7}});

  run_case(
      "maxpool2d_ceil", 1e-6,
      [](const std::vector<Tensor<double>>& in) { return maxpool2d_ceil(in[0]); },
      {{2, 2, 5, 5}});

  return results;
}

}  // namespace naturalmos
