// Copyright 2026 The mmtdelib Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "mmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmt {

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>>;

template <typename Scalar>
void zero_grad(ParameterList<Scalar>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update using the gradients stored on `params`.
/// Parameters without a gradient are treated as having a zero gradient.
/// Nothing is modified if any gradient is non-finite.
template <typename Scalar>
void adam_step(ParameterList<Scalar>& params, AdamState<Scalar>& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix<Scalar>::Zero(p.tensor.rows(), p.tensor.cols()));
      state.v.push_back(Matrix<Scalar>::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].rows() != p.tensor.rows() || state.m[i].cols() != p.tensor.cols()) {
      throw ShapeError("adam_step: state for '" + p.name + "' is " +
                       shape_string(state.m[i].rows(), state.m[i].cols()) + ", parameter is " +
                       p.tensor.shape());
    }
    if (p.tensor.has_grad() && !p.tensor.grad().allFinite()) {
      throw NonFiniteGradient("adam_step: non-finite gradient for parameter '" + p.name + "'");
    }
  }

  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar step = static_cast<Scalar>(lr / bc1);
  const Scalar inv_bc2 = static_cast<Scalar>(1.0 / bc2);
  const Scalar eps = static_cast<Scalar>(state.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    if (!p.has_grad()) {
      state.m[i] *= b1;
      state.v[i] *= b2;
    } else {
      const auto& g = p.grad();
      state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
      state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
    }
    p.value().array() -=
        step * state.m[i].array() / ((state.v[i].array() * inv_bc2).sqrt() + eps);
  }
}

/// Inverse-square-root schedule with linear warmup:
/// base * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
inline double lr_schedule(std::int64_t step, double base, std::int64_t warmup, std::int64_t d_model) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  if (warmup < 1 || d_model < 1) throw std::invalid_argument("lr_schedule: warmup and d_model must be positive");
  const double s = static_cast<double>(step);
  return base / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(static_cast<double>(warmup), -1.5));
}

}  // namespace mmt
