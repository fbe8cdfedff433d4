#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fsloc/autodiff.hpp"
#include "fsloc/layers.hpp"

namespace fsloc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero
/// analytically (e.g. a bias feeding batch norm) from dividing by noise.
double relative_error(double analytic, double numeric, double floor = 1e-5);

using TapeFunction = std::function<ad::Var(ad::Tape&, ad::Var)>;

/// Central differences of a scalar tape function against its recorded gradient.
GradCheckResult grad_check(const TapeFunction& f, const Tensor& point, double eps = 1e-5);

/// Central differences of `f` against a supplied analytic gradient.
GradCheckResult compare_gradient(const std::function<double(const Tensor&)>& f, const Tensor& point,
                                 const Tensor& analytic, double eps = 1e-5);

struct ParameterCheck {
  std::string name;
  std::size_t coordinates = 0;
  GradCheckResult result;
};

/// Perturbs every coordinate of every trainable parameter of `store`
/// (restoring it afterwards) and compares with `analytic`.
std::vector<ParameterCheck> check_parameter_gradients(ParameterStore& store,
                                                      const std::function<double(const ParameterStore&)>& loss,
                                                      const Gradients& analytic, double eps = 1e-5);

}  // namespace fsloc
