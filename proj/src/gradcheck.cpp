#include "fsloc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fsloc/error.hpp"

namespace fsloc {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void update_worst(GradCheckResult& r, std::size_t i, double a, double n) {
  const double e = relative_error(a, n);
  if (e > r.max_rel_error || (i == 0 && r.max_rel_error == 0.0)) {
    r.max_rel_error = e;
    r.worst_index = i;
    r.analytic = a;
    r.numeric = n;
  }
}

}  // namespace

GradCheckResult compare_gradient(const std::function<double(const Tensor&)>& f, const Tensor& point,
                                 const Tensor& analytic, double eps) {
  if (analytic.size() != point.size()) throw ShapeError("compare_gradient: gradient size mismatch");
  GradCheckResult r;
  Tensor x = point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    update_worst(r, i, analytic[i], (fp - fm) / (2.0 * eps));
  }
  return r;
}

GradCheckResult grad_check(const TapeFunction& f, const Tensor& point, double eps) {
  ad::Tape tape;
  ad::Var x = tape.input(point);
  ad::Var y = f(tape, x);
  tape.backward(y);
  const Tensor analytic = tape.grad(x);
  auto value = [&](const Tensor& p) {
    ad::Tape t;
    return t.value(f(t, t.input(p))).item();
  };
  return compare_gradient(value, point, analytic, eps);
}

std::vector<ParameterCheck> check_parameter_gradients(ParameterStore& store,
                                                      const std::function<double(const ParameterStore&)>& loss,
                                                      const Gradients& analytic, double eps) {
  if (analytic.size() != store.size()) throw ShapeError("check_parameter_gradients: slot count mismatch");
  std::vector<ParameterCheck> out;
  for (std::size_t s = 0; s < store.size(); ++s) {
    Parameter& p = store[s];
    if (!p.trainable) continue;
    const Tensor grad = analytic[s].empty() ? Tensor(p.value.shape()) : analytic[s];
    ParameterCheck pc{p.name, p.value.size(), {}};
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double fp = loss(store);
      p.value[i] = orig - eps;
      const double fm = loss(store);
      p.value[i] = orig;
      update_worst(pc.result, i, grad[i], (fp - fm) / (2.0 * eps));
    }
    out.push_back(std::move(pc));
  }
  return out;
}

}  // namespace fsloc
