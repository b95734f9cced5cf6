#include "artuda/gradcheck.hpp"

#include <cmath>

#include "artuda/errors.hpp"

namespace artuda::autodiff {

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: h must be > 0");

  Tape tape;
  Var xv = tape.input(x, /*requires_grad=*/true);
  Var loss = f(tape, xv);
  if (!tape.value(loss).is_scalar()) {
    throw ShapeError("finite_diff_check: f is not scalar-valued");
  }
  Tensor analytic = tape.input_gradient(loss, xv);

  auto eval = [&](const Tensor& probe) {
    Tape t;
    Var pv = t.constant(probe);
    return t.value(f(t, pv)).item();  // tape ops reject non-finite values
  };

  std::vector<double> base(x.values().begin(), x.values().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> vp = base, vm = base;
    vp[i] += h;
    vm[i] -= h;
    double fd = (eval(Tensor(x.shape(), vp)) - eval(Tensor(x.shape(), vm))) /
                (2.0 * h);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace artuda::autodiff
