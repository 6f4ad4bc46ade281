#include "capstag/grad_check.hpp"

#include <cmath>
#include <vector>

#include "capstag/errors.hpp"

namespace capstag {

namespace {

double eval_scalar(const std::function<Var(Tape&)>& f) {
  Tape tape;
  Var out = f(tape);
  const Tensor& v = tape.value(out);
  if (v.size() != 1) throw DimensionError("grad_check: computation must be scalar");
  if (!std::isfinite(v.data[0])) throw NumericError("grad_check: non-finite loss");
  return v.data[0];
}

}  // namespace

GradCheckReport grad_check_report(const std::function<Var(Tape&)>& f,
                                  std::span<Parameter* const> params, double eps) {
  if (eps < 1e-6 || eps > 1e-4)
    throw ConfigError("grad_check eps must lie in [1e-6, 1e-4], got " + std::to_string(eps));

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    if (tape.value(out).size() != 1) throw DimensionError("grad_check: computation must be scalar");
    if (!std::isfinite(tape.value(out).data[0])) throw NumericError("grad_check: non-finite loss");
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      const double up = eval_scalar(f);
      p.value.data[i] = saved - eps;
      const double down = eval_scalar(f);
      p.value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite finite difference");
      const double a = analytic[pi].data[i];
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                  double eps) {
  return grad_check_report(f, params, eps).max_rel_err;
}

}  // namespace capstag
