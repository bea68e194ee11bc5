#pragma once

#include <functional>
#include <vector>

namespace lsnt {

/// Central-difference gradient of a scalar function of a parameter vector:
/// (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps) per coordinate.
/// Throws OracleError if f returns a non-finite value at any probe point.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> at, double eps = 1e-5);

/// Guarded relative error between an analytic and a numeric gradient entry:
/// |a - n| / max(|a|, |n|, 1e-5).
double grad_rel_error(double analytic, double numeric);

}  // namespace lsnt
