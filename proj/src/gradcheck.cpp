#include "lsnt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lsnt/errors.hpp"

namespace lsnt {

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> at, double eps) {
    if (eps <= 0.0) throw ParameterError("finite_diff_grad: eps must be positive");
    std::vector<double> grad(at.size());
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double x0 = at[i];
        at[i] = x0 + eps;
        const double fp = f(at);
        at[i] = x0 - eps;
        const double fm = f(at);
        at[i] = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw OracleError("finite_diff_grad: non-finite value at coordinate " +
                              std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

double grad_rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace lsnt
