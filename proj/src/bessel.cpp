#include "levyspec/bessel.hpp"

#include "levyspec/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace levyspec {

namespace {

using cd = std::complex<double>;

constexpr double kTailTol = 1e-18;
constexpr double kRelTol = 1e-13;
constexpr int kMaxHalvings = 22;

// exp(-z (cosh t - 1)) cosh(nu t), computed in log space so cosh(nu t) cannot
// overflow before the exponential decay kicks in.
cd integrand(double nu, cd z, double t) {
    const double cm1 = 2.0 * std::sinh(0.5 * t) * std::sinh(0.5 * t); // cosh t - 1
    const double at = std::abs(nu) * t;
    // cosh(nu t) = 0.5 e^{|nu| t} (1 + e^{-2|nu| t})
    const double log_cosh = at + std::log1p(std::exp(-2.0 * at)) - std::log(2.0);
    const cd expo = -z * cm1 + log_cosh;
    return std::exp(expo);
}

// Log-magnitude of the integrand, used for the truncation point.
double log_abs_integrand(double nu, double re_z, double t) {
    const double cm1 = 2.0 * std::sinh(0.5 * t) * std::sinh(0.5 * t);
    const double at = std::abs(nu) * t;
    return -re_z * cm1 + at + std::log1p(std::exp(-2.0 * at)) - std::log(2.0);
}

} // namespace

cd bessel_k_scaled(double order, cd z) {
    if (!(z.real() > 0.0) || !std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        std::ostringstream os;
        os << "bessel_k: requires Re z > 0, got z = " << z;
        fail(ErrorCode::DomainError, os.str());
    }
    const double nu = std::abs(order);
    const double re_z = z.real();

    // Past the peak of the integrand, find where it drops below the tail tolerance
    // relative to its value at t = 0 (which is 1 in scaled form) or at the peak.
    const double t_peak = std::asinh(nu / re_z);
    const double log_peak = std::max(0.0, log_abs_integrand(nu, re_z, t_peak));
    double t_max = std::max(1.0, 2.0 * t_peak);
    const double log_tol = std::log(kTailTol) + log_peak;
    while (log_abs_integrand(nu, re_z, t_max) > log_tol) {
        t_max *= 1.25;
        if (t_max > 1e3) fail(ErrorCode::NonConvergence, "bessel_k: integrand tail does not decay");
    }

    // Initial step resolves both the decay scale and the oscillation of
    // exp(-i Im z cosh t) near t_max.
    const double osc = std::abs(z.imag()) * std::sinh(t_max) + nu;
    double h = std::min(0.5, t_max / 16.0);
    if (osc > 0.0) h = std::min(h, 1.0 / osc);
    std::size_t count = static_cast<std::size_t>(std::ceil(t_max / h));
    h = t_max / static_cast<double>(count);

    cd sum = 0.5 * integrand(nu, z, 0.0);
    for (std::size_t k = 1; k <= count; ++k) sum += integrand(nu, z, static_cast<double>(k) * h);
    cd estimate = h * sum;

    for (int level = 0; level < kMaxHalvings; ++level) {
        // Midpoints of the current panels.
        cd mid = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            mid += integrand(nu, z, (static_cast<double>(k) + 0.5) * h);
        }
        sum += mid;
        h *= 0.5;
        count *= 2;
        const cd refined = h * sum;
        const double scale = std::max(std::abs(refined), std::numeric_limits<double>::min());
        if (std::abs(refined - estimate) <= kRelTol * scale && level >= 1) {
            return refined;
        }
        estimate = refined;
    }
    std::ostringstream os;
    os << "bessel_k: quadrature did not converge for nu = " << order << ", z = " << z;
    fail(ErrorCode::NonConvergence, os.str());
}

cd bessel_k(double order, cd z) {
    return std::exp(-z) * bessel_k_scaled(order, z);
}

cd log_bessel_k(double order, cd z) {
    return -z + std::log(bessel_k_scaled(order, z));
}

} // namespace levyspec
