#pragma once

#include <complex>

namespace levyspec {

/// Modified Bessel function of the second kind K_nu(z) for Re z > 0, from
///   K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt.
/// The integrand is analytic and decays double-exponentially, so the
/// trapezoid rule converges geometrically; the step is halved until two
/// successive sums agree to ~1e-13 relative.
std::complex<double> bessel_k(double order, std::complex<double> z);

/// exp(z) * K_nu(z). Stays representable for large |z| where K_nu underflows.
std::complex<double> bessel_k_scaled(double order, std::complex<double> z);

/// log K_nu(z), principal branch of the scaled part.
std::complex<double> log_bessel_k(double order, std::complex<double> z);

} // namespace levyspec
