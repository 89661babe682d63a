#pragma once

#include "levyspec/ecf.hpp"
#include "levyspec/option_market.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace levyspec {

/// phi~(u) = 1 - u(u+i) sum_j delta_j O~(y_j) e^{iuy_j} on exp-weighted quotes,
/// tagged with eps = noise_level(quotes).
CFEstimate direct_cf_Q(const OptionQuoteSet& quotes, const std::vector<double>& u_grid);

/// Natural cubic smoothing spline, stored as values and slopes at the knots
/// (cubic Hermite pieces). With
/// pinned ends the first and last knots are the extrapolated points
/// y_1 - 5 and y_n + 5, held at exactly 0.
struct SplineFit {
    std::vector<double> knots;
    std::vector<double> values; // fitted values at the knots (the theta_j of the value basis)
    std::vector<double> slopes;
    double L = 0.0;
    double gcv_score = 0.0;
    double trace_hat = 0.0;
    bool pinned = true;
    bool weighted = false; // fitted to O~ = e^{-y} O rather than O

    double operator()(double y) const; // pinned: 0 outside the knots; otherwise linear extrapolation
    std::vector<double> evaluate(const std::vector<double>& ys) const;
    double roughness() const; // int O''^2
};

struct SplineOptions {
    bool pinned = true;
    double extrapolation = 5.0;
};

/// Minimiser of sum_i (z_i - O(y_i))^2 + L int O''^2 over natural cubic
/// splines with knots at the data (plus the pinned ends), in O(n). Throws
/// SingularSystem on duplicate abscissae.
SplineFit spline_fit(const std::vector<double>& y, const std::vector<double>& z, double L,
                     const SplineOptions& opt = {});
/// Fits quotes.noisy as given; exp-weighted quotes yield a weighted fit.
SplineFit spline_fit(const OptionQuoteSet& quotes, double L, const SplineOptions& opt = {});

struct GcvScan {
    std::vector<double> L;
    std::vector<double> score;
    std::vector<double> trace_hat;
    std::size_t best = 0;
};

/// GCV(L) = n RSS(L) / (n - tr H_L)^2 on 60 log-spaced L in [1e-8, 1e4].
GcvScan gcv_scan(const std::vector<double>& y, const std::vector<double>& z, const SplineOptions& opt = {},
                 std::size_t count = 60, double L_min = 1e-8, double L_max = 1e4);
double gcv_select(const std::vector<double>& y, const std::vector<double>& z, const SplineOptions& opt = {});
double gcv_select(const OptionQuoteSet& quotes, const SplineOptions& opt = {});

/// int e^{ivy} e^{-y} f(y) dy over [a, b] (f vanishing at both ends; without
/// the e^{-y} factor when damp is false) from an FFT of 2^15 samples
/// zero-padded eightfold, cubic interpolation in v.
std::vector<cplx> damped_fourier(const std::function<double(double)>& f, double a, double b,
                                 const std::vector<double>& v_grid, bool damp = true,
                                 std::size_t samples = 1u << 15, std::size_t pad = 8);

/// F[O^](v + i) of the fitted curve. A fit of weighted quotes already carries
/// the e^{-y} factor.
std::vector<cplx> fourier_of_fit(const SplineFit& fit, const std::vector<double>& v_grid);

struct ExponentCurve {
    std::vector<double> grid;
    std::vector<cplx> values;
    bool branch_anchor = false;   // psi~(0) = 0 held at the start of the unwinding
    std::size_t ambiguous_steps = 0; // adjacent phase steps at or above the threshold
};

/// psi~(v) = T^{-1} log(1 - v(v+i) F(v+i)), the log unwound outward from v = 0.
/// Throws BranchAmbiguity on a phase step >= threshold when strict, and
/// VanishingDenominator when the argument is within 1e-12 of 0.
ExponentCurve exponent_from_transform(const std::vector<cplx>& F, const std::vector<double>& v_grid, double T,
                                      bool strict = true, double threshold = 0.9 * 3.14159265358979323846);

/// exp(T psi~) as a Q-measure CFEstimate with the given noise level.
CFEstimate cf_from_exponent(const ExponentCurve& curve, double T, double eps);

void write_exponent_csv(std::ostream& os, const ExponentCurve& curve);

} // namespace levyspec
