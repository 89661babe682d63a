#pragma once

#include "levyspec/levy_models.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace levyspec {

enum class Measure { P, Q };

std::string_view to_string(Measure m);

/// A characteristic-function curve on a grid of nonnegative frequencies,
/// together with the noise level eps it was estimated at.
struct CFEstimate {
    std::vector<double> grid;
    std::vector<cplx> values;
    double eps = 1.0;
    Measure measure = Measure::P;

    /// Value at u (any sign, using phi(-u) = conj phi(u)). Nodes are hit
    /// exactly; between nodes the curve is interpolated linearly. Outside the
    /// grid: GridRange, or the nearest end node when clamp is set (then
    /// *clamped, if given, is set to true).
    cplx at(double u, bool clamp = false, bool* clamped = nullptr) const;

    /// True when grid[j] = j * spacing for all j.
    bool uniform_from_zero(double* spacing = nullptr) const;

    void validate() const;
};

/// Fast repeated lookup into a CFEstimate; same semantics as CFEstimate::at.
class CfView {
public:
    explicit CfView(const CFEstimate& cf);
    cplx operator()(double u, bool clamp = false, bool* clamped = nullptr) const;

private:
    const CFEstimate* cf_;
    double h_ = 0.0; // > 0 when the grid is uniform from zero
};

/// Grid u_j = j * h, j = 0..count-1.
std::vector<double> uniform_grid(double h, std::size_t count);

/// phi~(u) = n^{-1} sum_j exp(i u x_j) on the grid. Uniform grids starting at
/// zero use the recurrence exp(i(k+1)hx) = exp(ikhx) exp(ihx), re-seeded
/// periodically to bound rounding drift.
CFEstimate empirical_cf(const IncrementSample& sample, const std::vector<double>& grid);

/// Exact cf of the model at time t sampled on the grid, tagged with eps.
CFEstimate exact_cf(const ModelSpec& model, double t, const std::vector<double>& grid, double eps,
                    Measure measure = Measure::P);

/// E[|phi~(u)|^2 - |phi(u)|^2] = eps (1 - |phi(u)|^2).
double mean_delta(const ModelSpec& model, double t, double u, double eps);

using CfFunction = std::function<cplx(double)>;

/// S(u,v) = Re phi(u-v) + Im phi(u+v) - (Re phi(u) + Im phi(u))(Re phi(v) + Im phi(v)),
/// evaluated literally.
double cov_kernel_S(const CfFunction& phi, double u, double v);

/// Plug-in version on an estimated curve. Throws GridRange when u+v leaves the
/// grid unless clamp is set.
double cov_kernel_S(const CFEstimate& cf, double u, double v, bool clamp = false, bool* clamped = nullptr);

/// Limit of eps^{-1} Cov(|phi~(u)|^2, |phi~(v)|^2) as eps -> 0 for i.i.d.
/// data, i.e. 4 Cov(g_u(X), g_v(X)) with g_u(x) = Re(conj(phi(u)) e^{iux}).
/// This is the kernel that actually governs Delta = |phi~|^2 - |phi|^2 to
/// first order.
double linearized_kernel(const CfFunction& phi, double u, double v);
double linearized_kernel(const CFEstimate& cf, double u, double v, bool clamp = false, bool* clamped = nullptr);

/// Exact Cov(|phi~(u)|^2, |phi~(v)|^2) for n = 1/eps i.i.d. draws.
double finite_n_cov(const ModelSpec& model, double t, double u, double v, double eps);

CfFunction model_cf(const ModelSpec& model, double t);

void write_cf_csv(std::ostream& os, const CFEstimate& cf);
CFEstimate read_cf_csv(std::istream& is);

} // namespace levyspec
