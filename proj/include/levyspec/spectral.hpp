#pragma once

#include "levyspec/ecf.hpp"
#include "levyspec/levy_models.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace levyspec {

/// Pointwise truncation levels 0 < lower(u) <= upper(u) < 1.
struct TruncationLevels {
    enum class Kind { Constant, PriorBased, Tabulated };

    Kind kind = Kind::Constant;
    double lo = 0.01;
    double hi = 0.95;

    // PriorBased: lower(u) = c1 exp(-2 pi_plus |u|^alpha_upper) |u|^-alpha_upper,
    //             upper(u) = c2 exp(-2 pi_minus |u|^alpha_lower),
    // for prior bounds alpha_lower <= alpha <= alpha_upper and pi_minus <= Re(eta tau) <= pi_plus.
    double c1 = 0.01;
    double c2 = 0.95;
    double pi_minus = 0.5;
    double pi_plus = 1.0;
    double alpha_lower = 0.5;
    double alpha_upper = 2.0;

    // Tabulated: values at the listed nodes (exact node lookup).
    std::vector<double> nodes;
    std::vector<double> lower_tab;
    std::vector<double> upper_tab;

    static TruncationLevels constant(double lo, double hi);
    static TruncationLevels prior_based(double c1, double c2, double pi_minus, double pi_plus, double alpha_lower,
                                        double alpha_upper);
    static TruncationLevels tabulated(std::vector<double> nodes, std::vector<double> lower,
                                      std::vector<double> upper);

    double lower(double u) const;
    double upper(double u) const;
    void validate() const;
};

/// Clamp values[j] into [lower(grid[j]), upper(grid[j])].
std::vector<double> truncate(const std::vector<double>& values, const std::vector<double>& grid,
                             const TruncationLevels& levels);
double truncate(double value, double lower, double upper);

/// Linearisation levels omega*_-/+ = |phi|^2 (1 -/+ 2L/(1+2L)), L = -log|phi|.
TruncationLevels oracle_levels(const std::vector<double>& grid, const std::vector<double>& phi_mod2);

struct ZetaCoefficients {
    std::vector<double> zeta1;
    std::vector<double> zeta2;
};

/// zeta1 = 1 / (|phi|^2 log|phi|^2); zeta2 = 2 max over the two levels of
/// (1 + |log x|) / (x^2 log^2 x).
ZetaCoefficients zeta_coefficients(const std::vector<double>& grid, const std::vector<double>& phi_mod2,
                                   const TruncationLevels& levels);

struct SpectralCurve {
    std::vector<double> grid;
    std::vector<double> values;
    std::vector<int> clipped; // -1 lower level active, +1 upper, 0 none
    TruncationLevels levels;
};

/// Y~(u) = log(-log T[|phi~|^2](u)) on the positive grid nodes.
SpectralCurve y_curve(const CFEstimate& cf, const TruncationLevels& levels);

/// Weight w^U(u) = U^{-1} w1(u/U), w1(s) = s 1{ell <= s <= 1} (A1 log s - A2),
/// normalised so that int w1 = 0 and int w1 log s = 1.
struct WeightSpec {
    double U = 1.0;
    double ell = 0.1;
    double A1 = 0.0;
    double A2 = 0.0;

    double w1(double s) const;
    double wU(double u) const;
};

WeightSpec build_weight(double U, double ell);

/// Discrete weights c_j on the grid nodes inside [ell U, U] such that
/// sum c_j Y(u_j) is the weighted least-squares slope of Y on log u with
/// trapezoid-times-s weights. This is the closed form of w^U with A1, A2
/// re-solved for the node set, so affine-in-log-u curves are recovered exactly.
struct NodeWeights {
    std::vector<std::size_t> index;
    std::vector<double> c;
};

NodeWeights node_weights(const std::vector<double>& grid, const WeightSpec& w);

/// alpha~_U = int w^U Y~ du.
double estimate_alpha(const SpectralCurve& curve, const WeightSpec& w);

/// R_U = int w^U(u) log Re tau(u) du with tau = -theta(u) / (eta |u|^alpha)
/// from the exact exponent (Simpson rule with `nodes` intervals).
double bias_RU(const ModelSpec& model, const WeightSpec& w, double t = 1.0, std::size_t nodes = 10000);

enum class Regime { P, Q, Diffusion };

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view name);

/// U-bar = [(2 c)^{-1} log(eps^{-1} log^{-beta}(1/eps))]^{1/p}, with
/// (c, p, beta) = (eta_+, alpha_bar, 1 + varkappa/alpha_bar) under P,
/// (eta_+, alpha_bar, (varkappa + 4)/alpha_bar - 1) under Q and
/// (a_bar, 2, 1 + varkappa/2) for the diffusion variant.
double theoretical_cutoff(double eps, const RLEClassSpec& cls, Regime regime);

enum class KernelKind { Linearized, Printed };
enum class ZetaMode { PlugIn, Envelope };

struct VarianceOptions {
    KernelKind kernel = KernelKind::Linearized;
    ZetaMode zeta = ZetaMode::PlugIn;
    TruncationLevels levels;
    // When set, nodes whose estimate sits at the lower truncation level are
    // taken to carry no usable bound on zeta1 and the rung variance is +inf.
    bool unbounded_on_lower_clip = false;
};

struct VarianceResult {
    double sigma2 = 0.0;     // variance of alpha~ is eps * sigma2
    bool clipped_negative = false;
    std::size_t clamped_pairs = 0;
    bool unbounded = false;
};

/// sigma^2 = sum_ij c_i zeta1_i c_j zeta1_j K(u_i, u_j) with plug-in zeta1 and kernel.
VarianceResult variance_sigma(const CFEstimate& cf, const WeightSpec& w, const VarianceOptions& opt = {});

struct RemainderBoundReport {
    std::vector<double> grid;
    std::vector<double> residual; // |Q(u)| - zeta2(u) Delta(u)^2
    double max_excess = 0.0;
};

/// Checks Y~ - Y = zeta1 Delta + Q with |Q| <= zeta2 Delta^2 at every positive node.
RemainderBoundReport remainder_bound_residual(const CFEstimate& cf, const std::vector<double>& exact_phi_mod2,
                               const TruncationLevels& levels);

struct RatioCurve {
    std::vector<double> grid;
    std::vector<double> values;
};

/// rho~_xi(u) = |phi~(u)|^{xi^2} / |phi~(xi u)| at the positive nodes u with xi u
/// inside the cf grid, so log rho_xi = xi^2 L(u) - L(xi u) with L = log|phi|.
/// Y~_xi truncates rho~_xi^2, the analogue of |phi~|^2 in Y~.
RatioCurve rho_xi(const CFEstimate& cf, double xi);

SpectralCurve y_curve_xi(const CFEstimate& cf, double xi, const TruncationLevels& levels);

double estimate_alpha_xi(const CFEstimate& cf, double xi, const TruncationLevels& levels, const WeightSpec& w);

/// Delta-method variance of alpha~_xi, same conventions as variance_sigma.
VarianceResult variance_sigma_xi(const CFEstimate& cf, double xi, const WeightSpec& w,
                                 const VarianceOptions& opt = {});

void write_spectral_csv(std::ostream& os, const SpectralCurve& curve);

} // namespace levyspec
