#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace levyspec {

using cplx = std::complex<double>;

enum class Family { SymmetricStable, GeneralizedHyperbolic, StablePlusDiffusion };

std::string_view to_string(Family family);
Family family_from_string(std::string_view name);

struct StableParams {
    double eta = 1.0;   // scale: |phi_1(u)| = exp(-eta |u|^alpha)
    double alpha = 1.0; // index in (0, 2]
};

struct GhParams {
    double kappa = 1.0;
    double beta = 0.0;
    double delta = 1.0;
    double lambda = 1.0;
};

/// A Levy model given through its characteristic exponent
///   psi(u) = i mu u - a^2 u^2 / 2 + theta(u),
/// per unit time. Only the jump block of the declared family is populated.
///
/// StablePlusDiffusion accepts eta = 0 (pure Brownian motion with drift) and
/// GeneralizedHyperbolic accepts a > 0 (GH plus an independent diffusion).
struct ModelSpec {
    Family family = Family::SymmetricStable;
    double mu = 0.0;
    double a = 0.0;
    std::optional<StableParams> stable;
    std::optional<GhParams> gh;

    static ModelSpec symmetric_stable(double eta, double alpha, double mu = 0.0);
    static ModelSpec stable_plus_diffusion(double eta, double alpha, double a, double mu = 0.0);
    static ModelSpec generalized_hyperbolic(double kappa, double beta, double delta, double lambda,
                                            double mu = 0.0, double a = 0.0);

    /// Throws InvalidArgument when a family invariant is violated.
    void validate() const;
};

/// Prior class A(alpha_bar, eta_-, eta_+, varkappa) plus the diffusion bound a_bar.
struct RLEClassSpec {
    double alpha_bar = 2.0;
    double eta_minus = 0.5;
    double eta_plus = 1.0;
    double varkappa = 1.0;
    double a_bar = 0.0;

    void validate() const;
};

struct IncrementSample {
    double dt = 1.0;
    std::vector<double> values;
    std::uint64_t seed = 0;
};

/// psi(u) at complex u. Real u is always valid; off the real axis only the
/// analytic families are continued (GH inside its strip, Gaussian parts
/// everywhere). Non-analytic stable jumps raise NotContinuable.
cplx char_exponent(const ModelSpec& model, cplx u);
cplx char_exponent(const ModelSpec& model, double u);

/// phi_t(u) = exp(t psi(u)).
cplx cf_at(const ModelSpec& model, double t, double u);
cplx cf_at(const ModelSpec& model, double t, cplx u);

/// Shift mu so that psi(-i) = 0, i.e. E[exp(Y_t)] = 1.
ModelSpec risk_neutralize(const ModelSpec& model);

/// First two cumulants per unit time from finite differences of psi at 0.
/// Infinite for stable jumps with alpha < 2.
double mean_per_unit_time(const ModelSpec& model);
double variance_per_unit_time(const ModelSpec& model);

/// Blumenthal-Getoor index: alpha for the stable families, 1 for GH.
double true_fractional_order(const ModelSpec& model);

/// The eta in theta(u) ~ -eta |u|^alpha tau(u) with tau -> 1 (delta for GH).
/// Zero for a pure diffusion.
double jump_scale(const ModelSpec& model);

// ---------------------------------------------------------------------------
// Density by Fourier inversion.

struct UniformGrid {
    double center = 0.0;
    double width = 1.0;
    std::size_t points = 1u << 14;

    double spacing() const { return width / static_cast<double>(points); }
    double node(std::size_t j) const {
        return center + (static_cast<double>(j) - static_cast<double>(points / 2)) * spacing();
    }
};

struct DensityGrid {
    UniformGrid grid;
    std::vector<double> values;
    double max_negative = 0.0; // most negative value clipped away (as a positive number)
    double peak = 0.0;
};

/// p_t(x) on the grid, obtained from phi_t by FFT. Throws GridTooNarrow when
/// the density at either boundary exceeds 1e-7 of the peak.
DensityGrid density_on_grid(const ModelSpec& model, double t, const UniformGrid& grid);

/// density_on_grid on a 2^14 grid whose width is doubled from a cf-derived
/// starting value until the boundary criterion holds.
DensityGrid auto_density(const ModelSpec& model, double t, std::size_t points = 1u << 14);

// ---------------------------------------------------------------------------
// Sampling.

enum class SamplerKind {
    Auto,      // exact Chambers-Mallows-Stuck for stable jumps, inversion otherwise
    Inversion, // inverse CDF of the trapezoid-integrated density grid
};

/// Precomputed sampler for i.i.d. increments over a fixed step.
class IncrementSampler {
public:
    IncrementSampler(const ModelSpec& model, double dt, SamplerKind kind = SamplerKind::Auto);

    IncrementSample sample(std::size_t n, std::uint64_t seed) const;
    void fill(std::vector<double>& out, std::size_t n, std::uint64_t seed) const;

    bool uses_inversion() const { return !cdf_.empty(); }

private:
    ModelSpec model_;
    double dt_;
    std::vector<double> nodes_;
    std::vector<double> cdf_;
};

IncrementSample sample_increments(const ModelSpec& model, double dt, std::size_t n, std::uint64_t seed,
                                  SamplerKind kind = SamplerKind::Auto);

} // namespace levyspec
