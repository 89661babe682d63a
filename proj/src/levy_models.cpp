#include "levyspec/levy_models.hpp"

#include "levyspec/bessel.hpp"
#include "levyspec/errors.hpp"
#include "levyspec/fft.hpp"
#include "levyspec/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace levyspec {

namespace {

constexpr cplx kI{0.0, 1.0};

bool is_real(cplx u) { return u.imag() == 0.0; }

cplx stable_part(const StableParams& s, cplx u) {
    if (s.eta == 0.0) return 0.0;
    if (is_real(u)) return -s.eta * std::pow(std::abs(u.real()), s.alpha);
    if (s.alpha == 2.0) return -s.eta * u * u;
    std::ostringstream os;
    os << "symmetric stable exponent with alpha = " << s.alpha
       << " has no analytic continuation off the real axis (u = " << u << ")";
    fail(ErrorCode::NotContinuable, os.str());
}

cplx gh_part(const GhParams& g, cplx u) {
    const cplx w = g.beta + kI * u;
    const cplx arg = g.kappa * g.kappa - w * w;
    if (!is_real(u) && arg.real() <= 0.0 && std::abs(arg.imag()) < 1e-300) {
        std::ostringstream os;
        os << "GH exponent is not continuable to u = " << u << " (kappa^2 - (beta + iu)^2 = " << arg << ")";
        fail(ErrorCode::NotContinuable, os.str());
    }
    const cplx z = std::sqrt(arg);
    const double z0 = std::sqrt(g.kappa * g.kappa - g.beta * g.beta);
    if (!(z.real() > 0.0)) {
        std::ostringstream os;
        os << "GH exponent is not continuable to u = " << u;
        fail(ErrorCode::NotContinuable, os.str());
    }
    return g.lambda * (std::log(cplx(z0)) - std::log(z)) + log_bessel_k(g.lambda, g.delta * z) -
           log_bessel_k(g.lambda, cplx(g.delta * z0));
}

void check_finite(double x, const char* name) {
    if (!std::isfinite(x)) {
        fail(ErrorCode::InvalidArgument, std::string("model parameter ") + name + " must be finite");
    }
}

} // namespace

std::string_view to_string(Family family) {
    switch (family) {
    case Family::SymmetricStable: return "SymmetricStable";
    case Family::GeneralizedHyperbolic: return "GeneralizedHyperbolic";
    case Family::StablePlusDiffusion: return "StablePlusDiffusion";
    }
    return "?";
}

Family family_from_string(std::string_view name) {
    if (name == "SymmetricStable" || name == "stable") return Family::SymmetricStable;
    if (name == "GeneralizedHyperbolic" || name == "gh" || name == "GH") return Family::GeneralizedHyperbolic;
    if (name == "StablePlusDiffusion" || name == "stable_plus_diffusion") return Family::StablePlusDiffusion;
    fail(ErrorCode::InvalidConfig, "unknown model family '" + std::string(name) + "'");
}

ModelSpec ModelSpec::symmetric_stable(double eta, double alpha, double mu) {
    ModelSpec m;
    m.family = Family::SymmetricStable;
    m.mu = mu;
    m.stable = StableParams{eta, alpha};
    m.validate();
    return m;
}

ModelSpec ModelSpec::stable_plus_diffusion(double eta, double alpha, double a, double mu) {
    ModelSpec m;
    m.family = Family::StablePlusDiffusion;
    m.mu = mu;
    m.a = a;
    m.stable = StableParams{eta, alpha};
    m.validate();
    return m;
}

ModelSpec ModelSpec::generalized_hyperbolic(double kappa, double beta, double delta, double lambda, double mu,
                                            double a) {
    ModelSpec m;
    m.family = Family::GeneralizedHyperbolic;
    m.mu = mu;
    m.a = a;
    m.gh = GhParams{kappa, beta, delta, lambda};
    m.validate();
    return m;
}

void ModelSpec::validate() const {
    check_finite(mu, "mu");
    check_finite(a, "a");
    require(a >= 0.0, ErrorCode::InvalidArgument, "diffusion volatility a must be >= 0");
    switch (family) {
    case Family::SymmetricStable:
    case Family::StablePlusDiffusion: {
        require(stable.has_value() && !gh.has_value(), ErrorCode::InvalidArgument,
                "stable families carry exactly the stable parameter block");
        check_finite(stable->eta, "eta");
        check_finite(stable->alpha, "alpha");
        require(stable->alpha > 0.0 && stable->alpha <= 2.0, ErrorCode::InvalidArgument,
                "stable index alpha must lie in (0, 2]");
        if (family == Family::SymmetricStable) {
            require(a == 0.0, ErrorCode::InvalidArgument, "SymmetricStable has no diffusion part (a = 0)");
            require(stable->eta > 0.0, ErrorCode::InvalidArgument, "stable scale eta must be > 0");
        } else {
            require(stable->eta >= 0.0, ErrorCode::InvalidArgument, "stable scale eta must be >= 0");
        }
        break;
    }
    case Family::GeneralizedHyperbolic: {
        require(gh.has_value() && !stable.has_value(), ErrorCode::InvalidArgument,
                "GH family carries exactly the GH parameter block");
        check_finite(gh->kappa, "kappa");
        check_finite(gh->beta, "beta");
        check_finite(gh->delta, "delta");
        check_finite(gh->lambda, "lambda");
        require(gh->kappa > 0.0 && gh->delta > 0.0, ErrorCode::InvalidArgument, "GH needs kappa > 0 and delta > 0");
        require(std::abs(gh->beta) < gh->kappa, ErrorCode::InvalidArgument, "GH needs |beta| < kappa");
        break;
    }
    }
}

void RLEClassSpec::validate() const {
    require(eta_minus > 0.0 && eta_minus <= eta_plus, ErrorCode::InvalidArgument, "RLE class needs 0 < eta_- <= eta_+");
    require(varkappa > 0.0 && varkappa <= alpha_bar && alpha_bar <= 2.0, ErrorCode::InvalidArgument,
            "RLE class needs 0 < varkappa <= alpha_bar <= 2");
    require(a_bar >= 0.0, ErrorCode::InvalidArgument, "RLE class needs a_bar >= 0");
}

cplx char_exponent(const ModelSpec& model, cplx u) {
    cplx psi = kI * model.mu * u - 0.5 * model.a * model.a * u * u;
    switch (model.family) {
    case Family::SymmetricStable:
    case Family::StablePlusDiffusion: psi += stable_part(*model.stable, u); break;
    case Family::GeneralizedHyperbolic: psi += gh_part(*model.gh, u); break;
    }
    return psi;
}

cplx char_exponent(const ModelSpec& model, double u) { return char_exponent(model, cplx(u, 0.0)); }

cplx cf_at(const ModelSpec& model, double t, double u) {
    if (u == 0.0) return 1.0;
    return std::exp(t * char_exponent(model, u));
}

cplx cf_at(const ModelSpec& model, double t, cplx u) { return std::exp(t * char_exponent(model, u)); }

ModelSpec risk_neutralize(const ModelSpec& model) {
    model.validate();
    // psi(-i) = mu + theta(-i) - ... ; shifting mu by -psi(-i) zeroes it.
    const cplx at = char_exponent(model, cplx(0.0, -1.0));
    if (!std::isfinite(at.real())) fail(ErrorCode::NotContinuable, "exponent is not finite at -i");
    ModelSpec out = model;
    out.mu = model.mu - at.real();
    return out;
}

double mean_per_unit_time(const ModelSpec& model) {
    if (model.stable && model.stable->eta > 0.0 && model.stable->alpha <= 1.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double h = 1e-4;
    const cplx d = (8.0 * (char_exponent(model, h) - char_exponent(model, -h)) -
                    (char_exponent(model, 2 * h) - char_exponent(model, -2 * h))) /
                   (12.0 * h);
    return (-kI * d).real();
}

double variance_per_unit_time(const ModelSpec& model) {
    if (model.stable && model.stable->eta > 0.0 && model.stable->alpha < 2.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double h = 1e-3;
    const cplx d2 = (-char_exponent(model, 2 * h) + 16.0 * char_exponent(model, h) - 30.0 * char_exponent(model, 0.0) +
                     16.0 * char_exponent(model, -h) - char_exponent(model, -2 * h)) /
                    (12.0 * h * h);
    return -d2.real();
}

double true_fractional_order(const ModelSpec& model) {
    switch (model.family) {
    case Family::SymmetricStable:
    case Family::StablePlusDiffusion: return model.stable->eta > 0.0 ? model.stable->alpha : 0.0;
    case Family::GeneralizedHyperbolic: return 1.0;
    }
    return 0.0;
}

double jump_scale(const ModelSpec& model) {
    switch (model.family) {
    case Family::SymmetricStable:
    case Family::StablePlusDiffusion: return model.stable->eta;
    case Family::GeneralizedHyperbolic: return model.gh->delta;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

DensityGrid density_on_grid(const ModelSpec& model, double t, const UniformGrid& grid) {
    require(t > 0.0, ErrorCode::InvalidArgument, "density_on_grid: t must be > 0");
    require(grid.points >= 16 && grid.points % 4 == 0, ErrorCode::InvalidArgument,
            "density_on_grid: point count must be a multiple of 4 and >= 16");
    require(grid.width > 0.0, ErrorCode::InvalidArgument, "density_on_grid: width must be > 0");

    const std::size_t n = grid.points;
    const double dx = grid.spacing();
    const double du = 2.0 * std::numbers::pi / (static_cast<double>(n) * dx);
    const std::size_t half = n / 2;

    std::vector<cplx> buf(n);
    for (std::size_t k = 0; k <= half; ++k) {
        const double u = (static_cast<double>(k) - static_cast<double>(half)) * du;
        const cplx phi = cf_at(model, t, u);
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        buf[k] = sign * phi * std::exp(cplx(0.0, -u * grid.center));
        // u_{n-k} = -u_k; phi(-u) = conj(phi(u)).
        if (k > 0 && k < half) {
            const std::size_t mirror = n - k;
            const double msign = (mirror % 2 == 0) ? 1.0 : -1.0;
            buf[mirror] = msign * std::conj(phi) * std::exp(cplx(0.0, u * grid.center));
        }
    }
    fft_forward(buf);

    DensityGrid out;
    out.grid = grid;
    out.values.resize(n);
    double peak = 0.0;
    double most_negative = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        const double v = sign * buf[j].real() * du / (2.0 * std::numbers::pi);
        peak = std::max(peak, v);
        most_negative = std::min(most_negative, v);
        out.values[j] = std::max(v, 0.0);
    }
    out.peak = peak;
    out.max_negative = -most_negative;

    const double edge = std::max(std::abs(buf[0].real()), std::abs(buf[n - 1].real())) * du / (2.0 * std::numbers::pi);
    if (!(peak > 0.0) || edge > 1e-7 * peak) {
        std::ostringstream os;
        os << "density_on_grid: boundary density " << edge << " exceeds 1e-7 of the peak " << peak
           << " (width " << grid.width << ")";
        fail(ErrorCode::GridTooNarrow, os.str());
    }
    return out;
}

DensityGrid auto_density(const ModelSpec& model, double t, std::size_t points) {
    model.validate();
    double center = 0.0;
    double width = 0.0;
    const double mean = mean_per_unit_time(model);
    if (std::isfinite(mean)) center = mean * t;
    const double var = variance_per_unit_time(model);
    if (std::isfinite(var) && var > 0.0) {
        width = 20.0 * std::sqrt(var * t);
    } else {
        // Scale from where |phi_t| falls to exp(-1).
        double u = 1.0;
        while (std::abs(cf_at(model, t, u)) > std::exp(-1.0) && u < 1e12) u *= 2.0;
        width = 20.0 / u;
    }
    width = std::max(width, 1e-6);
    for (int attempt = 0; attempt < 40; ++attempt) {
        UniformGrid grid{center, width, points};
        try {
            return density_on_grid(model, t, grid);
        } catch (const LevyError& e) {
            if (e.code() != ErrorCode::GridTooNarrow) throw;
        }
        width *= 2.0;
    }
    fail(ErrorCode::GridTooNarrow, "auto_density: no admissible width after 40 doublings");
}

// ---------------------------------------------------------------------------

IncrementSampler::IncrementSampler(const ModelSpec& model, double dt, SamplerKind kind) : model_(model), dt_(dt) {
    model_.validate();
    require(dt > 0.0, ErrorCode::InvalidArgument, "sampler: dt must be > 0");
    const bool stable_family = model_.family != Family::GeneralizedHyperbolic;
    if (kind == SamplerKind::Auto && stable_family) return;

    const DensityGrid dens = auto_density(model_, dt_);
    const std::size_t n = dens.values.size();
    nodes_.resize(n);
    cdf_.resize(n);
    const double dx = dens.grid.spacing();
    cdf_[0] = 0.0;
    nodes_[0] = dens.grid.node(0);
    for (std::size_t j = 1; j < n; ++j) {
        nodes_[j] = dens.grid.node(j);
        cdf_[j] = cdf_[j - 1] + 0.5 * (dens.values[j - 1] + dens.values[j]) * dx;
    }
    const double total = cdf_.back();
    for (double& c : cdf_) c /= total;
}

void IncrementSampler::fill(std::vector<double>& out, std::size_t n, std::uint64_t seed) const {
    out.resize(n);
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    if (!cdf_.empty()) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = unif(rng);
            auto it = std::upper_bound(cdf_.begin(), cdf_.end(), p);
            std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
            j = std::clamp<std::size_t>(j, 1, cdf_.size() - 1);
            const double lo = cdf_[j - 1];
            const double hi = cdf_[j];
            const double frac = hi > lo ? (p - lo) / (hi - lo) : 0.5;
            out[i] = nodes_[j - 1] + frac * (nodes_[j] - nodes_[j - 1]);
        }
        return;
    }

    // Chambers-Mallows-Stuck for exp(-eta dt |u|^alpha), plus Gaussian and drift.
    const StableParams& s = *model_.stable;
    const double alpha = s.alpha;
    const double scale = s.eta > 0.0 ? std::pow(s.eta * dt_, 1.0 / alpha) : 0.0;
    const double sd = model_.a * std::sqrt(dt_);
    std::exponential_distribution<double> expo(1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double half_pi = 0.5 * std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
        double x = model_.mu * dt_;
        if (scale > 0.0) {
            const double v = std::numbers::pi * (unif(rng) - 0.5);
            double z;
            if (alpha == 1.0) {
                z = std::tan(v);
            } else {
                const double w = expo(rng);
                z = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
                    std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
            }
            if (std::abs(v) >= half_pi) z = 0.0;
            x += scale * z;
        }
        if (sd > 0.0) x += sd * normal(rng);
        out[i] = x;
    }
}

IncrementSample IncrementSampler::sample(std::size_t n, std::uint64_t seed) const {
    require(n >= 1, ErrorCode::InvalidArgument, "sample_increments: n must be >= 1");
    IncrementSample s;
    s.dt = dt_;
    s.seed = seed;
    fill(s.values, n, seed);
    return s;
}

IncrementSample sample_increments(const ModelSpec& model, double dt, std::size_t n, std::uint64_t seed,
                                  SamplerKind kind) {
    require(n >= 1, ErrorCode::InvalidArgument, "sample_increments: n must be >= 1");
    require(dt > 0.0, ErrorCode::InvalidArgument, "sample_increments: dt must be > 0");
    return IncrementSampler(model, dt, kind).sample(n, seed);
}

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DomainError: return "domain_error";
    case ErrorCode::NonConvergence: return "nonconvergence";
    case ErrorCode::GridTooNarrow: return "grid_too_narrow";
    case ErrorCode::NotContinuable: return "not_continuable";
    case ErrorCode::MartingaleViolation: return "martingale_violation";
    case ErrorCode::CoverageError: return "coverage_error";
    case ErrorCode::BracketingViolation: return "bracketing_violation";
    case ErrorCode::SingularSystem: return "singular_system";
    case ErrorCode::BranchAmbiguity: return "branch_ambiguity";
    case ErrorCode::EpsTooLarge: return "eps_too_large";
    case ErrorCode::SearchExhausted: return "search_exhausted";
    case ErrorCode::VanishingDenominator: return "vanishing_denominator";
    case ErrorCode::GridRange: return "grid_range";
    case ErrorCode::InvalidConfig: return "invalid_config";
    }
    return "unknown";
}

} // namespace levyspec
