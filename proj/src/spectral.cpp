#include "levyspec/spectral.hpp"

#include "levyspec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace levyspec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

} // namespace

// ---------------------------------------------------------------------------
// Truncation.

TruncationLevels TruncationLevels::constant(double lo, double hi) {
    TruncationLevels t;
    t.kind = Kind::Constant;
    t.lo = lo;
    t.hi = hi;
    t.validate();
    return t;
}

TruncationLevels TruncationLevels::prior_based(double c1, double c2, double pi_minus, double pi_plus,
                                               double alpha_lower, double alpha_upper) {
    TruncationLevels t;
    t.kind = Kind::PriorBased;
    t.c1 = c1;
    t.c2 = c2;
    t.pi_minus = pi_minus;
    t.pi_plus = pi_plus;
    t.alpha_lower = alpha_lower;
    t.alpha_upper = alpha_upper;
    t.validate();
    return t;
}

TruncationLevels TruncationLevels::tabulated(std::vector<double> nodes, std::vector<double> lower,
                                             std::vector<double> upper) {
    TruncationLevels t;
    t.kind = Kind::Tabulated;
    t.nodes = std::move(nodes);
    t.lower_tab = std::move(lower);
    t.upper_tab = std::move(upper);
    t.validate();
    return t;
}

void TruncationLevels::validate() const {
    switch (kind) {
    case Kind::Constant:
        require(lo > 0.0 && lo <= hi && hi < 1.0, ErrorCode::InvalidArgument,
                "truncation levels need 0 < lo <= hi < 1 (got " + num(lo) + ", " + num(hi) + ")");
        break;
    case Kind::PriorBased:
        require(c1 > 0.0 && c2 > 0.0 && c2 < 1.0 && pi_minus > 0.0 && pi_minus <= pi_plus && alpha_lower > 0.0 &&
                    alpha_lower <= alpha_upper && alpha_upper <= 2.0,
                ErrorCode::InvalidArgument, "prior-based truncation levels: inconsistent constants");
        break;
    case Kind::Tabulated: {
        require(!nodes.empty() && nodes.size() == lower_tab.size() && nodes.size() == upper_tab.size(),
                ErrorCode::InvalidArgument, "tabulated truncation levels: length mismatch");
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            require(lower_tab[j] > 0.0 && lower_tab[j] <= upper_tab[j] && upper_tab[j] < 1.0,
                    ErrorCode::InvalidArgument, "tabulated truncation levels: need 0 < lower <= upper < 1");
            if (j > 0) {
                require(nodes[j] > nodes[j - 1], ErrorCode::InvalidArgument,
                        "tabulated truncation levels: nodes must increase");
            }
        }
        break;
    }
    }
}

namespace {

std::size_t tab_index(const std::vector<double>& nodes, double u) {
    const double a = std::abs(u);
    auto it = std::lower_bound(nodes.begin(), nodes.end(), a);
    const double tol = 1e-9 * std::max(1.0, nodes.back());
    std::size_t j = static_cast<std::size_t>(it - nodes.begin());
    if (j < nodes.size() && std::abs(nodes[j] - a) <= tol) return j;
    if (j > 0 && std::abs(nodes[j - 1] - a) <= tol) return j - 1;
    fail(ErrorCode::GridRange, "tabulated truncation levels have no node at u = " + num(u));
}

} // namespace

double TruncationLevels::lower(double u) const {
    switch (kind) {
    case Kind::Constant: return lo;
    case Kind::PriorBased: {
        const double a = std::max(std::abs(u), 1e-300);
        const double p = std::pow(a, alpha_upper);
        return std::min(c1 * std::exp(-2.0 * pi_plus * p) / p, upper(u));
    }
    case Kind::Tabulated: return lower_tab[tab_index(nodes, u)];
    }
    return lo;
}

double TruncationLevels::upper(double u) const {
    switch (kind) {
    case Kind::Constant: return hi;
    case Kind::PriorBased: return c2 * std::exp(-2.0 * pi_minus * std::pow(std::abs(u), alpha_lower));
    case Kind::Tabulated: return upper_tab[tab_index(nodes, u)];
    }
    return hi;
}

double truncate(double value, double lower, double upper) { return std::clamp(value, lower, upper); }

std::vector<double> truncate(const std::vector<double>& values, const std::vector<double>& grid,
                             const TruncationLevels& levels) {
    require(values.size() == grid.size(), ErrorCode::InvalidArgument, "truncate: length mismatch");
    std::vector<double> out(values.size());
    for (std::size_t j = 0; j < values.size(); ++j) {
        out[j] = truncate(values[j], levels.lower(grid[j]), levels.upper(grid[j]));
    }
    return out;
}

TruncationLevels oracle_levels(const std::vector<double>& grid, const std::vector<double>& phi_mod2) {
    require(grid.size() == phi_mod2.size(), ErrorCode::InvalidArgument, "oracle_levels: length mismatch");
    std::vector<double> lo(grid.size()), hi(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = phi_mod2[j];
        require(x > 0.0 && x < 1.0, ErrorCode::DomainError,
                "oracle_levels: |phi|^2 must lie in (0, 1), got " + num(x) + " at u = " + num(grid[j]));
        const double L = -0.5 * std::log(x);
        const double r = 2.0 * L / (1.0 + 2.0 * L);
        lo[j] = x * (1.0 - r);
        hi[j] = x * (1.0 + r);
    }
    TruncationLevels t;
    t.kind = TruncationLevels::Kind::Tabulated;
    t.nodes = grid;
    t.lower_tab = std::move(lo);
    t.upper_tab = std::move(hi);
    return t;
}

namespace {

double zeta2_at(double lower, double upper) {
    auto f = [](double x) {
        const double l = std::log(x);
        return (1.0 + std::abs(l)) / (x * x * l * l);
    };
    return 2.0 * std::max(f(lower), f(upper));
}

} // namespace

ZetaCoefficients zeta_coefficients(const std::vector<double>& grid, const std::vector<double>& phi_mod2,
                                   const TruncationLevels& levels) {
    require(grid.size() == phi_mod2.size(), ErrorCode::InvalidArgument, "zeta_coefficients: length mismatch");
    ZetaCoefficients z;
    z.zeta1.resize(grid.size());
    z.zeta2.resize(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = phi_mod2[j];
        require(x > 0.0 && x < 1.0, ErrorCode::DomainError, "zeta_coefficients: |phi|^2 must lie in (0, 1)");
        z.zeta1[j] = 1.0 / (x * std::log(x));
        z.zeta2[j] = zeta2_at(levels.lower(grid[j]), levels.upper(grid[j]));
    }
    return z;
}

SpectralCurve y_curve(const CFEstimate& cf, const TruncationLevels& levels) {
    levels.validate();
    SpectralCurve c;
    c.levels = levels;
    for (std::size_t j = 0; j < cf.grid.size(); ++j) {
        const double u = cf.grid[j];
        if (u <= 0.0) continue;
        const double x = std::norm(cf.values[j]);
        const double lo = levels.lower(u);
        const double hi = levels.upper(u);
        const double t = truncate(x, lo, hi);
        c.grid.push_back(u);
        c.values.push_back(std::log(-std::log(t)));
        c.clipped.push_back(x <= lo ? -1 : (x >= hi ? 1 : 0));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Weights.

double WeightSpec::w1(double s) const {
    if (s < ell || s > 1.0) return 0.0;
    return s * (A1 * std::log(s) - A2);
}

double WeightSpec::wU(double u) const { return w1(u / U) / U; }

WeightSpec build_weight(double U, double ell) {
    require(U > 0.0, ErrorCode::InvalidArgument, "build_weight: U must be > 0");
    require(ell > 0.0, ErrorCode::InvalidArgument, "build_weight: ell must be > 0");
    require(ell < 1.0, ErrorCode::SingularSystem, "build_weight: ell must be < 1 (moment system is singular)");
    const double l = ell;
    const double ll = std::log(l);
    const double m0 = 0.5 * (1.0 - l * l);
    const double m1 = -0.25 - (0.5 * l * l * ll - 0.25 * l * l);
    const double m2 = 0.25 - (0.5 * l * l * ll * ll - 0.5 * l * l * ll + 0.25 * l * l);
    const double det = m2 - m1 * m1 / m0;
    require(det > 0.0, ErrorCode::SingularSystem, "build_weight: degenerate moment system");
    WeightSpec w;
    w.U = U;
    w.ell = ell;
    w.A1 = 1.0 / det;
    w.A2 = w.A1 * m1 / m0;
    return w;
}

NodeWeights node_weights(const std::vector<double>& grid, const WeightSpec& w) {
    const double a = w.ell * w.U;
    const double b = w.U;
    const double tol = 1e-9 * b;
    if (grid.empty() || grid.front() > a + tol || grid.back() < b - tol) {
        fail(ErrorCode::CoverageError, "curve grid does not span the weight support [" + num(a) + ", " + num(b) + "]");
    }
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (grid[j] >= a - tol && grid[j] <= b + tol) idx.push_back(j);
    }
    require(idx.size() >= 3, ErrorCode::CoverageError, "weight support holds fewer than 3 grid nodes");

    const std::size_t m = idx.size();
    std::vector<double> tw(m), s(m), ls(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double left = i > 0 ? grid[idx[i]] - grid[idx[i - 1]] : 0.0;
        const double right = i + 1 < m ? grid[idx[i + 1]] - grid[idx[i]] : 0.0;
        tw[i] = 0.5 * (left + right) / w.U;
        s[i] = grid[idx[i]] / w.U;
        ls[i] = std::log(s[i]);
    }
    double m0 = 0, m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < m; ++i) {
        m0 += tw[i] * s[i];
        m1 += tw[i] * s[i] * ls[i];
        m2 += tw[i] * s[i] * ls[i] * ls[i];
    }
    const double det = m2 - m1 * m1 / m0;
    require(det > 0.0, ErrorCode::SingularSystem, "node_weights: degenerate discrete moment system");
    const double A1 = 1.0 / det;
    const double A2 = A1 * m1 / m0;
    NodeWeights nw;
    nw.index = std::move(idx);
    nw.c.resize(m);
    for (std::size_t i = 0; i < m; ++i) nw.c[i] = tw[i] * s[i] * (A1 * ls[i] - A2);
    return nw;
}

double estimate_alpha(const SpectralCurve& curve, const WeightSpec& w) {
    const NodeWeights nw = node_weights(curve.grid, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < nw.index.size(); ++i) acc += nw.c[i] * curve.values[nw.index[i]];
    return acc;
}

double bias_RU(const ModelSpec& model, const WeightSpec& w, double t, std::size_t nodes) {
    require(nodes >= 2, ErrorCode::InvalidArgument, "bias_RU: need at least 2 intervals");
    const double eta = jump_scale(model);
    const double alpha = true_fractional_order(model);
    require(eta > 0.0 && alpha > 0.0, ErrorCode::DomainError, "bias_RU: model has no jump part");
    if (nodes % 2) ++nodes;
    const double a = w.ell * w.U;
    const double b = w.U;
    const double h = (b - a) / static_cast<double>(nodes);
    double acc = 0.0;
    for (std::size_t j = 0; j <= nodes; ++j) {
        const double u = a + static_cast<double>(j) * h;
        const cplx theta = t * (char_exponent(model, u) - cplx(0.0, model.mu * u) + 0.5 * model.a * model.a * u * u);
        const double re_tau = (-theta / (t * eta * std::pow(u, alpha))).real();
        if (!(re_tau > 0.0)) fail(ErrorCode::DomainError, "bias_RU: Re tau <= 0 at u = " + num(u));
        const double coef = (j == 0 || j == nodes) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        acc += coef * w.wU(u) * std::log(re_tau);
    }
    return acc * h / 3.0;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Regime r) {
    switch (r) {
    case Regime::P: return "P";
    case Regime::Q: return "Q";
    case Regime::Diffusion: return "diffusion";
    }
    return "?";
}

Regime regime_from_string(std::string_view name) {
    if (name == "P") return Regime::P;
    if (name == "Q") return Regime::Q;
    if (name == "diffusion") return Regime::Diffusion;
    fail(ErrorCode::InvalidConfig, "unknown regime '" + std::string(name) + "' (expected P, Q or diffusion)");
}

double theoretical_cutoff(double eps, const RLEClassSpec& cls, Regime regime) {
    cls.validate();
    require(eps > 0.0, ErrorCode::InvalidArgument, "theoretical_cutoff: eps must be > 0");
    double scale = cls.eta_plus;
    double power = cls.alpha_bar;
    double beta = 0.0;
    switch (regime) {
    case Regime::P: beta = 1.0 + cls.varkappa / cls.alpha_bar; break;
    case Regime::Q: beta = (cls.varkappa + 4.0) / cls.alpha_bar - 1.0; break;
    case Regime::Diffusion:
        require(cls.a_bar > 0.0, ErrorCode::InvalidArgument, "theoretical_cutoff: diffusion regime needs a_bar > 0");
        scale = cls.a_bar;
        power = 2.0;
        beta = 1.0 + cls.varkappa / 2.0;
        break;
    }
    if (!(eps < 1.0)) fail(ErrorCode::EpsTooLarge, "theoretical_cutoff: eps = " + num(eps) + " is not below 1");
    const double inner_log = -std::log(eps) - beta * std::log(-std::log(eps));
    if (!(inner_log > 0.0)) {
        fail(ErrorCode::EpsTooLarge, "theoretical_cutoff: eps = " + num(eps) + " too large for the cutoff formula");
    }
    return std::pow(inner_log / (2.0 * scale), 1.0 / power);
}

// ---------------------------------------------------------------------------
// Variance.

namespace {

struct VarianceTerms {
    std::vector<double> u;  // node frequencies
    std::vector<double> c;  // quadrature weights
    std::vector<double> a;  // coefficient on Delta(u)
    std::vector<double> b;  // coefficient on Delta(xi u) (xi variant only)
    bool unbounded = false;
};

void apply_envelope(std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    for (double& x : v) x = x < 0.0 ? -m : m;
}

double kernel(KernelKind k, const CfFunction& phi, double u, double v) {
    return k == KernelKind::Linearized ? linearized_kernel(phi, u, v) : cov_kernel_S(phi, u, v);
}

VarianceResult quadratic_form(const CFEstimate& cf, const VarianceTerms& t, double xi, const VarianceOptions& opt) {
    VarianceResult res;
    if (t.unbounded) {
        res.sigma2 = kInf;
        res.unbounded = true;
        return res;
    }
    const CfView view(cf);
    bool clamped = false;
    const CfFunction phi = [&](double x) {
        bool c = false;
        const cplx v = view(x, true, &c);
        if (c) clamped = true;
        return v;
    };
    const bool has_b = !t.b.empty();
    const std::size_t m = t.u.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            clamped = false;
            double term = t.a[i] * t.a[j] * kernel(opt.kernel, phi, t.u[i], t.u[j]);
            if (has_b) {
                const double ui = t.u[i], uj = t.u[j];
                term += t.a[i] * t.b[j] * kernel(opt.kernel, phi, ui, xi * uj) +
                        t.b[i] * t.a[j] * kernel(opt.kernel, phi, xi * ui, uj) +
                        t.b[i] * t.b[j] * kernel(opt.kernel, phi, xi * ui, xi * uj);
            }
            if (clamped) ++res.clamped_pairs;
            acc += (i == j ? 1.0 : 2.0) * t.c[i] * t.c[j] * term;
        }
    }
    if (acc < 0.0) {
        res.clipped_negative = true;
        acc = 0.0;
    }
    res.sigma2 = acc;
    return res;
}

} // namespace

VarianceResult variance_sigma(const CFEstimate& cf, const WeightSpec& w, const VarianceOptions& opt) {
    opt.levels.validate();
    std::vector<double> pos;
    for (double u : cf.grid) pos.push_back(u);
    const NodeWeights nw = node_weights(pos, w);
    VarianceTerms t;
    for (std::size_t i = 0; i < nw.index.size(); ++i) {
        const std::size_t j = nw.index[i];
        const double u = cf.grid[j];
        const double x = std::norm(cf.values[j]);
        const double lo = opt.levels.lower(u);
        const double hi = opt.levels.upper(u);
        if (x <= lo && opt.unbounded_on_lower_clip) t.unbounded = true;
        const double xt = truncate(x, lo, hi);
        t.u.push_back(u);
        t.c.push_back(nw.c[i]);
        t.a.push_back(1.0 / (xt * std::log(xt)));
    }
    if (opt.zeta == ZetaMode::Envelope) apply_envelope(t.a);
    return quadratic_form(cf, t, 1.0, opt);
}

// ---------------------------------------------------------------------------

RemainderBoundReport remainder_bound_residual(const CFEstimate& cf, const std::vector<double>& exact_phi_mod2,
                               const TruncationLevels& levels) {
    require(exact_phi_mod2.size() == cf.grid.size(), ErrorCode::InvalidArgument,
            "remainder_bound_residual: exact |phi|^2 must be given on the cf grid");
    RemainderBoundReport rep;
    rep.max_excess = -kInf;
    for (std::size_t j = 0; j < cf.grid.size(); ++j) {
        const double u = cf.grid[j];
        if (u <= 0.0) continue;
        const double x = exact_phi_mod2[j];
        require(x > 0.0 && x < 1.0, ErrorCode::DomainError, "remainder_bound_residual: exact |phi|^2 outside (0, 1)");
        const double L = -0.5 * std::log(x);
        const double r = 2.0 * L / (1.0 + 2.0 * L);
        const double star_lo = x * (1.0 - r);
        const double star_hi = x * (1.0 + r);
        const double lo = levels.lower(u);
        const double hi = levels.upper(u);
        const double slack = 1e-14 * x;
        if (!(lo > 0.0 && lo <= star_lo + slack && star_hi <= hi + slack && hi < 1.0)) {
            std::ostringstream os;
            os << "truncation levels [" << lo << ", " << hi << "] do not bracket the linearisation levels [" << star_lo
               << ", " << star_hi << "] at u = " << u;
            fail(ErrorCode::BracketingViolation, os.str());
        }
        const double xt = std::norm(cf.values[j]);
        const double delta = xt - x;
        const double y_tilde = std::log(-std::log(truncate(xt, lo, hi)));
        const double y = std::log(-std::log(x));
        const double zeta1 = 1.0 / (x * std::log(x));
        const double q = y_tilde - y - zeta1 * delta;
        const double res = std::abs(q) - zeta2_at(lo, hi) * delta * delta;
        rep.grid.push_back(u);
        rep.residual.push_back(res);
        rep.max_excess = std::max(rep.max_excess, res);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Diffusion-removal variant.

RatioCurve rho_xi(const CFEstimate& cf, double xi) {
    require(xi > 1.0, ErrorCode::InvalidArgument, "rho_xi: xi must be > 1");
    const CfView view(cf);
    RatioCurve r;
    const double top = cf.grid.back() * (1.0 + 1e-12);
    for (double u : cf.grid) {
        if (u <= 0.0 || xi * u > top) continue;
        const double num2 = std::norm(view(u));
        const double den2 = std::norm(view(xi * u));
        if (!(den2 > 0.0)) {
            fail(ErrorCode::VanishingDenominator, "rho_xi: |phi~(xi u)| = 0 at u = " + num(u));
        }
        r.grid.push_back(u);
        r.values.push_back(num2 > 0.0 ? std::exp(0.5 * (xi * xi * std::log(num2) - std::log(den2))) : 0.0);
    }
    return r;
}

SpectralCurve y_curve_xi(const CFEstimate& cf, double xi, const TruncationLevels& levels) {
    levels.validate();
    const RatioCurve r = rho_xi(cf, xi);
    SpectralCurve c;
    c.levels = levels;
    for (std::size_t j = 0; j < r.grid.size(); ++j) {
        const double u = r.grid[j];
        const double lo = levels.lower(u);
        const double hi = levels.upper(u);
        const double rho2 = r.values[j] * r.values[j];
        c.grid.push_back(u);
        c.values.push_back(std::log(-std::log(truncate(rho2, lo, hi))));
        c.clipped.push_back(rho2 <= lo ? -1 : (rho2 >= hi ? 1 : 0));
    }
    return c;
}

double estimate_alpha_xi(const CFEstimate& cf, double xi, const TruncationLevels& levels, const WeightSpec& w) {
    return estimate_alpha(y_curve_xi(cf, xi, levels), w);
}

VarianceResult variance_sigma_xi(const CFEstimate& cf, double xi, const WeightSpec& w, const VarianceOptions& opt) {
    opt.levels.validate();
    const RatioCurve r = rho_xi(cf, xi);
    const NodeWeights nw = node_weights(r.grid, w);
    const CfView view(cf);
    VarianceTerms t;
    for (std::size_t i = 0; i < nw.index.size(); ++i) {
        const std::size_t j = nw.index[i];
        const double u = r.grid[j];
        const double lo = opt.levels.lower(u);
        const double hi = opt.levels.upper(u);
        const double rho2 = r.values[j] * r.values[j];
        if (rho2 <= lo && opt.unbounded_on_lower_clip) t.unbounded = true;
        const double lrho = std::log(truncate(rho2, lo, hi));
        const double x = std::max(std::norm(view(u)), std::numeric_limits<double>::min());
        const double y = std::max(std::norm(view(xi * u)), std::numeric_limits<double>::min());
        t.u.push_back(u);
        t.c.push_back(nw.c[i]);
        t.a.push_back(xi * xi / (lrho * x));
        t.b.push_back(-1.0 / (lrho * y));
    }
    if (opt.zeta == ZetaMode::Envelope) {
        apply_envelope(t.a);
        apply_envelope(t.b);
    }
    return quadratic_form(cf, t, xi, opt);
}

void write_spectral_csv(std::ostream& os, const SpectralCurve& curve) {
    os << "u,y,clipped\n";
    os.precision(17);
    for (std::size_t j = 0; j < curve.grid.size(); ++j) {
        os << curve.grid[j] << "," << curve.values[j] << "," << (curve.clipped[j] != 0 ? 1 : 0) << "\n";
    }
}

} // namespace levyspec
