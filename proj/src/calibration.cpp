#include "levyspec/calibration.hpp"

#include "levyspec/errors.hpp"
#include "levyspec/fft.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>

namespace levyspec {

CFEstimate direct_cf_Q(const OptionQuoteSet& quotes, const std::vector<double>& u_grid) {
    require(quotes.weighted, ErrorCode::InvalidArgument, "direct_cf_Q: quotes must be exponentially weighted");
    require(quotes.deltas.size() == quotes.size(), ErrorCode::InvalidArgument, "direct_cf_Q: missing deltas");
    CFEstimate cf;
    cf.grid = u_grid;
    cf.values.resize(u_grid.size());
    cf.eps = noise_level(quotes);
    cf.measure = Measure::Q;
    for (std::size_t k = 0; k < u_grid.size(); ++k) {
        const double u = u_grid[k];
        cplx s = 0.0;
        for (std::size_t j = 0; j < quotes.size(); ++j) {
            const double a = u * quotes.y[j];
            s += quotes.deltas[j] * quotes.noisy[j] * cplx(std::cos(a), std::sin(a));
        }
        cf.values[k] = 1.0 - u * cplx(u, 1.0) * s;
    }
    return cf;
}

// ---------------------------------------------------------------------------
// Smoothing spline.
//
// For L > 0 the minimiser is computed as the posterior mean of the
// integrated Wiener process prior f'' = L^{-1/2} dW/dy observed with unit
// noise (pinned ends: noise-free observations of 0), with a diffuse start.
// Kalman filter plus the Bryson-Frazier backward pass give f and f' at the
// knots and the posterior variances, whose sum over the data is tr H_L. No
// step divides by a knot spacing, so near-coincident quotes stay harmless;
// the Reinsch normal equations square a condition number of order 1/h_min^2.
// L = 0 (interpolation) solves the tridiagonal Reinsch system instead.

namespace {

struct SplineProblem {
    std::vector<double> t; // knots
    std::vector<double> z; // targets at the knots (0 at pinned ends)
    std::vector<char> data; // false for pinned knots
    std::size_t n_data = 0;
};

SplineProblem make_problem(const std::vector<double>& y, const std::vector<double>& z, const SplineOptions& opt) {
    require(y.size() == z.size(), ErrorCode::InvalidArgument, "spline: y/z length mismatch");
    require(y.size() >= 4, ErrorCode::InvalidArgument, "spline: need at least 4 points");
    std::vector<std::size_t> order(y.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    SplineProblem p;
    p.n_data = y.size();
    if (opt.pinned) {
        require(opt.extrapolation > 0.0, ErrorCode::InvalidArgument, "spline: extrapolation distance must be > 0");
        p.t.push_back(y[order.front()] - opt.extrapolation);
        p.z.push_back(0.0);
        p.data.push_back(0);
    }
    for (std::size_t i : order) {
        require(std::isfinite(y[i]) && std::isfinite(z[i]), ErrorCode::InvalidArgument, "spline: non-finite data");
        p.t.push_back(y[i]);
        p.z.push_back(z[i]);
        p.data.push_back(1);
    }
    if (opt.pinned) {
        p.t.push_back(y[order.back()] + opt.extrapolation);
        p.z.push_back(0.0);
        p.data.push_back(0);
    }
    for (std::size_t i = 0; i + 1 < p.t.size(); ++i) {
        require(p.t[i + 1] > p.t[i], ErrorCode::SingularSystem, "spline: duplicate abscissae");
    }
    return p;
}

// Natural cubic interpolant: solve R gamma = Q^T z (tridiagonal), then slopes.
void interpolate(const SplineProblem& p, SplineFit& fit) {
    const std::size_t M = p.t.size();
    const std::size_t m = M - 2;
    std::vector<double> h(M - 1);
    for (std::size_t i = 0; i + 1 < M; ++i) h[i] = p.t[i + 1] - p.t[i];
    std::vector<double> diag(m), off(m, 0.0), rhs(m);
    for (std::size_t c = 0; c < m; ++c) {
        diag[c] = (h[c] + h[c + 1]) / 3.0;
        if (c + 1 < m) off[c] = h[c + 1] / 6.0;
        rhs[c] = (p.z[c + 2] - p.z[c + 1]) / h[c + 1] - (p.z[c + 1] - p.z[c]) / h[c];
    }
    for (std::size_t c = 1; c < m; ++c) {
        const double f = off[c - 1] / diag[c - 1];
        diag[c] -= f * off[c - 1];
        rhs[c] -= f * rhs[c - 1];
    }
    std::vector<double> gamma(M, 0.0);
    for (std::size_t c = m; c-- > 0;) {
        double v = rhs[c];
        if (c + 1 < m) v -= off[c] * gamma[c + 2];
        gamma[c + 1] = v / diag[c];
    }
    fit.values = p.z;
    fit.slopes.assign(M, 0.0);
    for (std::size_t i = 0; i + 1 < M; ++i) {
        fit.slopes[i] = (p.z[i + 1] - p.z[i]) / h[i] - h[i] * (2.0 * gamma[i] + gamma[i + 1]) / 6.0;
    }
    const std::size_t k = M - 2;
    fit.slopes[M - 1] = (p.z[M - 1] - p.z[k]) / h[k] + h[k] * (gamma[k] + 2.0 * gamma[M - 1]) / 6.0;
    fit.trace_hat = static_cast<double>(p.n_data);
}

using Mat2 = std::array<std::array<double, 2>, 2>;

Mat2 mul(const Mat2& a, const Mat2& b) {
    Mat2 c{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
    return c;
}

Mat2 transpose(const Mat2& a) { return {{{a[0][0], a[1][0]}, {a[0][1], a[1][1]}}}; }

void smooth(const SplineProblem& p, double L, SplineFit& fit) {
    const std::size_t M = p.t.size();
    const double q = 1.0 / L;
    // Diffuse start, scaled to the data so the leftover prior is negligible.
    double scale = 1.0;
    for (std::size_t i = 0; i < M; ++i) scale = std::max(scale, std::abs(p.z[i]));
    const double kappa = 1e7 * scale * scale;

    struct Step {
        std::array<double, 2> a; // predicted state
        Mat2 P;                  // predicted covariance
        double v, F;             // innovation and its variance
        std::array<double, 2> K;
        Mat2 Lm; // T - K Z
    };
    std::vector<Step> st(M);
    std::array<double, 2> a{0.0, 0.0};
    Mat2 P{{{kappa, 0.0}, {0.0, kappa}}};
    for (std::size_t i = 0; i < M; ++i) {
        Step& s = st[i];
        s.a = a;
        s.P = P;
        const double noise = p.data[i] ? 1.0 : 0.0;
        s.v = p.z[i] - a[0];
        s.F = P[0][0] + noise;
        require(s.F > 0.0, ErrorCode::SingularSystem, "spline: degenerate filter step");
        const double h = i + 1 < M ? p.t[i + 1] - p.t[i] : 0.0;
        const Mat2 T{{{1.0, h}, {0.0, 1.0}}};
        // K = T P Z^T / F with Z = (1, 0).
        const std::array<double, 2> PZ{P[0][0], P[1][0]};
        s.K = {(PZ[0] + h * PZ[1]) / s.F, PZ[1] / s.F};
        s.Lm = {{{1.0 - s.K[0], h}, {-s.K[1], 1.0}}};
        if (i + 1 < M) {
            a = {a[0] + h * a[1] + s.K[0] * s.v, a[1] + s.K[1] * s.v};
            const Mat2 TPL = mul(mul(T, P), transpose(s.Lm));
            const double h2 = h * h;
            P = {{{TPL[0][0] + q * h2 * h / 3.0, TPL[0][1] + q * h2 / 2.0},
                  {TPL[1][0] + q * h2 / 2.0, TPL[1][1] + q * h}}};
            const double sym = 0.5 * (P[0][1] + P[1][0]);
            P[0][1] = P[1][0] = sym;
        }
    }
    fit.values.assign(M, 0.0);
    fit.slopes.assign(M, 0.0);
    std::array<double, 2> r{0.0, 0.0};
    Mat2 N{};
    double tr = 0.0;
    for (std::size_t i = M; i-- > 0;) {
        const Step& s = st[i];
        if (p.data[i]) {
            // H_ii = posterior variance of the noise = 1 - D_i, D_i = 1/F + K^T N_i K.
            const double KNK = s.K[0] * (N[0][0] * s.K[0] + N[0][1] * s.K[1]) +
                               s.K[1] * (N[1][0] * s.K[0] + N[1][1] * s.K[1]);
            tr += 1.0 - (1.0 / s.F + KNK);
        }
        // r_{i-1} = Z^T v / F + L^T r_i, N_{i-1} = Z^T Z / F + L^T N_i L.
        const std::array<double, 2> Ltr{s.Lm[0][0] * r[0] + s.Lm[1][0] * r[1], s.Lm[0][1] * r[0] + s.Lm[1][1] * r[1]};
        r = {s.v / s.F + Ltr[0], Ltr[1]};
        N = mul(mul(transpose(s.Lm), N), s.Lm);
        N[0][0] += 1.0 / s.F;
        fit.values[i] = s.a[0] + s.P[0][0] * r[0] + s.P[0][1] * r[1];
        fit.slopes[i] = s.a[1] + s.P[1][0] * r[0] + s.P[1][1] * r[1];
        if (!p.data[i]) fit.values[i] = p.z[i];
    }
    fit.trace_hat = tr;
}

SplineFit solve_spline(const SplineProblem& p, double L, bool pinned) {
    require(L >= 0.0 && std::isfinite(L), ErrorCode::InvalidArgument, "spline: penalty must be finite and >= 0");
    SplineFit fit;
    fit.knots = p.t;
    fit.L = L;
    fit.pinned = pinned;
    if (L == 0.0) {
        interpolate(p, fit);
    } else {
        smooth(p, L, fit);
    }
    double rss = 0.0;
    for (std::size_t i = 0; i < p.t.size(); ++i) {
        if (p.data[i]) rss += (p.z[i] - fit.values[i]) * (p.z[i] - fit.values[i]);
    }
    const double n = static_cast<double>(p.n_data);
    const double denom = n - fit.trace_hat;
    fit.gcv_score = denom > 0.0 ? n * rss / (denom * denom) : INFINITY;
    return fit;
}

} // namespace

double SplineFit::operator()(double y) const {
    const std::size_t M = knots.size();
    if (y <= knots.front() || y >= knots.back()) {
        if (pinned) return 0.0;
        // Natural splines continue linearly.
        return y <= knots.front() ? values[0] + slopes[0] * (y - knots[0])
                                  : values[M - 1] + slopes[M - 1] * (y - knots[M - 1]);
    }
    const std::size_t i = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), y) - knots.begin()) - 1;
    const double h = knots[i + 1] - knots[i];
    const double t = (y - knots[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2.0 * t3 - 3.0 * t2 + 1.0) * values[i] + (t3 - 2.0 * t2 + t) * h * slopes[i] +
           (-2.0 * t3 + 3.0 * t2) * values[i + 1] + (t3 - t2) * h * slopes[i + 1];
}

std::vector<double> SplineFit::evaluate(const std::vector<double>& ys) const {
    std::vector<double> out(ys.size());
    for (std::size_t j = 0; j < ys.size(); ++j) out[j] = (*this)(ys[j]);
    return out;
}

double SplineFit::roughness() const {
    // O'' is linear on each interval; take its end values from the Hermite form.
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double h = knots[i + 1] - knots[i];
        const double d = (values[i + 1] - values[i]) / h;
        const double a = (6.0 * d - 4.0 * slopes[i] - 2.0 * slopes[i + 1]) / h;
        const double b = (-6.0 * d + 2.0 * slopes[i] + 4.0 * slopes[i + 1]) / h;
        s += h * (a * a + a * b + b * b) / 3.0;
    }
    return s;
}

SplineFit spline_fit(const std::vector<double>& y, const std::vector<double>& z, double L, const SplineOptions& opt) {
    return solve_spline(make_problem(y, z, opt), L, opt.pinned);
}

SplineFit spline_fit(const OptionQuoteSet& quotes, double L, const SplineOptions& opt) {
    SplineFit fit = spline_fit(quotes.y, quotes.noisy, L, opt);
    fit.weighted = quotes.weighted;
    return fit;
}

GcvScan gcv_scan(const std::vector<double>& y, const std::vector<double>& z, const SplineOptions& opt,
                 std::size_t count, double L_min, double L_max) {
    require(y.size() >= 8, ErrorCode::InvalidArgument, "gcv: need at least 8 points");
    require(count >= 2 && L_min > 0.0 && L_max > L_min, ErrorCode::InvalidArgument, "gcv: bad penalty grid");
    const SplineProblem p = make_problem(y, z, opt);
    GcvScan scan;
    const double step = std::log(L_max / L_min) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) {
        const double L = L_min * std::exp(step * static_cast<double>(k));
        const SplineFit f = solve_spline(p, L, opt.pinned);
        scan.L.push_back(L);
        scan.score.push_back(f.gcv_score);
        scan.trace_hat.push_back(f.trace_hat);
        if (f.gcv_score < scan.score[scan.best]) scan.best = k;
    }
    return scan;
}

double gcv_select(const std::vector<double>& y, const std::vector<double>& z, const SplineOptions& opt) {
    const GcvScan s = gcv_scan(y, z, opt);
    return s.L[s.best];
}

double gcv_select(const OptionQuoteSet& quotes, const SplineOptions& opt) {
    return gcv_select(quotes.y, quotes.noisy, opt);
}

// ---------------------------------------------------------------------------

std::vector<cplx> damped_fourier(const std::function<double(double)>& f, double a, double b,
                                 const std::vector<double>& v_grid, bool damp, std::size_t samples, std::size_t pad) {
    require(b > a && samples >= 16 && pad >= 1, ErrorCode::InvalidArgument, "damped_fourier: bad window");
    const std::size_t N = samples * pad;
    const double dy = (b - a) / static_cast<double>(samples - 1);
    // Rotate so that y = 0 (or the nearest node) sits at index 0; the
    // transform then carries no fast phase from the window offset.
    const long j0 = std::lround(std::clamp(-a / dy, 0.0, static_cast<double>(samples - 1)));
    const double c = a + static_cast<double>(j0) * dy;
    std::vector<cplx> buf(N, 0.0);
    for (std::size_t j = 0; j < samples; ++j) {
        const double y = a + static_cast<double>(j) * dy;
        double v = damp ? std::exp(-y) * f(y) : f(y);
        if (j == 0 || j + 1 == samples) v *= 0.5;
        const long p = (static_cast<long>(j) - j0 + static_cast<long>(N)) % static_cast<long>(N);
        buf[static_cast<std::size_t>(p)] = v * dy;
    }
    fft_backward(buf);
    const double dv = 2.0 * std::numbers::pi / (static_cast<double>(N) * dy);
    const double v_limit = dv * (static_cast<double>(N / 2) - 3.0);
    std::vector<cplx> out(v_grid.size());
    for (std::size_t k = 0; k < v_grid.size(); ++k) {
        const double v = v_grid[k];
        const double av = std::abs(v);
        require(av <= v_limit, ErrorCode::GridRange, "damped_fourier: frequency beyond the sampling limit");
        const double pos = av / dv;
        const std::size_t i = static_cast<std::size_t>(std::floor(pos));
        const double t = pos - static_cast<double>(i);
        auto node = [&](long idx) { return idx < 0 ? std::conj(buf[static_cast<std::size_t>(-idx)]) : buf[static_cast<std::size_t>(idx)]; };
        const long li = static_cast<long>(i);
        cplx g;
        if (t == 0.0) {
            g = node(li);
        } else {
            g = -t * (t - 1.0) * (t - 2.0) / 6.0 * node(li - 1) + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * node(li) -
                (t + 1.0) * t * (t - 2.0) / 2.0 * node(li + 1) + (t + 1.0) * t * (t - 1.0) / 6.0 * node(li + 2);
        }
        cplx val = g * std::exp(cplx(0.0, av * c));
        out[k] = v < 0.0 ? std::conj(val) : val;
    }
    return out;
}

std::vector<cplx> fourier_of_fit(const SplineFit& fit, const std::vector<double>& v_grid) {
    require(fit.knots.size() >= 2, ErrorCode::InvalidArgument, "fourier_of_fit: empty fit");
    return damped_fourier([&](double y) { return fit(y); }, fit.knots.front(), fit.knots.back(), v_grid, !fit.weighted);
}

ExponentCurve exponent_from_transform(const std::vector<cplx>& F, const std::vector<double>& v_grid, double T,
                                      bool strict, double threshold) {
    require(F.size() == v_grid.size() && !F.empty(), ErrorCode::InvalidArgument, "exponent: grid/value mismatch");
    require(T > 0.0, ErrorCode::InvalidArgument, "exponent: maturity must be > 0");
    for (std::size_t j = 1; j < v_grid.size(); ++j) {
        require(v_grid[j] > v_grid[j - 1], ErrorCode::InvalidArgument, "exponent: grid must be increasing");
    }
    const std::size_t n = F.size();
    std::vector<cplx> w(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double v = v_grid[j];
        w[j] = 1.0 - v * cplx(v, 1.0) * F[j];
        if (strict && std::abs(w[j]) < 1e-12) {
            fail(ErrorCode::VanishingDenominator, "exponent: log argument vanishes at v = " + std::to_string(v));
        }
    }
    ExponentCurve curve;
    curve.grid = v_grid;
    curve.values.resize(n);
    std::size_t start = 0;
    for (std::size_t j = 1; j < n; ++j) {
        if (std::abs(v_grid[j]) < std::abs(v_grid[start])) start = j;
    }
    curve.branch_anchor = v_grid[start] == 0.0;

    std::vector<double> phase(n);
    phase[start] = std::arg(w[start]);
    if (std::abs(phase[start]) >= threshold) {
        if (strict) fail(ErrorCode::BranchAmbiguity, "exponent: phase at the node nearest 0 is ambiguous");
        ++curve.ambiguous_steps;
    }
    auto step = [&](std::size_t from, std::size_t to) {
        double d = std::arg(w[to]) - std::arg(w[from]);
        d = std::remainder(d, 2.0 * std::numbers::pi);
        if (std::abs(d) >= threshold) {
            if (strict) {
                fail(ErrorCode::BranchAmbiguity,
                     "exponent: phase step of " + std::to_string(d) + " at v = " + std::to_string(v_grid[to]) +
                         " (grid too coarse)");
            }
            ++curve.ambiguous_steps;
        }
        phase[to] = phase[from] + d;
    };
    for (std::size_t j = start + 1; j < n; ++j) step(j - 1, j);
    for (std::size_t j = start; j-- > 0;) step(j + 1, j);
    for (std::size_t j = 0; j < n; ++j) curve.values[j] = cplx(std::log(std::abs(w[j])), phase[j]) / T;
    return curve;
}

CFEstimate cf_from_exponent(const ExponentCurve& curve, double T, double eps) {
    require(T > 0.0, ErrorCode::InvalidArgument, "cf_from_exponent: maturity must be > 0");
    CFEstimate cf;
    cf.eps = eps;
    cf.measure = Measure::Q;
    for (std::size_t j = 0; j < curve.grid.size(); ++j) {
        if (curve.grid[j] < 0.0) continue;
        cf.grid.push_back(curve.grid[j]);
        cf.values.push_back(std::exp(T * curve.values[j]));
    }
    cf.validate();
    return cf;
}

void write_exponent_csv(std::ostream& os, const ExponentCurve& curve) {
    os << "v,re_psi,im_psi\n";
    os.precision(17);
    for (std::size_t j = 0; j < curve.grid.size(); ++j) {
        os << curve.grid[j] << "," << curve.values[j].real() << "," << curve.values[j].imag() << "\n";
    }
}

} // namespace levyspec
