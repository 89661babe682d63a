#include "doctest.h"
#include "oracles.hpp"

#include "levyspec/calibration.hpp"
#include "levyspec/errors.hpp"
#include "levyspec/levy_models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace levyspec;

namespace {

ModelSpec market_model() { return risk_neutralize(ModelSpec::generalized_hyperbolic(2.0, -1.0, 1.0, 1.0)); }

// Natural cubic interpolant through (t, f): second derivatives M with M_0 =
// M_n = 0 from the standard tridiagonal system. Returns int f''^2.
double natural_roughness(const std::vector<double>& t, const std::vector<double>& f) {
    const std::size_t n = t.size();
    std::vector<double> a(n, 0.0), b(n, 1.0), c(n, 0.0), r(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = t[i] - t[i - 1], h1 = t[i + 1] - t[i];
        a[i] = h0 / 6.0;
        b[i] = (h0 + h1) / 3.0;
        c[i] = h1 / 6.0;
        r[i] = (f[i + 1] - f[i]) / h1 - (f[i] - f[i - 1]) / h0;
    }
    for (std::size_t i = 1; i < n; ++i) {
        const double m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        r[i] -= m * r[i - 1];
    }
    std::vector<double> M(n);
    M[n - 1] = r[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) M[i] = (r[i] - c[i] * M[i + 1]) / b[i];
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = t[i + 1] - t[i];
        s += h * (M[i] * M[i] + M[i] * M[i + 1] + M[i + 1] * M[i + 1]) / 3.0;
    }
    return s;
}

std::vector<double> random_design(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> y(n);
    for (double& v : y) v = z(rng);
    std::sort(y.begin(), y.end());
    return y;
}

std::vector<double> v_grid(double h, double vmax) {
    std::vector<double> g;
    for (std::size_t j = 0; h * static_cast<double>(j) <= vmax + 1e-12; ++j) g.push_back(h * static_cast<double>(j));
    return g;
}

// Noiseless quotes through the full smoothing route.
struct NoiselessPipeline {
    ModelSpec model = market_model();
    OptionQuoteSet quotes;
    SplineFit fit;
    std::vector<double> grid = v_grid(0.05, 20.0);
    ExponentCurve curve;

    NoiselessPipeline() {
        MarketConfig cfg;
        cfg.n_quotes = 4000;
        cfg.sigma_bar = 0.0;
        cfg.seed = 11;
        quotes = exp_weight(synthesize_quotes(cfg, model));
        fit = spline_fit(quotes, gcv_select(quotes));
        curve = exponent_from_transform(fourier_of_fit(fit, grid), grid, cfg.maturity, false);
    }
};

const NoiselessPipeline& noiseless() {
    static const NoiselessPipeline p;
    return p;
}

} // namespace

// ---------------------------------------------------------------------------
// Direct route

TEST_CASE("direct route: trivial values") {
    OptionQuoteSet q;
    q.y = {-1.0, 0.0, 0.5, 1.0};
    q.clean = q.noisy = {0.0, 0.0, 0.0, 0.0};
    q.sigma = {0.0, 0.0, 0.0, 0.0};
    q.deltas = {1.0, 1.0, 0.5, 0.5};
    const auto w = exp_weight(q);
    const auto cf = direct_cf_Q(w, {0.0, 1.0, 7.5});
    for (const auto& v : cf.values) CHECK(v == cplx(1.0, 0.0));
    CHECK(cf.measure == Measure::Q);
    CHECK(cf.eps == doctest::Approx(2.5));
    CHECK_THROWS_AS(direct_cf_Q(q, {0.0}), LevyError); // unweighted

    q.noisy = {0.3, 0.2, 0.1, 0.05};
    CHECK(direct_cf_Q(exp_weight(q), {0.0}).values[0] == cplx(1.0, 0.0));
}

namespace {

struct RegularGridQuotes {
    double A = 6.0;
    std::size_t n = 4000;
    CFEstimate cf;
    OptionQuoteSet weighted;
    ModelSpec model = market_model();
    RegularGridQuotes() {
        const OptionTransform pricer(model, 0.25);
        const double d = 2.0 * A / static_cast<double>(n);
        OptionQuoteSet q;
        for (std::size_t j = 0; j < n; ++j) {
            const double y = -A + d * (static_cast<double>(j) + 0.5);
            const double o = pricer(y);
            q.y.push_back(y);
            q.clean.push_back(o);
            q.noisy.push_back(o);
            q.sigma.push_back(0.0);
            q.deltas.push_back(d);
        }
        weighted = exp_weight(q);
        cf = direct_cf_Q(weighted, v_grid(0.05, 20.0));
    }
};

const RegularGridQuotes& regular_grid() {
    static const RegularGridQuotes r;
    return r;
}

} // namespace

TEST_CASE("direct route: noiseless regular grid to 1e-3" * doctest::may_fail()) {
    // Not reached: the left tail of e^{-y} O_T beyond y = -6 is ~8e-5 for this
    // model and the truncation error grows like 2 |u| e^{A} O_T(-A).
    const RegularGridQuotes& r = regular_grid();
    double worst = 0.0;
    for (std::size_t j = 0; j < r.cf.grid.size(); ++j)
        worst = std::max(worst, std::abs(r.cf.values[j] - cf_at(r.model, 0.25, r.cf.grid[j])));
    CHECK(worst <= 1e-3);
}

TEST_CASE("direct route: error within the truncation bound") {
    // f = e^{-y} O_T decreases to 0 as y -> -inf, so integrating by parts
    // |u (u + i) int_{-inf}^{-A} e^{iuy} f| <= 2 |u + i| f(-A); the right
    // tail and the midpoint-rule error are orders of magnitude smaller.
    const RegularGridQuotes& r = regular_grid();
    const auto dens = density_on_grid(r.model, 0.25, UniformGrid{0.0, 120.0, 1u << 18});
    double put = 0.0; // E (e^{-A} - e^Y)^+
    for (std::size_t j = 0; j < dens.values.size(); ++j) {
        const double x = dens.grid.node(j);
        put += std::max(std::exp(-r.A) - std::exp(x), 0.0) * dens.values[j];
    }
    const double f_at = std::exp(r.A) * put * dens.grid.spacing();
    CHECK(f_at > 1e-5); // the tail is genuinely there
    for (std::size_t j = 0; j < r.cf.grid.size(); ++j) {
        const double u = r.cf.grid[j];
        const double err = std::abs(r.cf.values[j] - cf_at(r.model, 0.25, u));
        CHECK(err <= 2.0 * std::abs(cplx(u, 1.0)) * f_at + 2e-5);
    }
}

// ---------------------------------------------------------------------------
// Spline

TEST_CASE("spline reproduces a straight line") {
    // Exact up to round-off; the closest pair of abscissae (gap ~3e-3) costs
    // ~h^-3 in the conditioning of the banded system.
    const auto y = random_design(50, 1);
    std::vector<double> z;
    for (double v : y) z.push_back(0.3 - 1.7 * v);
    SplineOptions opt;
    opt.pinned = false;
    for (double L : {0.0, 1e-4, 1.0, 1e6}) {
        const auto f = spline_fit(y, z, L, opt);
        for (double t : {-2.0, -0.3, 0.0, 0.9, 2.5}) CHECK(std::abs(f(t) - (0.3 - 1.7 * t)) <= 1e-6);
        CHECK(f.roughness() <= 1e-8);
    }
}

TEST_CASE("spline with L = 0 interpolates") {
    const auto y = random_design(200, 2);
    std::vector<double> z;
    for (double v : y) z.push_back(std::sin(3 * v) + 0.1 * v * v);
    for (bool pinned : {false, true}) {
        SplineOptions opt;
        opt.pinned = pinned;
        const auto f = spline_fit(y, z, 0.0, opt);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(f(y[i]) - z[i]) <= 1e-9);
    }
}

TEST_CASE("spline with huge penalty tends to the OLS line") {
    const auto y = random_design(100, 3);
    std::vector<double> z;
    for (double v : y) z.push_back(std::exp(-v * v) + 0.5 * v);
    // Closed-form OLS.
    const double n = static_cast<double>(y.size());
    double sy = 0, sz = 0, syy = 0, syz = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sy += y[i];
        sz += z[i];
        syy += y[i] * y[i];
        syz += y[i] * z[i];
    }
    const double b = (n * syz - sy * sz) / (n * syy - sy * sy), a = (sz - b * sy) / n;
    SplineOptions opt;
    opt.pinned = false;
    const auto f = spline_fit(y, z, 1e9, opt);
    for (double v : y) CHECK(std::abs(f(v) - (a + b * v)) <= 1e-6);
}

TEST_CASE("spline pinned ends and duplicates") {
    const auto y = random_design(60, 4);
    std::vector<double> z;
    for (double v : y) z.push_back(std::exp(-v * v));
    const auto f = spline_fit(y, z, 1e-3);
    CHECK(f.knots.front() == doctest::Approx(y.front() - 5.0));
    CHECK(f.knots.back() == doctest::Approx(y.back() + 5.0));
    CHECK(std::abs(f.values.front()) <= 1e-8);
    CHECK(std::abs(f.values.back()) <= 1e-8);
    CHECK(f(y.front() - 7.0) == 0.0);

    auto yd = y;
    yd[10] = yd[11];
    CHECK_THROWS_AS(spline_fit(yd, z, 1.0), LevyError);
    CHECK_THROWS_AS(spline_fit(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 2}, 1.0), LevyError);
}

TEST_CASE("spline minimises the penalised objective") {
    const auto y = random_design(30, 5);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> e(0.0, 0.05);
    std::vector<double> z;
    for (double v : y) z.push_back(std::exp(-v * v) + e(rng));
    for (bool pinned : {false, true}) {
        SplineOptions opt;
        opt.pinned = pinned;
        const double L = 1e-2;
        const auto fit = spline_fit(y, z, L, opt);
        const std::size_t off = pinned ? 1 : 0;
        auto objective = [&](const std::vector<double>& vals) {
            double rss = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) rss += (z[i] - vals[i + off]) * (z[i] - vals[i + off]);
            return rss + L * natural_roughness(fit.knots, vals);
        };
        const double base = objective(fit.values);
        CHECK(natural_roughness(fit.knots, fit.values) == doctest::Approx(fit.roughness()).epsilon(1e-6));
        for (std::size_t j = off; j < fit.values.size() - off; ++j) {
            for (double s : {-1e-4, 1e-4}) {
                auto v = fit.values;
                v[j] += s;
                CHECK(objective(v) >= base - 1e-13);
            }
        }
    }
}

TEST_CASE("hat trace is monotone and bounded") {
    const auto y = random_design(80, 7);
    std::vector<double> z;
    for (double v : y) z.push_back(std::cos(2 * v));
    SplineOptions opt;
    opt.pinned = false;
    const auto s = gcv_scan(y, z, opt);
    REQUIRE(s.L.size() == 60);
    CHECK(s.L.front() == doctest::Approx(1e-8));
    CHECK(s.L.back() == doctest::Approx(1e4));
    for (std::size_t k = 0; k < s.trace_hat.size(); ++k) {
        CHECK(s.trace_hat[k] >= 2.0 - 1e-6);
        CHECK(s.trace_hat[k] <= 80.0 + 1e-9);
        if (k) CHECK(s.trace_hat[k] <= s.trace_hat[k - 1] + 1e-9);
    }
    const auto sp = gcv_scan(y, z, SplineOptions{});
    for (std::size_t k = 1; k < sp.trace_hat.size(); ++k) CHECK(sp.trace_hat[k] <= sp.trace_hat[k - 1] + 1e-9);
}

// GCV on the candidate grid, recomputed from independent fits.
TEST_CASE("gcv selection") {
    const auto y = random_design(120, 8);
    SUBCASE("smooth noiseless data picks a small penalty") {
        std::vector<double> z;
        for (double v : y) z.push_back(std::sin(2 * v));
        SplineOptions opt;
        opt.pinned = false;
        const auto s = gcv_scan(y, z, opt);
        CHECK(s.best <= 10);
        // GCV rises from the selected penalty to the top of the grid.
        CHECK(s.score.back() > s.score[s.best]);
        CHECK(s.score[s.score.size() / 2] > s.score[s.best]);
    }
    SUBCASE("pure noise picks a large penalty") {
        std::mt19937_64 rng(9);
        std::normal_distribution<double> e(0.0, 1.0);
        std::vector<double> z;
        for (std::size_t i = 0; i < y.size(); ++i) z.push_back(e(rng));
        SplineOptions opt;
        opt.pinned = false;
        const auto s = gcv_scan(y, z, opt);
        CHECK(s.best >= 50);
    }
    SUBCASE("scale equivariance") {
        std::mt19937_64 rng(10);
        std::normal_distribution<double> e(0.0, 0.1);
        std::vector<double> z, z2;
        for (double v : y) {
            z.push_back(std::exp(-v * v) + e(rng));
            z2.push_back(2.0 * z.back());
        }
        CHECK(gcv_select(y, z) == gcv_select(y, z2));
    }
    SUBCASE("score matches its definition") {
        std::vector<double> z;
        for (double v : y) z.push_back(std::tanh(v) + 0.01 * std::sin(40 * v));
        const auto s = gcv_scan(y, z);
        const std::size_t k = 30;
        const auto f = spline_fit(y, z, s.L[k]);
        double rss = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) rss += (z[i] - f(y[i])) * (z[i] - f(y[i]));
        const double n = static_cast<double>(y.size());
        CHECK(s.score[k] == doctest::Approx(n * rss / ((n - s.trace_hat[k]) * (n - s.trace_hat[k]))).epsilon(1e-8));
    }
}

// ---------------------------------------------------------------------------
// Fourier of the fit

TEST_CASE("Fourier of a zero fit") {
    const auto y = random_design(20, 12);
    const auto f = spline_fit(y, std::vector<double>(20, 0.0), 1.0);
    for (const auto& v : fourier_of_fit(f, {0.0, 1.0, 10.0})) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("Fourier DC bin equals the trapezoid integral") {
    const auto y = random_design(40, 13, 0.5);
    std::vector<double> z;
    for (double v : y) z.push_back(std::exp(-4 * v * v));
    const auto fit = spline_fit(y, z, 1e-4);
    const double a = fit.knots.front(), b = fit.knots.back();
    const std::size_t N = 1u << 15;
    const double h = (b - a) / static_cast<double>(N - 1);
    double s = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        const double t = a + h * static_cast<double>(j);
        s += ((j == 0 || j + 1 == N) ? 0.5 : 1.0) * std::exp(-t) * fit(t);
    }
    s *= h;
    const auto F = fourier_of_fit(fit, {0.0});
    CHECK(std::abs(F[0] - s) <= 1e-8 * std::abs(s));
    CHECK(std::abs(F[0].imag()) <= 1e-12);
}

TEST_CASE("damped transform of a Gaussian bump") {
    // int e^{ivy} e^{-y} e^{-y^2/2} dy = sqrt(2 pi) exp((iv - 1)^2 / 2)
    std::vector<double> v;
    for (double x = -30.0; x <= 30.0; x += 0.37) v.push_back(x);
    const auto F = damped_fourier([](double y) { return std::exp(-0.5 * y * y); }, -14.0, 14.0, v);
    for (std::size_t k = 0; k < v.size(); ++k) {
        const cplx want = std::sqrt(2 * std::numbers::pi) * std::exp(0.5 * cplx(-1.0, v[k]) * cplx(-1.0, v[k]));
        CHECK(std::abs(F[k] - want) <= 1e-6);
    }
}

// ---------------------------------------------------------------------------
// Exponent recovery

TEST_CASE("exponent: exact transform inverts") {
    const auto m = ModelSpec::stable_plus_diffusion(0.2, 1.5, 0.05, 0.05);
    const double T = 0.25;
    std::vector<double> grid;
    for (double v = -20.0; v <= 20.0 + 1e-9; v += 0.05) grid.push_back(std::abs(v) < 1e-12 ? 0.0 : v);
    // F[O](v + i) = (1 - phi_T(v)) / (v (v + i)). Mild jumps keep |phi_T| >= 1e-3
    // on the grid; where it is tiny 1 - v(v+i)F cancels to round-off.
    std::vector<cplx> F;
    for (double v : grid) {
        if (v == 0.0) {
            F.push_back(0.0); // v (v + i) F vanishes there whatever F is
        } else {
            F.push_back((1.0 - cf_at(m, T, v)) / (v * cplx(v, 1.0)));
        }
    }
    const auto c = exponent_from_transform(F, grid, T);
    CHECK(c.branch_anchor);
    CHECK(c.ambiguous_steps == 0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (grid[j] == 0.0) CHECK(std::abs(c.values[j]) == 0.0);
        CHECK(std::abs(c.values[j] - char_exponent(m, grid[j])) <= 1e-6);
    }
    // Continuity of the unwound branch.
    for (std::size_t j = 1; j < grid.size(); ++j) CHECK(std::abs(c.values[j].imag() - c.values[j - 1].imag()) * T < std::numbers::pi);
}

TEST_CASE("exponent: ambiguity and vanishing argument") {
    const std::vector<double> grid{0.0, 1.0, 2.0};
    // w = 1 - v(v+i)F jumps by ~pi between the last two nodes.
    std::vector<cplx> F{0.0, 0.0, 2.0 / (2.0 * cplx(2.0, 1.0))}; // w(2) = -1
    std::vector<cplx> Fj = F;
    Fj[1] = (1.0 - std::polar(1.0, 0.1)) / cplx(1.0, 1.0);
    Fj[2] = (1.0 - std::polar(1.0, 0.1 + 0.95 * std::numbers::pi)) / (2.0 * cplx(2.0, 1.0));
    CHECK_THROWS_AS(exponent_from_transform(Fj, grid, 1.0), LevyError);
    const auto loose = exponent_from_transform(Fj, grid, 1.0, false);
    CHECK(loose.ambiguous_steps == 1);
    std::vector<cplx> Fz{0.0, 1.0 / cplx(1.0, 1.0), 0.0}; // w(1) = 0
    CHECK_THROWS_AS(exponent_from_transform(Fz, grid, 1.0), LevyError);
}

TEST_CASE("cf from exponent") {
    ExponentCurve zero;
    zero.grid = {0.0, 0.5, 1.0};
    zero.values.assign(3, 0.0);
    for (const auto& v : cf_from_exponent(zero, 0.25, 0.1).values) CHECK(v == cplx(1.0, 0.0));

    const auto m = ModelSpec::symmetric_stable(0.7, 1.3);
    ExponentCurve c;
    for (double v = 0.0; v <= 10.0; v += 0.1) {
        c.grid.push_back(v);
        c.values.push_back(char_exponent(m, v));
    }
    const auto cf = cf_from_exponent(c, 0.25, 0.02);
    CHECK(cf.eps == 0.02);
    CHECK(cf.measure == Measure::Q);
    for (std::size_t j = 0; j < cf.grid.size(); ++j) CHECK(std::abs(cf.values[j] - cf_at(m, 0.25, cf.grid[j])) <= 1e-10);

    std::ostringstream os;
    write_exponent_csv(os, c);
    CHECK(os.str().rfind("v,re_psi,im_psi\n", 0) == 0);
}

TEST_CASE("noiseless smoothing route recovers the cf") {
    const auto& p = noiseless();
    CHECK(p.fit.weighted);
    const auto cf = cf_from_exponent(p.curve, 0.25, noise_level(p.quotes));
    double worst = 0.0;
    for (std::size_t j = 0; j < cf.grid.size(); ++j) {
        if (cf.grid[j] > 15.0) break;
        worst = std::max(worst, std::abs(cf.values[j] - cf_at(p.model, 0.25, cf.grid[j])));
    }
    CHECK(worst <= 3e-2);
}

TEST_CASE("noiseless smoothing route recovers the exponent to 1e-2" * doctest::may_fail()) {
    // Not reached: at v = 15 |phi_T| ~ 0.02, so dividing by T and taking the
    // log magnifies the ~1e-3 cf error (quotes end near |y| = 2) ~200-fold.
    const auto& p = noiseless();
    double worst = 0.0;
    for (std::size_t j = 0; j < p.curve.grid.size(); ++j) {
        if (p.curve.grid[j] > 15.0) break;
        worst = std::max(worst, std::abs(p.curve.values[j] - char_exponent(p.model, p.curve.grid[j])));
    }
    CHECK(worst <= 1e-2);
}

TEST_CASE("direct and smoothing routes agree on noiseless dense quotes") {
    // Dense quotes covering |y| <= 6; on the normal design (quotes end near
    // |y| = 2.2) the direct sum misses the tails and is off by ~0.1 at v = 10.
    const auto& r = regular_grid();
    const auto fit = spline_fit(r.weighted, gcv_select(r.weighted));
    const auto curve = exponent_from_transform(fourier_of_fit(fit, r.cf.grid), r.cf.grid, 0.25, false);
    const auto spline = cf_from_exponent(curve, 0.25, noise_level(r.weighted));
    double worst = 0.0;
    for (std::size_t j = 0; j < r.cf.grid.size(); ++j) {
        if (r.cf.grid[j] > 10.0) break;
        worst = std::max(worst, std::abs(r.cf.values[j] - spline.values[j]));
    }
    CHECK(worst <= 2e-2);
}
