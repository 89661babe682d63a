#include "levyspec/ecf.hpp"

#include "levyspec/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace levyspec {

std::string_view to_string(Measure m) { return m == Measure::P ? "P" : "Q"; }

void CFEstimate::validate() const {
    require(grid.size() >= 2, ErrorCode::InvalidArgument, "CFEstimate: grid needs at least 2 points");
    require(values.size() == grid.size(), ErrorCode::InvalidArgument, "CFEstimate: grid/value length mismatch");
    require(eps > 0.0, ErrorCode::InvalidArgument, "CFEstimate: eps must be > 0");
    require(grid.front() >= 0.0, ErrorCode::InvalidArgument, "CFEstimate: grid must be nonnegative");
    for (std::size_t j = 1; j < grid.size(); ++j) {
        require(grid[j] > grid[j - 1], ErrorCode::InvalidArgument, "CFEstimate: grid must be strictly increasing");
    }
}

bool CFEstimate::uniform_from_zero(double* spacing) const {
    if (grid.size() < 2 || grid.front() != 0.0) return false;
    const double h = grid[1];
    for (std::size_t j = 2; j < grid.size(); ++j) {
        if (std::abs(grid[j] - static_cast<double>(j) * h) > 1e-9 * h * static_cast<double>(j)) return false;
    }
    if (spacing) *spacing = h;
    return true;
}

cplx CFEstimate::at(double u, bool clamp, bool* clamped) const { return CfView(*this)(u, clamp, clamped); }

CfView::CfView(const CFEstimate& cf) : cf_(&cf) {
    double h = 0.0;
    if (cf.uniform_from_zero(&h)) h_ = h;
}

cplx CfView::operator()(double u, bool clamp, bool* clamped) const {
    const auto& grid = cf_->grid;
    const auto& values = cf_->values;
    const bool negative = u < 0.0;
    double a = std::abs(u);
    const double lo = grid.front();
    const double hi = grid.back();
    const double tol = 1e-9 * std::max(1.0, hi);
    if (a < lo - tol || a > hi + tol) {
        if (!clamp) {
            std::ostringstream os;
            os << "cf evaluated at |u| = " << a << " outside its grid [" << lo << ", " << hi << "]";
            fail(ErrorCode::GridRange, os.str());
        }
        if (clamped) *clamped = true;
        a = std::clamp(a, lo, hi);
    }
    cplx val;
    if (h_ > 0.0) {
        const double pos = a / h_;
        const double r = std::round(pos);
        if (std::abs(pos - r) < 1e-9 * std::max(1.0, pos)) {
            val = values[std::min(static_cast<std::size_t>(r), values.size() - 1)];
        } else {
            const std::size_t j = std::min(static_cast<std::size_t>(pos), values.size() - 2);
            const double f = pos - static_cast<double>(j);
            val = (1.0 - f) * values[j] + f * values[j + 1];
        }
    } else {
        auto it = std::lower_bound(grid.begin(), grid.end(), a);
        std::size_t j = static_cast<std::size_t>(it - grid.begin());
        if (j < grid.size() && std::abs(grid[j] - a) <= tol) {
            val = values[j];
        } else if (j > 0 && std::abs(grid[j - 1] - a) <= tol) {
            val = values[j - 1];
        } else {
            j = std::clamp<std::size_t>(j, 1, grid.size() - 1);
            const double f = (a - grid[j - 1]) / (grid[j] - grid[j - 1]);
            val = (1.0 - f) * values[j - 1] + f * values[j];
        }
    }
    return negative ? std::conj(val) : val;
}

std::vector<double> uniform_grid(double h, std::size_t count) {
    require(h > 0.0 && count >= 2, ErrorCode::InvalidArgument, "uniform_grid: need h > 0 and count >= 2");
    std::vector<double> g(count);
    for (std::size_t j = 0; j < count; ++j) g[j] = static_cast<double>(j) * h;
    return g;
}

namespace {

// Accumulates sum_x exp(i k h x) for k = 0..K-1 into (re, im).
void accumulate_uniform(const std::vector<double>& xs, double h, std::size_t K, std::vector<double>& re,
                        std::vector<double>& im) {
    constexpr std::size_t kLanes = 8;
    constexpr std::size_t kReseed = 64;
    const std::size_t n = xs.size();
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        std::array<double, kLanes> sr, si, cr, ci;
        for (std::size_t l = 0; l < kLanes; ++l) {
            sr[l] = std::cos(h * xs[i + l]);
            si[l] = std::sin(h * xs[i + l]);
        }
        for (std::size_t k0 = 0; k0 < K; k0 += kReseed) {
            for (std::size_t l = 0; l < kLanes; ++l) {
                const double ph = static_cast<double>(k0) * h * xs[i + l];
                cr[l] = std::cos(ph);
                ci[l] = std::sin(ph);
            }
            const std::size_t k1 = std::min(K, k0 + kReseed);
            for (std::size_t k = k0; k < k1; ++k) {
                double ar = 0.0;
                double ai = 0.0;
                for (std::size_t l = 0; l < kLanes; ++l) {
                    ar += cr[l];
                    ai += ci[l];
                    const double nr = cr[l] * sr[l] - ci[l] * si[l];
                    const double ni = cr[l] * si[l] + ci[l] * sr[l];
                    cr[l] = nr;
                    ci[l] = ni;
                }
                re[k] += ar;
                im[k] += ai;
            }
        }
    }
    for (; i < n; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const double ph = static_cast<double>(k) * h * xs[i];
            re[k] += std::cos(ph);
            im[k] += std::sin(ph);
        }
    }
}

} // namespace

CFEstimate empirical_cf(const IncrementSample& sample, const std::vector<double>& grid) {
    require(!sample.values.empty(), ErrorCode::InvalidArgument, "empirical_cf: empty sample");
    CFEstimate cf;
    cf.grid = grid;
    cf.eps = 1.0 / static_cast<double>(sample.values.size());
    cf.measure = Measure::P;
    cf.values.assign(grid.size(), cplx(0.0, 0.0));
    for (double x : sample.values) {
        require(std::isfinite(x), ErrorCode::InvalidArgument, "empirical_cf: non-finite increment");
    }
    const double inv_n = cf.eps;

    double h = 0.0;
    if (cf.uniform_from_zero(&h)) {
        std::vector<double> re(grid.size(), 0.0), im(grid.size(), 0.0);
        accumulate_uniform(sample.values, h, grid.size(), re, im);
        for (std::size_t k = 0; k < grid.size(); ++k) cf.values[k] = cplx(re[k], im[k]) * inv_n;
        cf.values[0] = 1.0;
    } else {
        for (std::size_t k = 0; k < grid.size(); ++k) {
            double re = 0.0;
            double im = 0.0;
            for (double x : sample.values) {
                re += std::cos(grid[k] * x);
                im += std::sin(grid[k] * x);
            }
            cf.values[k] = cplx(re, im) * inv_n;
        }
    }
    return cf;
}

CFEstimate exact_cf(const ModelSpec& model, double t, const std::vector<double>& grid, double eps, Measure measure) {
    CFEstimate cf;
    cf.grid = grid;
    cf.eps = eps;
    cf.measure = measure;
    cf.values.resize(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) cf.values[j] = cf_at(model, t, grid[j]);
    return cf;
}

double mean_delta(const ModelSpec& model, double t, double u, double eps) {
    require(eps > 0.0 && eps < 1.0, ErrorCode::InvalidArgument, "mean_delta: eps must lie in (0, 1)");
    return eps * (1.0 - std::norm(cf_at(model, t, u)));
}

namespace {

template <class Phi>
double printed_S(Phi&& phi, double u, double v) {
    const cplx d = phi(u - v);
    const cplx s = phi(u + v);
    const cplx pu = phi(u);
    const cplx pv = phi(v);
    return d.real() + s.imag() - (pu.real() + pu.imag()) * (pv.real() + pv.imag());
}

template <class Phi>
double linearized(Phi&& phi, double u, double v) {
    const cplx pu = phi(u);
    const cplx pv = phi(v);
    const cplx s = phi(u + v);
    const cplx d = phi(u - v);
    const double cc = 0.5 * (s.real() + d.real()); // E cos(uX) cos(vX)
    const double ss = 0.5 * (d.real() - s.real()); // E sin(uX) sin(vX)
    const double cs = 0.5 * (s.imag() - d.imag()); // E cos(uX) sin(vX)
    const double sc = 0.5 * (s.imag() + d.imag()); // E sin(uX) cos(vX)
    const double egg = pu.real() * pv.real() * cc + pu.imag() * pv.imag() * ss + pu.real() * pv.imag() * cs +
                       pu.imag() * pv.real() * sc;
    return 4.0 * (egg - std::norm(pu) * std::norm(pv));
}

} // namespace

double cov_kernel_S(const CfFunction& phi, double u, double v) { return printed_S(phi, u, v); }

double cov_kernel_S(const CFEstimate& cf, double u, double v, bool clamp, bool* clamped) {
    const CfView view(cf);
    return printed_S([&](double x) { return view(x, clamp, clamped); }, u, v);
}

double linearized_kernel(const CfFunction& phi, double u, double v) { return linearized(phi, u, v); }

double linearized_kernel(const CFEstimate& cf, double u, double v, bool clamp, bool* clamped) {
    const CfView view(cf);
    return linearized([&](double x) { return view(x, clamp, clamped); }, u, v);
}

double finite_n_cov(const ModelSpec& model, double t, double u, double v, double eps) {
    require(eps > 0.0, ErrorCode::InvalidArgument, "finite_n_cov: eps must be > 0");
    const double n = 1.0 / eps;
    require(n >= 3.0 - 1e-9 && std::abs(n - std::round(n)) < 1e-6, ErrorCode::InvalidArgument,
            "finite_n_cov: eps must be 1/n with integer n >= 3");
    const cplx pu = cf_at(model, t, u);
    const cplx pv = cf_at(model, t, v);
    const cplx pupv = cf_at(model, t, u + v);
    const cplx pumv = cf_at(model, t, u - v);
    const double m2 = std::norm(pu) * std::norm(pv);
    const double e3 = eps * eps * eps;
    const double three = (pu * pv * std::conj(pupv)).real() + (std::conj(pu) * pv * pumv).real() - 2.0 * m2;
    const double two = std::norm(pupv) + std::norm(pumv) - 2.0 * m2;
    return 2.0 * e3 * (n - 1.0) * (n - 2.0) * three + e3 * (n - 1.0) * two;
}

CfFunction model_cf(const ModelSpec& model, double t) {
    return [model, t](double u) { return cf_at(model, t, u); };
}

void write_cf_csv(std::ostream& os, const CFEstimate& cf) {
    os << "# eps=" << std::setprecision(17) << cf.eps << ",measure=" << to_string(cf.measure) << "\n";
    os << "u,re,im\n";
    for (std::size_t j = 0; j < cf.grid.size(); ++j) {
        os << cf.grid[j] << "," << cf.values[j].real() << "," << cf.values[j].imag() << "\n";
    }
}

CFEstimate read_cf_csv(std::istream& is) {
    CFEstimate cf;
    std::string line;
    require(static_cast<bool>(std::getline(is, line)) && line.rfind("# eps=", 0) == 0, ErrorCode::InvalidArgument,
            "cf csv: missing '# eps=...' header");
    const auto comma = line.find(",measure=");
    require(comma != std::string::npos, ErrorCode::InvalidArgument, "cf csv: header lacks measure");
    cf.eps = std::stod(line.substr(6, comma - 6));
    cf.measure = line.substr(comma + 9) == "Q" ? Measure::Q : Measure::P;
    require(static_cast<bool>(std::getline(is, line)) && line == "u,re,im", ErrorCode::InvalidArgument,
            "cf csv: expected column header u,re,im");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double u = 0, re = 0, im = 0;
        char c1 = 0, c2 = 0;
        ls >> u >> c1 >> re >> c2 >> im;
        require(!ls.fail() && c1 == ',' && c2 == ',', ErrorCode::InvalidArgument, "cf csv: malformed row: " + line);
        cf.grid.push_back(u);
        cf.values.emplace_back(re, im);
    }
    cf.validate();
    return cf;
}

} // namespace levyspec
