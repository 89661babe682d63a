#include "levyspec/option_market.hpp"

#include "levyspec/errors.hpp"
#include "levyspec/fft.hpp"
#include "levyspec/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace levyspec {

namespace {

constexpr cplx kI{0.0, 1.0};

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Exponent of the risk-neutral Gaussian with volatility s.
cplx bs_psi(double s, cplx u) { return -0.5 * s * s * (kI * u + u * u); }

} // namespace

std::string_view to_string(NoiseForm f) { return f == NoiseForm::Squared ? "squared" : "proportional"; }

NoiseForm noise_form_from_string(std::string_view name) {
    if (name == "squared") return NoiseForm::Squared;
    if (name == "proportional") return NoiseForm::Proportional;
    fail(ErrorCode::InvalidConfig, "noise_form must be 'squared' or 'proportional', got '" + std::string(name) + "'");
}

void MarketConfig::validate() const {
    require(spot > 0.0 && maturity > 0.0, ErrorCode::InvalidArgument, "market: spot and maturity must be > 0");
    require(n_quotes >= 2, ErrorCode::InvalidArgument, "market: need at least 2 quotes");
    require(sigma_bar >= 0.0, ErrorCode::InvalidArgument, "market: sigma_bar must be >= 0");
    require(design_variance > 0.0, ErrorCode::InvalidArgument, "market: design variance must be > 0");
}

double bs_option_transform(double y, double sigma, double T) {
    if (sigma <= 0.0) return 0.0;
    const double sq = sigma * std::sqrt(T);
    const double d1 = (-y + 0.5 * sq * sq) / sq;
    const double d2 = d1 - sq;
    if (y >= 0.0) return norm_cdf(d1) - std::exp(y) * norm_cdf(d2);
    return std::exp(y) * norm_cdf(-d2) - norm_cdf(-d1);
}

OptionTransform::OptionTransform(const ModelSpec& model_q, double T, std::size_t points) : model_(model_q), T_(T) {
    model_.validate();
    require(T > 0.0, ErrorCode::InvalidArgument, "option transform: maturity must be > 0");
    require(points >= 64 && points % 4 == 0, ErrorCode::InvalidArgument, "option transform: bad grid size");
    const cplx at = cf_at(model_, T, cplx(0.0, -1.0));
    if (!(std::abs(at - 1.0) <= 1e-8)) {
        std::ostringstream os;
        os << "model is not a martingale measure: |phi_T(-i) - 1| = " << std::abs(at - 1.0);
        fail(ErrorCode::MartingaleViolation, os.str());
    }
    const double var = variance_per_unit_time(model_);
    require(std::isfinite(var), ErrorCode::InvalidArgument, "option transform: model needs a finite variance");
    bs_sigma_ = std::sqrt(std::max(var, 0.0));

    const double h = 1e-5;
    dpsi_at_minus_i_ =
        (char_exponent(model_, cplx(h, -1.0)) - char_exponent(model_, cplx(-h, -1.0))) / (2.0 * h);

    auto diff_at = [&](double v) -> cplx {
        if (v == 0.0) {
            const cplx bs_d = kI * (0.5 * bs_sigma_ * bs_sigma_);
            return -kI * T_ * (dpsi_at_minus_i_ - bs_d);
        }
        const cplx w = cplx(v, -1.0);
        return (std::exp(T_ * bs_psi(bs_sigma_, w)) - std::exp(T_ * char_exponent(model_, w))) / (v * w);
    };

    v_max_ = 256.0;
    while (std::abs(diff_at(v_max_)) > 1e-12 && v_max_ < 1e6) v_max_ *= 2.0;

    const std::size_t n = points;
    const double dv = 2.0 * v_max_ / static_cast<double>(n);
    dy_ = 2.0 * std::numbers::pi / (static_cast<double>(n) * dv);
    std::vector<cplx> buf(n);
    const std::size_t half = n / 2;
    for (std::size_t k = 0; k <= half; ++k) {
        const double v = (static_cast<double>(k) - static_cast<double>(half)) * dv;
        const cplx d = diff_at(v);
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        buf[k] = sign * d;
        // O is real, so D(-v) = conj(D(v)).
        if (k > 0 && k < half) buf[n - k] = ((n - k) % 2 == 0 ? 1.0 : -1.0) * std::conj(d);
    }
    fft_forward(buf);
    diff_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        diff_[j] = sign * buf[j].real() * dv / (2.0 * std::numbers::pi);
    }
}

cplx OptionTransform::transform(double v) const {
    if (v == 0.0) return -kI * T_ * dpsi_at_minus_i_;
    const cplx w = cplx(v, -1.0);
    return (1.0 - std::exp(T_ * char_exponent(model_, w))) / (v * w);
}

double OptionTransform::operator()(double y) const {
    const std::size_t n = diff_.size();
    const double pos = y / dy_ + static_cast<double>(n / 2);
    require(pos >= 1.0 && pos <= static_cast<double>(n) - 3.0, ErrorCode::GridRange,
            "option transform: y outside the inversion window");
    const std::size_t j = static_cast<std::size_t>(std::floor(pos));
    const double t = pos - static_cast<double>(j);
    // Cubic Lagrange through nodes j-1..j+2.
    const double p0 = diff_[j - 1], p1 = diff_[j], p2 = diff_[j + 1], p3 = diff_[j + 2];
    const double d = -t * (t - 1.0) * (t - 2.0) / 6.0 * p0 + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * p1 -
                     (t + 1.0) * t * (t - 2.0) / 2.0 * p2 + (t + 1.0) * t * (t - 1.0) / 6.0 * p3;
    return bs_option_transform(y, bs_sigma_, T_) + d;
}

std::vector<double> OptionTransform::operator()(const std::vector<double>& ys) const {
    std::vector<double> out(ys.size());
    for (std::size_t j = 0; j < ys.size(); ++j) out[j] = (*this)(ys[j]);
    return out;
}

std::vector<double> price_OT(const ModelSpec& model_q, double T, const std::vector<double>& y_grid) {
    const OptionTransform pricer(model_q, T);
    std::vector<double> out = pricer(y_grid);
    for (double& o : out) {
        require(o >= -1e-8, ErrorCode::NonConvergence, "price_OT: negative price beyond tolerance");
        o = std::max(o, 0.0);
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> parity_split(const std::vector<double>& O,
                                                                 const std::vector<double>& y, double spot) {
    require(O.size() == y.size(), ErrorCode::InvalidArgument, "parity_split: grid mismatch");
    std::vector<double> calls(O.size()), puts(O.size());
    for (std::size_t j = 0; j < O.size(); ++j) {
        const double parity = spot * (1.0 - std::exp(y[j]));
        if (y[j] >= 0.0) {
            calls[j] = spot * O[j];
            puts[j] = calls[j] - parity;
        } else {
            puts[j] = spot * O[j];
            calls[j] = puts[j] + parity;
        }
    }
    return {std::move(calls), std::move(puts)};
}

OptionQuoteSet synthesize_quotes(const MarketConfig& config, const OptionTransform& pricer) {
    config.validate();
    OptionQuoteSet q;
    q.seed = config.seed;
    const std::size_t n = config.n_quotes;
    Rng rng(config.seed);
    std::normal_distribution<double> design(config.design_mean, std::sqrt(config.design_variance));
    std::normal_distribution<double> noise(0.0, 1.0);
    q.y.resize(n);
    for (double& y : q.y) y = design(rng);
    std::sort(q.y.begin(), q.y.end());
    for (std::size_t j = 1; j < n; ++j) {
        require(q.y[j] > q.y[j - 1], ErrorCode::SingularSystem, "synthesize_quotes: duplicate design point");
    }
    q.clean.resize(n);
    q.noisy.resize(n);
    q.sigma.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        q.clean[j] = std::max(pricer(q.y[j]), 0.0);
        const double base = config.sigma_bar * q.clean[j];
        q.sigma[j] = config.noise_form == NoiseForm::Squared ? base * base : base;
    }
    for (std::size_t j = 0; j < n; ++j) q.noisy[j] = q.clean[j] + q.sigma[j] * noise(rng);
    q.deltas.resize(n);
    q.deltas[0] = q.y[1] - q.y[0];
    for (std::size_t j = 1; j < n; ++j) q.deltas[j] = q.y[j] - q.y[j - 1];
    return q;
}

OptionQuoteSet synthesize_quotes(const MarketConfig& config, const ModelSpec& model_q) {
    return synthesize_quotes(config, OptionTransform(model_q, config.maturity));
}

namespace {

OptionQuoteSet scale_by_exp(const OptionQuoteSet& quotes, double sign) {
    OptionQuoteSet out = quotes;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double f = std::exp(sign * out.y[j]);
        out.clean[j] *= f;
        out.noisy[j] *= f;
        out.sigma[j] *= f;
    }
    return out;
}

} // namespace

OptionQuoteSet exp_weight(const OptionQuoteSet& quotes) {
    require(!quotes.weighted, ErrorCode::InvalidArgument, "exp_weight: quotes are already weighted");
    OptionQuoteSet out = scale_by_exp(quotes, -1.0);
    out.weighted = true;
    return out;
}

OptionQuoteSet exp_unweight(const OptionQuoteSet& quotes) {
    require(quotes.weighted, ErrorCode::InvalidArgument, "exp_unweight: quotes are not weighted");
    OptionQuoteSet out = scale_by_exp(quotes, 1.0);
    out.weighted = false;
    return out;
}

double noise_level(const OptionQuoteSet& quotes) {
    double eps = 0.0;
    for (std::size_t j = 0; j < quotes.size(); ++j) {
        const double st = quotes.weighted ? quotes.sigma[j] : std::exp(-quotes.y[j]) * quotes.sigma[j];
        const double d2 = quotes.deltas[j] * quotes.deltas[j];
        eps += d2 + d2 * st * st;
    }
    return eps;
}

void write_quotes_csv(std::ostream& os, const OptionQuoteSet& q) {
    os << "y,clean,noisy,sigma,delta\n";
    os.precision(17);
    for (std::size_t j = 0; j < q.size(); ++j) {
        os << q.y[j] << "," << q.clean[j] << "," << q.noisy[j] << "," << q.sigma[j] << "," << q.deltas[j] << "\n";
    }
}

} // namespace levyspec
