#pragma once

#include "levyspec/levy_models.hpp"

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <utility>
#include <vector>

namespace levyspec {

enum class NoiseForm {
    Squared,      // sigma(y) = (sigma_bar O_T(y))^2
    Proportional, // sigma(y) = sigma_bar O_T(y)
};

std::string_view to_string(NoiseForm f);
NoiseForm noise_form_from_string(std::string_view name);

struct MarketConfig {
    double spot = 1.0;
    double rate = 0.06;
    double maturity = 0.25;
    std::size_t n_quotes = 1000;
    double sigma_bar = 1.0;
    double design_mean = 0.0;
    double design_variance = 1.0 / 3.0;
    NoiseForm noise_form = NoiseForm::Squared;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Quotes on negative log-forward moneyness y = log(K/S) - rT. O_T(y) is the
/// call price over S for y >= 0 and the put price over S for y < 0.
struct OptionQuoteSet {
    std::vector<double> y;
    std::vector<double> clean;
    std::vector<double> noisy;
    std::vector<double> sigma;
    std::vector<double> deltas;
    std::uint64_t seed = 0;
    bool weighted = false; // true after exp_weight

    std::size_t size() const { return y.size(); }
};

/// O_T(y) for a risk-neutral model, by Fourier inversion of
///   F[O_T](v) = (1 - phi_T(v - i)) / (v (v - i)).
/// A Black-Scholes surface with the same variance is subtracted in the Fourier
/// domain and added back in closed form, so the inverted difference decays
/// like the model cf. The inversion runs once on a 2^15 grid; prices between
/// nodes come from cubic interpolation.
class OptionTransform {
public:
    OptionTransform(const ModelSpec& model_q, double T, std::size_t points = 1u << 15);

    double operator()(double y) const;
    std::vector<double> operator()(const std::vector<double>& ys) const;

    /// F[O_T](v) evaluated from the exponent, with the v = 0 limit.
    cplx transform(double v) const;

    double bs_sigma() const { return bs_sigma_; }
    double maturity() const { return T_; }
    double window_halfwidth() const { return v_max_; }

private:
    ModelSpec model_;
    double T_;
    double bs_sigma_;
    double v_max_;
    double dy_;
    std::vector<double> diff_; // O_T - O_BS on the y grid
    cplx dpsi_at_minus_i_;
};

/// Normalised Black-Scholes O_T(y) with volatility sigma.
double bs_option_transform(double y, double sigma, double T);

std::vector<double> price_OT(const ModelSpec& model_q, double T, const std::vector<double>& y_grid);

/// (calls, puts) from O via C - P = S (1 - e^y).
std::pair<std::vector<double>, std::vector<double>> parity_split(const std::vector<double>& O,
                                                                 const std::vector<double>& y, double spot = 1.0);

OptionQuoteSet synthesize_quotes(const MarketConfig& config, const OptionTransform& pricer);
OptionQuoteSet synthesize_quotes(const MarketConfig& config, const ModelSpec& model_q);

/// O~ = e^{-y} O and sigma~ = e^{-y} sigma.
OptionQuoteSet exp_weight(const OptionQuoteSet& quotes);
OptionQuoteSet exp_unweight(const OptionQuoteSet& quotes);

/// eps = |delta|^2 + sum delta_j^2 sigma~(y_j)^2 (sigma~ is the weighted scale).
double noise_level(const OptionQuoteSet& quotes);

void write_quotes_csv(std::ostream& os, const OptionQuoteSet& q);

} // namespace levyspec
