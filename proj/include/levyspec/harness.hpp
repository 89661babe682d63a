#pragma once

#include "levyspec/adaptive.hpp"
#include "levyspec/calibration.hpp"
#include "levyspec/option_market.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace levyspec {

enum class Mode { Simulate, EstimateP, CalibrateQ, McStudy, CalibrateCv };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view name);

struct ExperimentConfig {
    Mode mode = Mode::McStudy;
    Measure measure = Measure::P;
    ModelSpec model;
    ModelSpec null_model = ModelSpec::symmetric_stable(1.0, 1.0);
    SamplerKind sampler = SamplerKind::Auto;

    // Q side
    MarketConfig market;
    bool direct_route = false;
    SplineOptions spline;
    bool risk_neutralize_model = true;

    CutoffLadder ladder = default_ladder();
    EstimatorSettings est;
    CalibrationSettings cal;
    Regime regime = Regime::P;
    RLEClassSpec cls;

    std::vector<std::size_t> n_grid{1000};
    std::vector<double> sigma_bar_grid{1.0};
    std::size_t trials = 1;
    double dt = 1.0;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    std::optional<std::string> cv_path;   // load critical values instead of calibrating
    std::optional<std::string> data_path; // estimate-p on increments from a CSV file
    bool exact_cf = false;                // inject the exact cf (eps = 1 / n) instead of data
    bool record_runtime = false;          // adds runtime_ms (breaks byte-identical reruns)

    nlohmann::json source; // the parsed document, echoed into the manifest

    void validate() const;
};

/// Parses the JSON document; unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

nlohmann::json model_to_json(const ModelSpec& m);
ModelSpec model_from_json(const nlohmann::json& j);

nlohmann::json cv_to_json(const CriticalValues& cv);
CriticalValues cv_from_json(const nlohmann::json& j);

struct TrialRecord {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    Measure measure = Measure::P;
    std::size_t n = 0;
    double sigma_bar = 0.0;
    Family family = Family::SymmetricStable;
    double true_alpha = 0.0;
    double alpha_hat = 0.0;      // adaptive estimate (xi variant when configured)
    double alpha_hat_base = 0.0; // adaptive estimate without the xi variant
    double alpha_tilde_theory = 0.0; // fixed cutoff U-bar; NaN when U-bar is undefined
    double U_theory = 0.0;
    double sigma2_theory = 0.0;
    double eps = 0.0;
    Regime regime = Regime::P;
    std::optional<double> xi;
    double runtime_ms = 0.0;
};

void write_trials_header(std::ostream& os, bool with_runtime);
void write_trial_row(std::ostream& os, const TrialRecord& r, bool with_runtime);

/// Critical values at sample size n under the configured null model.
CriticalValues critical_values_for(const ExperimentConfig& cfg, std::size_t n);

/// Sample size used for the Q-side critical values: round(1 / eps), at least 2.
std::size_t q_equivalent_n(double eps);

struct PipelineOutput {
    TrialRecord record;
    AggregationTrace trace;
    AggregationTrace trace_base;
    std::optional<OptionQuoteSet> quotes;
    std::optional<ExponentCurve> exponent;
    std::optional<SpectralCurve> curve_theory;
};

PipelineOutput pipeline_p(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed, const CriticalValues& cv,
                          const IncrementSample* data = nullptr);
PipelineOutput pipeline_q(const ExperimentConfig& cfg, double sigma_bar, std::uint64_t seed, const CriticalValues& cv);

/// Noise level of the quote set the Q pipeline would see for (sigma_bar, seed).
double q_noise_level(const ExperimentConfig& cfg, double sigma_bar, std::uint64_t seed);

/// Executes the configured mode, writing artifacts into out_dir. Returns the
/// process exit status; on failure errors.json is written and any trials
/// file is renamed with a .partial suffix.
int run(const ExperimentConfig& cfg, const std::string& out_dir);

/// Per-trial seed: independent of the worker count.
std::uint64_t trial_seed(std::uint64_t master, std::size_t group, std::size_t trial);

} // namespace levyspec
