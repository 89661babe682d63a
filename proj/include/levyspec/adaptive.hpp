#pragma once

#include "levyspec/ecf.hpp"
#include "levyspec/levy_models.hpp"
#include "levyspec/spectral.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace levyspec {

struct CutoffLadder {
    std::vector<double> U; // strictly decreasing

    std::size_t K() const { return U.size(); }
    void validate() const;

    /// U_k = U1 * ratio^{-(k-1)}, k = 1..K.
    static CutoffLadder geometric(double U1, double ratio, std::size_t K);
};

/// K = 30, U_k = 100 * 1.25^{-(k-1)}.
CutoffLadder default_ladder();

/// (1 - x) 1{0 <= x <= 1}.
double triangle_kernel(double x);

using Kernel = std::function<double(double)>;

/// V[i] is the critical value for rung k = i + 2 (rung 1 is never tested).
struct CriticalValues {
    std::vector<double> V;
    // calibration metadata
    ModelSpec null_model;
    double r = 1.0;
    double gamma = 0.5;
    std::size_t M = 500;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    double dt = 1.0;
    std::vector<double> ladder;
    std::vector<double> loss; // achieved null loss per rung (rung 1 first, always 0)
    std::vector<std::size_t> extended_rungs; // rungs whose V lies above the search range

    double at_rung(std::size_t k) const; // 1-based rung index, k >= 2
};

struct TraceRow {
    std::size_t k = 0;
    double U = 0.0;
    double alpha_tilde = 0.0;
    double sigma2 = 0.0; // variance of alpha~_k
    double T = 0.0;
    double gamma = 1.0;
    double alpha_hat = 0.0;
};

struct AggregationTrace {
    std::vector<TraceRow> rows;
    double final_estimate() const { return rows.empty() ? 0.0 : rows.back().alpha_hat; }
};

/// alpha^_1 = alpha~_1; alpha^_k = g_k alpha~_k + (1 - g_k) alpha^_{k-1} with
/// g_k = kernel(T_k / V_k), T_k = (alpha~_k - alpha^_{k-1})^2 / sigma2_k.
///
/// sigma2_k = +inf marks a rung whose variance has no finite bound. Such a
/// rung cannot contradict anything (T_k = 0), and while every earlier rung was
/// of that kind alpha^_{k-1} carries no information either, so the first rung
/// with a finite variance is also taken with T_k = 0.
AggregationTrace aggregate(const std::vector<double>& U, const std::vector<double>& alphas,
                           const std::vector<double>& sigma2s, const CriticalValues& cv,
                           const Kernel& kernel = triangle_kernel);

// ---------------------------------------------------------------------------
// Per-rung estimation shared by the pipelines and the calibration.

struct EstimatorSettings {
    double ell = 0.1;
    std::size_t nodes_per_cutoff = 80; // grid spacing U_k / nodes_per_cutoff
    TruncationLevels levels = TruncationLevels::constant(0.01, 0.95);
    VarianceOptions variance;
    std::optional<double> xi;

    void validate() const;
};

struct RungEstimates {
    std::vector<double> U;
    std::vector<double> alpha_tilde;
    std::vector<double> sigma2; // eps * sigma_k^2
    std::size_t clamped_pairs = 0;
    std::size_t negative_clips = 0;
};

/// Frequency grid used at cutoff U: u_j = j U / nodes_per_cutoff up to 2U
/// (2 xi U for the xi variant), so every u +- v needed by the variance is a node.
std::vector<double> rung_grid(double U, const EstimatorSettings& s);

using CfSource = std::function<CFEstimate(const std::vector<double>& grid)>;

double rung_alpha(const CFEstimate& cf, double U, const EstimatorSettings& s);
VarianceResult rung_variance(const CFEstimate& cf, double U, const EstimatorSettings& s);

RungEstimates estimate_ladder(const CfSource& source, const CutoffLadder& ladder, const EstimatorSettings& s);

// ---------------------------------------------------------------------------
// Critical values.

struct CalibrationSettings {
    double r = 1.0;
    double gamma = 0.5;
    std::size_t M = 500;
    std::uint64_t seed = 0;
    std::size_t n = 1000; // sample size of each null replication
    double dt = 1.0;
    double grid_min = 1e-2;
    double grid_max = 1e4;
    double grid_factor = 1.2;
    bool extend_beyond_max = true; // keep growing V past grid_max instead of failing
    unsigned threads = 1;
};

/// C_r = E|xi|^{2r} for standard normal xi.
double normal_abs_moment(double r);

/// Rung estimates of M null replications (shared by calibration and checks).
std::vector<RungEstimates> null_replications(const ModelSpec& null_model, const CutoffLadder& ladder,
                                             const EstimatorSettings& est, const CalibrationSettings& cal);

/// Sequential smallest-feasible grid search: for k = 2..K pick the smallest V_k
/// on the geometric grid with mean_M |(alpha^_k - alpha~_k)^2 / sigma2_k|^r <= gamma C_r.
CriticalValues calibrate_critical_values(const ModelSpec& null_model, const CutoffLadder& ladder,
                                         const EstimatorSettings& est, const CalibrationSettings& cal);
CriticalValues calibrate_from_replications(const std::vector<RungEstimates>& reps, const ModelSpec& null_model,
                                           const CutoffLadder& ladder, const CalibrationSettings& cal);

struct NullLossReport {
    std::vector<double> mean; // per rung
    std::vector<double> se;
    double bound = 0.0; // gamma C_r
};

NullLossReport null_loss(const std::vector<RungEstimates>& reps, const CriticalValues& cv, double r, double gamma);

void write_trace_csv(std::ostream& os, const AggregationTrace& trace);

} // namespace levyspec
