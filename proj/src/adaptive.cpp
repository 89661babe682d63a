#include "levyspec/adaptive.hpp"

#include "levyspec/errors.hpp"
#include "levyspec/parallel.hpp"
#include "levyspec/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

namespace levyspec {

void CutoffLadder::validate() const {
    require(!U.empty(), ErrorCode::InvalidArgument, "ladder must contain at least one cutoff");
    for (std::size_t k = 0; k < U.size(); ++k) {
        require(U[k] > 0.0, ErrorCode::InvalidArgument, "ladder cutoffs must be positive");
        if (k > 0) require(U[k] < U[k - 1], ErrorCode::InvalidArgument, "ladder cutoffs must strictly decrease");
    }
}

CutoffLadder CutoffLadder::geometric(double U1, double ratio, std::size_t K) {
    require(U1 > 0.0 && ratio > 1.0 && K >= 1, ErrorCode::InvalidArgument, "geometric ladder: need U1 > 0, ratio > 1");
    CutoffLadder l;
    for (std::size_t k = 0; k < K; ++k) l.U.push_back(U1 * std::pow(ratio, -static_cast<double>(k)));
    return l;
}

CutoffLadder default_ladder() { return CutoffLadder::geometric(100.0, 1.25, 30); }

double triangle_kernel(double x) { return (x >= 0.0 && x <= 1.0) ? 1.0 - x : 0.0; }

double CriticalValues::at_rung(std::size_t k) const {
    require(k >= 2 && k - 2 < V.size(), ErrorCode::InvalidArgument, "critical value requested for an unknown rung");
    return V[k - 2];
}

AggregationTrace aggregate(const std::vector<double>& U, const std::vector<double>& alphas,
                           const std::vector<double>& sigma2s, const CriticalValues& cv, const Kernel& kernel) {
    const std::size_t K = alphas.size();
    require(K >= 1 && U.size() == K && sigma2s.size() == K, ErrorCode::InvalidArgument,
            "aggregate: inconsistent rung counts");
    require(cv.V.size() + 1 >= K, ErrorCode::InvalidArgument, "aggregate: not enough critical values for the ladder");
    AggregationTrace tr;
    tr.rows.reserve(K);
    bool informed = false;
    for (std::size_t i = 0; i < K; ++i) {
        require(sigma2s[i] >= 0.0, ErrorCode::InvalidArgument, "aggregate: variances must be nonnegative");
        TraceRow row;
        row.k = i + 1;
        row.U = U[i];
        row.alpha_tilde = alphas[i];
        row.sigma2 = sigma2s[i];
        const bool finite = std::isfinite(sigma2s[i]);
        if (i == 0) {
            row.T = 0.0;
            row.gamma = 1.0;
            row.alpha_hat = alphas[0];
        } else {
            const double prev = tr.rows.back().alpha_hat;
            if (!finite || !informed) {
                row.T = 0.0;
            } else {
                const double d = alphas[i] - prev;
                row.T = sigma2s[i] > 0.0 ? d * d / sigma2s[i] : (d == 0.0 ? 0.0 : INFINITY);
            }
            row.gamma = std::clamp(kernel(row.T / cv.V[i - 1]), 0.0, 1.0);
            row.alpha_hat = row.gamma * alphas[i] + (1.0 - row.gamma) * prev;
        }
        informed = informed || finite;
        tr.rows.push_back(row);
    }
    return tr;
}

// ---------------------------------------------------------------------------

void EstimatorSettings::validate() const {
    require(ell > 0.0 && ell < 1.0, ErrorCode::InvalidArgument, "estimator: ell must lie in (0, 1)");
    require(nodes_per_cutoff >= 4, ErrorCode::InvalidArgument, "estimator: nodes_per_cutoff must be >= 4");
    levels.validate();
    if (xi) require(*xi > 1.0, ErrorCode::InvalidArgument, "estimator: xi must be > 1");
}

std::vector<double> rung_grid(double U, const EstimatorSettings& s) {
    const double reach = 2.0 * (s.xi ? *s.xi : 1.0);
    const std::size_t count =
        static_cast<std::size_t>(std::ceil(reach * static_cast<double>(s.nodes_per_cutoff) - 1e-9)) + 1;
    return uniform_grid(U / static_cast<double>(s.nodes_per_cutoff), count);
}

double rung_alpha(const CFEstimate& cf, double U, const EstimatorSettings& s) {
    const WeightSpec w = build_weight(U, s.ell);
    if (s.xi) return estimate_alpha_xi(cf, *s.xi, s.levels, w);
    return estimate_alpha(y_curve(cf, s.levels), w);
}

VarianceResult rung_variance(const CFEstimate& cf, double U, const EstimatorSettings& s) {
    const WeightSpec w = build_weight(U, s.ell);
    VarianceOptions opt = s.variance;
    opt.levels = s.levels;
    VarianceResult v = s.xi ? variance_sigma_xi(cf, *s.xi, w, opt) : variance_sigma(cf, w, opt);
    if (std::isfinite(v.sigma2)) v.sigma2 *= cf.eps;
    return v;
}

RungEstimates estimate_ladder(const CfSource& source, const CutoffLadder& ladder, const EstimatorSettings& s) {
    ladder.validate();
    s.validate();
    RungEstimates out;
    for (double U : ladder.U) {
        const CFEstimate cf = source(rung_grid(U, s));
        const VarianceResult v = rung_variance(cf, U, s);
        out.U.push_back(U);
        out.alpha_tilde.push_back(rung_alpha(cf, U, s));
        out.sigma2.push_back(v.sigma2);
        out.clamped_pairs += v.clamped_pairs;
        out.negative_clips += v.clipped_negative ? 1 : 0;
    }
    return out;
}

// ---------------------------------------------------------------------------

double normal_abs_moment(double r) {
    require(r > 0.0, ErrorCode::InvalidArgument, "C_r needs r > 0");
    return std::pow(2.0, r) * std::tgamma(r + 0.5) / std::sqrt(std::numbers::pi);
}

std::vector<RungEstimates> null_replications(const ModelSpec& null_model, const CutoffLadder& ladder,
                                             const EstimatorSettings& est, const CalibrationSettings& cal) {
    require(cal.n >= 1, ErrorCode::InvalidArgument, "calibration: n must be >= 1");
    const IncrementSampler sampler(null_model, cal.dt);
    std::vector<RungEstimates> reps(cal.M);
    parallel_for(cal.M, cal.threads, [&](std::size_t m) {
        const IncrementSample sample = sampler.sample(cal.n, derive_seed(cal.seed, m));
        reps[m] = estimate_ladder([&](const std::vector<double>& g) { return empirical_cf(sample, g); }, ladder, est);
    });
    return reps;
}

namespace {

// Rungs without a finite positive variance are left out: sigma2 = inf never
// tests, and sigma2 = 0 (every weighted node clipped, tiny n) is rejected by
// the aggregation whatever V is, so no choice of V can move its term.
double loss_term(double alpha_hat, double alpha_tilde, double sigma2, double r) {
    if (!std::isfinite(sigma2) || !(sigma2 > 0.0)) return 0.0;
    const double d = alpha_hat - alpha_tilde;
    if (d == 0.0) return 0.0;
    return std::pow(d * d / sigma2, r);
}

} // namespace

CriticalValues calibrate_from_replications(const std::vector<RungEstimates>& reps, const ModelSpec& null_model,
                                           const CutoffLadder& ladder, const CalibrationSettings& cal) {
    require(cal.gamma > 0.0 && cal.gamma <= 1.0, ErrorCode::InvalidArgument, "calibration: gamma must lie in (0, 1]");
    require(cal.grid_min > 0.0 && cal.grid_max > cal.grid_min && cal.grid_factor > 1.0, ErrorCode::InvalidArgument,
            "calibration: bad search grid");
    const std::size_t K = ladder.K();
    const std::size_t M = reps.size();
    const double bound = cal.gamma * normal_abs_moment(cal.r);

    std::vector<double> grid;
    for (double v = cal.grid_min; v < cal.grid_max * (1.0 - 1e-12); v *= cal.grid_factor) grid.push_back(v);
    grid.push_back(cal.grid_max);

    CriticalValues cv;
    cv.null_model = null_model;
    cv.r = cal.r;
    cv.gamma = cal.gamma;
    cv.M = M;
    cv.seed = cal.seed;
    cv.n = cal.n;
    cv.dt = cal.dt;
    cv.ladder = ladder.U;
    cv.loss.assign(K, 0.0);

    // Per-replication running state of the aggregation up to the current rung.
    std::vector<double> hat(M);
    std::vector<char> informed(M, 0);
    for (std::size_t m = 0; m < M; ++m) {
        hat[m] = reps[m].alpha_tilde[0];
        informed[m] = std::isfinite(reps[m].sigma2[0]) ? 1 : 0;
    }

    for (std::size_t i = 1; i < K; ++i) {
        std::vector<double> T(M);
        for (std::size_t m = 0; m < M; ++m) {
            const double s2 = reps[m].sigma2[i];
            const double at = reps[m].alpha_tilde[i];
            if (!std::isfinite(s2) || !informed[m]) {
                T[m] = 0.0;
            } else {
                const double d = at - hat[m];
                T[m] = s2 > 0.0 ? d * d / s2 : (d == 0.0 ? 0.0 : INFINITY);
            }
        }
        bool found = false;
        double chosen = grid.back();
        double chosen_loss = 0.0;
        for (double V : grid) {
            double acc = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                const double g = triangle_kernel(T[m] / V);
                const double h = g * reps[m].alpha_tilde[i] + (1.0 - g) * hat[m];
                acc += loss_term(h, reps[m].alpha_tilde[i], reps[m].sigma2[i], cal.r);
            }
            const double mean = M ? acc / static_cast<double>(M) : 0.0;
            if (mean <= bound) {
                chosen = V;
                chosen_loss = mean;
                found = true;
                break;
            }
        }
        // Clipping can make the null rungs drift apart, so the pinned range
        // is not always feasible; continue the geometric grid upward. The
        // final DBL_MAX gives gamma = 1 exactly and zero loss.
        if (!found && cal.extend_beyond_max) {
            for (double V = cal.grid_max * cal.grid_factor;; V *= cal.grid_factor) {
                if (!(V < std::numeric_limits<double>::max() / cal.grid_factor)) V = std::numeric_limits<double>::max();
                double acc = 0.0;
                for (std::size_t m = 0; m < M; ++m) {
                    const double g = triangle_kernel(T[m] / V);
                    const double h = g * reps[m].alpha_tilde[i] + (1.0 - g) * hat[m];
                    acc += loss_term(h, reps[m].alpha_tilde[i], reps[m].sigma2[i], cal.r);
                }
                const double mean = M ? acc / static_cast<double>(M) : 0.0;
                if (mean <= bound || V == std::numeric_limits<double>::max()) {
                    chosen = V;
                    chosen_loss = mean;
                    found = mean <= bound;
                    cv.extended_rungs.push_back(i + 1);
                    break;
                }
            }
        }
        if (!found) {
            fail(ErrorCode::SearchExhausted,
                 "critical value search exhausted at rung " + std::to_string(i + 1) + " without meeting the bound");
        }
        cv.V.push_back(chosen);
        cv.loss[i] = chosen_loss;
        for (std::size_t m = 0; m < M; ++m) {
            const double g = triangle_kernel(T[m] / chosen);
            hat[m] = g * reps[m].alpha_tilde[i] + (1.0 - g) * hat[m];
            informed[m] = informed[m] || std::isfinite(reps[m].sigma2[i]);
        }
    }
    return cv;
}

CriticalValues calibrate_critical_values(const ModelSpec& null_model, const CutoffLadder& ladder,
                                         const EstimatorSettings& est, const CalibrationSettings& cal) {
    const auto reps = null_replications(null_model, ladder, est, cal);
    return calibrate_from_replications(reps, null_model, ladder, cal);
}

NullLossReport null_loss(const std::vector<RungEstimates>& reps, const CriticalValues& cv, double r, double gamma) {
    NullLossReport rep;
    rep.bound = gamma * normal_abs_moment(r);
    if (reps.empty()) return rep;
    const std::size_t K = reps.front().U.size();
    std::vector<double> sum(K, 0.0), sum2(K, 0.0);
    for (const auto& e : reps) {
        const AggregationTrace tr = aggregate(e.U, e.alpha_tilde, e.sigma2, cv);
        for (std::size_t i = 0; i < K; ++i) {
            const double l = loss_term(tr.rows[i].alpha_hat, e.alpha_tilde[i], e.sigma2[i], r);
            sum[i] += l;
            sum2[i] += l * l;
        }
    }
    const double M = static_cast<double>(reps.size());
    for (std::size_t i = 0; i < K; ++i) {
        const double mean = sum[i] / M;
        const double var = M > 1 ? std::max(0.0, (sum2[i] - M * mean * mean) / (M - 1.0)) : 0.0;
        rep.mean.push_back(mean);
        rep.se.push_back(std::sqrt(var / M));
    }
    return rep;
}

void write_trace_csv(std::ostream& os, const AggregationTrace& trace) {
    os << "k,U,alpha_tilde,sigma2,T,gamma,alpha_hat\n";
    os.precision(17);
    for (const auto& r : trace.rows) {
        os << r.k << "," << r.U << "," << r.alpha_tilde << "," << r.sigma2 << "," << r.T << "," << r.gamma << ","
           << r.alpha_hat << "\n";
    }
}

} // namespace levyspec
