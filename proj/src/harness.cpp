#include "levyspec/harness.hpp"

#include "levyspec/errors.hpp"
#include "levyspec/parallel.hpp"
#include "levyspec/random.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace levyspec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Mode m) {
    switch (m) {
    case Mode::Simulate: return "simulate";
    case Mode::EstimateP: return "estimate-p";
    case Mode::CalibrateQ: return "calibrate-q";
    case Mode::McStudy: return "mc-study";
    case Mode::CalibrateCv: return "calibrate-cv";
    }
    return "?";
}

Mode mode_from_string(std::string_view name) {
    for (Mode m : {Mode::Simulate, Mode::EstimateP, Mode::CalibrateQ, Mode::McStudy, Mode::CalibrateCv}) {
        if (to_string(m) == name) return m;
    }
    fail(ErrorCode::InvalidConfig, "unknown mode '" + std::string(name) + "'");
}

namespace {

// Reads keys from a JSON object and rejects anything it did not consume.
class Reader {
public:
    Reader(const json& j, std::string context) : j_(j), ctx_(std::move(context)) {
        require(j.is_object(), ErrorCode::InvalidConfig, ctx_ + ": expected a JSON object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        if (!has(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(ErrorCode::InvalidConfig, ctx_ + "." + key + ": " + e.what());
        }
    }

    template <class T>
    T need(const std::string& key) {
        require(has(key), ErrorCode::InvalidConfig, ctx_ + ": missing required key '" + key + "'");
        return get<T>(key, T{});
    }

    const json& sub(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) fail(ErrorCode::InvalidConfig, ctx_ + ": unknown key '" + it.key() + "'");
        }
    }

private:
    const json& j_;
    std::string ctx_;
    std::set<std::string> seen_;
};

std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

Measure measure_from_string(const std::string& s) {
    if (s == "P") return Measure::P;
    if (s == "Q") return Measure::Q;
    fail(ErrorCode::InvalidConfig, "measure must be 'P' or 'Q'");
}

TruncationLevels levels_from_json(const json& j) {
    Reader r(j, "levels");
    const std::string kind = r.get<std::string>("kind", "constant");
    TruncationLevels lv;
    if (kind == "constant") {
        lv = TruncationLevels::constant(r.get("lo", 0.01), r.get("hi", 0.95));
    } else if (kind == "prior_based") {
        lv = TruncationLevels::prior_based(r.get("c1", 0.01), r.get("c2", 0.95), r.get("pi_minus", 0.5),
                                           r.get("pi_plus", 1.0), r.get("alpha_lower", 0.5), r.get("alpha_upper", 2.0));
    } else {
        fail(ErrorCode::InvalidConfig, "levels.kind must be 'constant' or 'prior_based'");
    }
    r.finish();
    return lv;
}

std::uint64_t calibration_seed_stream = 0xca11b0a7ULL;

} // namespace

json model_to_json(const ModelSpec& m) {
    json j;
    switch (m.family) {
    case Family::SymmetricStable:
        j["family"] = "stable";
        j["eta"] = m.stable->eta;
        j["alpha"] = m.stable->alpha;
        break;
    case Family::StablePlusDiffusion:
        j["family"] = "stable_plus_diffusion";
        j["eta"] = m.stable->eta;
        j["alpha"] = m.stable->alpha;
        j["a"] = m.a;
        break;
    case Family::GeneralizedHyperbolic:
        j["family"] = "gh";
        j["kappa"] = m.gh->kappa;
        j["beta"] = m.gh->beta;
        j["delta"] = m.gh->delta;
        j["lambda"] = m.gh->lambda;
        j["a"] = m.a;
        break;
    }
    j["mu"] = m.mu;
    return j;
}

ModelSpec model_from_json(const json& j) {
    Reader r(j, "model");
    const Family f = family_from_string(r.need<std::string>("family"));
    const double mu = r.get("mu", 0.0);
    ModelSpec m;
    switch (f) {
    case Family::SymmetricStable: m = ModelSpec::symmetric_stable(r.need<double>("eta"), r.need<double>("alpha"), mu); break;
    case Family::StablePlusDiffusion:
        m = ModelSpec::stable_plus_diffusion(r.need<double>("eta"), r.need<double>("alpha"), r.need<double>("a"), mu);
        break;
    case Family::GeneralizedHyperbolic:
        m = ModelSpec::generalized_hyperbolic(r.need<double>("kappa"), r.need<double>("beta"), r.need<double>("delta"),
                                              r.need<double>("lambda"), mu, r.get("a", 0.0));
        break;
    }
    r.finish();
    m.validate();
    return m;
}

json cv_to_json(const CriticalValues& cv) {
    return json{{"V", cv.V},           {"null_model", model_to_json(cv.null_model)},
                {"r", cv.r},           {"gamma", cv.gamma},
                {"M", cv.M},           {"seed", cv.seed},
                {"n", cv.n},           {"dt", cv.dt},
                {"ladder", cv.ladder}, {"loss", cv.loss},
                {"extended_rungs", cv.extended_rungs}};
}

CriticalValues cv_from_json(const json& j) {
    Reader r(j, "critical_values");
    CriticalValues cv;
    cv.V = r.need<std::vector<double>>("V");
    cv.null_model = model_from_json(r.need<json>("null_model"));
    cv.r = r.get("r", 1.0);
    cv.gamma = r.get("gamma", 0.5);
    cv.M = r.get<std::size_t>("M", 0);
    cv.seed = r.get<std::uint64_t>("seed", 0);
    cv.n = r.get<std::size_t>("n", 0);
    cv.dt = r.get("dt", 1.0);
    cv.ladder = r.get<std::vector<double>>("ladder", {});
    cv.loss = r.get<std::vector<double>>("loss", {});
    cv.extended_rungs = r.get<std::vector<std::size_t>>("extended_rungs", {});
    r.finish();
    for (double v : cv.V) require(v > 0.0, ErrorCode::InvalidConfig, "critical values must be positive");
    return cv;
}

void ExperimentConfig::validate() const {
    model.validate();
    null_model.validate();
    ladder.validate();
    est.validate();
    cls.validate();
    require(dt > 0.0, ErrorCode::InvalidConfig, "dt must be > 0");
    require(cal.M >= 1, ErrorCode::InvalidConfig, "calibration.M must be >= 1");
    if (measure == Measure::P) {
        require(!n_grid.empty(), ErrorCode::InvalidConfig, "n_grid must not be empty");
        for (std::size_t n : n_grid) require(n >= 1, ErrorCode::InvalidConfig, "n must be >= 1");
    } else {
        market.validate();
        require(!sigma_bar_grid.empty(), ErrorCode::InvalidConfig, "sigma_bar_grid must not be empty");
        require(model.family == Family::GeneralizedHyperbolic || model.family == Family::StablePlusDiffusion,
                ErrorCode::InvalidConfig, "the Q side needs a model with exponential moments");
    }
    if (mode == Mode::EstimateP) require(measure == Measure::P, ErrorCode::InvalidConfig, "estimate-p needs measure P");
    if (mode == Mode::CalibrateQ) require(measure == Measure::Q, ErrorCode::InvalidConfig, "calibrate-q needs measure Q");
}

ExperimentConfig parse_config(const json& doc) {
    Reader r(doc, "config");
    ExperimentConfig c;
    c.source = doc;
    c.mode = mode_from_string(r.need<std::string>("mode"));
    c.measure = measure_from_string(
        r.get<std::string>("measure", c.mode == Mode::CalibrateQ ? "Q" : "P"));
    c.model = model_from_json(r.need<json>("model"));
    if (r.has("null_model")) c.null_model = model_from_json(r.sub("null_model"));
    const std::string sampler = r.get<std::string>("sampler", "auto");
    if (sampler == "auto") c.sampler = SamplerKind::Auto;
    else if (sampler == "inversion") c.sampler = SamplerKind::Inversion;
    else fail(ErrorCode::InvalidConfig, "sampler must be 'auto' or 'inversion'");

    if (r.has("market")) {
        Reader m(r.sub("market"), "market");
        c.market.spot = m.get("spot", c.market.spot);
        c.market.rate = m.get("rate", c.market.rate);
        c.market.maturity = m.get("maturity", c.market.maturity);
        c.market.n_quotes = m.get("n_quotes", c.market.n_quotes);
        c.market.sigma_bar = m.get("sigma_bar", c.market.sigma_bar);
        c.market.design_mean = m.get("design_mean", c.market.design_mean);
        c.market.design_variance = m.get("design_variance", c.market.design_variance);
        c.market.noise_form = noise_form_from_string(m.get<std::string>("noise_form", "squared"));
        m.finish();
    }
    const std::string route = r.get<std::string>("route", "spline");
    require(route == "spline" || route == "direct", ErrorCode::InvalidConfig, "route must be 'spline' or 'direct'");
    c.direct_route = route == "direct";
    if (r.has("spline")) {
        Reader s(r.sub("spline"), "spline");
        c.spline.pinned = s.get("pinned", c.spline.pinned);
        c.spline.extrapolation = s.get("extrapolation", c.spline.extrapolation);
        s.finish();
    }
    c.risk_neutralize_model = r.get("risk_neutralize", true);

    if (r.has("ladder")) {
        Reader l(r.sub("ladder"), "ladder");
        if (l.has("U")) {
            c.ladder.U = l.get<std::vector<double>>("U", {});
        } else {
            c.ladder = CutoffLadder::geometric(l.get("U1", 100.0), l.get("ratio", 1.25), l.get<std::size_t>("K", 30));
        }
        l.finish();
    }
    if (r.has("levels")) c.est.levels = levels_from_json(r.sub("levels"));
    c.est.ell = r.get("ell", c.est.ell);
    c.est.nodes_per_cutoff = r.get("nodes_per_cutoff", c.est.nodes_per_cutoff);
    if (r.has("xi") && !doc.at("xi").is_null()) c.est.xi = r.get("xi", 2.0);
    if (r.has("variance")) {
        Reader v(r.sub("variance"), "variance");
        const std::string kernel = v.get<std::string>("kernel", "linearized");
        require(kernel == "linearized" || kernel == "printed", ErrorCode::InvalidConfig,
                "variance.kernel must be 'linearized' or 'printed'");
        c.est.variance.kernel = kernel == "printed" ? KernelKind::Printed : KernelKind::Linearized;
        const std::string zeta = v.get<std::string>("zeta", "plug-in");
        require(zeta == "plug-in" || zeta == "envelope", ErrorCode::InvalidConfig,
                "variance.zeta must be 'plug-in' or 'envelope'");
        c.est.variance.zeta = zeta == "envelope" ? ZetaMode::Envelope : ZetaMode::PlugIn;
        c.est.variance.unbounded_on_lower_clip =
            v.get("unbounded_on_lower_clip", c.est.variance.unbounded_on_lower_clip);
        v.finish();
    }
    c.seed = r.get<std::uint64_t>("seed", 0);
    c.threads = r.get<unsigned>("threads", 1);
    c.cal.seed = derive_seed(c.seed, calibration_seed_stream);
    if (r.has("calibration")) {
        Reader k(r.sub("calibration"), "calibration");
        c.cal.r = k.get("r", c.cal.r);
        c.cal.gamma = k.get("gamma", c.cal.gamma);
        c.cal.M = k.get("M", c.cal.M);
        c.cal.seed = k.get("seed", c.cal.seed);
        c.cal.grid_min = k.get("grid_min", c.cal.grid_min);
        c.cal.grid_max = k.get("grid_max", c.cal.grid_max);
        c.cal.grid_factor = k.get("grid_factor", c.cal.grid_factor);
        c.cal.extend_beyond_max = k.get("extend_beyond_max", c.cal.extend_beyond_max);
        if (k.has("cv_file")) c.cv_path = k.get<std::string>("cv_file", "");
        k.finish();
    }
    const std::string regime = r.get<std::string>("regime", c.measure == Measure::Q ? "Q" : "P");
    c.regime = regime_from_string(regime);
    if (r.has("class")) {
        Reader k(r.sub("class"), "class");
        c.cls.alpha_bar = k.get("alpha_bar", c.cls.alpha_bar);
        c.cls.eta_minus = k.get("eta_minus", c.cls.eta_minus);
        c.cls.eta_plus = k.get("eta_plus", c.cls.eta_plus);
        c.cls.varkappa = k.get("varkappa", c.cls.varkappa);
        c.cls.a_bar = k.get("a_bar", c.cls.a_bar);
        k.finish();
    }
    if (r.has("n")) c.n_grid = {r.get<std::size_t>("n", 1000)};
    if (r.has("n_grid")) c.n_grid = r.get<std::vector<std::size_t>>("n_grid", {});
    c.sigma_bar_grid = {c.market.sigma_bar};
    if (r.has("sigma_bar_grid")) c.sigma_bar_grid = r.get<std::vector<double>>("sigma_bar_grid", {});
    c.trials = r.get<std::size_t>("trials", 1);
    c.dt = r.get("dt", 1.0);
    if (r.has("data_file")) c.data_path = r.get<std::string>("data_file", "");
    c.exact_cf = r.get("exact_cf", false);
    c.record_runtime = r.get("record_runtime", false);
    r.finish();
    c.cal.threads = c.threads;
    c.cal.dt = c.measure == Measure::Q ? c.market.maturity : c.dt;
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::InvalidConfig, "cannot open config file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

// ---------------------------------------------------------------------------

void write_trials_header(std::ostream& os, bool with_runtime) {
    os << "trial,seed,measure,n,sigma_bar,family,true_alpha,alpha_hat,alpha_hat_base,alpha_tilde_theory,U_theory,"
          "sigma2_theory,eps,regime,xi";
    if (with_runtime) os << ",runtime_ms";
    os << "\n";
}

void write_trial_row(std::ostream& os, const TrialRecord& r, bool with_runtime) {
    os << r.trial << "," << r.seed << "," << to_string(r.measure) << "," << r.n << "," << fmt(r.sigma_bar) << ","
       << to_string(r.family) << "," << fmt(r.true_alpha) << "," << fmt(r.alpha_hat) << "," << fmt(r.alpha_hat_base)
       << "," << fmt(r.alpha_tilde_theory) << "," << fmt(r.U_theory) << "," << fmt(r.sigma2_theory) << ","
       << fmt(r.eps) << "," << to_string(r.regime) << "," << (r.xi ? fmt(*r.xi) : std::string());
    if (with_runtime) os << "," << fmt(r.runtime_ms);
    os << "\n";
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t group, std::size_t trial) {
    return derive_seed(derive_seed(master, group), trial);
}

std::size_t q_equivalent_n(double eps) {
    require(eps > 0.0 && std::isfinite(eps), ErrorCode::InvalidArgument, "q_equivalent_n: eps must be positive");
    return std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(1.0 / eps)));
}

namespace {

EstimatorSettings base_settings(const EstimatorSettings& s) {
    EstimatorSettings b = s;
    b.xi.reset();
    return b;
}

CriticalValues calibrate(const ExperimentConfig& cfg, std::size_t n, const EstimatorSettings& est) {
    CalibrationSettings cal = cfg.cal;
    cal.n = n;
    return calibrate_critical_values(cfg.null_model, cfg.ladder, est, cal);
}

struct CvSet {
    CriticalValues main;
    std::optional<CriticalValues> base; // only when xi is configured
};

CvSet critical_values(const ExperimentConfig& cfg, std::size_t n) {
    CvSet s;
    if (cfg.cv_path) {
        std::ifstream in(*cfg.cv_path);
        require(static_cast<bool>(in), ErrorCode::InvalidConfig, "cannot open critical value file '" + *cfg.cv_path + "'");
        json j;
        in >> j;
        if (j.contains("main")) {
            s.main = cv_from_json(j.at("main"));
            if (j.contains("base")) s.base = cv_from_json(j.at("base"));
        } else {
            s.main = cv_from_json(j);
        }
        require(s.main.V.size() + 1 >= cfg.ladder.K(), ErrorCode::InvalidConfig,
                "critical value file does not cover the ladder");
    } else {
        s.main = calibrate(cfg, n, cfg.est);
    }
    if (cfg.est.xi && !s.base) s.base = calibrate(cfg, n, base_settings(cfg.est));
    return s;
}

json cv_set_to_json(const CvSet& s) {
    if (!s.base) return cv_to_json(s.main);
    return json{{"main", cv_to_json(s.main)}, {"base", cv_to_json(*s.base)}};
}

// Fixed-cutoff estimate at the theoretical U-bar (when defined).
void theory_estimate(const ExperimentConfig& cfg, const CfSource& source, double eps, PipelineOutput& out) {
    double U = NAN;
    try {
        U = theoretical_cutoff(eps, cfg.cls, cfg.regime);
    } catch (const LevyError& e) {
        if (e.code() != ErrorCode::EpsTooLarge) throw;
    }
    out.record.U_theory = U;
    out.record.alpha_tilde_theory = NAN;
    out.record.sigma2_theory = NAN;
    if (!std::isfinite(U) || U <= 0.0) return;
    const CFEstimate cf = source(rung_grid(U, cfg.est));
    out.record.alpha_tilde_theory = rung_alpha(cf, U, cfg.est);
    out.record.sigma2_theory = rung_variance(cf, U, cfg.est).sigma2;
    out.curve_theory = cfg.est.xi ? y_curve_xi(cf, *cfg.est.xi, cfg.est.levels) : y_curve(cf, cfg.est.levels);
}

void run_ladder(const ExperimentConfig& cfg, const CfSource& source, const CvSet& cv, PipelineOutput& out) {
    const RungEstimates r = estimate_ladder(source, cfg.ladder, cfg.est);
    out.trace = aggregate(r.U, r.alpha_tilde, r.sigma2, cv.main);
    out.record.alpha_hat = out.trace.final_estimate();
    if (cfg.est.xi) {
        require(cv.base.has_value(), ErrorCode::InvalidArgument, "xi runs need base critical values");
        const RungEstimates b = estimate_ladder(source, cfg.ladder, base_settings(cfg.est));
        out.trace_base = aggregate(b.U, b.alpha_tilde, b.sigma2, *cv.base);
        out.record.alpha_hat_base = out.trace_base.final_estimate();
    } else {
        out.trace_base = out.trace;
        out.record.alpha_hat_base = out.record.alpha_hat;
    }
}

PipelineOutput pipeline_p_impl(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed, const CvSet& cv,
                               const IncrementSample* data) {
    PipelineOutput out;
    IncrementSample sample;
    if (data) {
        sample = *data;
        n = sample.values.size();
    } else if (!cfg.exact_cf) {
        sample = IncrementSampler(cfg.model, cfg.dt, cfg.sampler).sample(n, seed);
    }
    require(n >= 1, ErrorCode::InvalidArgument, "pipeline_p: empty sample");
    const double eps = 1.0 / static_cast<double>(n);
    CfSource source;
    if (cfg.exact_cf) {
        source = [&](const std::vector<double>& g) { return exact_cf(cfg.model, cfg.dt, g, eps); };
    } else {
        source = [&](const std::vector<double>& g) { return empirical_cf(sample, g); };
    }
    TrialRecord& rec = out.record;
    rec.seed = seed;
    rec.measure = Measure::P;
    rec.n = n;
    rec.family = cfg.model.family;
    rec.true_alpha = true_fractional_order(cfg.model);
    rec.eps = eps;
    rec.regime = cfg.regime;
    rec.xi = cfg.est.xi;
    run_ladder(cfg, source, cv, out);
    theory_estimate(cfg, source, eps, out);
    return out;
}

ModelSpec q_model(const ExperimentConfig& cfg) {
    return cfg.risk_neutralize_model ? risk_neutralize(cfg.model) : cfg.model;
}

OptionQuoteSet q_quotes(const ExperimentConfig& cfg, const OptionTransform& pricer, double sigma_bar,
                        std::uint64_t seed) {
    MarketConfig m = cfg.market;
    m.sigma_bar = sigma_bar;
    m.seed = seed;
    return synthesize_quotes(m, pricer);
}

PipelineOutput pipeline_q_impl(const ExperimentConfig& cfg, double sigma_bar, std::uint64_t seed, const CvSet& cv,
                               const OptionTransform& pricer) {
    PipelineOutput out;
    const double T = cfg.market.maturity;
    const OptionQuoteSet quotes = q_quotes(cfg, pricer, sigma_bar, seed);
    const OptionQuoteSet weighted = exp_weight(quotes);
    const double eps = noise_level(weighted);
    CfSource source;
    SplineFit fit;
    if (cfg.direct_route) {
        source = [&](const std::vector<double>& g) { return direct_cf_Q(weighted, g); };
    } else {
        fit = spline_fit(weighted, gcv_select(weighted, cfg.spline), cfg.spline);
        source = [&](const std::vector<double>& g) {
            const ExponentCurve ec = exponent_from_transform(fourier_of_fit(fit, g), g, T, false);
            return cf_from_exponent(ec, T, eps);
        };
        std::vector<double> v = uniform_grid(0.05, 1001);
        out.exponent = exponent_from_transform(fourier_of_fit(fit, v), v, T, false);
    }
    TrialRecord& rec = out.record;
    rec.seed = seed;
    rec.measure = Measure::Q;
    rec.n = quotes.size();
    rec.sigma_bar = sigma_bar;
    rec.family = cfg.model.family;
    rec.true_alpha = true_fractional_order(cfg.model);
    rec.eps = eps;
    rec.regime = cfg.regime;
    rec.xi = cfg.est.xi;
    run_ladder(cfg, source, cv, out);
    theory_estimate(cfg, source, eps, out);
    out.quotes = quotes;
    return out;
}

} // namespace

CriticalValues critical_values_for(const ExperimentConfig& cfg, std::size_t n) { return critical_values(cfg, n).main; }

PipelineOutput pipeline_p(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed, const CriticalValues& cv,
                          const IncrementSample* data) {
    CvSet s{cv, std::nullopt};
    if (cfg.est.xi) s.base = calibrate(cfg, n, base_settings(cfg.est));
    return pipeline_p_impl(cfg, n, seed, s, data);
}

PipelineOutput pipeline_q(const ExperimentConfig& cfg, double sigma_bar, std::uint64_t seed, const CriticalValues& cv) {
    const OptionTransform pricer(q_model(cfg), cfg.market.maturity);
    CvSet s{cv, std::nullopt};
    if (cfg.est.xi) {
        const double eps = noise_level(q_quotes(cfg, pricer, sigma_bar, seed));
        s.base = calibrate(cfg, q_equivalent_n(eps), base_settings(cfg.est));
    }
    return pipeline_q_impl(cfg, sigma_bar, seed, s, pricer);
}

double q_noise_level(const ExperimentConfig& cfg, double sigma_bar, std::uint64_t seed) {
    const OptionTransform pricer(q_model(cfg), cfg.market.maturity);
    return noise_level(q_quotes(cfg, pricer, sigma_bar, seed));
}

// ---------------------------------------------------------------------------
// run()

namespace {

void write_json(const fs::path& p, const json& j) {
    std::ofstream os(p);
    os << j.dump(2) << "\n";
}

IncrementSample read_increments(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::InvalidConfig, "cannot open data file '" + path + "'");
    IncrementSample s;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line == "x") continue;
        }
        try {
            s.values.push_back(std::stod(line));
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidConfig, "data file: cannot parse '" + line + "'");
        }
    }
    return s;
}

void write_increments(const fs::path& p, const IncrementSample& s) {
    std::ofstream os(p);
    os << "x\n";
    for (double x : s.values) os << fmt(x) << "\n";
}

struct Runner {
    const ExperimentConfig& cfg;
    fs::path out;
    json manifest;
    std::vector<std::string> outputs;
    std::ofstream trials;
    bool trials_open = false;

    void open_trials() {
        trials.open(out / "trials.csv");
        trials_open = true;
        write_trials_header(trials, cfg.record_runtime);
    }

    // Runs `count` trials of one group in parallel and appends the rows in
    // trial order. Rows of trials that finished before a failure are kept.
    template <class Fn>
    std::vector<PipelineOutput> run_group(std::size_t group, std::size_t count, Fn&& one) {
        std::vector<std::optional<PipelineOutput>> res(count);
        std::exception_ptr err;
        try {
            parallel_for(count, cfg.threads, [&](std::size_t t) {
                const std::uint64_t seed = trial_seed(cfg.seed, group, t);
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    PipelineOutput o = one(seed);
                    o.record.trial = t;
                    o.record.runtime_ms =
                        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                    res[t] = std::move(o);
                } catch (const LevyError& e) {
                    throw LevyError(e.code(), "trial " + std::to_string(t) + " (group " + std::to_string(group) +
                                                  ", seed " + std::to_string(seed) + "): " + e.what());
                }
            });
        } catch (...) {
            err = std::current_exception();
        }
        std::vector<PipelineOutput> done;
        for (auto& r : res) {
            if (!r) continue;
            if (trials_open) write_trial_row(trials, r->record, cfg.record_runtime);
            done.push_back(std::move(*r));
        }
        if (trials_open) trials.flush();
        if (err) std::rethrow_exception(err);
        return done;
    }

    void write_trace(const std::string& name, const AggregationTrace& tr) {
        std::ofstream os(out / name);
        write_trace_csv(os, tr);
        outputs.push_back(name);
    }

    void simulate() {
        if (cfg.measure == Measure::P) {
            const IncrementSample s =
                IncrementSampler(cfg.model, cfg.dt, cfg.sampler).sample(cfg.n_grid.front(), trial_seed(cfg.seed, 0, 0));
            write_increments(out / "increments.csv", s);
            outputs.push_back("increments.csv");
        } else {
            const OptionTransform pricer(q_model(cfg), cfg.market.maturity);
            const OptionQuoteSet q = q_quotes(cfg, pricer, cfg.sigma_bar_grid.front(), trial_seed(cfg.seed, 0, 0));
            std::ofstream os(out / "quotes.csv");
            write_quotes_csv(os, q);
            outputs.push_back("quotes.csv");
        }
    }

    void estimate_p() {
        std::optional<IncrementSample> data;
        if (cfg.data_path) data = read_increments(*cfg.data_path);
        const std::size_t n = data ? data->values.size() : cfg.n_grid.front();
        open_trials();
        outputs.push_back("trials.csv");
        if (cfg.trials == 0) return;
        const CvSet cv = critical_values(cfg, n);
        write_json(out / "cv.json", cv_set_to_json(cv));
        outputs.push_back("cv.json");
        auto res = run_group(0, cfg.trials, [&](std::uint64_t seed) {
            return pipeline_p_impl(cfg, n, seed, cv, data ? &*data : nullptr);
        });
        write_trace("trace.csv", res.front().trace);
        if (cfg.est.xi) write_trace("trace_base.csv", res.front().trace_base);
        if (res.front().curve_theory) {
            std::ofstream os(out / "spectral.csv");
            write_spectral_csv(os, *res.front().curve_theory);
            outputs.push_back("spectral.csv");
        }
    }

    void calibrate_q() {
        open_trials();
        outputs.push_back("trials.csv");
        if (cfg.trials == 0) return;
        const OptionTransform pricer(q_model(cfg), cfg.market.maturity);
        const double sb = cfg.sigma_bar_grid.front();
        const double eps = noise_level(q_quotes(cfg, pricer, sb, trial_seed(cfg.seed, 0, 0)));
        const CvSet cv = critical_values(cfg, q_equivalent_n(eps));
        write_json(out / "cv.json", cv_set_to_json(cv));
        outputs.push_back("cv.json");
        manifest["q_equivalent_n"] = q_equivalent_n(eps);
        auto res = run_group(0, cfg.trials, [&](std::uint64_t seed) { return pipeline_q_impl(cfg, sb, seed, cv, pricer); });
        write_trace("trace.csv", res.front().trace);
        if (cfg.est.xi) write_trace("trace_base.csv", res.front().trace_base);
        {
            std::ofstream os(out / "quotes.csv");
            write_quotes_csv(os, *res.front().quotes);
            outputs.push_back("quotes.csv");
        }
        if (res.front().exponent) {
            std::ofstream os(out / "exponent.csv");
            write_exponent_csv(os, *res.front().exponent);
            outputs.push_back("exponent.csv");
        }
    }

    void mc_study() {
        open_trials();
        outputs.push_back("trials.csv");
        json groups = json::array();
        if (cfg.measure == Measure::P) {
            for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
                const std::size_t n = cfg.n_grid[g];
                if (cfg.trials == 0) continue;
                const CvSet cv = critical_values(cfg, n);
                groups.push_back({{"n", n}, {"critical_values", cv_set_to_json(cv)}});
                run_group(g, cfg.trials, [&](std::uint64_t seed) { return pipeline_p_impl(cfg, n, seed, cv, nullptr); });
            }
        } else {
            const OptionTransform pricer(q_model(cfg), cfg.market.maturity);
            for (std::size_t g = 0; g < cfg.sigma_bar_grid.size(); ++g) {
                const double sb = cfg.sigma_bar_grid[g];
                if (cfg.trials == 0) continue;
                const double eps = noise_level(q_quotes(cfg, pricer, sb, trial_seed(cfg.seed, g, 0)));
                const CvSet cv = critical_values(cfg, q_equivalent_n(eps));
                groups.push_back({{"sigma_bar", sb},
                                  {"q_equivalent_n", q_equivalent_n(eps)},
                                  {"critical_values", cv_set_to_json(cv)}});
                run_group(g, cfg.trials, [&](std::uint64_t seed) { return pipeline_q_impl(cfg, sb, seed, cv, pricer); });
            }
        }
        write_json(out / "critical_values.json", groups);
        outputs.push_back("critical_values.json");
    }

    void calibrate_cv() {
        json all = json::array();
        std::vector<std::size_t> ns;
        if (cfg.measure == Measure::P) {
            ns = cfg.n_grid;
        } else {
            const OptionTransform pricer(q_model(cfg), cfg.market.maturity);
            for (std::size_t g = 0; g < cfg.sigma_bar_grid.size(); ++g) {
                ns.push_back(q_equivalent_n(noise_level(q_quotes(cfg, pricer, cfg.sigma_bar_grid[g], trial_seed(cfg.seed, g, 0)))));
            }
        }
        for (std::size_t g = 0; g < ns.size(); ++g) {
            const CvSet cv = critical_values(cfg, ns[g]);
            const std::string name = ns.size() == 1 ? "cv.json" : "cv_" + std::to_string(g) + ".json";
            write_json(out / name, cv_set_to_json(cv));
            outputs.push_back(name);
            all.push_back({{"file", name}, {"n", ns[g]}});
        }
        manifest["calibrations"] = all;
    }
};

} // namespace

int run(const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(out_dir);
    Runner r{cfg, fs::path(out_dir), json::object(), {}, {}, false};
    r.manifest["mode"] = to_string(cfg.mode);
    r.manifest["config"] = cfg.source;
    r.manifest["seed"] = cfg.seed;
    r.manifest["threads"] = cfg.threads;
    r.manifest["version"] = "levyspec 0.1.0";
    r.manifest["compiler"] = __VERSION__;
    r.manifest["trial_seeds"] = "derive_seed(derive_seed(seed, group), trial)";
    if (cfg.measure == Measure::Q) r.manifest["q_variance"] = "heuristic: P plug-in variance scaled by the quote noise level";
    int status = 0;
    try {
        switch (cfg.mode) {
        case Mode::Simulate: r.simulate(); break;
        case Mode::EstimateP: r.estimate_p(); break;
        case Mode::CalibrateQ: r.calibrate_q(); break;
        case Mode::McStudy: r.mc_study(); break;
        case Mode::CalibrateCv: r.calibrate_cv(); break;
        }
    } catch (const std::exception& e) {
        status = 1;
        json err{{"mode", to_string(cfg.mode)}, {"message", e.what()}};
        if (const auto* le = dynamic_cast<const LevyError*>(&e)) {
            err["code"] = to_string(le->code());
        } else {
            err["code"] = "internal";
        }
        write_json(r.out / "errors.json", err);
        if (r.trials_open) {
            r.trials.close();
            fs::rename(r.out / "trials.csv", r.out / "trials.csv.partial");
            for (auto& o : r.outputs) {
                if (o == "trials.csv") o = "trials.csv.partial";
            }
        }
        r.outputs.push_back("errors.json");
    }
    if (r.trials_open && r.trials.is_open()) r.trials.close();
    r.manifest["outputs"] = r.outputs;
    r.manifest["status"] = status == 0 ? "ok" : "failed";
    r.manifest["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(r.out / "manifest.json", r.manifest);
    return status;
}

} // namespace levyspec
