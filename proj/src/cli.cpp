#include "mleig/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mleig/errors.hpp"

namespace mleig::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopKeys = {
    "model",  "linear", "pk",     "estimator", "eps",     "seed",   "omega",      "L0",
    "N_star", "M0",     "L_max",  "is_enabled", "nmc_run", "output_dir", "diagnostics_levels",
    "diagnostics_samples"};
const std::set<std::string> kLinearKeys = {"A", "mu_theta", "Sigma_theta", "Sigma_eps", "N_e"};
const std::set<std::string> kPkKeys = {"scheme", "dose", "noise_var", "prior_log_means", "prior_log_vars",
                                       "times", "sign"};

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (const auto& [k, _] : obj.items())
        if (!allowed.count(k)) throw ConfigError(prefix + k, "unknown configuration key '" + prefix + k + "'");
}

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key, "configuration key '" + key + "' has the wrong type");
    }
}

Vector get_vector(const json& j, const std::string& key) {
    const auto v = get_as<std::vector<double>>(j, key);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix get_matrix(const json& j, const std::string& key) {
    const auto rows = get_as<std::vector<std::vector<double>>>(j, key);
    if (rows.empty() || rows.front().empty()) throw ConfigError(key, "'" + key + "' must be a non-empty matrix");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) throw ConfigError(key, "'" + key + "' rows differ in length");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

void line_column(const std::string& text, std::size_t byte, std::size_t& line, std::size_t& col) {
    line = 1;
    col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

json level_json(const LevelRecord& r) {
    return {{"level", r.level},          {"N", r.N},
            {"mean_Z", r.mean},          {"var_Z", r.variance},
            {"cost", r.cost},            {"kurt_Z", std::isfinite(r.kurtosis) ? json(r.kurtosis) : json()},
            {"mean_P", r.mean_fine},     {"var_P", r.variance_fine}};
}

json trace_json(const MlmcRunResult& res) {
    json rounds = json::array();
    for (const auto& t : res.iterations)
        rounds.push_back({{"L", t.L},
                          {"drawn", t.drawn},
                          {"allocated", t.allocated},
                          {"variances", t.variances},
                          {"alpha_hat", t.alpha_hat},
                          {"bias_tested", t.bias_tested},
                          {"bias_ok", t.bias_ok}});
    json levels = json::array();
    for (const auto& r : res.levels) levels.push_back(level_json(r));
    return {{"estimate", res.estimate}, {"total_cost", res.total_cost}, {"levels", levels}, {"rounds", rounds}};
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(); }

}  // namespace

bool operator==(const RunConfig& a, const RunConfig& b) {
    auto lin_eq = [](const LinearGaussianSpec& x, const LinearGaussianSpec& y) {
        return x.A == y.A && x.mu_theta == y.mu_theta && x.Sigma_theta == y.Sigma_theta &&
               x.Sigma_eps == y.Sigma_eps && x.N_e == y.N_e;
    };
    auto pk_eq = [](const PkSpec& x, const PkSpec& y) {
        return x.dose == y.dose && x.noise_var == y.noise_var && x.prior_log_means == y.prior_log_means &&
               x.prior_log_vars == y.prior_log_vars && x.times == y.times;
    };
    return a.model == b.model && lin_eq(a.linear, b.linear) && a.pk_scheme == b.pk_scheme && pk_eq(a.pk, b.pk) &&
           a.pk_sign == b.pk_sign && a.estimator == b.estimator && a.eps == b.eps && a.seed == b.seed &&
           a.omega == b.omega && a.L0 == b.L0 && a.N_star == b.N_star && a.M0 == b.M0 && a.L_max == b.L_max &&
           a.is_enabled == b.is_enabled && a.nmc_run == b.nmc_run && a.output_dir == b.output_dir &&
           a.diagnostics_levels == b.diagnostics_levels && a.diagnostics_samples == b.diagnostics_samples;
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line, col;
        line_column(text, e.byte, line, col);
        throw ConfigError("", "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                                  ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
    reject_unknown(j, kTopKeys, "");

    RunConfig c;
    if (!j.contains("model")) throw ConfigError("model", "missing required key 'model'");
    const auto model = get_as<std::string>(j["model"], "model");
    if (model == "linear") c.model = ModelKind::kLinear;
    else if (model == "pk") c.model = ModelKind::kPk;
    else throw ConfigError("model", "'model' must be \"linear\" or \"pk\"");

    if (j.contains("linear")) {
        const json& l = j["linear"];
        if (!l.is_object()) throw ConfigError("linear", "'linear' must be an object");
        reject_unknown(l, kLinearKeys, "linear.");
        if (l.contains("N_e")) c.linear.N_e = get_as<int>(l["N_e"], "linear.N_e");
        if (l.contains("A")) c.linear.A = get_matrix(l["A"], "linear.A");
        if (l.contains("mu_theta")) c.linear.mu_theta = get_vector(l["mu_theta"], "linear.mu_theta");
        if (l.contains("Sigma_theta")) c.linear.Sigma_theta = get_matrix(l["Sigma_theta"], "linear.Sigma_theta");
        if (l.contains("Sigma_eps")) c.linear.Sigma_eps = get_matrix(l["Sigma_eps"], "linear.Sigma_eps");
        try {
            c.linear.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError("linear", e.what());
        }
    }
    if (j.contains("pk")) {
        const json& p = j["pk"];
        if (!p.is_object()) throw ConfigError("pk", "'pk' must be an object");
        reject_unknown(p, kPkKeys, "pk.");
        if (p.contains("scheme")) {
            try {
                c.pk_scheme = parse_schedule(get_as<std::string>(p["scheme"], "pk.scheme"));
            } catch (const InvalidArgument& e) {
                throw ConfigError("pk.scheme", e.what());
            }
            c.pk.times = sampling_schedule(c.pk_scheme, 15);
        }
        if (p.contains("dose")) c.pk.dose = get_as<double>(p["dose"], "pk.dose");
        if (p.contains("noise_var")) c.pk.noise_var = get_as<double>(p["noise_var"], "pk.noise_var");
        if (p.contains("prior_log_means")) c.pk.prior_log_means = get_vector(p["prior_log_means"], "pk.prior_log_means");
        if (p.contains("prior_log_vars")) c.pk.prior_log_vars = get_vector(p["prior_log_vars"], "pk.prior_log_vars");
        if (p.contains("times")) c.pk.times = get_as<std::vector<double>>(p["times"], "pk.times");
        if (p.contains("sign")) {
            c.pk_sign = get_as<double>(p["sign"], "pk.sign");
            if (c.pk_sign != 1.0 && c.pk_sign != -1.0) throw ConfigError("pk.sign", "'pk.sign' must be 1 or -1");
        }
        try {
            c.pk.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError("pk", e.what());
        }
    }

    if (j.contains("estimator")) {
        const auto est = get_as<std::string>(j["estimator"], "estimator");
        if (est == "mlmc") c.estimator = EstimatorKind::kMlmc;
        else if (est == "nmc") c.estimator = EstimatorKind::kNmc;
        else throw ConfigError("estimator", "'estimator' must be \"nmc\" or \"mlmc\"");
    }
    if (j.contains("eps")) {
        c.eps = get_as<std::vector<double>>(j["eps"], "eps");
        for (std::size_t i = 0; i < c.eps.size(); ++i) {
            if (!(c.eps[i] > 0.0) || !std::isfinite(c.eps[i])) throw ConfigError("eps", "'eps' values must be positive");
            if (i > 0 && !(c.eps[i] < c.eps[i - 1])) throw ConfigError("eps", "'eps' must be sorted descending");
        }
    }
    if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j["seed"], "seed");
    if (j.contains("omega")) c.omega = get_as<double>(j["omega"], "omega");
    if (!(c.omega > 0.0 && c.omega < 1.0)) throw ConfigError("omega", "'omega' must lie in (0, 1)");
    if (j.contains("L0")) c.L0 = get_as<int>(j["L0"], "L0");
    if (c.L0 < 1) throw ConfigError("L0", "'L0' must be >= 1");
    if (j.contains("N_star")) c.N_star = get_as<long long>(j["N_star"], "N_star");
    if (c.N_star < 2) throw ConfigError("N_star", "'N_star' must be >= 2");
    if (j.contains("M0")) c.M0 = get_as<int>(j["M0"], "M0");
    if (c.M0 < 1) throw ConfigError("M0", "'M0' must be >= 1");
    if (j.contains("L_max")) c.L_max = get_as<int>(j["L_max"], "L_max");
    if (c.L_max < c.L0 || c.L_max > 40) throw ConfigError("L_max", "'L_max' must lie in [L0, 40]");
    if (j.contains("is_enabled")) c.is_enabled = get_as<bool>(j["is_enabled"], "is_enabled");
    if (j.contains("nmc_run")) c.nmc_run = get_as<bool>(j["nmc_run"], "nmc_run");
    if (j.contains("output_dir")) c.output_dir = get_as<std::string>(j["output_dir"], "output_dir");
    if (j.contains("diagnostics_levels")) c.diagnostics_levels = get_as<int>(j["diagnostics_levels"], "diagnostics_levels");
    if (c.diagnostics_levels < 2 || c.diagnostics_levels > 30)
        throw ConfigError("diagnostics_levels", "'diagnostics_levels' must lie in [2, 30]");
    if (j.contains("diagnostics_samples"))
        c.diagnostics_samples = get_as<long long>(j["diagnostics_samples"], "diagnostics_samples");
    if (c.diagnostics_samples < 2) throw ConfigError("diagnostics_samples", "'diagnostics_samples' must be >= 2");
    return c;
}

std::string serialize_config(const RunConfig& c) {
    json j;
    j["model"] = c.model == ModelKind::kLinear ? "linear" : "pk";
    j["linear"] = {{"A", matrix_json(c.linear.A)},
                   {"mu_theta", vector_json(c.linear.mu_theta)},
                   {"Sigma_theta", matrix_json(c.linear.Sigma_theta)},
                   {"Sigma_eps", matrix_json(c.linear.Sigma_eps)},
                   {"N_e", c.linear.N_e}};
    j["pk"] = {{"scheme", std::string(schedule_name(c.pk_scheme))},
               {"dose", c.pk.dose},
               {"noise_var", c.pk.noise_var},
               {"prior_log_means", vector_json(c.pk.prior_log_means)},
               {"prior_log_vars", vector_json(c.pk.prior_log_vars)},
               {"times", c.pk.times},
               {"sign", c.pk_sign}};
    j["estimator"] = c.estimator == EstimatorKind::kMlmc ? "mlmc" : "nmc";
    j["eps"] = c.eps;
    j["seed"] = c.seed;
    j["omega"] = c.omega;
    j["L0"] = c.L0;
    j["N_star"] = c.N_star;
    j["M0"] = c.M0;
    j["L_max"] = c.L_max;
    j["is_enabled"] = c.is_enabled;
    j["nmc_run"] = c.nmc_run;
    j["output_dir"] = c.output_dir.string();
    j["diagnostics_levels"] = c.diagnostics_levels;
    j["diagnostics_samples"] = c.diagnostics_samples;
    return j.dump(2);
}

BayesModel build_model(const RunConfig& c) {
    if (c.model == ModelKind::kLinear) return make_linear_model(c.linear);
    return make_pk_model(c.pk, c.pk_sign);
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << contents;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

RateStudyResult run_rate_study(const RunConfig& c, unsigned threads) {
    const BayesModel model = build_model(c);
    const EstimatorConfig est{c.M0, c.is_enabled, Coupling::kAntithetic};
    ensure_dir(c.output_dir);

    RateStudyResult res;
    std::ostringstream csv;
    csv << "level,mean_P,var_P,mean_Z,var_Z,kurt_Z,cost\n";
    std::vector<double> means, vars;
    for (int l = 0; l <= c.diagnostics_levels; ++l) {
        const auto batch = sample_level_batch(model, est, l, c.seed, 0, c.diagnostics_samples, threads);
        LevelStats z, p;
        for (const auto& s : batch) {
            z.add(s.value, s.cost);
            p.add(s.fine);
        }
        const double kurt = z.kurtosis();
        res.levels.push_back({l, z.count, z.mean(), z.variance(), z.mean_cost(), kurt, p.mean(), p.variance()});
        csv << l << ',' << fmt(p.mean()) << ',' << fmt(p.variance()) << ',' << fmt(z.mean()) << ','
            << fmt(z.variance()) << ',' << (std::isfinite(kurt) ? fmt(kurt) : std::string("nan")) << ','
            << fmt(z.mean_cost()) << '\n';
        if (l >= 1) {
            means.push_back(z.mean());
            vars.push_back(z.variance());
        }
    }
    try {
        const Rates r = estimate_rates(means, vars);
        res.alpha_hat = r.alpha_hat;
        res.beta_hat = r.beta_hat;
    } catch (const InsufficientData&) {
        res.alpha_hat = res.beta_hat = std::numeric_limits<double>::quiet_NaN();
    }

    json summary = {{"alpha_hat", finite_or_null(res.alpha_hat)},
                    {"beta_hat", finite_or_null(res.beta_hat)},
                    {"samples_per_level", c.diagnostics_samples},
                    {"levels", c.diagnostics_levels},
                    {"seed", c.seed}};
    write_file_atomic(c.output_dir / "levels.csv", csv.str());
    write_file_atomic(c.output_dir / "summary.json", summary.dump(2) + "\n");
    return res;
}

namespace {

struct PilotResult {
    int L = 0;
    std::vector<LevelRecord> levels;
    Rates rates{};
};

// N_star samples per level from L0 upward until the bias test passes.
PilotResult nmc_pilot(const BayesModel& model, const EstimatorConfig& est, const RunConfig& c, double eps,
                      unsigned threads) {
    PilotResult out;
    const std::uint64_t pilot_seed = RandomStream(c.seed, {static_cast<std::uint64_t>(StreamPurpose::kPilot)}).key();
    std::vector<double> means, vars;
    for (int l = 0; l <= c.L_max; ++l) {
        const auto batch = sample_level_batch(model, est, l, pilot_seed, 0, c.N_star, threads);
        LevelStats z, p;
        for (const auto& s : batch) {
            z.add(s.value, s.cost);
            p.add(s.fine);
        }
        out.levels.push_back({l, z.count, z.mean(), z.variance(), z.mean_cost(), z.kurtosis(), p.mean(), p.variance()});
        if (l >= 1) {
            means.push_back(z.mean());
            vars.push_back(z.variance());
        }
        if (l < c.L0 || means.size() < 2) continue;
        double alpha = 0.5;
        try {
            out.rates = estimate_rates(means, vars);
            alpha = out.rates.alpha_hat;
        } catch (const InsufficientData&) {
        }
        if (bias_converged(z.mean(), alpha, eps, c.omega)) {
            out.L = l;
            return out;
        }
    }
    MlmcRunResult partial;
    partial.levels = out.levels;
    throw NonConvergence("NMC pilot exceeded L_max = " + std::to_string(c.L_max), partial);
}

}  // namespace

std::vector<EstimateRow> run_estimate(const RunConfig& c, unsigned threads) {
    if (c.eps.empty()) throw ConfigError("eps", "'eps' must contain at least one value");
    const BayesModel model = build_model(c);
    const EstimatorConfig est{c.M0, c.is_enabled, Coupling::kAntithetic};
    ensure_dir(c.output_dir);

    std::vector<EstimateRow> rows;
    for (const double eps : c.eps) {
        EstimateRow row;
        row.eps = eps;
        try {
            if (c.estimator == EstimatorKind::kMlmc) {
                AdaptiveConfig ac;
                ac.omega = c.omega;
                ac.L0 = c.L0;
                ac.N_star = c.N_star;
                ac.eps = eps;
                ac.L_max = c.L_max;
                ac.seed = c.seed;
                ac.threads = threads;
                const MlmcRunResult r = run_adaptive(model, est, ac);
                row.estimate = r.estimate;
                row.total_cost = r.total_cost;
                row.L = r.L();
                row.alpha_hat = r.alpha_hat;
                row.beta_hat = r.beta_hat;
                row.levels = r.levels;
            } else {
                const PilotResult pilot = nmc_pilot(model, est, c, eps, threads);
                row.L = pilot.L;
                row.alpha_hat = pilot.rates.alpha_hat;
                row.beta_hat = pilot.rates.beta_hat;
                row.levels = {pilot.levels[static_cast<std::size_t>(pilot.L)]};
            }
        } catch (const NonConvergence& e) {
            json trace = trace_json(e.trace);
            trace["eps"] = eps;
            trace["error"] = e.what();
            write_file_atomic(c.output_dir / "trace.json", trace.dump(2) + "\n");
            throw;
        }
        const LevelRecord& finest = row.levels.back();
        row.nmc_model_cost = nmc_cost_model(finest.variance_fine, finest.cost, eps, c.omega);
        if (c.estimator == EstimatorKind::kNmc || c.nmc_run) {
            const auto N = std::max(2LL, static_cast<long long>(std::ceil(finest.variance_fine / ((1.0 - c.omega) * eps * eps))));
            const long long M = static_cast<long long>(c.M0) << row.L;
            const RandomStream stream(c.seed, {static_cast<std::uint64_t>(StreamPurpose::kNmcSample)});
            row.nmc = nmc_estimate(model, N, M, c.is_enabled, stream, threads);
            row.nmc_N = N;
            if (c.estimator == EstimatorKind::kNmc) {
                row.estimate = row.nmc->estimate;
                row.total_cost = row.nmc->cost;
            }
        }
        rows.push_back(std::move(row));
    }

    std::ostringstream runs, alloc;
    runs << "eps,estimate,total_cost,L,alpha_hat,beta_hat,nmc_model_cost\n";
    alloc << "eps,level,N_level,var_level,cost_level\n";
    for (const auto& r : rows) {
        runs << fmt(r.eps) << ',' << fmt(r.estimate) << ',' << fmt(r.total_cost) << ',' << r.L << ','
             << fmt(r.alpha_hat) << ',' << fmt(r.beta_hat) << ',' << fmt(r.nmc_model_cost) << '\n';
        if (c.estimator == EstimatorKind::kMlmc) {
            for (const auto& l : r.levels)
                alloc << fmt(r.eps) << ',' << l.level << ',' << l.N << ',' << fmt(l.variance) << ',' << fmt(l.cost) << '\n';
        } else {
            const auto& l = r.levels.back();
            alloc << fmt(r.eps) << ',' << l.level << ',' << r.nmc_N << ',' << fmt(l.variance_fine) << ',' << fmt(l.cost) << '\n';
        }
    }
    write_file_atomic(c.output_dir / "runs.csv", runs.str());
    write_file_atomic(c.output_dir / "allocation.csv", alloc.str());
    if (c.nmc_run && c.estimator == EstimatorKind::kMlmc) {
        std::ostringstream nmc;
        nmc << "eps,estimate,std_error,cost\n";
        for (const auto& r : rows)
            nmc << fmt(r.eps) << ',' << fmt(r.nmc->estimate) << ',' << fmt(r.nmc->std_error) << ',' << fmt(r.nmc->cost) << '\n';
        write_file_atomic(c.output_dir / "nmc.csv", nmc.str());
    }
    return rows;
}

}  // namespace mleig::cli
