// Command-line front end: sensitivity analysis, simulation studies,
// self-verification, and the power study, with reproducible file output.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "cai/oracle.hpp"
#include "cai/studies.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Shared {
    std::uint64_t seed = 0;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    std::string out = ".";
    std::string format = "both";  // json | csv | both
};

// A long-format result table: one header, uniform rows.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_table(const Table& t, const fs::path& dir, const std::string& stem,
                 const std::string& format) {
    if (format == "csv" || format == "both") {
        std::ofstream f(dir / (stem + ".csv"));
        for (std::size_t c = 0; c < t.columns.size(); ++c)
            f << t.columns[c] << (c + 1 < t.columns.size() ? "," : "\n");
        for (const auto& row : t.rows)
            for (std::size_t c = 0; c < row.size(); ++c)
                f << row[c] << (c + 1 < row.size() ? "," : "\n");
    }
    if (format == "json" || format == "both") {
        json arr = json::array();
        for (const auto& row : t.rows) {
            json obj;
            for (std::size_t c = 0; c < row.size(); ++c) {
                char* end = nullptr;
                const double v = std::strtod(row[c].c_str(), &end);
                if (end && *end == '\0' && !row[c].empty())
                    obj[t.columns[c]] = v;
                else
                    obj[t.columns[c]] = row[c];
            }
            arr.push_back(obj);
        }
        std::ofstream f(dir / (stem + ".json"));
        f << arr.dump(2) << "\n";
    }
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config) {
    // the timestamp is kept on its own line so diffs of repeated runs are clean
    std::ofstream f(dir / "manifest.json");
    f << "{\n";
    f << "  \"timestamp\": \"" << std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch()).count() << "\",\n";
    f << "  \"command\": " << json(command).dump() << ",\n";
    f << "  \"version\": " << json(kVersion).dump() << ",\n";
    f << "  \"config\": " << config.dump(2) << "\n";
    f << "}\n";
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void add_shared(CLI::App* cmd, Shared& sh) {
    cmd->add_option("--seed", sh.seed, "master random seed");
    cmd->add_option("--threads", sh.threads, "worker thread count");
    cmd->add_option("--out", sh.out, "output directory");
    cmd->add_option("--format", sh.format, "output format")
        ->check(CLI::IsMember({"json", "csv", "both"}));
    cmd->set_config("--config")->configurable(false);
}

int run_sens(const Shared& sh, const std::string& data, const std::string& outcome,
             const std::string& treatment, const std::string& covariates,
             const std::string& fixed_effects, int strata_k, const std::string& xi_list,
             double alpha, const std::string& tail, int b_base, int b_inner, int b_final,
             int sweeps) {
    cai::CsvSchema schema;
    schema.outcome = outcome;
    schema.treatment = treatment;
    schema.covariates = split_list(covariates);
    cai::Dataset ds = cai::load_csv(data, schema);
    if (!fixed_effects.empty())
        for (const auto& col : split_list(fixed_effects)) ds = cai::one_hot_expand(ds, col);
    cai::SensitivityConfig cfg;
    cfg.seed = sh.seed;
    cfg.threads = sh.threads;
    cfg.alpha = alpha;
    cfg.b_base = b_base;
    cfg.b_inner = b_inner;
    cfg.b_final = b_final;
    cfg.sweeps = sweeps;
    cfg.xi_grid.clear();
    for (const auto& x : split_list(xi_list)) cfg.xi_grid.push_back(std::stod(x));
    if (cfg.xi_grid.empty() || cfg.xi_grid.front() < 1.0)
        throw cai::DataError("--xi must be an ascending list starting at >= 1");
    for (std::size_t i = 1; i < cfg.xi_grid.size(); ++i)
        if (cfg.xi_grid[i] <= cfg.xi_grid[i - 1])
            throw cai::DataError("--xi must be strictly ascending");
    if (tail == "left")
        cfg.tail = cai::Tail::left;
    else if (tail == "two-sided")
        cfg.tail = cai::Tail::two_sided;
    else
        cfg.tail = cai::Tail::right;

    const cai::SensitivityCurve curve = cai::run_sensitivity(ds, cfg, strata_k);

    const fs::path dir(sh.out);
    fs::create_directories(dir);
    Table t;
    t.columns = {"xi", "lower_p", "upper_p", "lower_se", "upper_se"};
    for (const auto& pt : curve.points)
        t.rows.push_back({fmt(pt.xi), fmt(pt.lower_p), fmt(pt.upper_p), fmt(pt.lower_se),
                          fmt(pt.upper_se)});
    write_table(t, dir, "curve", sh.format);
    {
        Table plot;
        plot.columns = {"xi", "upper_p"};
        for (const auto& pt : curve.points) plot.rows.push_back({fmt(pt.xi), fmt(pt.upper_p)});
        write_table(plot, dir, "plot", "csv");
    }
    {
        json mechs = json::array();
        for (const auto& pt : curve.points) {
            json entry;
            entry["xi"] = pt.xi;
            for (const char* side : {"upper", "lower"}) {
                const auto& ms = std::string(side) == "upper" ? pt.upper_mech : pt.lower_mech;
                json arr = json::array();
                for (const auto& d : ms.dists) arr.push_back(d.probs);
                entry[std::string(side) + "_mechanisms"] = arr;
            }
            mechs.push_back(entry);
        }
        json summary;
        summary["t_obs"] = curve.t_obs;
        summary["baseline_p"] = curve.baseline_p;
        summary["baseline_se"] = curve.baseline_se;
        if (curve.robustness_value) summary["robustness_value"] = *curve.robustness_value;
        summary["uninformative"] = curve.uninformative;
        summary["robust_beyond_grid"] = curve.robust_beyond_grid;
        summary["warnings"] = curve.warnings;
        summary["worst_case"] = mechs;
        std::ofstream f(dir / "summary.json");
        f << summary.dump(2) << "\n";
    }
    write_manifest(dir, "sens",
                   json{{"data", data},
                        {"outcome", outcome},
                        {"treatment", treatment},
                        {"covariates", covariates},
                        {"strata", strata_k},
                        {"xi", xi_list},
                        {"alpha", alpha},
                        {"tail", tail},
                        {"seed", sh.seed}});

    std::printf("T_obs = %g\n", curve.t_obs);
    std::printf("baseline P (xi=1): %.4f (se %.4f)\n", curve.baseline_p, curve.baseline_se);
    for (const auto& pt : curve.points)
        std::printf("xi=%-6g lower=%.4f upper=%.4f\n", pt.xi, pt.lower_p, pt.upper_p);
    if (curve.uninformative)
        std::printf("warning: baseline P-value exceeds alpha=%g; "
                    "the sensitivity analysis is not informative\n", alpha);
    else if (curve.robust_beyond_grid)
        std::printf("robustness value: none within the examined grid\n");
    else
        std::printf("robustness value: %.4g\n", *curve.robustness_value);
    for (const auto& w : curve.warnings) std::printf("warning: %s\n", w.c_str());
    return 0;
}

int run_simulate(const Shared& sh, const std::string& rho_list, int n_units, int reps) {
    std::vector<double> rhos;
    for (const auto& r : split_list(rho_list)) rhos.push_back(std::stod(r));
    if (rhos.empty()) throw cai::DataError("--rho list is empty");
    for (double r : rhos)
        if (r < 0.0) throw cai::DataError("--rho must be nonnegative");
    if (n_units < 2 || reps < 1) throw cai::DataError("--n and --reps must be positive");
    if (reps == 1) std::printf("warning: a single replication yields a degenerate RMSE\n");
    Table t;
    t.columns = {"rho", "mean_ipw", "ade_target", "bias", "rmse", "bias_se"};
    for (double rho : rhos) {
        const auto r = cai::simulate_ipw_study(rho, n_units, reps, sh.seed, sh.threads);
        t.rows.push_back({fmt(r.rho), fmt(r.mean_ipw), fmt(r.ade_target), fmt(r.bias),
                          fmt(r.rmse), fmt(r.bias_se)});
        std::printf("rho=%-5g mean=%.3f target=%.3f bias=%+.3f rmse=%.3f\n", r.rho, r.mean_ipw,
                    r.ade_target, r.bias, r.rmse);
    }
    const fs::path dir(sh.out);
    fs::create_directories(dir);
    write_table(t, dir, "ipw_study", sh.format);
    write_manifest(dir, "simulate",
                   json{{"rho", rho_list}, {"n", n_units}, {"reps", reps}, {"seed", sh.seed}});
    return 0;
}

int run_power(const Shared& sh, const std::string& tau_list, const std::string& gamma_list,
              int n_units, int reps, int draws) {
    std::vector<double> taus, gammas;
    for (const auto& v : split_list(tau_list)) taus.push_back(std::stod(v));
    for (const auto& v : split_list(gamma_list)) gammas.push_back(std::stod(v));
    if (taus.size() != gammas.size() || taus.empty())
        throw cai::DataError("--tau and --gamma must be nonempty lists of equal length");
    if (reps < 1 || draws < 1) throw cai::DataError("--reps and --draws must be positive");
    Table t;
    t.columns = {"tau", "gamma", "rejection_rate", "se"};
    for (std::size_t i = 0; i < taus.size(); ++i) {
        const auto r = cai::fisher_power_study(taus[i], gammas[i], n_units, reps, draws,
                                               sh.seed, sh.threads);
        t.rows.push_back({fmt(r.tau), fmt(r.gamma), fmt(r.rate), fmt(r.se)});
        std::printf("tau=%-6g gamma=%-6g rate=%.3f (se %.3f)\n", r.tau, r.gamma, r.rate, r.se);
    }
    const fs::path dir(sh.out);
    fs::create_directories(dir);
    write_table(t, dir, "power_study", sh.format);
    write_manifest(dir, "power",
                   json{{"tau", tau_list},
                        {"gamma", gamma_list},
                        {"n", n_units},
                        {"reps", reps},
                        {"draws", draws},
                        {"seed", sh.seed}});
    return 0;
}

int run_verify(const Shared& sh, const std::string& suite, int trials, bool inject_fault) {
    bool all_ok = true;
    auto report = [&](const std::string& name, bool ok) {
        std::printf("%-12s %s\n", name.c_str(), ok ? "pass" : "FAIL");
        all_ok = all_ok && ok;
    };
    auto want = [&](const std::string& name) { return suite.empty() || suite == name; };

    if (want("prop1")) {
        cai::Rng r = cai::Rng::stream(sh.seed, {21});
        bool ok = true;
        for (int t = 0; t < trials; ++t) {
            const int n = 2 + static_cast<int>(r.below(9));
            cai::CountDistribution d;
            d.n = n;
            d.probs.resize(n + 1);
            double s = 0.0;
            for (auto& p : d.probs) s += (p = r.uniform());
            for (auto& p : d.probs) p /= s;
            const auto mo = cai::dist_moments(d);
            const double ebar = mo.mean / n;
            double rhs = (mo.variance - n * ebar * (1 - ebar)) / (n * (n - 1.0));
            if (inject_fault) rhs = -rhs;
            if (std::abs(cai::pair_covariance(d) - rhs) > 1e-12) ok = false;
        }
        report("prop1", ok);
    }
    if (want("decomp")) {
        cai::Rng r = cai::Rng::stream(sh.seed, {22});
        bool ok = true;
        for (int t = 0; t < std::min(trials, 50); ++t) {
            cai::PopulationSpec pop;
            pop.N = 3 + static_cast<int>(r.below(5));
            for (int i = 0; i < pop.N; ++i)
                pop.covariate_values.push_back(static_cast<double>(r.below(2)));
            std::vector<double> coef(pop.N);
            for (auto& c : coef) c = r.normal();
            pop.outcome_mean_fn = [coef](int i, const std::vector<int>& d) {
                int s = 0;
                for (std::size_t j = 0; j < d.size(); ++j)
                    if (static_cast<int>(j) != i) s += d[j];
                return coef[i] * d[i] + 0.3 * s + 0.1 * d[i] * s;
            };
            pop.assignment_law.assign(std::size_t{1} << pop.N, 0.0);
            double s = 0.0;
            for (auto& p : pop.assignment_law) s += (p = r.uniform());
            for (auto& p : pop.assignment_law) p /= s;
            const auto dec = cai::phi_itr_enumerate(pop);
            const double err = std::max({std::abs(dec.phi_itr - dec.adtc - dec.b_ade_1),
                                         std::abs(dec.phi_itr - dec.adtt - dec.b_ade_0),
                                         std::abs(dec.phi_itr - dec.ade - dec.b_ade)});
            if (err > 1e-10) ok = false;
        }
        report("decomp", ok);
    }
    if (want("lp")) {
        cai::Rng r = cai::Rng::stream(sh.seed, {23});
        bool ok = true;
        for (int t = 0; t < trials; ++t) {
            const int n = 2 + static_cast<int>(r.below(19));
            cai::MomentLP lp;
            lp.n = n;
            lp.objective.resize(n + 1);
            for (auto& a : lp.objective) a = r.uniform();
            const double e = 0.05 + 0.9 * r.uniform();
            lp.mean_target = n * e;
            const double vb = n * e * (1 - e);
            lp.var_lo = vb;
            lp.var_hi = (1.0 + 4 * r.uniform()) * vb;
            lp.direction = t % 2 ? cai::LPDirection::maximize : cai::LPDirection::minimize;
            const auto a = cai::solve_moment_lp(lp);
            const auto b = cai::vertex_oracle(lp);
            if (a.status != b.status) ok = false;
            if (a.status == cai::LPStatus::optimal &&
                std::abs(a.objective_value - b.objective_value) > 1e-8)
                ok = false;
        }
        report("lp", ok);
    }
    if (want("exact")) {
        // Monte Carlo bounds vs exact enumeration on a desk-scale problem
        cai::Rng r = cai::Rng::stream(sh.seed, {24});
        std::vector<double> y;
        std::vector<int> d;
        cai::StratifiedSample strat;
        strat.effective_K = 2;
        for (int i = 0; i < 12; ++i) {
            y.push_back(r.normal());
            d.push_back(i % 3 == 0 ? 1 : 0);
            strat.labels.push_back(i < 6 ? 0 : 1);
        }
        strat.stratum_sizes = {6, 6};
        strat.treated_shares = {2.0 / 6, 2.0 / 6};
        const cai::Problem pr = cai::build_problem(y, d, strat, 2000, sh.seed);
        cai::SensitivityConfig cfg;
        cfg.seed = sh.seed;
        cfg.xi_grid = {1.0, 1.5, 2.0, 3.0};
        bool ok = true;
        const auto curve = cai::run_sensitivity_problem(pr, cfg);
        for (const auto& pt : curve.points) {
            const auto ex = cai::exact_pvalue_bounds(pr, pt.xi);
            if (std::abs(pt.upper_p - ex.upper) > 3 * pt.upper_se + 1e-9) ok = false;
            if (std::abs(pt.lower_p - ex.lower) > 3 * pt.lower_se + 1e-9) ok = false;
        }
        report("exact", ok);
    }
    return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Randomization-inference sensitivity analysis for designs where "
                 "one unit's treatment may predict others'"};
    app.require_subcommand(1);

    Shared sh_sens, sh_sim, sh_pow, sh_ver;

    auto* sens = app.add_subcommand("sens", "P-value bounds across the dispersion grid");
    std::string data, outcome, treatment, covariates, fixed_effects;
    std::string xi_list = "1,1.25,1.5,2,3,5,8", tail = "right";
    int strata_k = 6, b_base = 50000, b_inner = 2500, b_final = 30000, sweeps = 10;
    double alpha = 0.05;
    add_shared(sens, sh_sens);
    sens->add_option("--data", data, "input CSV path")->required();
    sens->add_option("--outcome", outcome, "outcome column")->required();
    sens->add_option("--treatment", treatment, "binary treatment column")->required();
    sens->add_option("--covariates", covariates, "comma-separated covariate columns")->required();
    sens->add_option("--fixed-effects", fixed_effects, "categorical columns to one-hot expand");
    sens->add_option("--strata", strata_k, "number of propensity strata");
    sens->add_option("--xi", xi_list, "comma-separated dispersion grid");
    sens->add_option("--alpha", alpha, "significance level");
    sens->add_option("--tail", tail, "test tail")->check(CLI::IsMember({"right", "left", "two-sided"}));
    sens->add_option("--b-base", b_base, "baseline Monte Carlo draws");
    sens->add_option("--b-inner", b_inner, "per-iteration profile draws");
    sens->add_option("--b-final", b_final, "final bound draws");
    sens->add_option("--sweeps", sweeps, "coordinate-descent sweeps");

    auto* sim = app.add_subcommand("simulate", "IPW bias study under a shared assignment shock");
    std::string rho_list = "0,0.5,1.0,1.5";
    int sim_n = 500, sim_reps = 1000;
    add_shared(sim, sh_sim);
    sim->add_option("--rho", rho_list, "comma-separated shock loadings");
    sim->add_option("--n", sim_n, "units per replication");
    sim->add_option("--reps", sim_reps, "replications");

    auto* pow = app.add_subcommand("power", "size/power of the randomization test");
    std::string tau_list = "0,4000,0,4000", gamma_list = "0,0,4000,-4000";
    int pow_n = 614, pow_reps = 300, pow_draws = 20000;
    add_shared(pow, sh_pow);
    pow->add_option("--tau", tau_list, "direct-effect values");
    pow->add_option("--gamma", gamma_list, "exposure-effect values (paired with --tau)");
    pow->add_option("--n", pow_n, "units per replication");
    pow->add_option("--reps", pow_reps, "replications");
    pow->add_option("--draws", pow_draws, "Monte Carlo draws per P-value");

    auto* ver = app.add_subcommand("verify", "run the self-verification suites");
    std::string suite;
    int trials = 100;
    bool inject_fault = false;
    add_shared(ver, sh_ver);
    ver->add_option("--suite", suite, "run a single suite (prop1|decomp|lp|exact)");
    ver->add_option("--trials", trials, "randomized trials per suite");
    ver->add_flag("--inject-fault", inject_fault, "flip a sign to self-test the harness")
        ->group("");  // hidden

    CLI11_PARSE(app, argc, argv);
    try {
        if (sens->parsed())
            return run_sens(sh_sens, data, outcome, treatment, covariates, fixed_effects,
                            strata_k, xi_list, alpha, tail, b_base, b_inner, b_final, sweeps);
        if (sim->parsed()) return run_simulate(sh_sim, rho_list, sim_n, sim_reps);
        if (pow->parsed()) return run_power(sh_pow, tau_list, gamma_list, pow_n, pow_reps,
                                            pow_draws);
        if (ver->parsed()) return run_verify(sh_ver, suite, trials, inject_fault);
    } catch (const cai::InfeasibleLP& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
