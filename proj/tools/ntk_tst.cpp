// ntk_tst: command-line entry point. Every subcommand writes into --out and
// finishes with a manifest.json listing its outputs and effective settings.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ntktst/bounds.hpp"
#include "ntktst/data.hpp"
#include "ntktst/dynamics.hpp"
#include "ntktst/error.hpp"
#include "ntktst/io.hpp"
#include "ntktst/network.hpp"
#include "ntktst/ntk.hpp"
#include "ntktst/parallel.hpp"
#include "ntktst/teststat.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ntktst;

namespace {

constexpr int kExitUsage = 2, kExitNumerical = 3, kExitInfeasible = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::uint64_t seed = 0;
    std::string out = ".";
    int threads = 0;
    std::string config;
};

void add_common(CLI::App& sub, Common& c) {
    sub.add_option("--seed", c.seed, "master seed")->capture_default_str();
    sub.add_option("--out", c.out, "output directory")->capture_default_str();
    sub.add_option("--threads", c.threads, "worker cap (falls back to NTK_TST_THREADS)");
    sub.add_option("--config", c.config, "JSON file whose keys mirror flag names; flags win");
}

std::string scalar_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw UsageError("config values must be scalars or arrays of scalars");
}

// Feeds config keys into options not given on the command line.
void apply_config(CLI::App& sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, val] : j.items()) {
        if (key == "format_version") continue;
        CLI::Option* opt = key == "config" ? nullptr : sub.get_option_no_throw("--" + key);
        if (opt == nullptr) throw UsageError("unknown config key '" + key + "'");
        if (opt->count() > 0) continue;
        if (val.is_array())
            for (const auto& v : val) opt->add_result(scalar_string(v));
        else
            opt->add_result(scalar_string(val));
        try {
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw UsageError("config key '" + key + "': " + e.what());
        }
    }
}

// Creates the output directory and proves it writable before any work runs.
fs::path prepare_out(const Common& c) {
    fs::path out(c.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    const fs::path probe = out / ".ntk_tst_write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw UsageError("output directory " + c.out + " is not writable");
    }
    fs::remove(probe, ec);
    if (c.threads > 0) set_thread_count(c.threads);
    return out;
}

// Dumps every option of the subcommand as it ended up after flags and config.
json effective_settings(const CLI::App& sub) {
    json j = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config" || name == "out" || name == "threads") continue;
        auto res = opt->reduced_results();
        if (res.empty()) {
            const std::string def = opt->get_default_str();
            if (!def.empty()) j[name] = def;
        } else {
            j[name] = res.size() == 1 ? json(res[0]) : json(res);
        }
    }
    return j;
}

void write_manifest(const fs::path& out, const std::string& cmd, const CLI::App& sub, const Common& c,
                    const std::vector<std::string>& files, json extra = json::object()) {
    json j = {{"subcommand", cmd}, {"seed", c.seed}, {"settings", effective_settings(sub)}, {"files", files}};
    j.update(extra);
    write_json(out / "manifest.json", j);
}

DensityPair make_problem(const std::string& name, int d, double mu2) {
    if (d < 2) throw UsageError("--d must be at least 2");
    if (name == "hard") return make_hard_problem(d);
    if (name == "mean-shift")
        return make_mean_shift(Eigen::VectorXd::Zero(d), Eigen::VectorXd::Constant(d, mu2), Eigen::MatrixXd::Identity(d, d));
    throw UsageError("unknown problem '" + name + "' (expected hard or mean-shift)");
}

struct NetOptions {
    int width = 8;
    int depth = 2;
    std::string activation = "tanh";

    void add(CLI::App& sub) {
        sub.add_option("--width", width, "hidden width (even)")->capture_default_str();
        sub.add_option("--depth", depth, "hidden layers")->capture_default_str();
        sub.add_option("--activation", activation, "relu, tanh or identity")->capture_default_str();
    }
    MlpArchitecture arch(int d) const {
        MlpArchitecture a{d, depth, width, activation_from_string(activation)};
        try {
            a.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return a;
    }
};

struct ProblemOptions {
    std::string problem = "mean-shift";
    int d = 2;
    double mu2 = 1.0;
    bool h0 = false;

    void add(CLI::App& sub, bool with_h0) {
        sub.add_option("--problem", problem, "hard or mean-shift")->capture_default_str();
        sub.add_option("--d", d, "dimension")->capture_default_str();
        sub.add_option("--mu2", mu2, "mean-shift: Q mean is mu2 in every coordinate, P mean is 0")->capture_default_str();
        if (with_h0) sub.add_flag("--h0", h0, "replace Q by P");
    }
    DensityPair pair() const {
        auto p = make_problem(problem, d, mu2);
        return h0 ? p.null_of() : p;
    }
};

// ---- gen-data ----

struct GenData {
    Common common;
    ProblemOptions prob{"hard", 20, 0.5};
    long n = 100;
};

void run_gen_data(const CLI::App& sub, const GenData& g) {
    if (g.n < 1) throw UsageError("--n must be positive");
    auto pair = g.prob.pair();
    auto out = prepare_out(g.common);
    auto xp = sample(pair.p(), g.n, derive_seed(g.common.seed, {1}), Source::P);
    auto xq = sample(pair.q(), g.n, derive_seed(g.common.seed, {2}), Source::Q);
    write_samples(xp, out / "p.csv");
    write_samples(xq, out / "q.csv");
    write_json(out / "pair.json", to_json(pair));
    write_manifest(out, "gen-data", sub, g.common, {"p.csv", "p.csv.json", "q.csv", "q.csv.json", "pair.json"});
}

// ---- aux ----

struct Aux {
    Common common;
    ProblemOptions prob;
    NetOptions net;
    long quad = 2560;
    double t_max = 10.0;
    int t_points = 101;
    std::vector<double> eps;
    std::string rate = "divisive";
    std::size_t windows = 64;
};

void run_aux(const CLI::App& sub, const Aux& a) {
    if (a.quad < 2 || a.quad % 2) throw UsageError("--quad must be even and at least 2");
    if (!(a.t_max >= 0.0) || a.t_points < 1) throw UsageError("bad time grid");
    if (a.rate != "divisive" && a.rate != "printed") throw UsageError("--rate must be divisive or printed");
    const auto conv = a.rate == "divisive" ? RateConvention::Divisive : RateConvention::Printed;
    auto pair = a.prob.pair();
    auto arch = a.net.arch(pair.dim());
    auto out = prepare_out(a.common);

    auto quad = build_quadrature(pair, a.quad, derive_seed(a.common.seed, {1}));
    auto net = init_symmetric(arch, derive_seed(a.common.seed, {2}));
    auto spec = ntk_spectrum(net, quad);
    auto proj = project_witness(spec, pair, quad);
    AuxiliaryState st(spec, proj);

    {
        CsvWriter w(out / "aux_curve.csv", {"t", "aux_statistic"});
        for (int j = 0; j < a.t_points; ++j) {
            const double t = a.t_points == 1 ? 0.0 : a.t_max * j / (a.t_points - 1);
            w.row({t, aux_statistic(st, t)});
        }
    }
    write_spectrum_csv(spec, proj, out / "spectrum.csv");

    std::vector<double> levels = a.eps;
    if (levels.empty() && proj.norm_pi > 0.0) levels = {0.25 * proj.norm_pi, 0.5 * proj.norm_pi, 0.75 * proj.norm_pi};
    const auto strat = window_strategy(a.windows);
    json records = json::array();
    bool infeasible = false;
    for (double eps : levels) {
        json r = {{"eps", eps}};
        try {
            auto t1 = t_min_detect(proj, spec, eps, strat, conv);
            auto t2 = t_max_undetect(proj, spec, eps, strat, conv);
            bool verified = aux_statistic(st, t1.t) >= eps - 1e-9;
            if (std::isfinite(t2.t))
                for (int j = 0; j <= 20; ++j) verified = verified && aux_statistic(st, t2.t * j / 20.0) <= eps + 1e-12;
            r["t1_star"] = t1.t;
            r["t1_subset"] = t1.subset;
            r["t1_lambda_min"] = t1.lambda;
            r["t2_star"] = std::isfinite(t2.t) ? json(t2.t) : json("inf");
            r["t2_subset"] = t2.subset;
            r["t2_lambda_max"] = t2.lambda;
            r["verified"] = verified;
        } catch (const InfeasibleError& e) {
            infeasible = true;
            r["infeasible"] = true;
            r["max_attainable"] = e.max_attainable();
        }
        records.push_back(r);
    }
    write_json(out / "detection.json", {{"rate_convention", a.rate},
                                        {"rank", spec.rank()},
                                        {"norm_pi", proj.norm_pi},
                                        {"witness_norm2", proj.witness_norm2},
                                        {"levels", records}});
    write_manifest(out, "aux", sub, a.common, {"aux_curve.csv", "spectrum.csv", "detection.json"});
    if (infeasible) throw InfeasibleError("at least one requested level is infeasible; see detection.json", 0.0);
}

// ---- train ----

struct Train {
    Common common;
    ProblemOptions prob;
    NetOptions net;
    long n = 64;
    long m = 64;
    double h = 1e-3;
    double t_max = 1.0;
    long record_every = 100;
    long quad_factor = 20;
    double radius = 1.0;
    double exponent = 1.0;
    int n_probe = 16;
    std::string regime = "realistic";
};

void run_train(const CLI::App& sub, const Train& a) {
    if (a.n < 2 || a.m < 2) throw UsageError("--n and --m must be at least 2");
    if (a.quad_factor < 1) throw UsageError("--quad-factor must be positive");
    if (a.regime != "realistic" && a.regime != "population") throw UsageError("--regime must be realistic or population");
    auto pair = a.prob.pair();
    auto arch = a.net.arch(pair.dim());
    auto out = prepare_out(a.common);
    const auto s = a.common.seed;

    auto xp = sample(pair.p(), a.n, derive_seed(s, {1}), Source::P);
    auto xq = sample(pair.q(), a.n, derive_seed(s, {2}), Source::Q);
    auto zp = sample(pair.p(), a.m, derive_seed(s, {3}), Source::P);
    auto zq = sample(pair.q(), a.m, derive_seed(s, {4}), Source::Q);
    auto quad = build_quadrature(pair, 2 * a.quad_factor * a.n, derive_seed(s, {5}));
    auto net0 = init_symmetric(arch, derive_seed(s, {6}));
    Eigen::VectorXd witness = pair.witness_rows(quad.points);

    auto spec = ntk_spectrum(net0, quad);
    auto proj = project_witness(spec, witness, quad);
    AuxiliaryState st(spec, proj);
    auto consts = estimate_constants(net0, quad, a.radius, a.exponent, a.n_probe, derive_seed(s, {7}));
    const SampleSizes sizes{static_cast<double>(a.n), static_cast<double>(a.n), static_cast<double>(a.m),
                            static_cast<double>(a.m)};
    auto budget = make_budget(consts, std::sqrt(proj.norm_pi), sizes);

    const auto regime = a.regime == "realistic" ? Regime::Realistic : Regime::Population;
    auto data = regime == Regime::Realistic ? label_two_sample(xp, xq) : population_data(witness, quad);
    auto traj = train_trajectory(regime, net0, data, a.h, a.t_max, a.record_every);

    auto train = statistic_path(traj, two_sample_measure(xp, xq));
    auto test = statistic_path(traj, two_sample_measure(zp, zq));
    auto pop = statistic_path(traj, witness_measure(witness, quad));
    write_statistic_path(train, out / "path_train.csv");
    write_statistic_path(test, out / "path_test.csv");
    write_statistic_path(pop, out / "path_pop.csv");
    write_trajectory_csv(traj, train, out / "trajectory.csv");
    {
        CsvWriter w(out / "gap_budget.csv",
                    {"t", "aux_statistic", "gap_pop", "delta_pop", "gap_train", "delta_train", "gap_test", "delta_test"});
        for (std::size_t i = 0; i < traj.snaps.size(); ++i) {
            const double t = traj.snaps[i].t, bar = aux_statistic(st, t);
            w.row({t, bar, std::abs(pop.value[i] - bar), delta(t, EvalSet::Pop, budget), std::abs(train.value[i] - bar),
                   delta(t, EvalSet::Train, budget), std::abs(test.value[i] - bar), delta(t, EvalSet::Test, budget)});
        }
    }
    write_json(out / "budget.json", budget.to_json());
    write_manifest(out, "train", sub, a.common,
                   {"path_train.csv", "path_test.csv", "path_pop.csv", "trajectory.csv", "gap_budget.csv", "budget.json"},
                   {{"regime", to_string(regime)}});
}

// ---- power ----

struct Power {
    Common common;
    PowerConfig cfg;
    std::string activation = "relu";
    std::string hypothesis = "both";
    bool desk_scale = false;
    // Options that fall back to the preset when neither flag nor config set them.
    std::vector<std::pair<CLI::Option*, std::function<void(const PowerConfig&)>>> preset_fields;
};

template <class T>
void power_option(CLI::App& sub, Power& p, const std::string& flag, T PowerConfig::*field, const std::string& help) {
    CLI::Option* opt = nullptr;
    if constexpr (std::is_same_v<T, bool>)
        opt = sub.add_flag(flag, p.cfg.*field, help);
    else
        opt = sub.add_option(flag, p.cfg.*field, help)->capture_default_str();
    if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<double>>) opt->delimiter(',');
    p.preset_fields.emplace_back(opt, [&p, field](const PowerConfig& preset) { p.cfg.*field = preset.*field; });
}

void run_power(const CLI::App& sub, Power& p) {
    if (p.desk_scale) {
        const auto preset = PowerConfig::desk_scale();
        for (auto& [opt, copy] : p.preset_fields)
            if (opt->count() == 0) copy(preset);
        if (sub.get_option("--activation")->count() == 0) p.activation = to_string(preset.activation);
    }
    if (p.hypothesis != "alt" && p.hypothesis != "null" && p.hypothesis != "both")
        throw UsageError("--hypothesis must be alt, null or both");
    p.cfg.activation = activation_from_string(p.activation);
    p.cfg.run_alt = p.hypothesis != "null";
    p.cfg.run_null = p.hypothesis != "alt";
    p.cfg.seed = p.common.seed;
    try {
        p.cfg.validate();
        problem_by_name(p.cfg.problem, p.cfg.d);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    auto out = prepare_out(p.common);
    auto grid = power_experiment(p.cfg);
    write_power_grid(grid, out / "power_grid.csv");
    json cells = json::array();
    for (const auto& c : grid.cells)
        cells.push_back({{"epochs", c.epochs},
                         {"ratio", c.ratio},
                         {"width", c.width},
                         {"hypothesis", to_string(c.hypothesis)},
                         {"rejects", c.rejects},
                         {"n_trials", c.n_trials}});
    write_json(out / "power_grid.csv.json", {{"config", p.cfg.to_json()}, {"desk_scale", p.desk_scale}, {"cells", cells}});
    write_manifest(out, "power", sub, p.common, {"power_grid.csv", "power_grid.csv.json"});
}

// ---- motivating ----

struct Motivating {
    Common common;
    int hidden = 16;
    int d = 2;
    double eta = 0.01;
    std::vector<double> gaps{0.0, 0.5, 1.0, 2.0};
};

void run_motivating(const CLI::App& sub, const Motivating& m) {
    if (m.hidden < 2 || m.hidden % 2) throw UsageError("--hidden must be even and at least 2");
    if (m.d < 1) throw UsageError("--d must be positive");
    if (!(m.eta > 0.0)) throw UsageError("--eta must be positive");
    auto out = prepare_out(m.common);
    auto net = LinearToyNet::paired(m.hidden, m.d, derive_seed(m.common.seed, {1}));
    json rows = json::array();
    CsvWriter w(out / "motivating.csv", {"gap", "statistic", "closed_form", "bias_change"});
    double prev = -std::numeric_limits<double>::infinity();
    bool increasing = true;
    for (double gap : m.gaps) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(m.d);
        mu[0] = gap / 2.0;
        auto step = toy_population_step(net, make_mean_shift(mu, -mu, Eigen::MatrixXd::Identity(m.d, m.d)), m.eta);
        w.row({gap, step.statistic, step.closed_form, step.bias_change});
        increasing = increasing && step.statistic > prev;
        prev = step.statistic;
        rows.push_back({{"gap", gap},
                        {"statistic", step.statistic},
                        {"closed_form", step.closed_form},
                        {"bias_change", step.bias_change},
                        {"positive", step.statistic > 0.0}});
        std::printf("gap %-6g statistic %.6e closed form %.6e bias change %g\n", gap, step.statistic, step.closed_form,
                    step.bias_change);
    }
    std::printf("statistic increasing in gap: %s\n", increasing ? "yes" : "no");
    write_json(out / "motivating.json", {{"hidden", m.hidden}, {"d", m.d}, {"eta", m.eta}, {"steps", rows},
                                         {"increasing", increasing}});
    write_manifest(out, "motivating", sub, m.common, {"motivating.csv", "motivating.json"});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural tangent kernel two-sample test toolkit"};
    app.require_subcommand(1);

    GenData gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "sample a named density pair to CSV");
    add_common(*gen_cmd, gen.common);
    gen.prob.add(*gen_cmd, false);
    gen_cmd->add_option("--n", gen.n, "samples per side")->capture_default_str();

    Aux aux;
    auto* aux_cmd = app.add_subcommand("aux", "zero-time kernel statistic, spectrum and detection times");
    add_common(*aux_cmd, aux.common);
    aux.prob.add(*aux_cmd, true);
    aux.net.add(*aux_cmd);
    aux_cmd->add_option("--quad", aux.quad, "quadrature points (even)")->capture_default_str();
    aux_cmd->add_option("--t-max", aux.t_max, "curve horizon")->capture_default_str();
    aux_cmd->add_option("--t-points", aux.t_points, "curve rows, t=0 included")->capture_default_str();
    aux_cmd->add_option("--eps", aux.eps, "detection levels (default: quarters of the projected norm)")->delimiter(',');
    aux_cmd->add_option("--rate", aux.rate, "eigenvalue convention: divisive or printed")->capture_default_str();
    aux_cmd->add_option("--windows", aux.windows, "extra contiguous spectral windows searched")->capture_default_str();

    Train train;
    auto* train_cmd = app.add_subcommand("train", "train a network and compare statistics against the error budget");
    add_common(*train_cmd, train.common);
    train.prob.add(*train_cmd, true);
    train.net.add(*train_cmd);
    train_cmd->add_option("--n", train.n, "training samples per side")->capture_default_str();
    train_cmd->add_option("--m", train.m, "test samples per side")->capture_default_str();
    train_cmd->add_option("--step", train.h, "Euler step")->capture_default_str();
    train_cmd->add_option("--t-max", train.t_max, "training horizon")->capture_default_str();
    train_cmd->add_option("--record-every", train.record_every, "steps between snapshots")->capture_default_str();
    train_cmd->add_option("--quad-factor", train.quad_factor, "quadrature size over training size")->capture_default_str();
    train_cmd->add_option("--radius", train.radius, "parameter ball radius")->capture_default_str();
    train_cmd->add_option("--exponent", train.exponent, "confidence exponent")->capture_default_str();
    train_cmd->add_option("--n-probe", train.n_probe, "random probes for the gradient constants")->capture_default_str();
    train_cmd->add_option("--regime", train.regime, "realistic or population")->capture_default_str();

    Power power;
    auto* power_cmd = app.add_subcommand("power", "permutation-test power grid over epochs and width ratios");
    add_common(*power_cmd, power.common);
    power_option(*power_cmd, power, "--problem", &PowerConfig::problem, "hard or mean-shift");
    power_option(*power_cmd, power, "--d", &PowerConfig::d, "dimension");
    power_option(*power_cmd, power, "--n-train", &PowerConfig::n_train, "training samples per side");
    power_option(*power_cmd, power, "--n-test", &PowerConfig::n_test, "test samples per side");
    power_option(*power_cmd, power, "--depth", &PowerConfig::depth, "hidden layers");
    power_option(*power_cmd, power, "--batch", &PowerConfig::batch, "SGD batch size");
    power_option(*power_cmd, power, "--epochs", &PowerConfig::epochs, "epoch checkpoints");
    power_option(*power_cmd, power, "--ratios", &PowerConfig::ratios, "width ratios");
    power_option(*power_cmd, power, "--lr", &PowerConfig::lr, "learning rate");
    power_option(*power_cmd, power, "--alpha", &PowerConfig::alpha, "test level");
    power_option(*power_cmd, power, "--n-perm", &PowerConfig::n_perm, "permutations per test");
    power_option(*power_cmd, power, "--n-trials", &PowerConfig::n_trials, "trials per cell");
    power_option(*power_cmd, power, "--retrain-per-permutation", &PowerConfig::retrain_per_permutation,
                 "retrain on every relabeling");
    power_cmd->add_option("--activation", power.activation, "relu, tanh or identity")->capture_default_str();
    power_cmd->add_option("--hypothesis", power.hypothesis, "alt, null or both")->capture_default_str();
    power_cmd->add_flag("--desk-scale", power.desk_scale, "small preset; explicit flags still win");

    Motivating mot;
    auto* mot_cmd = app.add_subcommand("motivating", "one population gradient step of the linear toy network");
    add_common(*mot_cmd, mot.common);
    mot_cmd->add_option("--hidden", mot.hidden, "hidden units (even)")->capture_default_str();
    mot_cmd->add_option("--d", mot.d, "dimension")->capture_default_str();
    mot_cmd->add_option("--eta", mot.eta, "step size")->capture_default_str();
    mot_cmd->add_option("--gaps", mot.gaps, "mean separations")->delimiter(',');

    try {
        app.parse(argc, argv);
        const std::pair<CLI::App*, const Common*> subs[] = {
            {gen_cmd, &gen.common}, {aux_cmd, &aux.common}, {train_cmd, &train.common}, {power_cmd, &power.common},
            {mot_cmd, &mot.common}};
        for (const auto& [cmd, common] : subs)
            if (cmd->parsed() && !common->config.empty()) apply_config(*cmd, common->config);

        if (gen_cmd->parsed()) run_gen_data(*gen_cmd, gen);
        if (aux_cmd->parsed()) run_aux(*aux_cmd, aux);
        if (train_cmd->parsed()) run_train(*train_cmd, train);
        if (power_cmd->parsed()) run_power(*power_cmd, power);
        if (mot_cmd->parsed()) run_motivating(*mot_cmd, mot);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
