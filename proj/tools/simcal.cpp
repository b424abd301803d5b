#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "simcal/calibrate.hpp"
#include "simcal/metrics.hpp"
#include "simcal/param_space.hpp"
#include "simcal/scenarios.hpp"
#include "simcal/sim_engine.hpp"

using nlohmann::json;
using namespace simcal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

json read_json(const std::string& path) {
    if (path == "-") {
        json j;
        std::cin >> j;
        return j;
    }
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    json j;
    in >> j;
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    if (path == "-" || path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw ParseError("cannot write '" + path + "'");
    out << text;
}

int default_workers() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0)
        hw = 1;
    return static_cast<int>(std::min(hw, 40u));
}

struct CommonOpts {
    std::string preset_label = "FCSN";
    std::uint64_t seed = 0;
    int workers = default_workers();
    std::uint64_t max_evals = 0;  // 0: use wall clock
    double time_budget_s = 21600; // the 6-hour default
    bool paper_scale = false;
    double block_size = 0;  // 0: scale default
    double buffer_size = 0;
};

Budget make_budget(const CommonOpts& o) {
    return o.max_evals > 0 ? Budget::max_evaluations(o.max_evals)
                           : Budget::wall_clock(o.time_budget_s);
}

TruthConfig truth_config_for(const CommonOpts& o) {
    TruthConfig cfg;
    if (o.paper_scale) {
        cfg.preset_label = o.preset_label;
        cfg.hidden_point = baseline_fixture(o.preset_label);
        cfg.workload = paper_workload();
        cfg.icd_list = default_icd_list();
        cfg.truth_block_size = 1e8; // the defaults behind the ~30 s runs
        cfg.truth_buffer_size = 1e6;
    } else {
        cfg = desk_truth_config(o.preset_label);
    }
    return cfg;
}

double scale_block(const CommonOpts& o, const TruthConfig& cfg) {
    return o.block_size > 0 ? o.block_size : cfg.truth_block_size;
}
double scale_buffer(const CommonOpts& o, const TruthConfig& cfg) {
    return o.buffer_size > 0 ? o.buffer_size : cfg.truth_buffer_size;
}

std::string best_so_far_csv(const ParameterSpace& space, const CalibrationResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "eval_index,wall_time_s,best_mre_percent,best_mae_s\n";
    double best_mre = std::numeric_limits<double>::infinity();
    double best_mae = std::numeric_limits<double>::infinity();
    for (const auto& s : result.log) {
        if (s.ok && s.mre < best_mre) {
            best_mre = s.mre;
            best_mae = s.mae;
        }
        out << s.index << ',' << s.wall_time << ',' << best_mre << ',' << best_mae << '\n';
    }
    (void)space;
    return out.str();
}

// ------------------------------------------------------------ commands

int cmd_simulate(const std::string& scenario_path, const std::string& out_path,
                 std::uint64_t seed) {
    Scenario sc = scenario_from_json(read_json(scenario_path));
    Trace trace = run_scenario(sc, seed);
    write_text(out_path, trace_to_json(trace).dump(2) + "\n");
    return kExitOk;
}

int cmd_ground_truth(const CommonOpts& o, const std::string& out_path, double noise,
                     std::uint64_t noise_seed, const std::vector<double>& icds,
                     const std::map<std::string, double>& hidden_overrides) {
    TruthConfig cfg = truth_config_for(o);
    cfg.noise_stddev = noise;
    cfg.noise_seed = noise_seed;
    if (!icds.empty())
        cfg.icd_list = icds;
    if (o.block_size > 0)
        cfg.truth_block_size = o.block_size;
    if (o.buffer_size > 0)
        cfg.truth_buffer_size = o.buffer_size;
    for (const auto& [name, value] : hidden_overrides)
        cfg.hidden_point.values[name] = value;
    auto truth = generate_ground_truth(cfg);
    write_text(out_path, ground_truth_to_json(truth).dump(2) + "\n");
    return kExitOk;
}

int cmd_calibrate(const CommonOpts& o, const std::string& truth_path, const std::string& algo,
                  const std::vector<double>& subset, const GdConfig& gd,
                  const std::string& log_path, const std::string& out_path,
                  const std::string& external_command, double external_timeout) {
    GroundTruthSet truth = ground_truth_from_json(read_json(truth_path));
    CommonOpts opts = o;
    if (!truth.platform_label.empty())
        opts.preset_label = truth.platform_label;
    TruthConfig cfg = truth_config_for(opts);
    Scenario tmpl = scenario_template(cfg, scale_block(opts, cfg), scale_buffer(opts, cfg));
    auto space = default_parameter_space();

    std::optional<std::vector<double>> sub;
    if (!subset.empty())
        sub = subset;
    Objective objective;
    if (external_command.empty()) {
        objective = make_simulator_objective(truth, tmpl, sub);
    } else {
        ExternalSimulator ext;
        ext.command = external_command;
        ext.timeout_seconds = external_timeout;
        objective = external_objective(ext, truth, tmpl, sub);
    }

    auto result =
        run_calibration(space, objective, algo, make_budget(opts), opts.workers, opts.seed, gd);
    if (!log_path.empty())
        write_text(log_path, sample_log_csv(space, result));
    write_text(out_path, calibration_result_to_json(space, result).dump(2) + "\n");
    return kExitOk;
}

int cmd_report(const std::string& result_path) {
    json j = read_json(result_path);
    if (!j.contains("best"))
        throw ParseError("result file has no 'best' entry");
    const auto& best = j.at("best");
    std::printf("algorithm:    %s\n", j.at("algorithm").get<std::string>().c_str());
    std::printf("evaluations:  %llu\n",
                static_cast<unsigned long long>(j.at("evaluations").get<std::uint64_t>()));
    std::printf("best MRE:     %.2f%%\n", best.at("mre_percent").get<double>());
    std::printf("best MAE:     %.3f s\n", best.at("mae_s").get<double>());
    std::printf("best point:\n");
    for (const auto& [name, entry] : best.at("point").items())
        std::printf("  %-12s %.6g %s\n", name.c_str(), entry.at("value").get<double>(),
                    entry.at("unit").get<std::string>().c_str());
    return kExitOk;
}

// ---------------------------------------------------------- experiments

struct ExperimentIO {
    std::string outdir;
    void write(const std::string& name, const std::string& text) const {
        write_text(outdir + "/" + name, text);
    }
};

int run_table3(const CommonOpts& o, const ExperimentIO& io, const GdConfig& gd) {
    auto space = default_parameter_space();
    std::ostringstream summary;
    summary << "platform,method,mre_percent,core_speed,disk_bw,lan_bw,wan_bw\n";
    for (const auto& label : kPresetLabels) {
        CommonOpts opts = o;
        opts.preset_label = label;
        TruthConfig cfg = truth_config_for(opts);
        auto truth = generate_ground_truth(cfg);
        Scenario tmpl = scenario_template(cfg, scale_block(opts, cfg), scale_buffer(opts, cfg));

        auto emit = [&](const std::string& method, double mre_val, const Point& pt) {
            summary << label << ',' << method << ',' << mre_val << ',' << pt.values.at("core_speed")
                    << ',' << pt.values.at("disk_bw") << ',' << pt.values.at("lan_bw") << ','
                    << pt.values.at("wan_bw") << '\n';
        };

        auto fixture = baseline_fixture(label);
        emit("human", evaluate_objective(fixture, truth, tmpl).mre, fixture);

        for (const std::string algo : {"grid", "random", "gdfix", "gddyn"}) {
            auto objective = make_simulator_objective(truth, tmpl);
            auto result = run_calibration(space, objective, algo, make_budget(opts),
                                          opts.workers, opts.seed, gd);
            emit(algo, result.best.mre, result.best.point);
            io.write("table3_" + label + "_" + algo + "_log.csv",
                     sample_log_csv(space, result));
        }
    }
    io.write("table3.csv", summary.str());
    return kExitOk;
}

std::vector<std::vector<double>> subsets_of(const std::vector<double>& values, std::size_t k) {
    std::vector<std::vector<double>> out;
    std::vector<std::size_t> pick(k);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == k) {
            std::vector<double> s;
            for (auto i : pick)
                s.push_back(values[i]);
            out.push_back(std::move(s));
            return;
        }
        for (std::size_t i = start; i < values.size(); ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return out;
}

int run_table4(const CommonOpts& o, const ExperimentIO& io, const GdConfig& gd,
               const std::string& algo, double noise, std::uint64_t noise_seed) {
    auto space = default_parameter_space();
    TruthConfig cfg = truth_config_for(o);
    cfg.noise_stddev = noise;
    cfg.noise_seed = noise_seed;
    auto truth = generate_ground_truth(cfg);
    Scenario tmpl = scenario_template(cfg, scale_block(o, cfg), scale_buffer(o, cfg));

    std::ostringstream detail;
    detail << "cardinality,subset,subset_mre,full_mre\n";
    std::ostringstream summary;
    summary << "cardinality,n_subsets,best,median,worst\n";

    auto run_on = [&](const std::optional<std::vector<double>>& sub) {
        auto objective = make_simulator_objective(truth, tmpl, sub);
        auto result =
            run_calibration(space, objective, algo, make_budget(o), o.workers, o.seed, gd);
        const double full = evaluate_objective(result.best.point, truth, tmpl).mre;
        return std::pair<double, double>(result.best.mre, full);
    };

    const auto pool = subset_study_icds();
    for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
        std::vector<double> fulls;
        for (const auto& sub : subsets_of(pool, k)) {
            auto [sub_mre, full_mre] = run_on(sub);
            fulls.push_back(full_mre);
            detail << k << ',';
            for (std::size_t i = 0; i < sub.size(); ++i)
                detail << (i ? ";" : "") << sub[i];
            detail << ',' << sub_mre << ',' << full_mre << '\n';
        }
        std::sort(fulls.begin(), fulls.end());
        summary << k << ',' << fulls.size() << ',' << fulls.front() << ','
                << fulls[fulls.size() / 2] << ',' << fulls.back() << '\n';
    }
    auto [all_mre, all_full] = run_on(std::nullopt);
    detail << "11,all," << all_mre << ',' << all_full << '\n';
    summary << "11,1," << all_full << ',' << all_full << ',' << all_full << '\n';

    io.write("table4_subsets.csv", detail.str());
    io.write("table4.csv", summary.str());
    return kExitOk;
}

int run_table5(const CommonOpts& o, const ExperimentIO& io, const GdConfig& gd) {
    auto space = default_parameter_space();
    TruthConfig cfg = truth_config_for(o);
    auto truth = generate_ground_truth(cfg);

    // the four granularity pairs traded off against simulation time
    std::vector<std::pair<double, double>> pairs = {
        {1e10, 1e8}, {1e9, 1e7}, {1e8, 1e6}, {1e7, 1e5}};
    if (!o.paper_scale) {
        // scaled to the desk workload's 16 MiB files
        pairs = {{16e6, 1.6e6}, {4e6, 4e5}, {1e6, 1e5}, {2.5e5, 2.5e4}};
    }

    std::ostringstream summary;
    summary << "block_size,buffer_size,algorithm,mre_percent,avg_eval_seconds\n";
    for (const auto& [block, buffer] : pairs) {
        Scenario tmpl = scenario_template(cfg, block, buffer);
        for (const std::string algo : {"gdfix", "grid", "random"}) {
            auto objective = make_simulator_objective(truth, tmpl);
            const auto t0 = std::chrono::steady_clock::now();
            auto result = run_calibration(space, objective, algo, make_budget(o), o.workers,
                                          o.seed, gd);
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            summary << block << ',' << buffer << ',' << algo << ',' << result.best.mre << ','
                    << elapsed / static_cast<double>(std::max<std::uint64_t>(
                                     result.evaluations, 1))
                    << '\n';
        }
    }
    io.write("table5.csv", summary.str());
    return kExitOk;
}

int run_fig2(const CommonOpts& o, const ExperimentIO& io, const GdConfig& gd) {
    auto space = default_parameter_space();
    TruthConfig cfg = truth_config_for(o);
    auto truth = generate_ground_truth(cfg);
    Scenario tmpl = scenario_template(cfg, scale_block(o, cfg), scale_buffer(o, cfg));
    for (const std::string algo : {"grid", "random", "gdfix"}) {
        auto objective = make_simulator_objective(truth, tmpl);
        auto result =
            run_calibration(space, objective, algo, make_budget(o), o.workers, o.seed, gd);
        io.write("fig2_" + algo + ".csv", best_so_far_csv(space, result));
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator calibration toolkit: fluid discrete-event simulator "
                 "of a cached-storage workload plus grid/random/gradient-descent "
                 "parameter calibration against ground-truth traces"};
    app.set_config("--config", "", "Read options from a TOML/INI file");
    app.require_subcommand(1);

    CommonOpts common;
    GdConfig gd;

    auto add_common = [&](CLI::App* cmd, bool with_budget = true) {
        cmd->add_option("--preset", common.preset_label, "Platform preset")
            ->check(CLI::IsMember(kPresetLabels));
        cmd->add_option("--seed", common.seed, "Random seed");
        cmd->add_option("--workers", common.workers, "Parallel evaluation workers")
            ->envname("SIMCAL_WORKERS")
            ->check(CLI::PositiveNumber);
        cmd->add_flag("--paper-scale", common.paper_scale,
                      "Use the full 48-job/20-file/427 MB workload instead of the desk-scale one");
        cmd->add_option("--block-size", common.block_size, "Simulation block size B, bytes");
        cmd->add_option("--buffer-size", common.buffer_size, "Simulation buffer size b, bytes");
        if (with_budget) {
            auto* evals = cmd->add_option("--max-evals", common.max_evals,
                                          "Budget: number of evaluations");
            cmd->add_option("--time-budget", common.time_budget_s,
                            "Budget: wall-clock seconds (default 21600)")
                ->excludes(evals);
        }
    };
    auto add_gd = [&](CLI::App* cmd) {
        cmd->add_option("--delta", gd.delta, "GD probe distance");
        cmd->add_option("--epsilon", gd.epsilon, "GD improvement cutoff, MRE points");
        cmd->add_option("--gd-shrink", gd.shrink, "Line-search shrink factor");
        cmd->add_option("--gd-initial-step", gd.initial_step, "Line-search initial step");
    };

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Run one scenario, print the trace");
    std::string scenario_path, out_path = "-";
    simulate->add_option("--scenario", scenario_path, "Scenario JSON ('-' for stdin)")
        ->required();
    simulate->add_option("--out", out_path, "Trace output path ('-' for stdout)");
    std::uint64_t sim_seed = 0;
    simulate->add_option("--seed", sim_seed, "Simulation seed");

    // ground-truth
    auto* gt = app.add_subcommand("ground-truth", "Synthesize a ground-truth file");
    std::string gt_out = "-";
    double noise = 0;
    std::uint64_t noise_seed = 0;
    std::vector<double> gt_icds;
    std::map<std::string, double> hidden;
    gt->add_option("--out", gt_out, "Ground-truth output path");
    gt->add_option("--noise", noise, "Lognormal noise sigma on node averages");
    gt->add_option("--noise-seed", noise_seed, "Noise stream seed");
    gt->add_option("--icds", gt_icds, "ICD values (default 0..1 step 0.1)");
    for (const char* p : {"core_speed", "disk_bw", "lan_bw", "wan_bw"})
        gt->add_option_function<double>(
            std::string("--hidden-") + p, [&hidden, p](double v) { hidden[p] = v; },
            "Hidden true value for " + std::string(p));
    add_common(gt, false);

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Search for parameters matching a truth file");
    std::string truth_path, algo = "random", log_path, result_path = "-";
    std::vector<double> subset;
    std::string external_command;
    double external_timeout = 60;
    cal->add_option("--truth", truth_path, "Ground-truth JSON")->required();
    cal->add_option("--algo", algo, "Algorithm")
        ->check(CLI::IsMember({"grid", "random", "gdfix", "gddyn"}));
    cal->add_option("--subset", subset, "Calibrate on this ICD subset only");
    cal->add_option("--log", log_path, "Sample log CSV output path");
    cal->add_option("--out", result_path, "Result JSON output path");
    cal->add_option("--external-command", external_command,
                    "Use an external simulator (scenario JSON on stdin, trace JSON on stdout)");
    cal->add_option("--external-timeout", external_timeout, "External simulator timeout, s");
    add_common(cal);
    add_gd(cal);

    // experiment
    auto* exp = app.add_subcommand("experiment", "Replicate an experiment structure");
    std::string exp_name, outdir = ".", exp_algo = "gdfix";
    double exp_noise = 0.05;
    std::uint64_t exp_noise_seed = 1;
    exp->add_option("--name", exp_name, "Experiment")
        ->check(CLI::IsMember({"table3", "table4", "table5", "fig2"}))
        ->required();
    exp->add_option("--outdir", outdir, "Output directory (must exist)");
    exp->add_option("--algo", exp_algo, "Algorithm for the subset study")
        ->check(CLI::IsMember({"grid", "random", "gdfix", "gddyn"}));
    exp->add_option("--noise", exp_noise, "Truth noise for the subset study");
    exp->add_option("--noise-seed", exp_noise_seed, "Noise stream seed");
    add_common(exp);
    add_gd(exp);

    // report
    auto* rep = app.add_subcommand("report", "Summarize a calibration result file");
    std::string report_path;
    rep->add_option("--result", report_path, "Calibration result JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (simulate->parsed())
            return cmd_simulate(scenario_path, out_path, sim_seed);
        if (gt->parsed())
            return cmd_ground_truth(common, gt_out, noise, noise_seed, gt_icds, hidden);
        if (cal->parsed())
            return cmd_calibrate(common, truth_path, algo, subset, gd, log_path, result_path,
                                 external_command, external_timeout);
        if (rep->parsed())
            return cmd_report(report_path);
        if (exp->parsed()) {
            ExperimentIO io{outdir};
            if (exp_name == "table3")
                return run_table3(common, io, gd);
            if (exp_name == "table4")
                return run_table4(common, io, gd, exp_algo, exp_noise, exp_noise_seed);
            if (exp_name == "table5")
                return run_table5(common, io, gd);
            return run_fig2(common, io, gd);
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
