#include "simcal/scenarios.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace simcal {

namespace {

constexpr double kGbit = 1.25e8;          // byte/s per Gb/s
constexpr double kLanDefault = 10 * kGbit; // 10 Gb/s site link
constexpr double kRamDefault = 1e9;        // 1 GB/s page cache

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_label(const std::string& label) {
    for (const auto& l : kPresetLabels)
        if (l == label)
            return;
    std::string valid;
    for (const auto& l : kPresetLabels)
        valid += (valid.empty() ? "" : ", ") + l;
    throw ConfigurationError("unknown platform preset '" + label + "' (valid: " + valid + ")");
}

} // namespace

PlatformConfig preset(const std::string& label) {
    check_label(label);
    PlatformConfig p;
    p.core_speed = kNan; // calibratable
    p.disk_bw = kNan;    // calibratable
    p.wan_bw = kNan;     // calibratable
    p.lan_bw = kLanDefault;
    p.ram_bw = kRamDefault;
    p.page_cache_enabled = label[0] == 'F'; // FC*: page cache on
    p.node_cores = {12, 12, 24};
    return p;
}

double preset_wan_interface(const std::string& label) {
    check_label(label);
    return label[2] == 'F' ? 10 * kGbit : 1 * kGbit; // *FN vs *SN
}

ParameterSpace default_parameter_space(bool include_ram_bw) {
    const double lo = std::exp2(20.0);
    const double hi = std::exp2(36.0);
    std::vector<ParameterSpec> specs = {
        {"core_speed", "flop/s", lo, hi},
        {"disk_bw", "byte/s", lo, hi},
        {"lan_bw", "byte/s", lo, hi},
        {"wan_bw", "byte/s", lo, hi},
    };
    if (include_ram_bw)
        specs.push_back({"ram_bw", "byte/s", lo, hi});
    return ParameterSpace(std::move(specs));
}

Point baseline_fixture(const std::string& label) {
    check_label(label);
    Point p;
    p.values["core_speed"] = 1.97e9;       // 1,970 Mflop/s
    p.values["disk_bw"] = 17e6;            // 17 MB/s
    p.values["lan_bw"] = kLanDefault;      // 10 Gb/s
    p.values["wan_bw"] = label[2] == 'F' ? 11.5 * kGbit : 1.15 * kGbit;
    return p;
}

std::vector<double> default_icd_list() {
    std::vector<double> icds;
    for (int i = 0; i <= 10; ++i)
        icds.push_back(i / 10.0);
    return icds;
}

std::vector<double> subset_study_icds() { return {0.0, 0.3, 0.5, 0.7, 1.0}; }

WorkloadSpec desk_workload() {
    WorkloadSpec w;
    w.n_jobs = 6;
    w.files_per_job = 4;
    w.file_size = 16.0 * 1024 * 1024;
    w.flops_per_byte = 10;
    return w;
}

WorkloadSpec paper_workload() {
    WorkloadSpec w;
    w.n_jobs = 48;
    w.files_per_job = 20;
    w.file_size = 427e6;
    w.flops_per_byte = 10;
    return w;
}

TruthConfig desk_truth_config(const std::string& label) {
    TruthConfig cfg;
    cfg.preset_label = label;
    cfg.hidden_point = baseline_fixture(label);
    cfg.workload = desk_workload();
    cfg.icd_list = default_icd_list();
    cfg.truth_block_size = 4.0 * 1024 * 1024;
    cfg.truth_buffer_size = 4.0 * 1024 * 1024;
    cfg.nodes_override = {2, 2, 2};
    return cfg;
}

Scenario scenario_template(const TruthConfig& config, double block_size, double buffer_size) {
    Scenario sc;
    sc.platform = preset(config.preset_label);
    if (!config.nodes_override.empty())
        sc.platform.node_cores = config.nodes_override;
    sc.workload = config.workload;
    sc.icd = 0;
    sc.block_size = block_size;
    sc.buffer_size = buffer_size;
    return sc;
}

GroundTruthSet generate_ground_truth(const TruthConfig& config) {
    Scenario tmpl =
        scenario_template(config, config.truth_block_size, config.truth_buffer_size);
    const auto icds = config.icd_list.empty() ? default_icd_list() : config.icd_list;
    const int node_count = static_cast<int>(tmpl.platform.node_cores.size());

    GroundTruthSet truth;
    truth.platform_label = config.preset_label;

    std::mt19937_64 rng(config.noise_seed);
    std::normal_distribution<double> gauss(0.0, config.noise_stddev > 0 ? config.noise_stddev : 1.0);

    for (double icd : icds) {
        Scenario sc = substitute_parameters(tmpl, config.hidden_point);
        sc.icd = icd;
        Trace trace = run_scenario(sc);
        GroundTruthEntry entry;
        entry.icd = icd;
        entry.averages = node_averages(trace, node_count);
        if (config.noise_stddev > 0)
            for (auto& [node, mean] : entry.averages.mean_duration)
                mean *= std::exp(gauss(rng));
        truth.entries.push_back(std::move(entry));
    }
    return truth;
}

// --------------------------------------------------- external simulator

Trace run_external(const ExternalSimulator& sim, const Scenario& scenario) {
    const std::string input = scenario_to_json(scenario).dump();

    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
        throw std::runtime_error("spawn: pipe creation failed");

    pid_t pid = fork();
    if (pid < 0)
        throw std::runtime_error("spawn: fork failed");
    if (pid == 0) {
        setpgid(0, 0); // own process group, so a timeout kill reaps helpers too
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", sim.command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid); // mirror the child's call; whichever runs first wins
    close(in_pipe[0]);
    close(out_pipe[1]);

    // Scenario JSON is small; it fits the pipe buffer even if the child
    // does not read before we finish writing.
    ssize_t written = write(in_pipe[1], input.data(), input.size());
    close(in_pipe[1]);
    if (written != static_cast<ssize_t>(input.size())) {
        kill(-pid, SIGKILL);
        waitpid(pid, nullptr, 0);
        close(out_pipe[0]);
        throw std::runtime_error("spawn: failed to write scenario to child stdin");
    }

    std::string output;
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::duration<double>(sim.timeout_seconds);
    char buf[4096];
    bool timed_out = false;
    while (true) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                              deadline - std::chrono::steady_clock::now())
                              .count();
        if (left <= 0) {
            timed_out = true;
            break;
        }
        pollfd pfd{out_pipe[0], POLLIN, 0};
        int rc = poll(&pfd, 1, static_cast<int>(left));
        if (rc == 0) {
            timed_out = true;
            break;
        }
        ssize_t n = read(out_pipe[0], buf, sizeof(buf));
        if (n < 0) {
            timed_out = true;
            break;
        }
        if (n == 0)
            break; // child closed stdout
        output.append(buf, static_cast<std::size_t>(n));
    }
    close(out_pipe[0]);

    if (timed_out) {
        kill(-pid, SIGKILL);
        waitpid(pid, nullptr, 0);
        throw std::runtime_error("timeout: external simulator exceeded " +
                                 std::to_string(sim.timeout_seconds) + " s");
    }

    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw std::runtime_error("exit: external simulator failed with status " +
                                 std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));

    try {
        return trace_from_json(nlohmann::json::parse(output));
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("parse: bad trace from external simulator: ") +
                                 e.what());
    }
}

Objective external_objective(ExternalSimulator sim, GroundTruthSet truth, Scenario tmpl,
                             std::optional<std::vector<double>> subset) {
    return [sim = std::move(sim), truth = std::move(truth), tmpl = std::move(tmpl),
            subset = std::move(subset)](const Point& point) {
        const int node_count = static_cast<int>(tmpl.platform.node_cores.size());
        std::map<double, NodeAverages> results;
        for (const auto& entry : truth.entries) {
            if (subset) {
                bool selected = false;
                for (double icd : *subset)
                    if (std::abs(icd - entry.icd) < 1e-9) {
                        selected = true;
                        break;
                    }
                if (!selected)
                    continue;
            }
            Scenario sc = substitute_parameters(tmpl, point);
            sc.icd = entry.icd;
            Trace trace = run_external(sim, sc);
            results[entry.icd] = node_averages(trace, node_count);
        }
        AccuracyReport report = accuracy(results, truth, subset);
        EvalOutcome out;
        out.mre = report.mre;
        out.mae = report.mae;
        out.ok = true;
        return out;
    };
}

} // namespace simcal
