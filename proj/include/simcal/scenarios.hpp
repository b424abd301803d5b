#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simcal/calibrate.hpp"
#include "simcal/metrics.hpp"
#include "simcal/param_space.hpp"
#include "simcal/sim_engine.hpp"

namespace simcal {

/// The four hardware configurations: Slow/Fast Cache x Slow/Fast Network.
/// SC/FC = page cache disabled/enabled, SN/FN = 1/10 Gb/s WAN interface.
inline const std::vector<std::string> kPresetLabels = {"SCFN", "FCFN", "SCSN", "FCSN"};

/// Platform template for a preset: fixed fields set (page cache flag,
/// nodes [12,12,24], LAN 10 Gb/s, RAM 1 GB/s), calibratable rates left as
/// NaN placeholders to be substituted from a Point.
PlatformConfig preset(const std::string& label);

/// WAN NIC rating of the preset in byte/s (10 or 1 Gb/s).
double preset_wan_interface(const std::string& label);

/// The four calibration parameters, each ranged 2^20 - 2^36.
ParameterSpace default_parameter_space(bool include_ram_bw = false);

/// Manually calibrated baseline values for a preset (core 1970 Mflop/s,
/// disk 17 MB/s, LAN 10 Gb/s, WAN 1.15 Gb/s for SN, 11.5 Gb/s for FN).
Point baseline_fixture(const std::string& label);

struct TruthConfig {
    std::string preset_label = "SCSN";
    Point hidden_point;           // the "true" parameter values
    WorkloadSpec workload;
    std::vector<double> icd_list; // defaults to 0..1 step 0.1
    double truth_block_size = 0;
    double truth_buffer_size = 0;
    double noise_stddev = 0; // lognormal sigma applied to node averages
    std::uint64_t noise_seed = 0;
    std::vector<int> nodes_override; // empty -> preset nodes [12,12,24]
};

/// Reduced-size fixtures for quick experiments: 6 jobs, 4 files of 16 MiB
/// on three 2-core nodes, 4 MiB block/buffer granularity.
WorkloadSpec desk_workload();
WorkloadSpec paper_workload(); // 48 jobs x 20 files of ~427 MB
TruthConfig desk_truth_config(const std::string& label);

/// The 5-element ICD set used by the subset study.
std::vector<double> subset_study_icds();

/// 11 ICD values, 0 to 1 in 0.1 increments.
std::vector<double> default_icd_list();

/// Simulates the hidden point per ICD value and perturbs each node
/// average by exp(N(0, noise_stddev)). Deterministic for a fixed config.
GroundTruthSet generate_ground_truth(const TruthConfig& config);

/// Scenario template matching a truth config (granularity overridable for
/// mismatch studies); calibratable fields are placeholders.
Scenario scenario_template(const TruthConfig& config, double block_size, double buffer_size);

/// Wraps an external simulator process into an objective. The command
/// receives a scenario JSON on stdin and must print a trace JSON on
/// stdout, exiting 0 on success.
struct ExternalSimulator {
    std::string command; // run via /bin/sh -c
    double timeout_seconds = 60;
};

/// Runs one scenario through the external simulator.
Trace run_external(const ExternalSimulator& sim, const Scenario& scenario);

Objective external_objective(ExternalSimulator sim, GroundTruthSet truth, Scenario tmpl,
                             std::optional<std::vector<double>> subset = std::nullopt);

} // namespace simcal
