#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "simcal/errors.hpp"

namespace simcal {

/// Hardware description of one compute site plus remote storage.
/// All rates are in base units (flop/s, byte/s); bit/s conversions happen
/// at file-parse time.
struct PlatformConfig {
    double core_speed = 0;       // flop/s per core
    double disk_bw = 0;          // byte/s, local HDD cache, one per node
    double lan_bw = 0;           // byte/s, one shared site link
    double wan_bw = 0;           // byte/s, link to remote storage
    double ram_bw = 1e9;         // byte/s, page-cache read bandwidth per node
    bool page_cache_enabled = false;
    std::vector<int> node_cores; // cores per compute node
};

struct WorkloadSpec {
    int n_jobs = 0;
    int files_per_job = 0;
    double file_size = 0;      // bytes
    double flops_per_byte = 0; // compute volume per input byte
};

struct Scenario {
    PlatformConfig platform;
    WorkloadSpec workload;
    double icd = 0;         // fraction of each job's files pre-cached locally
    double block_size = 0;  // B, bytes: compute pipelining granularity
    double buffer_size = 0; // b, bytes: transfer chunk granularity
    std::uint64_t event_cap = 50'000'000;
};

struct JobRecord {
    int job_id = 0;
    int node_index = 0;
    double start = 0; // seconds
    double end = 0;
};

struct Trace {
    std::vector<JobRecord> jobs;
    std::uint64_t event_count = 0;
    double makespan() const;
};

/// Progressive-filling max-min fair allocation. capacities[r] > 0 is the
/// rate capacity of resource r; flow_resources[f] lists the resources flow
/// f traverses (its rate counts against every one of them).
std::vector<double> max_min_share(const std::vector<double>& capacities,
                                  const std::vector<std::vector<int>>& flow_resources);

/// Per-file event budget ceil(s/B) + ceil(s/b).
std::uint64_t count_events(double file_size, double block_size, double buffer_size);

/// Runs the fluid discrete-event simulation. Deterministic: identical
/// scenarios produce byte-identical traces. The seed is accepted for
/// interface stability; the engine itself draws no random numbers.
Trace run_scenario(const Scenario& scenario, std::uint64_t seed = 0);

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Trace trace_from_json(const nlohmann::json& j);
nlohmann::json trace_to_json(const Trace& t);

} // namespace simcal
