#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "simcal/errors.hpp"
#include "simcal/sim_engine.hpp"

namespace simcal {

/// Mean job duration per node, derived from a trace. Nodes that ran no
/// jobs are absent.
struct NodeAverages {
    std::map<int, double> mean_duration; // node index -> seconds
    std::map<int, int> job_count;
};

/// Calibration target: one set of node averages per ICD value of a
/// single platform.
struct GroundTruthEntry {
    double icd = 0;
    NodeAverages averages;
};

struct GroundTruthSet {
    std::string platform_label;
    std::vector<GroundTruthEntry> entries;

    const GroundTruthEntry& entry(double icd) const;
};

struct MetricEntry {
    double icd = 0;
    int node = 0;
    double sim = 0;
    double truth = 0;
    double relative_error = 0; // |sim-truth|/truth
};

struct AccuracyReport {
    double mre = 0; // percent
    double mae = 0; // seconds
    std::vector<MetricEntry> per_metric;
};

NodeAverages node_averages(const Trace& trace, int node_count);

/// MRE/MAE over the (icd, node) metric pairs of the selected subset; when
/// subset is absent, over all truth entries. sim is keyed by icd.
AccuracyReport accuracy(const std::map<double, NodeAverages>& sim,
                        const GroundTruthSet& truth,
                        const std::optional<std::vector<double>>& subset = std::nullopt);

double mre(const std::map<double, NodeAverages>& sim, const GroundTruthSet& truth,
           const std::optional<std::vector<double>>& subset = std::nullopt);

double mean_abs_error(const std::map<double, NodeAverages>& sim, const GroundTruthSet& truth,
                      const std::optional<std::vector<double>>& subset = std::nullopt);

/// 100 * |makespan(sim) - truth_makespan| / truth_makespan.
double makespan_rel_diff(const Trace& sim_trace, double truth_makespan);

GroundTruthSet ground_truth_from_json(const nlohmann::json& j);
nlohmann::json ground_truth_to_json(const GroundTruthSet& g);
nlohmann::json accuracy_report_to_json(const AccuracyReport& r);
std::string accuracy_report_to_csv(const AccuracyReport& r);

} // namespace simcal
