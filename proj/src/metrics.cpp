#include "simcal/metrics.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace simcal {

namespace {
bool icd_equal(double a, double b) { return std::abs(a - b) < 1e-9; }
} // namespace

const GroundTruthEntry& GroundTruthSet::entry(double icd) const {
    for (const auto& e : entries)
        if (icd_equal(e.icd, icd))
            return e;
    throw MissingScenarioError("no ground-truth entry for icd " + std::to_string(icd));
}

NodeAverages node_averages(const Trace& trace, int node_count) {
    if (trace.jobs.empty())
        throw EmptyTraceError("cannot compute node averages of an empty trace");
    NodeAverages na;
    std::map<int, double> total;
    for (const auto& j : trace.jobs) {
        if (j.node_index < 0 || j.node_index >= node_count)
            throw ConfigurationError("trace job on node " + std::to_string(j.node_index) +
                                     " but node_count is " + std::to_string(node_count));
        total[j.node_index] += j.end - j.start;
        ++na.job_count[j.node_index];
    }
    for (const auto& [node, sum] : total)
        na.mean_duration[node] = sum / na.job_count[node];
    return na;
}

AccuracyReport accuracy(const std::map<double, NodeAverages>& sim, const GroundTruthSet& truth,
                        const std::optional<std::vector<double>>& subset) {
    AccuracyReport report;
    double sum_rel = 0, sum_abs = 0;
    for (const auto& entry : truth.entries) {
        if (subset) {
            bool selected = false;
            for (double icd : *subset)
                if (icd_equal(icd, entry.icd)) {
                    selected = true;
                    break;
                }
            if (!selected)
                continue;
        }
        const NodeAverages* sim_na = nullptr;
        for (const auto& [icd, na] : sim)
            if (icd_equal(icd, entry.icd)) {
                sim_na = &na;
                break;
            }
        if (!sim_na)
            throw MissingScenarioError("simulation results missing for icd " +
                                       std::to_string(entry.icd));
        for (const auto& [node, truth_mean] : entry.averages.mean_duration) {
            if (!(truth_mean > 0))
                throw ConfigurationError("ground-truth average must be positive (node " +
                                         std::to_string(node) + ")");
            auto it = sim_na->mean_duration.find(node);
            if (it == sim_na->mean_duration.end())
                throw MissingScenarioError("simulation ran no jobs on node " +
                                           std::to_string(node));
            MetricEntry m;
            m.icd = entry.icd;
            m.node = node;
            m.sim = it->second;
            m.truth = truth_mean;
            m.relative_error = std::abs(m.sim - m.truth) / m.truth;
            sum_rel += m.relative_error;
            sum_abs += std::abs(m.sim - m.truth);
            report.per_metric.push_back(m);
        }
    }
    if (report.per_metric.empty())
        throw MissingScenarioError("no metrics selected");
    report.mre = 100.0 * sum_rel / report.per_metric.size();
    report.mae = sum_abs / report.per_metric.size();
    return report;
}

double mre(const std::map<double, NodeAverages>& sim, const GroundTruthSet& truth,
           const std::optional<std::vector<double>>& subset) {
    return accuracy(sim, truth, subset).mre;
}

double mean_abs_error(const std::map<double, NodeAverages>& sim, const GroundTruthSet& truth,
                      const std::optional<std::vector<double>>& subset) {
    return accuracy(sim, truth, subset).mae;
}

double makespan_rel_diff(const Trace& sim_trace, double truth_makespan) {
    if (sim_trace.jobs.empty())
        throw EmptyTraceError("cannot compute makespan of an empty trace");
    if (!(truth_makespan > 0))
        throw ConfigurationError("truth makespan must be positive");
    return 100.0 * std::abs(sim_trace.makespan() - truth_makespan) / truth_makespan;
}

GroundTruthSet ground_truth_from_json(const nlohmann::json& j) {
    try {
        GroundTruthSet g;
        g.platform_label = j.at("platform").get<std::string>();
        for (const auto& e : j.at("entries")) {
            GroundTruthEntry entry;
            entry.icd = e.at("icd").get<double>();
            for (const auto& [key, value] : e.at("node_averages").items())
                entry.averages.mean_duration[std::stoi(key)] = value.get<double>();
            g.entries.push_back(std::move(entry));
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid ground-truth JSON: ") + e.what());
    }
}

nlohmann::json ground_truth_to_json(const GroundTruthSet& g) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : g.entries) {
        nlohmann::json na = nlohmann::json::object();
        for (const auto& [node, mean] : e.averages.mean_duration)
            na[std::to_string(node)] = mean;
        entries.push_back({{"icd", e.icd}, {"node_averages", na}});
    }
    return {{"platform", g.platform_label}, {"entries", entries}};
}

nlohmann::json accuracy_report_to_json(const AccuracyReport& r) {
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : r.per_metric)
        metrics.push_back({{"icd", m.icd},
                           {"node", m.node},
                           {"sim", m.sim},
                           {"truth", m.truth},
                           {"relative_error", m.relative_error}});
    return {{"mre_percent", r.mre}, {"mae_s", r.mae}, {"per_metric", metrics}};
}

std::string accuracy_report_to_csv(const AccuracyReport& r) {
    std::ostringstream out;
    out << "icd,node,sim_s,truth_s,rel_err\n";
    out.precision(17);
    for (const auto& m : r.per_metric)
        out << m.icd << ',' << m.node << ',' << m.sim << ',' << m.truth << ','
            << m.relative_error << '\n';
    return out.str();
}

} // namespace simcal
