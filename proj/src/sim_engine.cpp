#include "simcal/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>

#include <nlohmann/json.hpp>

namespace simcal {

double Trace::makespan() const {
    if (jobs.empty())
        return 0.0;
    double first = std::numeric_limits<double>::infinity();
    double last = 0.0;
    for (const auto& j : jobs) {
        first = std::min(first, j.start);
        last = std::max(last, j.end);
    }
    return last - first;
}

std::vector<double> max_min_share(const std::vector<double>& capacities,
                                  const std::vector<std::vector<int>>& flow_resources) {
    const int n_res = static_cast<int>(capacities.size());
    const int n_flows = static_cast<int>(flow_resources.size());
    for (double c : capacities)
        if (!(c > 0))
            throw ConfigurationError("resource capacity must be positive");
    for (const auto& fr : flow_resources) {
        if (fr.empty())
            throw ConfigurationError("flow must traverse at least one resource");
        for (int r : fr)
            if (r < 0 || r >= n_res)
                throw ConfigurationError("flow references unknown resource " + std::to_string(r));
    }

    std::vector<double> rates(n_flows, 0.0);
    std::vector<char> frozen(n_flows, 0);
    std::vector<double> frozen_used(n_res, 0.0);
    std::vector<int> unfrozen_count(n_res, 0);
    for (const auto& fr : flow_resources)
        for (int r : fr)
            ++unfrozen_count[r];

    int remaining = n_flows;
    while (remaining > 0) {
        // Raise all unfrozen flows to the common level at which the
        // tightest resource saturates.
        double level = std::numeric_limits<double>::infinity();
        for (int r = 0; r < n_res; ++r) {
            if (unfrozen_count[r] == 0)
                continue;
            level = std::min(level, (capacities[r] - frozen_used[r]) / unfrozen_count[r]);
        }
        level = std::max(level, 0.0);

        // Freeze every unfrozen flow that touches a saturated resource.
        std::vector<char> saturated(n_res, 0);
        for (int r = 0; r < n_res; ++r) {
            if (unfrozen_count[r] == 0)
                continue;
            double lr = (capacities[r] - frozen_used[r]) / unfrozen_count[r];
            if (lr <= level * (1.0 + 1e-12) + 1e-300)
                saturated[r] = 1;
        }
        bool froze_any = false;
        for (int f = 0; f < n_flows; ++f) {
            if (frozen[f])
                continue;
            bool hit = false;
            for (int r : flow_resources[f])
                if (saturated[r]) {
                    hit = true;
                    break;
                }
            if (!hit)
                continue;
            frozen[f] = 1;
            rates[f] = level;
            froze_any = true;
            --remaining;
            for (int r : flow_resources[f]) {
                frozen_used[r] += level;
                --unfrozen_count[r];
            }
        }
        if (!froze_any) // numerically stuck; freeze everything at the level
        {
            for (int f = 0; f < n_flows; ++f)
                if (!frozen[f]) {
                    frozen[f] = 1;
                    rates[f] = level;
                    --remaining;
                }
        }
    }
    return rates;
}

std::uint64_t count_events(double file_size, double block_size, double buffer_size) {
    if (!(block_size >= 1) || !(buffer_size >= 1))
        throw ConfigurationError("block and buffer sizes must be >= 1 byte");
    auto div_up = [](double s, double g) {
        return static_cast<std::uint64_t>(std::ceil(s / g));
    };
    return div_up(file_size, block_size) + div_up(file_size, buffer_size);
}

namespace {

using i64 = std::int64_t;

enum class FlowKind { Source, StageWrite, StageRead, MemRead, Compute };

struct FlowMeta {
    int job = -1;
    FlowKind kind = FlowKind::Source;
    i64 bytes = 0; // chunk or block payload
};

struct Flow {
    std::uint64_t id = 0;
    double remaining = 0;
    double total = 0;
    std::vector<int> resources;
    double rate = 0;
    FlowMeta meta;
};

struct FileState {
    bool cached = false;
    i64 size = 0;
    // source stage: HDD read (cached) or WAN+LAN transfer (remote)
    i64 src_next = 0;
    i64 src_done = 0;
    bool src_active = false;
    // HDD staging (remote, page cache off): write then read back per chunk
    i64 stage_next = 0;
    i64 stage_done = 0;
    bool stage_active = false;
    // compute stage: blocks, optionally preceded by a memory read
    i64 comp_next = 0;
    i64 comp_done = 0;
    bool comp_active = false;
};

struct JobState {
    int node = -1;
    int core_resource = -1;
    int file_index = 0;
    int n_files = 0;
    int n_cached = 0;
    bool done = false;
    double end_time = 0;
    FileState file;
};

class Engine {
  public:
    explicit Engine(const Scenario& sc) : sc_(sc) { validate(); }

    Trace run() {
        Trace trace;
        const int n_jobs = sc_.workload.n_jobs;
        if (n_jobs == 0)
            return trace;

        setup_resources();
        setup_jobs();

        for (int j = 0; j < n_jobs; ++j)
            start_next_file(j);
        drain_instants();

        while (!active_.empty()) {
            reshare();
            double dt = std::numeric_limits<double>::infinity();
            for (const auto& f : active_)
                dt = std::min(dt, f.remaining / f.rate);
            now_ += dt;

            std::vector<FlowMeta> completed;
            for (auto& f : active_)
                f.remaining -= f.rate * dt;
            // Collect in id order so same-time ties resolve deterministically.
            std::sort(active_.begin(), active_.end(),
                      [](const Flow& a, const Flow& b) { return a.id < b.id; });
            std::vector<Flow> still;
            still.reserve(active_.size());
            for (auto& f : active_) {
                if (f.remaining <= std::max(1e-9, 1e-12 * f.total))
                    completed.push_back(f.meta);
                else
                    still.push_back(std::move(f));
            }
            active_ = std::move(still);

            for (const auto& m : completed) {
                bump_event();
                on_complete(m);
                drain_instants();
            }
        }

        for (int j = 0; j < n_jobs; ++j)
            trace.jobs.push_back({j, jobs_[j].node, 0.0, jobs_[j].end_time});
        trace.event_count = events_;
        return trace;
    }

  private:
    void validate() const {
        const auto& p = sc_.platform;
        if (!(p.core_speed > 0) || !(p.disk_bw > 0) || !(p.lan_bw > 0) || !(p.wan_bw > 0) ||
            !(p.ram_bw > 0))
            throw ConfigurationError("all platform rates must be positive");
        if (p.node_cores.empty())
            throw ConfigurationError("platform needs at least one node");
        for (int c : p.node_cores)
            if (c < 1)
                throw ConfigurationError("every node needs at least one core");
        if (sc_.icd < 0 || sc_.icd > 1)
            throw ConfigurationError("icd must be in [0,1]");
        if (sc_.workload.n_jobs < 0 || sc_.workload.files_per_job < 0)
            throw ConfigurationError("workload counts must be non-negative");
        if (sc_.workload.files_per_job > 0 && !(sc_.workload.file_size > 0))
            throw ConfigurationError("file_size must be positive when files are read");
        if (sc_.workload.files_per_job > 0 &&
            (!(sc_.buffer_size >= 1) || !(sc_.block_size >= sc_.buffer_size)))
            throw ConfigurationError("need block_size >= buffer_size >= 1");
    }

    void setup_resources() {
        const auto& p = sc_.platform;
        const int n_nodes = static_cast<int>(p.node_cores.size());
        wan_ = add_resource(p.wan_bw);
        lan_ = add_resource(p.lan_bw);
        disk_.resize(n_nodes);
        ram_.resize(n_nodes);
        for (int n = 0; n < n_nodes; ++n) {
            disk_[n] = add_resource(p.disk_bw);
            ram_[n] = add_resource(p.ram_bw);
        }
        core_.clear();
        core_node_.clear();
        for (int n = 0; n < n_nodes; ++n)
            for (int c = 0; c < p.node_cores[n]; ++c) {
                core_.push_back(add_resource(p.core_speed));
                core_node_.push_back(n);
            }
    }

    void setup_jobs() {
        const int total_cores = static_cast<int>(core_.size());
        jobs_.resize(sc_.workload.n_jobs);
        for (int j = 0; j < sc_.workload.n_jobs; ++j) {
            const int core = j % total_cores; // job i -> i-th core, node-major
            jobs_[j].node = core_node_[core];
            jobs_[j].core_resource = core_[core];
            jobs_[j].n_files = sc_.workload.files_per_job;
            jobs_[j].n_cached =
                static_cast<int>(std::llround(sc_.icd * sc_.workload.files_per_job));
        }
    }

    int add_resource(double cap) {
        capacities_.push_back(cap);
        return static_cast<int>(capacities_.size()) - 1;
    }

    bool remote_staged(const JobState& job) const {
        return !job.file.cached && !sc_.platform.page_cache_enabled;
    }
    bool remote_paged(const JobState& job) const {
        return !job.file.cached && sc_.platform.page_cache_enabled;
    }

    void start_next_file(int j) {
        JobState& job = jobs_[j];
        if (job.file_index >= job.n_files) {
            job.done = true;
            job.end_time = now_;
            bump_event(); // job completion
            return;
        }
        job.file = FileState{};
        job.file.cached = job.file_index < job.n_cached;
        job.file.size = static_cast<i64>(std::llround(sc_.workload.file_size));
        ++job.file_index;
        start_source(j);
        start_compute(j);
    }

    void start_source(int j) {
        JobState& job = jobs_[j];
        FileState& fs = job.file;
        if (fs.src_active || fs.src_next >= fs.size)
            return;
        const i64 chunk =
            std::min<i64>(static_cast<i64>(sc_.buffer_size), fs.size - fs.src_next);
        fs.src_active = true;
        std::vector<int> res = fs.cached ? std::vector<int>{disk_[job.node]}
                                         : std::vector<int>{wan_, lan_};
        add_flow(static_cast<double>(chunk), std::move(res),
                 {j, FlowKind::Source, chunk});
    }

    void start_staging(int j) {
        JobState& job = jobs_[j];
        FileState& fs = job.file;
        if (!remote_staged(job) || fs.stage_active || fs.stage_next >= fs.size)
            return;
        const i64 chunk =
            std::min<i64>(static_cast<i64>(sc_.buffer_size), fs.size - fs.stage_next);
        if (fs.src_done < fs.stage_next + chunk)
            return; // chunk not fully transferred yet
        fs.stage_active = true;
        add_flow(static_cast<double>(chunk), {disk_[job.node]},
                 {j, FlowKind::StageWrite, chunk});
    }

    i64 compute_avail(const JobState& job) const {
        return remote_staged(job) ? job.file.stage_done : job.file.src_done;
    }

    void start_compute(int j) {
        JobState& job = jobs_[j];
        FileState& fs = job.file;
        if (fs.comp_active)
            return;
        if (fs.comp_next >= fs.size) {
            if (fs.comp_done >= fs.size)
                start_next_file(j);
            return;
        }
        const i64 block =
            std::min<i64>(static_cast<i64>(sc_.block_size), fs.size - fs.comp_next);
        if (compute_avail(job) < fs.comp_next + block)
            return;
        fs.comp_active = true;
        if (remote_paged(job)) {
            // block is read out of the page cache before computing
            add_flow(static_cast<double>(block), {ram_[job.node]},
                     {j, FlowKind::MemRead, block});
        } else {
            add_flow(static_cast<double>(block) * sc_.workload.flops_per_byte,
                     {job.core_resource}, {j, FlowKind::Compute, block});
        }
    }

    void on_complete(const FlowMeta& m) {
        JobState& job = jobs_[m.job];
        FileState& fs = job.file;
        switch (m.kind) {
        case FlowKind::Source:
            fs.src_active = false;
            fs.src_next += m.bytes;
            fs.src_done += m.bytes;
            start_source(m.job);
            if (remote_staged(job))
                start_staging(m.job);
            else
                start_compute(m.job);
            break;
        case FlowKind::StageWrite:
            // read the chunk back from the HDD before it becomes computable
            add_flow(static_cast<double>(m.bytes), {disk_[job.node]},
                     {m.job, FlowKind::StageRead, m.bytes});
            break;
        case FlowKind::StageRead:
            fs.stage_active = false;
            fs.stage_next += m.bytes;
            fs.stage_done += m.bytes;
            start_staging(m.job);
            start_compute(m.job);
            break;
        case FlowKind::MemRead:
            add_flow(static_cast<double>(m.bytes) * sc_.workload.flops_per_byte,
                     {job.core_resource}, {m.job, FlowKind::Compute, m.bytes});
            break;
        case FlowKind::Compute:
            fs.comp_active = false;
            fs.comp_next += m.bytes;
            fs.comp_done += m.bytes;
            start_compute(m.job);
            break;
        }
    }

    void add_flow(double work, std::vector<int> resources, FlowMeta meta) {
        if (work <= 0) {
            instant_.push_back(meta);
            return;
        }
        Flow f;
        f.id = next_flow_id_++;
        f.remaining = work;
        f.total = work;
        f.resources = std::move(resources);
        f.meta = meta;
        active_.push_back(std::move(f));
    }

    void drain_instants() {
        while (!instant_.empty()) {
            FlowMeta m = instant_.front();
            instant_.pop_front();
            bump_event();
            on_complete(m);
        }
    }

    void reshare() {
        std::vector<std::vector<int>> frs;
        frs.reserve(active_.size());
        for (const auto& f : active_)
            frs.push_back(f.resources);
        auto rates = max_min_share(capacities_, frs);
        for (std::size_t i = 0; i < active_.size(); ++i)
            active_[i].rate = rates[i];
#ifndef NDEBUG
        assert_max_min(rates, frs);
#endif
    }

#ifndef NDEBUG
    void assert_max_min(const std::vector<double>& rates,
                        const std::vector<std::vector<int>>& frs) const {
        std::vector<double> used(capacities_.size(), 0.0);
        for (std::size_t i = 0; i < frs.size(); ++i)
            for (int r : frs[i])
                used[r] += rates[i];
        for (std::size_t r = 0; r < capacities_.size(); ++r)
            if (used[r] > capacities_[r] * (1.0 + 1e-9))
                throw ConfigurationError("max-min overallocation on resource " +
                                         std::to_string(r));
    }
#endif

    void bump_event() {
        if (++events_ > sc_.event_cap)
            throw GranularityError(
                "event count exceeded cap (" + std::to_string(sc_.event_cap) +
                "); increase block_size/buffer_size to coarsen the simulation");
    }

    const Scenario& sc_;
    std::vector<double> capacities_;
    int wan_ = -1, lan_ = -1;
    std::vector<int> disk_, ram_, core_, core_node_;
    std::vector<JobState> jobs_;
    std::vector<Flow> active_;
    std::deque<FlowMeta> instant_;
    std::uint64_t next_flow_id_ = 0;
    std::uint64_t events_ = 0;
    double now_ = 0.0;
};

} // namespace

Trace run_scenario(const Scenario& scenario, std::uint64_t /*seed*/) {
    Engine engine(scenario);
    return engine.run();
}

Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        Scenario s;
        const auto& p = j.at("platform");
        s.platform.core_speed = p.at("core_speed").get<double>();
        s.platform.disk_bw = p.at("disk_bw").get<double>();
        s.platform.lan_bw = p.at("lan_bw").get<double>();
        s.platform.wan_bw = p.at("wan_bw").get<double>();
        s.platform.ram_bw = p.value("ram_bw", 1e9);
        s.platform.page_cache_enabled = p.at("page_cache").get<bool>();
        s.platform.node_cores = p.at("nodes").get<std::vector<int>>();
        const auto& w = j.at("workload");
        s.workload.n_jobs = w.at("n_jobs").get<int>();
        s.workload.files_per_job = w.at("files_per_job").get<int>();
        s.workload.file_size = w.at("file_size").get<double>();
        s.workload.flops_per_byte = w.at("flops_per_byte").get<double>();
        s.icd = j.at("icd").get<double>();
        s.block_size = j.at("block_size").get<double>();
        s.buffer_size = j.at("buffer_size").get<double>();
        s.event_cap = j.value("event_cap", s.event_cap);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid scenario JSON: ") + e.what());
    }
}

nlohmann::json scenario_to_json(const Scenario& s) {
    return {
        {"platform",
         {{"core_speed", s.platform.core_speed},
          {"disk_bw", s.platform.disk_bw},
          {"lan_bw", s.platform.lan_bw},
          {"wan_bw", s.platform.wan_bw},
          {"ram_bw", s.platform.ram_bw},
          {"page_cache", s.platform.page_cache_enabled},
          {"nodes", s.platform.node_cores}}},
        {"workload",
         {{"n_jobs", s.workload.n_jobs},
          {"files_per_job", s.workload.files_per_job},
          {"file_size", s.workload.file_size},
          {"flops_per_byte", s.workload.flops_per_byte}}},
        {"icd", s.icd},
        {"block_size", s.block_size},
        {"buffer_size", s.buffer_size},
    };
}

Trace trace_from_json(const nlohmann::json& j) {
    try {
        Trace t;
        for (const auto& e : j.at("jobs")) {
            JobRecord r;
            r.job_id = e.at("id").get<int>();
            r.node_index = e.at("node").get<int>();
            r.start = e.at("start").get<double>();
            r.end = e.at("end").get<double>();
            t.jobs.push_back(r);
        }
        t.event_count = j.at("event_count").get<std::uint64_t>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid trace JSON: ") + e.what());
    }
}

nlohmann::json trace_to_json(const Trace& t) {
    nlohmann::json jobs = nlohmann::json::array();
    for (const auto& j : t.jobs)
        jobs.push_back({{"id", j.job_id}, {"node", j.node_index}, {"start", j.start}, {"end", j.end}});
    return {{"jobs", jobs}, {"event_count", t.event_count}};
}

} // namespace simcal
