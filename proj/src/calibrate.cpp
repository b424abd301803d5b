#include "simcal/calibrate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace simcal {

Budget Budget::wall_clock(double seconds) {
    if (!(seconds > 0))
        throw ConfigurationError("wall-clock budget must be positive");
    Budget b;
    b.mode = Mode::WallClock;
    b.seconds = seconds;
    return b;
}

Budget Budget::max_evaluations(std::uint64_t n) {
    if (n == 0)
        throw ConfigurationError("evaluation budget must be positive");
    Budget b;
    b.mode = Mode::MaxEvaluations;
    b.evaluations = n;
    return b;
}

// ---------------------------------------------------------------- grid

GridSearch::GridSearch(const ParameterSpace& space)
    : p_(space.dimension()), idx_(space.dimension(), 0) {}

bool GridSearch::increment() {
    const std::uint64_t base = level_ == 0 ? 2 : (std::uint64_t{1} << level_) + 1;
    for (std::size_t i = p_; i-- > 0;) {
        if (++idx_[i] < base)
            return true;
        idx_[i] = 0;
    }
    return false;
}

Candidate GridSearch::ask() {
    while (true) {
        if (first_)
            first_ = false;
        else if (!increment()) {
            ++level_;
            std::fill(idx_.begin(), idx_.end(), 0);
        }
        if (level_ > 0) {
            // all-even index combinations already appeared at coarser levels
            bool any_odd = false;
            for (auto k : idx_)
                if (k & 1) {
                    any_odd = true;
                    break;
                }
            if (!any_odd)
                continue;
        }
        Candidate c;
        c.ticket = next_ticket_++;
        c.norm.coords.reserve(p_);
        const double denom = level_ == 0 ? 1.0 : static_cast<double>(std::uint64_t{1} << level_);
        for (auto k : idx_)
            c.norm.coords.push_back(static_cast<double>(k) / denom);
        return c;
    }
}

// -------------------------------------------------------------- random

RandomSearch::RandomSearch(const ParameterSpace& space, std::uint64_t seed)
    : space_(space), rng_(seed) {}

Candidate RandomSearch::ask() {
    Candidate c;
    c.norm = sample_uniform(space_, rng_);
    c.ticket = next_ticket_++;
    return c;
}

void RandomSearch::tell(const Sample& sample) {
    if (sample.ok)
        best_mre_ = std::min(best_mre_, sample.mre);
}

// ------------------------------------------------------------ gradient

namespace {
double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }
} // namespace

struct GradientSearch::Path {
    enum class Phase { Start, Probes, Line, Done };
    std::uint64_t id = 0;
    std::mt19937_64 rng;
    Phase phase = Phase::Start;
    bool ask_outstanding = false;

    std::vector<double> x;
    double fx = 0;
    double delta = 0;

    std::size_t probes_emitted = 0;
    std::size_t probes_received = 0;
    std::vector<double> probe_f;
    std::vector<double> probe_h;

    std::vector<double> grad;
    double grad_norm2 = 0;
    double step = 0;
    std::vector<double> trial;
};

GradientSearch::GradientSearch(const ParameterSpace& space, std::uint64_t seed, GdConfig config)
    : space_(space), config_(std::move(config)), base_seed_(seed) {
    if (!(config_.delta > 0) || !(config_.epsilon > 0))
        throw ConfigurationError("gd: delta and epsilon must be positive");
    if (!(config_.shrink > 0) || !(config_.shrink < 1))
        throw ConfigurationError("gd: shrink factor must be in (0,1)");
}

GradientSearch::~GradientSearch() = default;

GradientSearch::Path& GradientSearch::new_path() {
    auto path = std::make_unique<Path>();
    path->id = next_path_id_++;
    std::seed_seq seq{base_seed_, path->id};
    path->rng.seed(seq);
    path->delta = config_.delta;
    path->x = sample_uniform(space_, path->rng).coords;
    paths_.push_back(std::move(path));
    return *paths_.back();
}

Candidate GradientSearch::emit(Path& path) {
    const std::size_t slot =
        static_cast<std::size_t>(std::find_if(paths_.begin(), paths_.end(),
                                              [&](const auto& p) { return p.get() == &path; }) -
                                 paths_.begin());
    Candidate c;
    c.search_path_id = path.id;
    c.ticket = next_ticket_++;
    switch (path.phase) {
    case Path::Phase::Start:
        c.norm.coords = path.x;
        path.ask_outstanding = true;
        pending_[c.ticket] = {slot, 0, 0};
        return c;
    case Path::Phase::Probes: {
        const std::size_t dim = path.probes_emitted++;
        std::vector<double> probe = path.x;
        double h = path.delta;
        if (probe[dim] + h > 1.0)
            h = -path.delta; // probe backward at the upper boundary
        probe[dim] = clamp01(probe[dim] + h);
        path.probe_h[dim] = probe[dim] - path.x[dim];
        c.norm.coords = std::move(probe);
        pending_[c.ticket] = {slot, 1, dim};
        return c;
    }
    case Path::Phase::Line:
        c.norm.coords = path.trial;
        path.ask_outstanding = true;
        pending_[c.ticket] = {slot, 2, 0};
        return c;
    default:
        throw CalibrationFailed("gd: emit on finished path"); // unreachable
    }
}

Candidate GradientSearch::ask() {
    for (auto& p : paths_) {
        Path& path = *p;
        switch (path.phase) {
        case Path::Phase::Start:
        case Path::Phase::Line:
            if (!path.ask_outstanding)
                return emit(path);
            break;
        case Path::Phase::Probes:
            if (path.probes_emitted < space_.dimension())
                return emit(path);
            break;
        case Path::Phase::Done:
            break;
        }
    }
    // every live path is waiting on results: open a fresh restart
    return emit(new_path());
}

void GradientSearch::tell(const Sample& sample) {
    auto it = pending_.find(sample.ticket);
    if (it == pending_.end())
        return; // not ours (e.g. replayed sample)
    Pending pend = it->second;
    pending_.erase(it);
    Path& path = *paths_[pend.path_slot];
    const std::size_t p = space_.dimension();

    auto begin_probes = [&] {
        path.phase = Path::Phase::Probes;
        path.probes_emitted = 0;
        path.probes_received = 0;
        path.probe_f.assign(p, 0.0);
        path.probe_h.assign(p, 0.0);
    };

    switch (pend.kind) {
    case 0: // starting point
        path.ask_outstanding = false;
        if (!sample.ok || !std::isfinite(sample.mre)) {
            path.phase = Path::Phase::Done;
            return;
        }
        path.fx = sample.mre;
        begin_probes();
        return;
    case 1: // gradient probe
        path.probe_f[pend.dim] = sample.ok ? sample.mre : std::numeric_limits<double>::infinity();
        if (++path.probes_received < p || path.probes_emitted < p)
            return;
        path.grad.assign(p, 0.0);
        path.grad_norm2 = 0;
        for (std::size_t i = 0; i < p; ++i) {
            if (!std::isfinite(path.probe_f[i]) || path.probe_h[i] == 0.0) {
                path.phase = Path::Phase::Done;
                return;
            }
            path.grad[i] = (path.probe_f[i] - path.fx) / path.probe_h[i];
            path.grad_norm2 += path.grad[i] * path.grad[i];
        }
        if (path.grad_norm2 == 0.0) {
            path.phase = Path::Phase::Done;
            return;
        }
        path.step = config_.initial_step;
        path.trial.resize(p);
        for (std::size_t i = 0; i < p; ++i)
            path.trial[i] = clamp01(path.x[i] - path.step * path.grad[i]);
        path.phase = Path::Phase::Line;
        return;
    case 2: { // line-search trial
        path.ask_outstanding = false;
        const double ftrial =
            sample.ok ? sample.mre : std::numeric_limits<double>::infinity();
        const bool sufficient =
            std::isfinite(ftrial) &&
            ftrial <= path.fx - config_.sufficient_decrease * path.step * path.grad_norm2;
        if (sufficient) {
            const double improvement = path.fx - ftrial;
            path.x = path.trial;
            path.fx = ftrial;
            if (config_.dynamic_delta)
                path.delta = std::max(path.step, 1e-9);
            if (improvement < config_.epsilon) {
                path.phase = Path::Phase::Done;
                return;
            }
            begin_probes();
            return;
        }
        path.step *= config_.shrink;
        if (path.step < 1e-12) {
            path.phase = Path::Phase::Done;
            return;
        }
        for (std::size_t i = 0; i < p; ++i)
            path.trial[i] = clamp01(path.x[i] - path.step * path.grad[i]);
        return; // stays in Line; next ask re-emits the shrunk trial
    }
    default:
        return;
    }
}

std::unique_ptr<Searcher> make_searcher(const std::string& algorithm, const ParameterSpace& space,
                                        std::uint64_t seed, const GdConfig& gd) {
    if (algorithm == "grid")
        return std::make_unique<GridSearch>(space);
    if (algorithm == "random")
        return std::make_unique<RandomSearch>(space, seed);
    if (algorithm == "gdfix") {
        GdConfig cfg = gd;
        cfg.dynamic_delta = false;
        return std::make_unique<GradientSearch>(space, seed, cfg);
    }
    if (algorithm == "gddyn") {
        GdConfig cfg = gd;
        cfg.dynamic_delta = true;
        return std::make_unique<GradientSearch>(space, seed, cfg);
    }
    throw ConfigurationError("unknown algorithm '" + algorithm +
                             "' (expected grid, random, gdfix, or gddyn)");
}

// ------------------------------------------------------------ evaluator

namespace {

EvalOutcome safe_eval(const Objective& objective, const Point& point) {
    try {
        return objective(point);
    } catch (const std::exception& e) {
        EvalOutcome out;
        out.ok = false;
        out.status = std::string("error: ") + e.what();
        return out;
    }
}

struct WorkItem {
    Candidate cand;
    Point point;
};

struct WorkResult {
    Candidate cand;
    Point point;
    EvalOutcome out;
};

class WorkerPool {
  public:
    WorkerPool(int workers, const Objective& objective) : objective_(objective) {
        for (int i = 0; i < workers; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~WorkerPool() {
        {
            std::lock_guard lock(mutex_);
            shutdown_ = true;
        }
        task_cv_.notify_all();
        for (auto& t : threads_)
            t.join();
    }

    void submit(WorkItem item) {
        {
            std::lock_guard lock(mutex_);
            tasks_.push_back(std::move(item));
        }
        task_cv_.notify_one();
    }

    WorkResult wait_result() {
        std::unique_lock lock(mutex_);
        result_cv_.wait(lock, [this] { return !results_.empty(); });
        WorkResult r = std::move(results_.front());
        results_.pop_front();
        return r;
    }

  private:
    void worker_loop() {
        while (true) {
            WorkItem item;
            {
                std::unique_lock lock(mutex_);
                task_cv_.wait(lock, [this] { return shutdown_ || !tasks_.empty(); });
                if (shutdown_ && tasks_.empty())
                    return;
                item = std::move(tasks_.front());
                tasks_.pop_front();
            }
            WorkResult r{item.cand, item.point, safe_eval(objective_, item.point)};
            {
                std::lock_guard lock(mutex_);
                results_.push_back(std::move(r));
            }
            result_cv_.notify_one();
        }
    }

    const Objective& objective_;
    std::vector<std::thread> threads_;
    std::deque<WorkItem> tasks_;
    std::deque<WorkResult> results_;
    std::mutex mutex_;
    std::condition_variable task_cv_;
    std::condition_variable result_cv_;
    bool shutdown_ = false;
};

Sample make_sample(std::uint64_t index, const Candidate& cand, Point point, const EvalOutcome& out,
                   double wall_time) {
    Sample s;
    s.index = index;
    s.point = std::move(point);
    s.norm = cand.norm;
    s.search_path_id = cand.search_path_id;
    s.ticket = cand.ticket;
    s.wall_time = wall_time;
    s.ok = out.ok;
    s.status = out.status;
    if (out.ok) {
        s.mre = out.mre;
        s.mae = out.mae;
    }
    return s;
}

} // namespace

CalibrationResult run_calibration(const ParameterSpace& space, const Objective& objective,
                                  Searcher& searcher, const Budget& budget, int workers,
                                  std::uint64_t seed) {
    if (workers < 1)
        throw ConfigurationError("workers must be >= 1");

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    CalibrationResult result;
    result.algorithm = searcher.name();
    result.seed = seed;

    std::uint64_t started = 0;
    std::uint64_t completed = 0;
    auto can_start = [&] {
        if (budget.mode == Budget::Mode::MaxEvaluations)
            return started < budget.evaluations;
        return elapsed() < budget.seconds;
    };

    auto ingest = [&](const Candidate& cand, Point point, const EvalOutcome& out) {
        Sample s = make_sample(completed++, cand, std::move(point), out, elapsed());
        searcher.tell(s);
        result.log.push_back(std::move(s));
    };

    if (workers == 1) {
        while (can_start()) {
            Candidate cand = searcher.ask();
            Point point = denormalize(space, cand.norm);
            ++started;
            ingest(cand, point, safe_eval(objective, point));
        }
    } else {
        WorkerPool pool(workers, objective);
        std::uint64_t in_flight = 0;
        while (true) {
            while (in_flight < static_cast<std::uint64_t>(workers) && can_start()) {
                Candidate cand = searcher.ask();
                Point point = denormalize(space, cand.norm);
                pool.submit({cand, std::move(point)});
                ++started;
                ++in_flight;
            }
            if (in_flight == 0)
                break;
            WorkResult r = pool.wait_result();
            --in_flight;
            ingest(r.cand, std::move(r.point), r.out);
        }
    }

    result.evaluations = completed;
    const Sample* best = nullptr;
    for (const auto& s : result.log)
        if (s.ok && std::isfinite(s.mre) && (!best || s.mre < best->mre))
            best = &s;
    if (!best)
        throw CalibrationFailed("no successful evaluation within the budget");
    result.best = *best;
    return result;
}

CalibrationResult run_calibration(const ParameterSpace& space, const Objective& objective,
                                  const std::string& algorithm, const Budget& budget, int workers,
                                  std::uint64_t seed, const GdConfig& gd) {
    auto searcher = make_searcher(algorithm, space, seed, gd);
    return run_calibration(space, objective, *searcher, budget, workers, seed);
}

// ------------------------------------------------------------ objective

Scenario substitute_parameters(const Scenario& tmpl, const Point& point) {
    Scenario sc = tmpl;
    for (const auto& [name, value] : point.values) {
        if (name == "core_speed")
            sc.platform.core_speed = value;
        else if (name == "disk_bw")
            sc.platform.disk_bw = value;
        else if (name == "lan_bw")
            sc.platform.lan_bw = value;
        else if (name == "wan_bw")
            sc.platform.wan_bw = value;
        else if (name == "ram_bw")
            sc.platform.ram_bw = value;
        else
            throw ConfigurationError("unknown calibration parameter '" + name + "'");
    }
    return sc;
}

EvalOutcome evaluate_objective(const Point& point, const GroundTruthSet& truth,
                               const Scenario& tmpl,
                               const std::optional<std::vector<double>>& subset) {
    const int node_count = static_cast<int>(tmpl.platform.node_cores.size());
    std::map<double, NodeAverages> sim;
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
        Trace trace = run_scenario(sc);
        sim[entry.icd] = node_averages(trace, node_count);
    }
    AccuracyReport report = accuracy(sim, truth, subset);
    EvalOutcome out;
    out.mre = report.mre;
    out.mae = report.mae;
    out.ok = true;
    return out;
}

Objective make_simulator_objective(GroundTruthSet truth, Scenario tmpl,
                                   std::optional<std::vector<double>> subset) {
    return [truth = std::move(truth), tmpl = std::move(tmpl),
            subset = std::move(subset)](const Point& point) {
        return evaluate_objective(point, truth, tmpl, subset);
    };
}

// ------------------------------------------------------------ reporting

std::string sample_log_csv(const ParameterSpace& space, const CalibrationResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "eval_index,wall_time_s";
    for (const auto& spec : space.specs())
        out << ',' << spec.name;
    out << ",mre_percent,mae_s,search_path_id,status\n";
    for (const auto& s : result.log) {
        out << s.index << ',' << s.wall_time;
        for (const auto& spec : space.specs())
            out << ',' << s.point.values.at(spec.name);
        std::string status = s.ok ? "ok" : s.status;
        std::replace(status.begin(), status.end(), ',', ';'); // keep the CSV parseable
        out << ',' << s.mre << ',' << s.mae << ',' << s.search_path_id << ',' << status << '\n';
    }
    return out.str();
}

nlohmann::json calibration_result_to_json(const ParameterSpace& space,
                                          const CalibrationResult& result) {
    nlohmann::json best_point = nlohmann::json::object();
    for (const auto& spec : space.specs())
        best_point[spec.name] = {{"value", result.best.point.values.at(spec.name)},
                                 {"unit", spec.unit}};
    return {{"algorithm", result.algorithm},
            {"seed", result.seed},
            {"evaluations", result.evaluations},
            {"best",
             {{"point", best_point},
              {"mre_percent", result.best.mre},
              {"mae_s", result.best.mae},
              {"eval_index", result.best.index}}}};
}

} // namespace simcal
