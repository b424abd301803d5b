#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "simcal/metrics.hpp"
#include "simcal/param_space.hpp"
#include "simcal/sim_engine.hpp"

namespace simcal {

struct Budget {
    enum class Mode { WallClock, MaxEvaluations };
    Mode mode = Mode::WallClock;
    double seconds = 21600; // default budget: 6 hours
    std::uint64_t evaluations = 0;

    static Budget wall_clock(double seconds);
    static Budget max_evaluations(std::uint64_t n);
};

struct EvalOutcome {
    double mre = std::numeric_limits<double>::infinity(); // percent
    double mae = std::numeric_limits<double>::infinity(); // seconds
    bool ok = false;
    std::string status = "ok";
};

/// Scores one candidate; must be safe to call from several workers at once.
using Objective = std::function<EvalOutcome(const Point&)>;

struct Sample {
    std::uint64_t index = 0; // completion order
    Point point;
    NormPoint norm;
    double mre = std::numeric_limits<double>::infinity();
    double mae = std::numeric_limits<double>::infinity();
    double wall_time = 0; // seconds since calibration start
    std::uint64_t search_path_id = 0;
    bool ok = true;
    std::string status = "ok";
    std::uint64_t ticket = 0; // ask/tell routing, not serialized
};

struct CalibrationResult {
    Sample best;
    std::vector<Sample> log;
    std::string algorithm;
    std::uint64_t seed = 0;
    std::uint64_t evaluations = 0;
};

struct GdConfig {
    double delta = 1e-4;    // finite-difference probe distance
    double epsilon = 0.01;  // per-iteration improvement cutoff, MRE points
    bool dynamic_delta = false; // GDDyn: delta follows the accepted step
    double shrink = 0.5;
    double sufficient_decrease = 1e-4; // Armijo constant
    double initial_step = 1.0;
};

struct Candidate {
    NormPoint norm;
    std::uint64_t search_path_id = 0;
    std::uint64_t ticket = 0;
};

/// Ask/tell protocol: ask() yields the next candidate, tell() feeds a
/// completed evaluation back. Tells may arrive out of ask order.
class Searcher {
  public:
    virtual ~Searcher() = default;
    virtual Candidate ask() = 0;
    virtual void tell(const Sample& sample) = 0;
    virtual std::string name() const = 0;
};

/// Level-0 emits the 2^p range corners; each completed level refines every
/// dimension with midpoints, emitting only lattice points not yet seen.
class GridSearch : public Searcher {
  public:
    explicit GridSearch(const ParameterSpace& space);
    Candidate ask() override;
    void tell(const Sample&) override {}
    std::string name() const override { return "grid"; }

  private:
    bool increment();
    std::size_t p_;
    int level_ = 0;
    bool first_ = true;
    std::vector<std::uint64_t> idx_;
    std::uint64_t next_ticket_ = 0;
};

class RandomSearch : public Searcher {
  public:
    RandomSearch(const ParameterSpace& space, std::uint64_t seed);
    Candidate ask() override;
    void tell(const Sample& sample) override;
    std::string name() const override { return "random"; }
    double best_mre() const { return best_mre_; }

  private:
    const ParameterSpace& space_;
    std::mt19937_64 rng_;
    std::uint64_t next_ticket_ = 0;
    double best_mre_ = std::numeric_limits<double>::infinity();
};

/// Finite-difference gradient descent with backtracking line search.
/// Multiple independent search paths run concurrently: a fresh path is
/// opened whenever every live path is waiting on results, so idle workers
/// always have work.
class GradientSearch : public Searcher {
  public:
    GradientSearch(const ParameterSpace& space, std::uint64_t seed, GdConfig config);
    ~GradientSearch() override;
    Candidate ask() override;
    void tell(const Sample& sample) override;
    std::string name() const override { return config_.dynamic_delta ? "gddyn" : "gdfix"; }

  private:
    struct Path;
    Candidate emit(Path& path);
    Path& new_path();

    const ParameterSpace& space_;
    GdConfig config_;
    std::uint64_t base_seed_;
    std::vector<std::unique_ptr<Path>> paths_;
    struct Pending {
        std::size_t path_slot;
        int kind; // 0 start, 1 probe, 2 trial
        std::size_t dim;
    };
    std::map<std::uint64_t, Pending> pending_;
    std::uint64_t next_ticket_ = 0;
    std::uint64_t next_path_id_ = 0;
};

/// algorithm: one of "grid", "random", "gdfix", "gddyn".
std::unique_ptr<Searcher> make_searcher(const std::string& algorithm, const ParameterSpace& space,
                                        std::uint64_t seed, const GdConfig& gd = {});

/// Budgeted, parallel ask/evaluate/tell loop. Keeps up to `workers`
/// evaluations in flight; samples are told back in completion order. With
/// workers == 1 and a max-evaluations budget the run is fully
/// deterministic for a given seed.
CalibrationResult run_calibration(const ParameterSpace& space, const Objective& objective,
                                  Searcher& searcher, const Budget& budget, int workers,
                                  std::uint64_t seed);

CalibrationResult run_calibration(const ParameterSpace& space, const Objective& objective,
                                  const std::string& algorithm, const Budget& budget, int workers,
                                  std::uint64_t seed, const GdConfig& gd = {});

/// Substitutes the candidate's parameter values into a scenario template.
/// Recognized names: core_speed, disk_bw, lan_bw, wan_bw, ram_bw.
Scenario substitute_parameters(const Scenario& tmpl, const Point& point);

/// Scores one candidate by simulating every selected ground-truth entry.
EvalOutcome evaluate_objective(const Point& point, const GroundTruthSet& truth,
                               const Scenario& tmpl,
                               const std::optional<std::vector<double>>& subset = std::nullopt);

Objective make_simulator_objective(GroundTruthSet truth, Scenario tmpl,
                                   std::optional<std::vector<double>> subset = std::nullopt);

std::string sample_log_csv(const ParameterSpace& space, const CalibrationResult& result);
nlohmann::json calibration_result_to_json(const ParameterSpace& space,
                                          const CalibrationResult& result);

} // namespace simcal
