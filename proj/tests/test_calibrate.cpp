#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "simcal/calibrate.hpp"

using namespace simcal;

namespace {

ParameterSpace cube(std::size_t p) {
    std::vector<ParameterSpec> specs;
    for (std::size_t i = 0; i < p; ++i)
        specs.push_back({"x" + std::to_string(i), "unit", 2.0, 4.0});
    return ParameterSpace(std::move(specs));
}

/// Test objective defined on normalized coordinates.
Objective on_coords(const ParameterSpace& space,
                    std::function<double(const std::vector<double>&)> f) {
    return [space, f = std::move(f)](const Point& pt) {
        EvalOutcome out;
        out.mre = f(normalize(space, pt).coords);
        out.mae = out.mre;
        out.ok = true;
        return out;
    };
}

Sample answered(const Candidate& c, double f) {
    Sample s;
    s.norm = c.norm;
    s.search_path_id = c.search_path_id;
    s.ticket = c.ticket;
    s.mre = f;
    s.mae = f;
    s.ok = true;
    return s;
}

} // namespace

TEST_CASE("grid p=1: endpoints, then midpoint recursion") {
    auto space = cube(1);
    GridSearch grid(space);
    std::vector<double> seen;
    for (int i = 0; i < 5; ++i)
        seen.push_back(grid.ask().norm.coords[0]);
    CHECK(seen == std::vector<double>{0.0, 1.0, 0.5, 0.25, 0.75});
}

TEST_CASE("grid p=2: corners first, then the 3x3 lattice completes") {
    auto space = cube(2);
    GridSearch grid(space);
    std::set<std::vector<double>> first4;
    for (int i = 0; i < 4; ++i)
        first4.insert(grid.ask().norm.coords);
    CHECK(first4 == std::set<std::vector<double>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    std::set<std::vector<double>> next5;
    for (int i = 0; i < 5; ++i)
        next5.insert(grid.ask().norm.coords);
    CHECK(next5.size() == 5);
    for (const auto& pt : next5)
        for (double c : pt)
            CHECK((c == 0.0 || c == 0.5 || c == 1.0));
}

TEST_CASE("grid never repeats and completes (2^L+1)^p points per level") {
    auto space = cube(2);
    GridSearch grid(space);
    std::set<std::vector<double>> seen;
    for (int i = 0; i < 81; ++i) // levels 0..3 of a 2-d lattice
        CHECK(seen.insert(grid.ask().norm.coords).second);
    CHECK(seen.size() == 81);
    // after 25 asks the level-2 lattice {k/4} must be complete
    std::set<std::vector<double>> lattice;
    GridSearch grid2(space);
    for (int i = 0; i < 25; ++i)
        lattice.insert(grid2.ask().norm.coords);
    for (int a = 0; a <= 4; ++a)
        for (int b = 0; b <= 4; ++b)
            CHECK(lattice.count({a / 4.0, b / 4.0}) == 1);
}

TEST_CASE("grid p=4 level 0 is exactly the 16 corners") {
    auto space = cube(4);
    GridSearch grid(space);
    std::set<std::vector<double>> corners;
    for (int i = 0; i < 16; ++i) {
        auto c = grid.ask().norm.coords;
        for (double v : c)
            CHECK((v == 0.0 || v == 1.0));
        corners.insert(c);
    }
    CHECK(corners.size() == 16);
}

TEST_CASE("random search is seed-deterministic and in range") {
    auto space = cube(3);
    RandomSearch a(space, 7), b(space, 7);
    for (int i = 0; i < 50; ++i) {
        auto ca = a.ask();
        auto cb = b.ask();
        CHECK(ca.norm.coords == cb.norm.coords);
        for (double c : ca.norm.coords) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
        }
    }
}

TEST_CASE("random tell keeps a running minimum") {
    auto space = cube(1);
    RandomSearch rs(space, 1);
    for (double f : {5.0, 3.0, 4.0})
        rs.tell(answered(rs.ask(), f));
    CHECK(rs.best_mre() == doctest::Approx(3.0));
}

TEST_CASE("gd emits the p probe points x + delta*e_i after the start") {
    auto space = cube(3);
    GradientSearch gd(space, 11, GdConfig{});
    auto start = gd.ask();
    gd.tell(answered(start, 10.0));
    std::vector<std::vector<double>> probes;
    for (int i = 0; i < 3; ++i)
        probes.push_back(gd.ask().norm.coords);
    for (int i = 0; i < 3; ++i) {
        for (int d = 0; d < 3; ++d) {
            const double expected =
                start.norm.coords[d] + (d == i ? 1e-4 : 0.0);
            CHECK(probes[i][d] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("gd forward-difference gradient matches the analytic gradient") {
    auto space = cube(2);
    // small-scale quadratic so the first trial x - 1.0*g stays unclamped
    auto f = [](const std::vector<double>& x) {
        double s = 0;
        for (double c : x)
            s += 0.01 * (c - 0.3) * (c - 0.3);
        return s;
    };
    GradientSearch gd(space, 3, GdConfig{});
    auto start = gd.ask();
    gd.tell(answered(start, f(start.norm.coords)));
    std::vector<Candidate> probes;
    for (int i = 0; i < 2; ++i)
        probes.push_back(gd.ask());
    for (auto& p : probes)
        gd.tell(answered(p, f(p.norm.coords)));
    auto trial = gd.ask(); // x - initial_step * g
    for (int d = 0; d < 2; ++d) {
        const double g_impl = start.norm.coords[d] - trial.norm.coords[d];
        const double g_true = 0.02 * (start.norm.coords[d] - 0.3);
        CHECK(std::abs(g_impl - g_true) <= 5e-3);
    }
}

TEST_CASE("gd restarts a fresh path when the improvement drops below epsilon") {
    auto space = cube(1);
    GradientSearch gd(space, 5, GdConfig{});
    // nearly-flat objective: any accepted move improves by far less than 0.01
    auto f = [](const std::vector<double>& x) { return 10.0 + 0.004 * x[0]; };
    auto start = gd.ask();
    gd.tell(answered(start, f(start.norm.coords)));
    auto probe = gd.ask();
    gd.tell(answered(probe, f(probe.norm.coords)));
    // backtracking trials until one is accepted; then the path must end
    for (int i = 0; i < 60; ++i) {
        auto c = gd.ask();
        if (c.search_path_id != start.search_path_id) {
            CHECK(c.search_path_id == start.search_path_id + 1);
            return;
        }
        gd.tell(answered(c, f(c.norm.coords)));
    }
    FAIL("gd path did not terminate on a sub-epsilon improvement");
}

TEST_CASE("gd minimizes a quadratic within 200 evaluations") {
    auto space = cube(2);
    auto objective = on_coords(space, [](const std::vector<double>& x) {
        double s = 0;
        for (double c : x)
            s += (c - 0.3) * (c - 0.3);
        return s;
    });
    auto result = run_calibration(space, objective, "gdfix",
                                  Budget::max_evaluations(200), 1, 42);
    CHECK(result.best.mre < 1e-3);
}

TEST_CASE("gdfix and gddyn agree on a 1-d convex objective") {
    auto space = cube(1);
    auto objective = on_coords(space, [](const std::vector<double>& x) {
        return (x[0] - 0.42) * (x[0] - 0.42) * 50.0;
    });
    auto fix = run_calibration(space, objective, "gdfix", Budget::max_evaluations(150), 1, 9);
    auto dyn = run_calibration(space, objective, "gddyn", Budget::max_evaluations(150), 1, 9);
    CHECK(std::abs(fix.best.norm.coords[0] - dyn.best.norm.coords[0]) <= 0.01);
    CHECK(std::abs(fix.best.norm.coords[0] - 0.42) <= 0.01);
}

TEST_CASE("run_calibration with grid and 16 evaluations yields the corners") {
    auto space = cube(4);
    auto objective = on_coords(space, [](const std::vector<double>& x) { return x[0]; });
    auto result = run_calibration(space, objective, "grid", Budget::max_evaluations(16), 1, 0);
    CHECK(result.log.size() == 16);
    std::set<std::vector<double>> pts;
    for (const auto& s : result.log) {
        for (double c : s.norm.coords)
            CHECK((c == 0.0 || c == 1.0));
        pts.insert(s.norm.coords);
    }
    CHECK(pts.size() == 16);
}

TEST_CASE("sequential runs are deterministic for every algorithm") {
    auto space = cube(3);
    auto objective = on_coords(space, [](const std::vector<double>& x) {
        double s = 0;
        for (double c : x)
            s += (c - 0.6) * (c - 0.6) * 30.0;
        return s;
    });
    for (const std::string algo : {"grid", "random", "gdfix", "gddyn"}) {
        auto a = run_calibration(space, objective, algo, Budget::max_evaluations(60), 1, 3);
        auto b = run_calibration(space, objective, algo, Budget::max_evaluations(60), 1, 3);
        REQUIRE(a.log.size() == b.log.size());
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            CHECK(a.log[i].norm.coords == b.log[i].norm.coords);
            CHECK(a.log[i].mre == b.log[i].mre);
            CHECK(a.log[i].search_path_id == b.log[i].search_path_id);
        }
    }
}

TEST_CASE("best-so-far mre is non-increasing in sample index") {
    auto space = cube(2);
    auto objective = on_coords(space, [](const std::vector<double>& x) {
        return std::abs(x[0] - 0.25) * 100.0 + std::abs(x[1] - 0.75) * 40.0;
    });
    auto result = run_calibration(space, objective, "random", Budget::max_evaluations(80), 1, 12);
    std::vector<double> curve;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : result.log) {
        if (s.ok)
            best = std::min(best, s.mre);
        curve.push_back(best);
    }
    CHECK(std::is_sorted(curve.begin(), curve.end(), std::greater<double>()));
    CHECK(result.best.mre == doctest::Approx(best));
}

TEST_CASE("failed evaluations score infinity and the search continues") {
    auto space = cube(1);
    int calls = 0;
    Objective objective = [&](const Point& pt) -> EvalOutcome {
        ++calls;
        if (calls % 2 == 1)
            throw std::runtime_error("simulator exploded");
        EvalOutcome out;
        out.mre = normalize(space, pt).coords[0] * 100.0;
        out.mae = out.mre;
        out.ok = true;
        return out;
    };
    auto result = run_calibration(space, objective, "random", Budget::max_evaluations(20), 1, 4);
    CHECK(result.log.size() == 20);
    int failures = 0;
    for (const auto& s : result.log)
        if (!s.ok) {
            ++failures;
            CHECK(std::isinf(s.mre));
            CHECK(s.status.find("simulator exploded") != std::string::npos);
        }
    CHECK(failures == 10);
    CHECK(result.best.ok);
}

TEST_CASE("all-failing objective raises calibration-failed") {
    auto space = cube(1);
    Objective objective = [](const Point&) -> EvalOutcome {
        throw std::runtime_error("nope");
    };
    CHECK_THROWS_AS(
        run_calibration(space, objective, "random", Budget::max_evaluations(5), 1, 0),
        CalibrationFailed);
}

TEST_CASE("parallel evaluation completes the exact budget") {
    auto space = cube(2);
    auto objective = on_coords(space, [](const std::vector<double>& x) {
        double s = 0;
        for (double c : x)
            s += c * c * 10.0;
        return s;
    });
    auto result = run_calibration(space, objective, "random", Budget::max_evaluations(100), 4, 8);
    CHECK(result.evaluations == 100);
    CHECK(result.log.size() == 100);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : result.log) {
        CHECK(s.index < 100);
        best = std::min(best, s.mre);
    }
    CHECK(result.best.mre == doctest::Approx(best));
}

TEST_CASE("parallel gd keeps multiple search paths busy") {
    auto space = cube(2);
    auto objective = on_coords(space, [](const std::vector<double>& x) {
        return (x[0] - 0.5) * (x[0] - 0.5) * 80.0 + (x[1] - 0.5) * (x[1] - 0.5) * 80.0;
    });
    auto result = run_calibration(space, objective, "gdfix", Budget::max_evaluations(120), 6, 21);
    std::set<std::uint64_t> paths;
    for (const auto& s : result.log)
        paths.insert(s.search_path_id);
    CHECK(paths.size() >= 2);
}

TEST_CASE("wall-clock budget stops dispatching after the deadline") {
    auto space = cube(1);
    Objective objective = [&](const Point&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        EvalOutcome out;
        out.mre = 1.0;
        out.mae = 1.0;
        out.ok = true;
        return out;
    };
    auto result = run_calibration(space, objective, "random", Budget::wall_clock(0.1), 2, 0);
    CHECK(result.evaluations >= 1);
    CHECK(result.evaluations < 200);
}

TEST_CASE("budget and searcher validation") {
    CHECK_THROWS_AS(Budget::wall_clock(0), ConfigurationError);
    CHECK_THROWS_AS(Budget::max_evaluations(0), ConfigurationError);
    auto space = cube(1);
    CHECK_THROWS_AS(make_searcher("annealing", space, 0), ConfigurationError);
}

TEST_CASE("substitute_parameters maps names onto platform fields") {
    Scenario tmpl;
    tmpl.platform.node_cores = {1};
    Point p;
    p.values = {{"core_speed", 1e9}, {"disk_bw", 2e7}, {"lan_bw", 1e9}, {"wan_bw", 5e8}};
    auto sc = substitute_parameters(tmpl, p);
    CHECK(sc.platform.core_speed == 1e9);
    CHECK(sc.platform.disk_bw == 2e7);
    CHECK(sc.platform.lan_bw == 1e9);
    CHECK(sc.platform.wan_bw == 5e8);
    Point bad;
    bad.values = {{"frobnication_rate", 1.0}};
    CHECK_THROWS_AS(substitute_parameters(tmpl, bad), ConfigurationError);
}

TEST_CASE("sample log csv has one row per sample and the parameter columns") {
    auto space = cube(2);
    auto objective = on_coords(space, [](const std::vector<double>& x) { return x[0]; });
    auto result = run_calibration(space, objective, "random", Budget::max_evaluations(5), 1, 2);
    auto csv = sample_log_csv(space, result);
    CHECK(csv.find("eval_index,wall_time_s,x0,x1,mre_percent,mae_s,search_path_id,status") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    auto j = calibration_result_to_json(space, result);
    CHECK(j["algorithm"] == "random");
    CHECK(j["evaluations"] == 5);
}
