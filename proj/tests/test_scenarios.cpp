#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "simcal/scenarios.hpp"

using namespace simcal;

TEST_CASE("presets match the platform table") {
    auto scsn = preset("SCSN");
    CHECK_FALSE(scsn.page_cache_enabled);
    CHECK(preset_wan_interface("SCSN") == doctest::Approx(1.25e8)); // 1 Gb/s

    auto fcfn = preset("FCFN");
    CHECK(fcfn.page_cache_enabled);
    CHECK(preset_wan_interface("FCFN") == doctest::Approx(1.25e9)); // 10 Gb/s

    CHECK(preset("SCFN").page_cache_enabled == false);
    CHECK(preset("FCSN").page_cache_enabled == true);

    for (const auto& label : kPresetLabels) {
        auto p = preset(label);
        CHECK(p.node_cores == std::vector<int>{12, 12, 24});
        CHECK(p.lan_bw == doctest::Approx(1.25e9));
        CHECK(p.ram_bw == doctest::Approx(1e9));
        CHECK(std::isnan(p.core_speed)); // calibratable placeholder
        CHECK(std::isnan(p.disk_bw));
        CHECK(std::isnan(p.wan_bw));
    }

    CHECK_THROWS_AS(preset("XXXX"), ConfigurationError);
    try {
        preset("XXXX");
    } catch (const ConfigurationError& e) {
        CHECK(std::string(e.what()).find("SCSN") != std::string::npos);
    }
}

TEST_CASE("baseline fixture lies inside the search ranges") {
    auto space = default_parameter_space();
    for (const auto& label : kPresetLabels) {
        auto fixture = baseline_fixture(label);
        CHECK_NOTHROW(normalize(space, fixture)); // in range
    }
    auto scsn = baseline_fixture("SCSN");
    CHECK(scsn.values.at("core_speed") == doctest::Approx(1.97e9));
    CHECK(scsn.values.at("disk_bw") == doctest::Approx(17e6));
    CHECK(scsn.values.at("lan_bw") == doctest::Approx(1.25e9));
    CHECK(scsn.values.at("wan_bw") == doctest::Approx(1.4375e8)); // 1.15 Gb/s
    CHECK(baseline_fixture("SCFN").values.at("wan_bw") == doctest::Approx(1.4375e9));
}

TEST_CASE("default parameter space spans 2^20 to 2^36") {
    auto space = default_parameter_space();
    CHECK(space.dimension() == 4);
    for (const auto& spec : space.specs()) {
        CHECK(spec.low == doctest::Approx(std::exp2(20.0)));
        CHECK(spec.high == doctest::Approx(std::exp2(36.0)));
    }
    CHECK(default_parameter_space(true).dimension() == 5);
}

TEST_CASE("icd lists") {
    auto icds = default_icd_list();
    REQUIRE(icds.size() == 11);
    CHECK(icds.front() == 0.0);
    CHECK(icds.back() == 1.0);
    CHECK(icds[3] == doctest::Approx(0.3));
    CHECK(subset_study_icds() == std::vector<double>{0.0, 0.3, 0.5, 0.7, 1.0});
}

TEST_CASE("ground truth generation: zero noise equals the simulator output") {
    auto cfg = desk_truth_config("SCSN");
    auto truth = generate_ground_truth(cfg);
    REQUIRE(truth.entries.size() == 11);
    // 3 nodes per entry: the 33-metric structure
    std::size_t metrics = 0;
    for (const auto& e : truth.entries)
        metrics += e.averages.mean_duration.size();
    CHECK(metrics == 33);

    auto tmpl = scenario_template(cfg, cfg.truth_block_size, cfg.truth_buffer_size);
    Scenario sc = substitute_parameters(tmpl, cfg.hidden_point);
    sc.icd = 0.5;
    auto na = node_averages(run_scenario(sc), 3);
    for (const auto& [node, mean] : na.mean_duration)
        CHECK(truth.entry(0.5).averages.mean_duration.at(node) == mean);
}

TEST_CASE("ground truth generation is deterministic and noise is seeded") {
    auto cfg = desk_truth_config("FCSN");
    cfg.noise_stddev = 0.05;
    cfg.noise_seed = 99;
    auto a = generate_ground_truth(cfg);
    auto b = generate_ground_truth(cfg);
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        CHECK(a.entries[i].averages.mean_duration == b.entries[i].averages.mean_duration);

    cfg.noise_seed = 100;
    auto c = generate_ground_truth(cfg);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        if (a.entries[i].averages.mean_duration != c.entries[i].averages.mean_duration)
            any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("objective at the hidden point is exactly zero") {
    for (const auto& label : kPresetLabels) {
        auto cfg = desk_truth_config(label);
        auto truth = generate_ground_truth(cfg);
        auto tmpl = scenario_template(cfg, cfg.truth_block_size, cfg.truth_buffer_size);
        auto out = evaluate_objective(cfg.hidden_point, truth, tmpl);
        CHECK(out.ok);
        CHECK(out.mre == 0.0);
        CHECK(out.mae == 0.0);
    }
}

TEST_CASE("objective subset restriction works against truth subsets") {
    auto cfg = desk_truth_config("SCSN");
    auto truth = generate_ground_truth(cfg);
    auto tmpl = scenario_template(cfg, cfg.truth_block_size, cfg.truth_buffer_size);
    std::vector<double> subset{0.3, 0.7};
    auto out = evaluate_objective(cfg.hidden_point, truth, tmpl, subset);
    CHECK(out.mre == 0.0);

    auto off = cfg.hidden_point;
    off.values["disk_bw"] *= 0.5; // halved disk in a disk-bound scenario
    auto worse = evaluate_objective(off, truth, tmpl, subset);
    CHECK(worse.mre > 0.0);
}

TEST_CASE("external command stub: fixed trace yields a finite mre") {
    auto cfg = desk_truth_config("SCSN");
    cfg.workload.n_jobs = 3;
    cfg.nodes_override = {1, 1, 1};
    auto truth = generate_ground_truth(cfg);
    auto tmpl = scenario_template(cfg, cfg.truth_block_size, cfg.truth_buffer_size);

    ExternalSimulator stub;
    stub.command = "cat > /dev/null; printf '%s' '{\"jobs\":[{\"id\":0,\"node\":0,\"start\":0,"
                   "\"end\":12.0},{\"id\":1,\"node\":1,\"start\":0,\"end\":13.0},"
                   "{\"id\":2,\"node\":2,\"start\":0,\"end\":14.0}],\"event_count\":3}'";
    auto objective = external_objective(stub, truth, tmpl);
    auto out = objective(cfg.hidden_point);
    CHECK(out.ok);
    CHECK(std::isfinite(out.mre));
}

TEST_CASE("external command failures are reported, not fatal") {
    auto cfg = desk_truth_config("SCSN");
    auto truth = generate_ground_truth(cfg);
    auto tmpl = scenario_template(cfg, cfg.truth_block_size, cfg.truth_buffer_size);

    SUBCASE("nonzero exit") {
        ExternalSimulator failing;
        failing.command = "cat > /dev/null; exit 1";
        CHECK_THROWS_WITH_AS(run_external(failing, tmpl), doctest::Contains("exit:"),
                             std::runtime_error);
    }
    SUBCASE("garbage output") {
        ExternalSimulator garbage;
        garbage.command = "cat > /dev/null; echo not-json";
        CHECK_THROWS_WITH_AS(run_external(garbage, tmpl), doctest::Contains("parse:"),
                             std::runtime_error);
    }
    SUBCASE("timeout") {
        ExternalSimulator slow;
        slow.command = "sleep 30";
        slow.timeout_seconds = 0.2;
        CHECK_THROWS_WITH_AS(run_external(slow, tmpl), doctest::Contains("timeout:"),
                             std::runtime_error);
    }
}

TEST_CASE("external wrapper around the builtin engine matches in-process results") {
    auto cfg = desk_truth_config("SCSN");
    cfg.workload.n_jobs = 3; // keep the subprocess runs quick
    auto truth = generate_ground_truth(cfg);
    auto tmpl = scenario_template(cfg, cfg.truth_block_size, cfg.truth_buffer_size);

    ExternalSimulator self;
    self.command = std::string(SIMCAL_CLI_PATH) + " simulate --scenario -";
    auto external = external_objective(self, truth, tmpl, std::vector<double>{0.0, 0.5});

    auto candidate = cfg.hidden_point;
    candidate.values["disk_bw"] *= 1.3;
    auto in_process = evaluate_objective(candidate, truth, tmpl, std::vector<double>{0.0, 0.5});
    auto wrapped = external(candidate);
    CHECK(wrapped.ok);
    CHECK(std::abs(wrapped.mre - in_process.mre) <= 1e-9);
}
