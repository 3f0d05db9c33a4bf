// Copyright 2026 The qlink Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qlink/runner.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>
#include <type_traits>

#include "qlink/errors.h"

using namespace qlink;

namespace {

const std::string kEagleGraph = R"({"device":"eagle","long_range":[[1,126],[2,123],[6,116],[7,113]]})";

std::string factory_path(uint32_t k) {
    return std::string(QLINK_DATA_DIR) + "/factory_k" + std::to_string(k) + ".json";
}

std::string chain_noise(uint32_t n, double readout, double zz) {
    std::string s = R"({"readout_error":[)";
    for (uint32_t q = 0; q < n; q++) {
        s += (q ? "," : "") + std::to_string(readout);
    }
    s += R"(],"zz":[)";
    for (uint32_t q = 0; q + 1 < n; q++) {
        s += std::string(q ? "," : "") + "[" + std::to_string(q) + "," + std::to_string(q + 1) + "," +
             std::to_string(zz) + "]";
    }
    return s + R"(],"switch_latency_tau":1.0})";
}

}  // namespace

TEST(config, defaults_and_round_trip) {
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":8,"cuts":2},"method":"lo"})");
    EXPECT_EQ(c.shots, 1024u);
    EXPECT_EQ(c.trex, 5u);
    EXPECT_EQ(c.zne.factors.size(), 5u);
    EXPECT_EQ(c.mode, RunMode::Enumerate);
    EXPECT_EQ(c.method, GraphMethod::LO);
    EXPECT_EQ(c.graph.num_nodes, 8u);
    EXPECT_EQ(c.graph.cut_edges.size(), 2u);
    auto again = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(again.to_json(), c.to_json());
}

TEST(config, graph_and_map_forms) {
    auto g = graph_from_json(R"({"nodes":3,"edges":[[0,1],[1,2]],"cut_edges":[[1,2]]})");
    EXPECT_EQ(g.num_nodes, 3u);
    EXPECT_TRUE(g.is_cut(1, 2));
    auto e = graph_from_json(kEagleGraph);
    EXPECT_EQ(e.num_nodes, 127u);
    EXPECT_EQ(e.cut_edges.size(), 4u);
    auto m = map_from_json(R"({"kind":"line","qubits":4,"qpu_of":[0,0,1,1]})");
    EXPECT_EQ(m.num_qubits, 4u);
    EXPECT_EQ(m.qpu_of, (std::vector<uint32_t>{0, 0, 1, 1}));
    EXPECT_EQ(map_from_json(R"({"kind":"eagle"})").num_qubits, 127u);
}

TEST(config, errors) {
    auto bad = [](const std::string &text) { EXPECT_THROW(ExperimentConfig::from_json(text), ConfigError) << text; };
    bad("[]");
    bad("{not json");
    bad(R"({"method":"lo"})");
    bad(R"({"graph":{"ring":2}})");
    bad(R"({"graph":{"ring":8},"method":"teleport"})");
    bad(R"({"graph":{"ring":8},"shots":0})");
    bad(R"({"graph":{"ring":8},"trex":0})");
    bad(R"({"graph":{"ring":8},"zne":[]})");
    bad(R"({"graph":{"ring":8},"mode":"guess"})");
    bad(R"({"graph":{"ring":8},"shotz":10})");
    bad(R"({"graph":{"ring":8},"pairs_per_gate":4})");
    bad(R"({"graph":{"ring":8},"resample":{"fraction":0}})");
    bad(R"({"graph":{"nodes":3,"edges":[[0,0]]}})");
    bad(R"({"graph":{"nodes":3,"edges":[[0,1]]},"method":"lo"})");
    bad(R"({"graph":{"ring":8},"noise":{"readout_error":[1.5]}})");
    EXPECT_THROW(ExperimentConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST(config, relative_factory_paths_follow_the_config) {
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":8},"method":"locc","factories":["../data/f.json"]})",
                                         "/a/configs");
    ASSERT_EQ(c.factories.size(), 1u);
    EXPECT_EQ(c.factories[0], "/a/data/f.json");
}

TEST(circuit_count, default_device_configurations) {
    auto base = R"({"graph":)" + kEagleGraph + R"(,"factories":[")" + factory_path(2) + R"("],"method":")";
    auto count = [&](const std::string &m) { return circuit_count(ExperimentConfig::from_json(base + m + "\"}")); };
    auto dropped = count("dropped_edge");
    EXPECT_EQ(dropped.groups, 7u);
    EXPECT_EQ(dropped.total(), 35u);
    auto lo = count("lo");
    EXPECT_EQ(lo.instances, 36u);
    EXPECT_EQ(lo.total(), 1260u);
    auto locc = count("locc");
    EXPECT_EQ(locc.instances, 27u);
    EXPECT_EQ(locc.zne, 5u);
    EXPECT_EQ(locc.total(), 4725u);
}

TEST(slot_plan, disjoint_cones_share_slots) {
    auto c = ExperimentConfig::from_json(R"({"graph":)" + kEagleGraph + R"(,"method":"lo"})");
    auto prog = graph_state_circuit(c.graph, c.method);
    std::vector<PauliString> obs;
    for (const auto &s : all_stabilizers(c.graph)) {
        obs.push_back(prog.place(s));
    }
    auto plan = plan_slots(prog.cc, obs);
    EXPECT_EQ(plan.size(), 36u);
    for (const auto &cone : plan.cones) {
        std::set<uint32_t> slots;
        for (size_t cut : cone) {
            EXPECT_TRUE(slots.insert(plan.slot_of_cut[cut]).second);
        }
    }
    std::set<std::vector<int>> seen;
    for (size_t i = 0; i < plan.size(); i++) {
        seen.insert(plan.choice(i, prog.cc));
    }
    EXPECT_EQ(seen.size(), plan.size());
}

TEST(run_experiment, native_noiseless_ring_is_ideal) {
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":8,"cuts":2},"seed":3})");
    auto r = run_experiment(c);
    for (const auto &n : r.report.nodes) {
        EXPECT_NEAR(n.value, 1, 1e-12);
    }
    for (const auto &e : r.report.edges) {
        EXPECT_NEAR(e.product.value, 1, 1e-12);
    }
    EXPECT_EQ(r.report.pass_fraction_w, 1);
    EXPECT_EQ(r.circuits_dispatched, r.count.total());
}

TEST(run_experiment, dispatched_circuits_match_the_count) {
    for (auto m : {"dropped_edge", "lo"}) {
        auto c = ExperimentConfig::from_json(std::string(R"({"graph":{"ring":6,"cuts":2},"shots":256,"method":")") +
                                             m + "\"}");
        auto r = run_experiment(c);
        EXPECT_EQ(r.circuits_dispatched, circuit_count(c).total()) << m;
    }
}

TEST(run_experiment, cut_adjacent_stabilizers_recover_with_locc) {
    auto noise = chain_noise(16, 0.02, 0.05);
    auto make = [&](const std::string &m) {
        return ExperimentConfig::from_json(R"({"graph":{"ring":6,"cuts":2},"seed":11,"method":")" + m +
                                           R"(","factories":[")" + factory_path(2) + R"("],"noise":)" + noise + "}");
    };
    auto dropped = run_experiment(make("dropped_edge"));
    auto locc = run_experiment(make("locc"));
    EXPECT_EQ(locc.circuits_dispatched, locc.count.total());
    auto star = Graph::ring(6, 2).cut_adjacent();
    size_t stars = 0;
    for (size_t i = 0; i < star.size(); i++) {
        if (!star[i]) {
            continue;
        }
        stars++;
        EXPECT_NEAR(dropped.report.nodes[i].value, 0, 0.15) << i;
        EXPECT_GT(locc.report.nodes[i].value, 0.7) << i;
        EXPECT_LT(std::abs(locc.report.nodes[i].value - 1), std::abs(dropped.report.nodes[i].value - 1)) << i;
    }
    EXPECT_GT(stars, 0u);
    EXPECT_LT(locc.report.sum_abs_node_error, dropped.report.sum_abs_node_error);
    EXPECT_GT(locc.report.pass_fraction_w, dropped.report.pass_fraction_w);
    EXPECT_FALSE(locc.zne.empty());
}

TEST(run_experiment, reports_are_byte_identical_for_a_seed) {
    auto text = R"({"graph":{"ring":6,"cuts":2},"method":"lo","shots":256,"noise":)" + chain_noise(6, 0.03, 0.0) +
                R"(,"seed":21)";
    auto c1 = ExperimentConfig::from_json(text + R"(,"threads":1})");
    auto c4 = ExperimentConfig::from_json(text + R"(,"threads":4})");
    auto a = run_experiment(c1).to_json();
    EXPECT_EQ(a, run_experiment(c1).to_json());
    EXPECT_EQ(a, run_experiment(c4).to_json());
    auto c2 = c1;
    c2.seed = 22;
    EXPECT_NE(a, run_experiment(c2).to_json());
}

TEST(run_experiment, report_carries_raw_values_and_series) {
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":6,"cuts":1},"method":"dropped_edge","shots":256,)"
                                         R"("noise":{"readout_error":[0.05,0.05,0.05,0.05,0.05,0.05]}})");
    auto j = run_experiment(c).to_json();
    for (auto key : {"\"raw\"", "\"node_error_cdf\"", "\"zne\"", "\"meta\"", "\"circuits\""}) {
        EXPECT_NE(j.find(key), std::string::npos) << key;
    }
}

TEST(run_experiment, sample_mode_is_unbiased_on_noiseless_lo) {
    auto c = ExperimentConfig::from_json(
        R"({"graph":{"ring":6,"cuts":2},"method":"lo","mode":"sample","shots":512,"trex":1,"seed":4})");
    auto r = run_experiment(c);
    for (const auto &n : r.report.nodes) {
        EXPECT_NEAR(n.value, 1, 5 * n.sigma + 1e-9);
        EXPECT_GT(n.sigma, 0);
    }
}

TEST(run_experiment, write_is_atomic) {
    auto dir = std::filesystem::temp_directory_path() / "qlink_runner_test";
    std::filesystem::create_directories(dir);
    auto out = (dir / "report.json").string();
    std::filesystem::remove(out);
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":4,"cuts":1},"shots":64})");
    c.out = out;
    run_and_write(c);
    EXPECT_TRUE(std::filesystem::exists(out));
    EXPECT_FALSE(std::filesystem::exists(out + ".partial"));
    std::filesystem::remove(out);
    c.method = GraphMethod::LOCC;
    c.factories = {(dir / "missing_factory.json").string()};
    EXPECT_ANY_THROW(run_and_write(c));
    EXPECT_FALSE(std::filesystem::exists(out));
    EXPECT_FALSE(std::filesystem::exists(out + ".partial"));
}

TEST(run_experiment, distributed_executor_matches_for_noiseless_ring) {
    auto [a0, b0] = make_channel_pair();
    auto [a1, b1] = make_channel_pair();
    std::thread w0([&] { serve_session(*b0, std::chrono::seconds(5)); });
    std::thread w1([&] { serve_session(*b1, std::chrono::seconds(5)); });
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":4,"cuts":1},"shots":64,"trex":2,"seed":1})");
    auto r = run_experiment(c, distributed_executor({a0.get(), a1.get()}, 1));
    a0->close();
    a1->close();
    w0.join();
    w1.join();
    for (const auto &n : r.report.nodes) {
        EXPECT_NEAR(n.value, 1, 1e-12);
    }
}

TEST(pipeline, stages_only_compose_in_order) {
    static_assert(std::is_invocable_v<decltype(&resample_mixture), const std::vector<MixtureTerm> &, double,
                                      uint32_t, uint64_t>);
    static_assert(!std::is_convertible_v<MergedCounts, MixtureEstimate>);
    static_assert(!std::is_convertible_v<MixtureEstimate, Extrapolated>);
    static_assert(!std::is_invocable_v<decltype(&trex_correct), const MergedCounts &, double, double>);
    static_assert(!std::is_invocable_v<decltype(&zne_finish), const std::vector<std::pair<double, MixtureEstimate>> &>);

    Counts counts;
    counts.num_clbits = 1;
    counts.shots = 100;
    counts.hist = {{0, 75}, {1, 25}};
    auto merged = merge_twirled({counts}, {0});
    auto mix = resample_mixture({{1.0, &merged, 1}}, 1.0, 4, 0);
    EXPECT_NEAR(mix.value(), 0.5, 1e-12);
    auto corrected = trex_correct(mix, 0.5);
    EXPECT_NEAR(corrected.value(), 1.0, 1e-12);
    auto fin = zne_finish({{1.0, corrected}});
    EXPECT_NEAR(fin.value(), 1.0, 1e-12);
}

TEST(cost_model, recovers_brute_force_minimizer) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; trial++) {
        CostModel truth;
        truth.compile = {0.5 + u(rng), 0.1 * u(rng), 0.05 * u(rng)};
        truth.t0 = 0.1 + 5 * u(rng);
        truth.t1 = 0.01 * u(rng);
        truth.parameter_sets = 20 + rng() % 200;
        std::vector<Timing> timings;
        for (uint64_t m : {1, 2, 4, 8, 16}) {
            timings.push_back({m, truth.compile_time(m), truth.execute_time(m)});
        }
        auto fit = fit_cost_model(timings, truth.parameter_sets);
        uint64_t best = 1;
        for (uint64_t m = 2; m <= truth.parameter_sets; m++) {
            if (truth.total_time(m) < truth.total_time(best)) {
                best = m;
            }
        }
        EXPECT_EQ(fit.m_star, best) << trial;
        for (uint64_t m = 1; m <= 16; m++) {
            EXPECT_GE(fit.model.total_time(m), 0);
        }
    }
}

TEST(cost_model, no_call_overhead_means_one_copy) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; trial++) {
        CostModel truth;
        truth.compile = {u(rng), 0.01 + u(rng), 0.01 * u(rng)};
        truth.t1 = u(rng);
        truth.parameter_sets = 1 + rng() % 300;
        std::vector<Timing> timings;
        for (uint64_t m : {1, 3, 5, 7}) {
            timings.push_back({m, truth.compile_time(m), truth.execute_time(m)});
        }
        EXPECT_EQ(fit_cost_model(timings, truth.parameter_sets).m_star, 1u) << trial;
    }
}

TEST(cost_model, errors) {
    std::vector<Timing> three{{1, 1, 1}, {2, 1, 1}, {3, 1, 1}, {3, 1, 1}};
    EXPECT_THROW(fit_cost_model(three, 10), ConfigError);
    std::vector<Timing> four{{1, 1, 1}, {2, 1, 1}, {3, 1, 1}, {4, 1, 1}};
    EXPECT_NO_THROW(fit_cost_model(four, 10));
    EXPECT_THROW(fit_cost_model(four, 0), ConfigError);
    std::vector<Timing> zero{{0, 1, 1}, {2, 1, 1}, {3, 1, 1}, {4, 1, 1}};
    EXPECT_THROW(fit_cost_model(zero, 10), ConfigError);
}

TEST(validate_qpd, lo_and_factories_pass) {
    auto lo = validate_qpd(CutProtocol::LO, VirtualGate::CZ, 1, 1e-9);
    EXPECT_TRUE(lo.pass()) << lo.to_text();
    EXPECT_EQ(lo.gamma, 3);
    auto k1 = validate_qpd(CutProtocol::LOCC, VirtualGate::CZ, 1, 1e-7);
    EXPECT_TRUE(k1.pass()) << k1.to_text();
    EXPECT_EQ(k1.size, 5u);
    auto f2 = load_factory(factory_path(2));
    auto k2 = validate_qpd(CutProtocol::LOCC, VirtualGate::CNOT, 2, 1e-6, &f2);
    EXPECT_TRUE(k2.pass()) << k2.to_text();
    EXPECT_EQ(k2.gamma, 7);
    EXPECT_EQ(k2.size, 27u);
}

TEST(validate_qpd, failures_are_report_content) {
    auto r = validate_qpd(CutProtocol::LO, VirtualGate::CZ, 1, 0);
    EXPECT_FALSE(r.pass());
    EXPECT_NE(r.to_text().find("FAIL"), std::string::npos);
    auto f2 = load_factory(factory_path(2));
    f2.coeffs[0] += 0.01;
    auto bad = validate_qpd(CutProtocol::LOCC, VirtualGate::CZ, 2, 1e-6, &f2);
    EXPECT_FALSE(bad.pass());
}

TEST(bell_benchmark, chains_are_simple_paths) {
    auto chains = four_chains(CouplingMap::line(6));
    EXPECT_EQ(chains.size(), 3u);
    auto ring = four_chains(CouplingMap::ring(5));
    EXPECT_EQ(ring.size(), 5u);
    for (const auto &c : ring) {
        EXPECT_LT(c[0], c[3]);
    }
    EXPECT_THROW(bell_benchmark(CouplingMap::line(3), {}, 100), ConfigError);
}

TEST(bell_benchmark, noiseless_chains_are_ideal) {
    for (const auto &s : bell_benchmark(CouplingMap::ring(6), {}, 4096, 1)) {
        EXPECT_NEAR(s.mse, 0, 1e-12);
    }
}

TEST(bell_benchmark, uniform_noise_gives_equal_scores) {
    auto noise = NoiseModel::uniform_readout(8, 0.03);
    auto scores = bell_benchmark(CouplingMap::line(8), noise, 1 << 16, 2);
    double lo = 1, hi = 0;
    for (const auto &s : scores) {
        lo = std::min(lo, s.mse);
        hi = std::max(hi, s.mse);
    }
    EXPECT_GT(lo, 0);
    EXPECT_LT(hi - lo, 0.25 * hi);
}

TEST(bell_benchmark, bad_qubit_ranks_last) {
    auto noise = NoiseModel::uniform_readout(8, 0.01);
    noise.readout_error[5] = 0.1;
    auto scores = bell_benchmark(CouplingMap::line(8), noise, 1 << 14, 3);
    bool seen_bad = false;
    for (const auto &s : scores) {
        bool bad = std::find(s.chain.begin(), s.chain.end(), 5u) != s.chain.end();
        if (seen_bad) {
            EXPECT_TRUE(bad);
        }
        seen_bad = seen_bad || bad;
    }
    EXPECT_TRUE(seen_bad);
}
