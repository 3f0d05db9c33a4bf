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

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "../test_util.h"
#include "qlink/errors.h"
#include "qlink/gate_cutting.h"
#include "qlink/graph_state.h"
#include "qlink/link.h"
#include "qlink/mitigation.h"
#include "qlink/qpd.h"
#include "qlink/runner.h"

using namespace qlink;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char *f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

std::string data_file(const std::string &name) {
    return std::string(QLINK_DATA_DIR) + "/" + name;
}

const std::string kEagleGraph = R"({"device":"eagle","long_range":[[1,126],[2,123],[6,116],[7,113]]})";

std::vector<PauliString> placed(const Graph &g, const GraphStateProgram &prog) {
    std::vector<PauliString> out;
    for (const auto &s : all_stabilizers(g)) {
        out.push_back(prog.place(s));
    }
    return out;
}

/// Sum over every member tuple of coeff times the instance expectation, after `transform`.
std::vector<double> recombined(const CutCircuit &cc, const std::vector<PauliString> &obs, const NoiseModel &noise,
                               const std::function<Circuit(const Circuit &)> &transform) {
    std::vector<size_t> all(cc.cuts.size());
    for (size_t i = 0; i < all.size(); i++) {
        all[i] = i;
    }
    std::vector<double> out(obs.size(), 0);
    for (const auto &choice : enumerate_choices(cc, all)) {
        auto inst = instantiate(cc, choice);
        std::vector<Observable> o;
        for (const auto &p : obs) {
            o.emplace_back(p, inst.sign_clbits);
        }
        auto v = exact_expectations(transform(inst.circuit), o, noise);
        for (size_t i = 0; i < obs.size(); i++) {
            out[i] += inst.coeff * v[i];
        }
    }
    return out;
}

Outcome lo_exactness() {
    auto t = Clock::now();
    std::mt19937_64 rng(1001);
    double worst = 0;
    for (int i = 0; i < 100; i++) {
        auto input = testgen::random_unitary_circuit(2, 12, rng);
        Circuit after(2);
        testgen::random_local_layer(after, {0, 1}, rng);
        auto obs = testgen::random_pauli(2, rng);
        auto got = estimate(lo_cz_qpd(), input, after, obs, exact_backend(), EstimatorMode::Enumerate, 0, i);
        Circuit uncut = input;
        uncut.cz(0, 1);
        for (const auto &inst : after.instructions) {
            uncut.instructions.push_back(inst);
        }
        double want = final_density_matrix(uncut).expectation(obs);
        worst = std::max(worst, std::abs(got.value - want));
    }
    double s = seconds_since(t);
    return {worst < 1e-9 && s < 10, "max|d|=" + fmt("%.2e", worst) + " over 100 instances in " + fmt("%.2fs", s)};
}

Outcome factory_constants() {
    bool ok = true;
    std::string d;
    const uint64_t sizes[] = {5, 27, 311};
    const double gammas[] = {3, 7, 15};
    for (uint32_t k = 1; k <= 3; k++) {
        ok = ok && factory_size(k) == sizes[k - 1] && factory_gamma(k) == gammas[k - 1];
        d += "k=" + std::to_string(k) + " I=" + std::to_string(factory_size(k)) + " g=" + fmt("%g", factory_gamma(k)) +
             "; ";
    }
    for (uint32_t k : {2u, 3u}) {
        auto f = load_factory(data_file("factory_k" + std::to_string(k) + ".json"));
        ok = ok && f.size() == sizes[k - 1] && std::abs(f.gamma() - gammas[k - 1]) < 1e-9;
    }
    auto f1 = build_factory(1, 0);
    ok = ok && f1.size() == 5 && std::abs(f1.gamma() - 3) < 1e-12;
    return {ok, d + "stored factories agree"};
}

Outcome factory_reconstruction() {
    auto f1 = build_factory(1, 0);
    double e1 = factory_density(f1).frobenius_distance(bell_projector(1));
    auto t = Clock::now();
    auto f2 = build_factory(2, 0);
    double s2 = seconds_since(t);
    double e2 = factory_density(f2).frobenius_distance(bell_projector(2));
    double schmidt = 0;
    for (const auto *f : {&f1, &f2}) {
        for (size_t i = 0; i < f->size(); i++) {
            schmidt = std::max(schmidt, schmidt_residual(final_state(f->member(i)), f->k));
        }
    }
    auto f3 = load_factory(data_file("factory_k3.json"));
    for (size_t i = 0; i < f3.size(); i++) {
        schmidt = std::max(schmidt, schmidt_residual(final_state(f3.member(i)), 3));
    }
    bool ok = e1 < 1e-7 && e2 < 1e-6 && schmidt < 1e-8 && s2 < 600;
    return {ok, "k1 frob=" + fmt("%.2e", e1) + " k2 frob=" + fmt("%.2e", e2) + " (built in " + fmt("%.2fs", s2) +
                    ") max schmidt=" + fmt("%.2e", schmidt)};
}

Outcome locc_end_to_end() {
    auto g = Graph::ring(12, 2);
    GraphStateOptions opt;
    opt.factories = {load_factory(data_file("factory_k2.json"))};
    auto prog = graph_state_circuit(g, GraphMethod::LOCC, {}, opt);
    double worst = 0;
    for (double v : exact_cut_expectations(prog.cc, placed(g, prog))) {
        worst = std::max(worst, std::abs(v - 1));
    }
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":12,"cuts":2},"method":"locc","shots":100000,"seed":12,)"
                                         R"("factories":[")" +
                                         data_file("factory_k2.json") + R"("]})");
    auto t = Clock::now();
    auto r = run_experiment(c);
    size_t passing = 0;
    for (const auto &e : r.report.edges) {
        passing += e.pass_w ? 1 : 0;
    }
    bool ok = worst < 1e-5 && passing == r.report.edges.size();
    return {ok, "oracle max|s-1|=" + fmt("%.2e", worst) + " sampled edges passing " + std::to_string(passing) + "/" +
                    std::to_string(r.report.edges.size()) + " (" + fmt("%.1fs", seconds_since(t)) + ")"};
}

Outcome overhead_constants() {
    std::string d;
    bool ok = true;
    const std::pair<const char *, double> want[] = {{"dropped_edge", 1}, {"swap", 1}, {"lo", 81}, {"locc", 49}};
    for (const auto &[m, expected] : want) {
        auto c = ExperimentConfig::from_json(R"({"graph":)" + kEagleGraph + R"(,"method":")" + m +
                                             R"(","factories":[")" + data_file("factory_k2.json") + R"("]})");
        GraphStateOptions opt;
        opt.factories = {load_factory(data_file("factory_k2.json"))};
        auto prog = graph_state_circuit(c.graph, c.method, c.map, opt);
        double worst = 1;
        for (const auto &s : placed(c.graph, prog)) {
            std::vector<double> g;
            for (size_t cut : light_cone_reduce(prog.cc, s.support())) {
                g.push_back(prog.cc.cuts[cut].qpd.gamma());
            }
            worst = std::max(worst, sampling_overhead(g, std::vector<uint32_t>(g.size(), 1)));
        }
        ok = ok && std::abs(worst - expected) < 1e-9;
        d += std::string(m) + "=" + fmt("%g", worst) + " ";
    }
    double cost = enumeration_cost(load_factory(data_file("factory_k2.json")).qpd());
    double rel = std::abs(cost / (49 * 1.001) - 1);
    ok = ok && rel < 1e-4;
    return {ok, d + "enumeration_cost=" + fmt("%.4f", cost) + " rel=" + fmt("%.1e", rel)};
}

Outcome variance_ratio_check() {
    auto c = ExperimentConfig::from_json(
        R"({"graph":{"nodes":8,"edges":[[0,1],[1,2],[2,3],[3,0],[4,5],[5,6],[6,7],[7,4]],)"
        R"("cut_edges":[[1,2],[3,0],[5,6],[7,4]]},"method":"lo","seed":6,"factories":[")" +
        data_file("factory_k2.json") + R"("]})");
    auto t = Clock::now();
    auto r = variance_ratio(c, 1000000);
    double s = seconds_since(t);
    bool ok = r.ratio >= 1.35 && r.ratio <= 1.95 && s < 300;
    return {ok, "ratio=" + fmt("%.4f", r.ratio) + " ci95=[" + fmt("%.4f", r.ci_low) + "," + fmt("%.4f", r.ci_high) +
                    "] draws=" + std::to_string(r.draws) + " (" + fmt("%.1fs", s) + ")"};
}

Outcome mitigation_checks() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(0, 1);

    auto g = Graph::ring(6, 1);
    GraphStateOptions opt;
    opt.pairs_per_gate = 1;
    auto prog = graph_state_circuit(g, GraphMethod::LOCC, {}, opt);
    auto obs = placed(g, prog);
    const uint32_t nq = prog.cc.base.num_qubits;
    auto ideal = exact_cut_expectations(prog.cc, obs);

    NoiseModel zz;
    for (uint32_t q = 0; q + 1 < nq; q++) {
        zz.zz.push_back({q, q + 1, 0.2 + 1.3 * u(rng)});
    }
    const double tau = 1;
    zz.switch_latency_tau = tau;
    auto with_dd = recombined(prog.cc, obs, zz, [&](const Circuit &c) { return insert_dd(c, tau, 0, zz.zz); });
    auto bare = recombined(prog.cc, obs, zz, [](const Circuit &c) { return c; });
    double dd_bias = 0, bare_bias = 0;
    for (size_t i = 0; i < obs.size(); i++) {
        dd_bias = std::max(dd_bias, std::abs(with_dd[i] - ideal[i]));
        bare_bias = std::max(bare_bias, std::abs(bare[i] - ideal[i]));
    }
    bool a = dd_bias < 1e-9;

    auto star = g.cut_adjacent();
    ZneSchedule zne;
    int improved = 0;
    for (int k = 0; k < 20; k++) {
        NoiseModel t1;
        for (uint32_t q = 0; q < nq; q++) {
            t1.t1_rate.push_back(std::exp(std::log(1e-3) + u(rng) * (std::log(5e-2) - std::log(1e-3))));
        }
        t1.switch_latency_tau = tau;
        std::vector<std::vector<double>> series;
        for (size_t z = 0; z < zne.factors.size(); z++) {
            series.push_back(recombined(prog.cc, obs, t1, [&](const Circuit &c) {
                return stretch_switch(c, tau, zne.delta(z, tau));
            }));
        }
        double err0 = 0, err1 = 0;
        for (uint32_t i = 0; i < g.num_nodes; i++) {
            if (!star[i]) {
                continue;
            }
            std::vector<ZnePoint> pts;
            for (size_t z = 0; z < zne.factors.size(); z++) {
                pts.push_back({zne.factors[z], series[z][i], 0});
            }
            err0 += std::abs(zne_extrapolate(pts).value - ideal[i]);
            err1 += std::abs(series[0][i] - ideal[i]);
        }
        improved += err0 < 0.5 * err1 ? 1 : 0;
    }
    bool b = improved >= 18;

    double worst_bias = 0;
    for (double r : {0.01, 0.03, 0.05}) {
        auto c = ExperimentConfig::from_json(R"({"graph":{"ring":8,"cuts":1},"shots":200000,"seed":)" +
                                             std::to_string(static_cast<int>(r * 100)) +
                                             R"(,"noise":{"readout_error":[)" + fmt("%g", r) + "," + fmt("%g", r) +
                                             "," + fmt("%g", r) + "," + fmt("%g", r) + "," + fmt("%g", r) + "," +
                                             fmt("%g", r) + "," + fmt("%g", r) + "," + fmt("%g", r) + "]}}");
        auto rep = run_experiment(c).report;
        double sum = 0;
        size_t n = 0;
        for (const auto &e : rep.nodes) {
            sum += e.value - 1;
            n++;
        }
        for (const auto &e : rep.edges) {
            sum += e.product.value - 1;
            n++;
        }
        worst_bias = std::max(worst_bias, std::abs(sum / static_cast<double>(n)));
    }
    auto pc = ExperimentConfig::from_json(
        R"({"graph":{"ring":8,"cuts":1},"shots":100000,"seed":3,"trex_prep_error":0.03,)"
        R"("noise":{"readout_error":[0.02,0.02,0.02,0.02,0.02,0.02,0.02,0.02]}})");
    auto prep = run_experiment(pc).report;
    size_t above = 0;
    for (const auto &e : prep.nodes) {
        above += e.value > 1 ? 1 : 0;
    }
    bool c = worst_bias < 1e-3 && above >= 1;

    return {a && b && c, std::string("(a) dd bias=") + fmt("%.1e", dd_bias) + " bare=" + fmt("%.1e", bare_bias) +
                             " (b) zne improved " + std::to_string(improved) + "/20 (c) trex bias=" +
                             fmt("%.1e", worst_bias) + " prep-error stabilizers>1: " + std::to_string(above)};
}

NoiseModel random_link_noise(uint32_t n, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0, 1);
    NoiseModel noise;
    for (uint32_t q = 0; q < n; q++) {
        noise.readout_error.push_back(0.05 * u(rng));
        noise.prep_error.push_back(0.02 * u(rng));
        noise.t1_rate.push_back(0.05 * u(rng));
        noise.t2_rate.push_back(0.05 * u(rng));
        noise.z_rate.push_back(u(rng) - 0.5);
    }
    for (uint32_t q = 0; q + 1 < n; q++) {
        noise.zz.push_back({q, q + 1, u(rng)});
    }
    noise.twoq_depol = 0.02 * u(rng);
    return noise;
}

Outcome distributed_equivalence() {
    auto t = Clock::now();
    SocketListener l0("127.0.0.1", 0), l1("127.0.0.1", 0);
    std::vector<pid_t> kids;
    for (auto *l : {&l0, &l1}) {
        pid_t pid = fork();
        if (pid < 0) {
            return {false, "fork failed"};
        }
        if (pid == 0) {
            int rc = 0;
            try {
                auto ch = l->accept(std::chrono::seconds(60));
                serve_session(*ch, std::chrono::seconds(60));
            } catch (const std::exception &) {
                rc = 1;
            }
            std::fflush(nullptr);
            _exit(rc);
        }
        kids.push_back(pid);
    }
    size_t same = 0;
    std::string error;
    try {
        auto a = SocketChannel::connect("127.0.0.1", l0.port());
        auto b = SocketChannel::connect("127.0.0.1", l1.port());
        std::mt19937_64 rng(2024);
        for (int i = 0; i < 50; i++) {
            uint32_t n = 2 + static_cast<uint32_t>(rng() % 9);
            std::vector<uint32_t> qpu_of;
            auto c = testgen::random_partitioned_circuit(n, 30, rng, qpu_of);
            auto noise = random_link_noise(n, rng);
            auto p = partition(c, qpu_of, 0.5);
            LinkOptions opt;
            opt.batch = 1 + rng() % 64;
            auto remote = run_distributed(p, 400, noise, i, {a.get(), b.get()}, opt);
            same += remote == run_shots(c, link_noise(noise, p), 400, i) ? 1 : 0;
        }
        a->close();
        b->close();
    } catch (const std::exception &e) {
        error = e.what();
    }
    bool children_ok = true;
    for (pid_t pid : kids) {
        int status = 0;
        waitpid(pid, &status, 0);
        children_ok = children_ok && WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }
    double s = seconds_since(t);

    Circuit chain(2, 2);
    chain.h(0).measure(0, 0);
    chain.switch_on({0}, {{}, {Gate{GateKind::X, {1, 0}, {}}}});
    chain.measure(1, 1);
    chain.switch_on({1}, {{}, {Gate{GateKind::Z, {0, 0}, {}}}});
    auto p = partition(chain, std::vector<uint32_t>{0, 1}, 1);
    LinkOptions opt;
    opt.batch = 2;
    std::array<std::vector<std::string>, 2> tr;
    run_distributed_in_process(p, 3, NoiseModel::uniform_readout(2, 0.1), 42, opt, 0, &tr);
    std::ostringstream got;
    bool round_trip = true;
    for (int w = 0; w < 2; w++) {
        got << "# worker " << w << "\n";
        for (const auto &line : tr[w]) {
            got << line << "\n";
            round_trip = round_trip && LinkMessage::decode(line.substr(2)).encode() == line.substr(2);
        }
    }
    std::ifstream in(data_file("golden_transcript.txt"));
    std::stringstream want;
    want << in.rdbuf();
    bool golden = in && got.str() == want.str();

    bool ok = error.empty() && same == 50 && children_ok && s < 300 && golden && round_trip;
    std::string d = "identical " + std::to_string(same) + "/50 in " + fmt("%.1fs", s) +
                    (children_ok ? " workers exited cleanly" : " worker failure") +
                    (golden && round_trip ? ", golden transcript matches" : ", golden transcript differs");
    if (!error.empty()) {
        d += " error: " + error;
    }
    return {ok, d};
}

Outcome counting() {
    auto base = R"({"graph":)" + kEagleGraph + R"(,"factories":[")" + data_file("factory_k2.json") + R"("],"method":")";
    size_t n[3];
    const char *methods[] = {"dropped_edge", "lo", "locc"};
    for (int i = 0; i < 3; i++) {
        n[i] = circuit_count(ExperimentConfig::from_json(base + methods[i] + "\"}")).total();
    }
    bool ok = n[0] == 35 && n[1] == 1260 && n[2] == 4725;
    return {ok, std::to_string(n[0]) + " / " + std::to_string(n[1]) + " / " + std::to_string(n[2])};
}

Outcome cost_model() {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    int match = 0, ones = 0;
    for (int trial = 0; trial < 50; trial++) {
        CostModel truth;
        truth.compile = {0.5 + u(rng), 0.2 * u(rng), 0.05 * u(rng)};
        truth.t0 = 0.05 + 5 * u(rng);
        truth.t1 = 0.02 * u(rng);
        truth.parameter_sets = 10 + rng() % 500;
        std::vector<Timing> timings;
        for (uint64_t m : {1, 2, 3, 5, 8, 13}) {
            timings.push_back({m, truth.compile_time(m), truth.execute_time(m)});
        }
        uint64_t best = 1;
        for (uint64_t m = 2; m <= truth.parameter_sets; m++) {
            if (truth.total_time(m) < truth.total_time(best)) {
                best = m;
            }
        }
        match += fit_cost_model(timings, truth.parameter_sets).m_star == best ? 1 : 0;

        truth.t0 = 0;
        timings.clear();
        for (uint64_t m : {1, 2, 3, 5, 8, 13}) {
            timings.push_back({m, truth.compile_time(m), truth.execute_time(m)});
        }
        ones += fit_cost_model(timings, truth.parameter_sets).m_star == 1 ? 1 : 0;
    }
    return {match == 50 && ones == 50,
            "brute-force matches " + std::to_string(match) + "/50, t0=0 gives m*=1 in " + std::to_string(ones) + "/50"};
}

Outcome witness_soundness() {
    std::mt19937_64 rng(4242);
    auto g = Graph::path(4);
    auto si = node_stabilizer(g, 1), sj = node_stabilizer(g, 2), sij = edge_stabilizer(g, 1, 2);
    double worst = 1;
    for (int t = 0; t < 10000; t++) {
        Circuit c(4);
        testgen::random_local_layer(c, {0, 1, 2, 3}, rng);
        auto s = final_state(c);
        worst = std::min(worst, witness(s.expectation(si), s.expectation(sj), s.expectation(sij)));
    }
    bool edge_pass = entanglement_test(-0.0917, 0.0146, WitnessVariant::W);
    bool edge_fail = !entanglement_test(-0.0917, 0.04, WitnessVariant::W);
    return {worst >= -1e-10 && edge_pass && edge_fail,
            "min W=" + fmt("%.3e", worst) + " over 10^4 product states; (-0.0917, 0.0146) " +
                (edge_pass ? "passes" : "fails") + ", (-0.0917, 0.04) " + (edge_fail ? "fails" : "passes")};
}

}  // namespace

int main() {
    const std::pair<const char *, std::function<Outcome()>> criteria[] = {
        {"lo-exactness", lo_exactness},
        {"factory-constants", factory_constants},
        {"factory-reconstruction", factory_reconstruction},
        {"locc-end-to-end", locc_end_to_end},
        {"overhead-constants", overhead_constants},
        {"variance-ratio", variance_ratio_check},
        {"mitigation", mitigation_checks},
        {"distributed-equivalence", distributed_equivalence},
        {"circuit-count", counting},
        {"cost-model", cost_model},
        {"witness-soundness", witness_soundness},
    };
    int failed = 0, index = 0;
    for (const auto &[name, run] : criteria) {
        index++;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
