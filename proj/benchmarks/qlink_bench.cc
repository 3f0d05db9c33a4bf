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

#include <benchmark/benchmark.h>

#include <random>

#include "qlink/gate_cutting.h"
#include "qlink/graph_state.h"
#include "qlink/link.h"
#include "qlink/runner.h"
#include "qlink/sim.h"

using namespace qlink;

static void BM_apply_1q(benchmark::State &state) {
    const auto n = static_cast<uint32_t>(state.range(0));
    StateVector psi(n);
    auto m = single_qubit_matrix(GateKind::U2, 0.3, 1.1);
    uint32_t q = 0;
    for (auto _ : state) {
        psi.apply_1q(q, m);
        q = (q + 1) % n;
        benchmark::DoNotOptimize(psi.amps().data());
    }
    state.SetItemsProcessed(state.iterations() * (int64_t{1} << n));
}
BENCHMARK(BM_apply_1q)->Arg(10)->Arg(16)->Arg(20);

static void BM_idle_phase(benchmark::State &state) {
    const auto n = static_cast<uint32_t>(state.range(0));
    NoiseModel noise;
    std::vector<uint32_t> qubits;
    for (uint32_t q = 0; q < n; q++) {
        qubits.push_back(q);
        if (q + 1 < n) {
            noise.zz.push_back({q, q + 1, 0.05});
        }
    }
    StateVector psi(n);
    for (auto _ : state) {
        psi.apply_idle_phase(qubits, noise, 1.0);
        benchmark::DoNotOptimize(psi.amps().data());
    }
}
BENCHMARK(BM_idle_phase)->Arg(12)->Arg(16);

static void BM_graph_state_distribution(benchmark::State &state) {
    auto g = Graph::ring(static_cast<uint32_t>(state.range(0)), 1);
    auto prog = graph_state_circuit(g, GraphMethod::Native);
    Circuit c = prog.cc.base;
    std::vector<uint32_t> qubits;
    for (uint32_t q = 0; q < c.num_qubits; q++) {
        qubits.push_back(q);
    }
    c.num_clbits = c.num_qubits;
    for (uint32_t q = 0; q < c.num_qubits; q++) {
        c.measure(q, q);
    }
    auto noise = NoiseModel::uniform_readout(c.num_qubits, 0.02);
    for (auto _ : state) {
        benchmark::DoNotOptimize(outcome_distribution(c, noise));
    }
}
BENCHMARK(BM_graph_state_distribution)->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

static void BM_run_shots(benchmark::State &state) {
    Circuit c(4, 4);
    c.h(0).cx(0, 1).h(2).cx(2, 3);
    for (uint32_t q = 0; q < 4; q++) {
        c.measure(q, q);
    }
    auto noise = NoiseModel::uniform_readout(4, 0.02);
    noise.t1_rate.assign(4, 0.01);
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_shots(c, noise, 1024, 1));
    }
    state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_run_shots)->Unit(benchmark::kMillisecond);

static void BM_factory_k2(benchmark::State &state) {
    FactoryOptions o;
    o.restarts = 4;
    uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_factory(2, seed++, o));
    }
}
BENCHMARK(BM_factory_k2)->Unit(benchmark::kMillisecond)->Iterations(3);

static void BM_lo_cz_exact(benchmark::State &state) {
    Circuit input(2);
    input.h(0).u2(1, 0.4, 1.3);
    auto obs = PauliString::parse("X0 Z1");
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            estimate(lo_cz_qpd(), input, Circuit(2), obs, exact_backend(), EstimatorMode::Enumerate, 0, 0));
    }
}
BENCHMARK(BM_lo_cz_exact);

static void BM_link_in_process(benchmark::State &state) {
    Circuit c(4, 2);
    c.h(0).h(1).cz(0, 1).h(2).h(3).cz(2, 3).measure(1, 0).measure(2, 1);
    auto p = partition(c, std::vector<uint32_t>{0, 0, 1, 1});
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_distributed_in_process(p, 256, {}, 1));
    }
    state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_link_in_process)->Unit(benchmark::kMillisecond);

static void BM_experiment_ring6_lo(benchmark::State &state) {
    auto c = ExperimentConfig::from_json(R"({"graph":{"ring":6,"cuts":2},"method":"lo","shots":256,"threads":1})");
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_experiment(c));
    }
}
BENCHMARK(BM_experiment_ring6_lo)->Unit(benchmark::kMillisecond)->Iterations(2);

BENCHMARK_MAIN();
