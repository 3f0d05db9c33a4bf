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

#include "qlink/circuit.h"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "qlink/errors.h"
#include "qlink/sim.h"
#include "test_util.h"

using namespace qlink;
using std::numbers::pi;

namespace {

double unitary_distance(const Mat2 &a, const Mat2 &b) {
    // Distance up to global phase.
    cplx ip = 0;
    for (int i = 0; i < 4; i++) {
        ip += std::conj(a[i]) * b[i];
    }
    cplx phase = std::abs(ip) > 0 ? ip / std::abs(ip) : 1.0;
    double d = 0;
    for (int i = 0; i < 4; i++) {
        d = std::max(d, std::abs(a[i] * phase - b[i]));
    }
    return d;
}

Circuit c1_template() {
    Circuit c(2);
    auto t0 = c.add_parameter("t0"), p0 = c.add_parameter("p0");
    auto t1 = c.add_parameter("t1"), p1 = c.add_parameter("p1");
    c.u2(0, t0, p0);
    c.u2(1, t1, p1);
    return c;
}

}  // namespace

TEST(gate, u2_zero_is_x) {
    auto u = single_qubit_matrix(GateKind::U2, 0, 0);
    auto x = single_qubit_matrix(GateKind::X);
    for (int i = 0; i < 4; i++) {
        EXPECT_NEAR(std::abs(u[i] - x[i]), 0, 1e-12);
    }
}

TEST(gate, u2_matches_sequence) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; t++) {
        double a = testgen::uniform_angle(rng), b = testgen::uniform_angle(rng);
        auto sx = single_qubit_matrix(GateKind::SqrtX);
        auto seq = matmul(single_qubit_matrix(GateKind::Rz, b), matmul(sx, matmul(single_qubit_matrix(GateKind::Rz, a), sx)));
        EXPECT_LT(unitary_distance(seq, single_qubit_matrix(GateKind::U2, a, b)), 1e-12);
    }
}

TEST(gate, sqrt_x_squared_is_x) {
    auto sx = single_qubit_matrix(GateKind::SqrtX);
    EXPECT_LT(unitary_distance(matmul(sx, sx), single_qubit_matrix(GateKind::X)), 1e-12);
}

TEST(gate, names_round_trip) {
    for (auto k : {GateKind::H, GateKind::X, GateKind::Z, GateKind::SqrtX, GateKind::Rz, GateKind::CZ, GateKind::CNOT,
                   GateKind::SWAP, GateKind::U2}) {
        EXPECT_EQ(gate_from_name(gate_name(k)), k);
    }
    EXPECT_THROW(gate_from_name("FOO"), ParseError);
}

TEST(circuit, angles_stored_verbatim) {
    Circuit c(1);
    c.rz(0, 7.5 * pi);
    EXPECT_EQ(c.instructions[0].as<Gate>().angles[0].value, 7.5 * pi);
    Circuit bad(1);
    bad.rz(0, std::nan(""));
    EXPECT_THROW(validate(bad), CircuitError);
}

TEST(circuit, bind_parameters) {
    auto t = c1_template();
    EXPECT_FALSE(t.is_bound());
    auto b = bind_parameters(t, {0, 0, 0, 0});
    EXPECT_TRUE(b.is_bound());
    EXPECT_FALSE(t.is_bound());
    auto s = final_state(b);
    EXPECT_NEAR(std::abs(s.amps()[3]), 1, 1e-12);
    EXPECT_THROW(bind_parameters(t, {1, 2}), ParameterArityError);
}

TEST(circuit, bind_first_k1_member) {
    auto b = bind_parameters(c1_template(), {pi / 2, 0, pi / 2, 0});
    EXPECT_EQ(b.instructions[0].as<Gate>().angles[0].value, pi / 2);
    EXPECT_EQ(b.instructions[1].as<Gate>().angles[1].value, 0);
    EXPECT_EQ(b.instructions.size(), 2u);
}

TEST(circuit, bind_preserves_structure) {
    std::mt19937_64 rng(5);
    auto t = c1_template();
    for (int i = 0; i < 10; i++) {
        auto b = bind_parameters(t, {testgen::uniform_angle(rng), 1, 2, 3});
        ASSERT_EQ(b.instructions.size(), t.instructions.size());
        for (size_t j = 0; j < b.instructions.size(); j++) {
            EXPECT_EQ(b.instructions[j].as<Gate>().kind, t.instructions[j].as<Gate>().kind);
            EXPECT_EQ(b.instructions[j].as<Gate>().qubits, t.instructions[j].as<Gate>().qubits);
        }
    }
}

TEST(circuit, validate_switch_shape) {
    Circuit c(1, 2);
    c.measure(0, 0).measure(0, 1);
    Circuit wrong = c;
    wrong.switch_on({0, 1}, {{}, {}});
    EXPECT_THROW(validate(wrong), CircuitError);
    c.switch_on({0, 1}, {{}, {}, {}, {}});
    EXPECT_NO_THROW(validate(c));
    Circuit bad(2, 1);
    bad.measure(0, 0);
    bad.switch_on({0}, {{}, {Gate{GateKind::CZ, {0, 1}, {}}}});
    EXPECT_THROW(validate(bad), CircuitError);
}

TEST(circuit, validate_read_before_write) {
    Circuit c(1, 1);
    c.switch_on({0}, {{}, {}});
    EXPECT_THROW(validate(c), CircuitError);
    c.instructions.back().as<Switch>().remote = true;
    EXPECT_NO_THROW(validate(c));
}

TEST(circuit, validate_bounds) {
    for (int k = 0; k < 3; k++) {
        Circuit c(2);
        if (k == 0) {
            c.h(2);
        } else if (k == 1) {
            c.measure(0, 0);
        } else {
            c.cz(1, 1);
        }
        EXPECT_THROW(validate(c), CircuitError);
    }
}

TEST(circuit, switch_selects_little_endian_case) {
    for (uint32_t v = 0; v < 4; v++) {
        Circuit c(3, 2);
        if (v & 1) {
            c.x(0);
        }
        if (v & 2) {
            c.x(1);
        }
        c.measure(0, 0).measure(1, 1);
        std::vector<std::vector<Instruction>> cases(4);
        cases[v].push_back(Gate{GateKind::X, {2, 0}, {}});
        c.switch_on({0, 1}, cases);
        auto d = outcome_distribution(c);
        ASSERT_EQ(d.probs.size(), 1u);
        EXPECT_EQ(d.probs.begin()->first, v);
        Circuit m = c;
        m.num_clbits = 3;
        m.measure(2, 2);
        EXPECT_EQ(outcome_distribution(m).probs.begin()->first, v | 4);
    }
}

TEST(compose, empty_plus_x) {
    Circuit b(1);
    b.x(0);
    auto c = compose(Circuit(), b, {0}, {});
    EXPECT_EQ(c.instructions.size(), 1u);
    EXPECT_EQ(c.num_qubits, 1u);
}

TEST(compose, disjoint_fragments) {
    std::mt19937_64 rng(1);
    auto a = testgen::random_unitary_circuit(4, 12, rng);
    auto b = testgen::random_unitary_circuit(4, 9, rng);
    auto c = compose(a, b, {4, 5, 6, 7}, {});
    EXPECT_EQ(c.num_qubits, 8u);
    EXPECT_EQ(c.instructions.size(), a.instructions.size() + b.instructions.size());
    for (size_t i = a.instructions.size(); i < c.instructions.size(); i++) {
        for (auto q : instruction_qubits(c.instructions[i])) {
            EXPECT_GE(q, 4u);
        }
    }
}

TEST(compose, errors) {
    Circuit b(2);
    b.cz(0, 1);
    EXPECT_THROW(compose(Circuit(2), b, {0, 0}, {}), CompositionError);
    EXPECT_THROW(compose(Circuit(2), b, {0}, {}), CompositionError);
}

TEST(routing, adjacent_unchanged) {
    Circuit c(4);
    c.h(0).cz(1, 2);
    auto r = swap_route(c, CouplingMap::line(4));
    EXPECT_EQ(r.swaps_inserted, 0u);
    EXPECT_EQ(r.circuit.instructions.size(), 2u);
}

TEST(routing, line_ends_two_swaps) {
    Circuit c(4);
    c.cz(0, 3);
    auto r = swap_route(c, CouplingMap::line(4));
    EXPECT_EQ(r.swaps_inserted, 2u);
    EXPECT_EQ(r.circuit.instructions[0].as<Gate>().qubits, (std::array<uint32_t, 2>{0, 1}));
    EXPECT_EQ(r.circuit.instructions[1].as<Gate>().qubits, (std::array<uint32_t, 2>{3, 2}));
}

TEST(routing, shortest_path_lowest_index) {
    CouplingMap m(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
    EXPECT_EQ(shortest_path(m, 0, 3), (std::vector<uint32_t>{0, 1, 3}));
    CouplingMap split(4, {{0, 1}, {2, 3}});
    EXPECT_THROW(shortest_path(split, 0, 3), RoutingError);
}

TEST(routing, ring_with_chord_on_line) {
    // 12-node ring plus chord (2, 8) routed on a 12-qubit line.
    Circuit c(12);
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    for (uint32_t i = 0; i < 12; i++) {
        c.h(i);
        edges.push_back({i, (i + 1) % 12});
    }
    edges.push_back({2, 8});
    for (auto [a, b] : edges) {
        c.cz(a, b);
    }
    auto r = swap_route(c, CouplingMap::line(12));
    // Independent count: replay the layout with the meet-in-the-middle rule.
    std::vector<int> pos(12);
    for (int i = 0; i < 12; i++) {
        pos[i] = i;
    }
    size_t swaps = 0;
    for (auto [a, b] : edges) {
        int pa = pos[a], pb = pos[b];
        int d = std::abs(pa - pb);
        if (d > 1) {
            swaps += d - 1;
            int step = pb > pa ? 1 : -1;
            int k = (d - 1) / 2;
            std::vector<int> at(12);
            for (int q = 0; q < 12; q++) {
                at[pos[q]] = q;
            }
            for (int s = 0; s < k; s++) {
                std::swap(at[pa + s * step], at[pa + (s + 1) * step]);
            }
            for (int s = d; s > k + 1; s--) {
                std::swap(at[pa + s * step], at[pa + (s - 1) * step]);
            }
            for (int p = 0; p < 12; p++) {
                pos[at[p]] = p;
            }
        }
    }
    EXPECT_EQ(r.swaps_inserted, swaps);
    EXPECT_EQ(cnot_count(r.circuit), edges.size() + 3 * swaps);
}

TEST(routing, property_statevector_equivalence) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 25; trial++) {
        uint32_t n = 3 + rng() % 6;
        auto c = testgen::random_unitary_circuit(n, 30, rng);
        auto map = (trial % 2) ? CouplingMap::line(n) : CouplingMap::ring(n);
        auto r = swap_route(c, map);
        for (const auto &inst : r.circuit.instructions) {
            const auto &g = inst.as<Gate>();
            if (g.arity() == 2) {
                ASSERT_TRUE(map.adjacent(g.qubits[0], g.qubits[1]));
            }
        }
        auto ref = final_state(c).amps();
        auto got = final_state(r.circuit).amps();
        for (size_t x = 0; x < ref.size(); x++) {
            size_t y = 0;
            for (uint32_t q = 0; q < n; q++) {
                y |= ((x >> q) & 1) << r.final_layout[q];
            }
            ASSERT_NEAR(std::abs(ref[x] - got[y]), 0, 1e-12);
        }
    }
}

TEST(text_format, round_trip) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 30; i++) {
        auto c = testgen::random_dynamic_circuit(4, 3, 40, rng);
        c.instructions[0].label = 17;
        auto text = to_text(c);
        EXPECT_EQ(from_text(text), c) << text;
    }
    auto t = c1_template();
    EXPECT_EQ(from_text(to_text(t)), t);
}

TEST(text_format, rejects_garbage) {
    EXPECT_THROW(from_text("QLINK 1\nqubits 1\nFOO 0\n"), ParseError);
    EXPECT_THROW(from_text("hello"), ParseError);
    EXPECT_THROW(from_text("QLINK 1\nqubits 1\nH 4\n"), Error);
}
