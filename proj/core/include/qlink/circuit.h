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

#ifndef QLINK_CIRCUIT_H
#define QLINK_CIRCUIT_H

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace qlink {

enum class GateKind : uint8_t { H, X, Z, SqrtX, Rz, CZ, CNOT, SWAP, U2 };

size_t gate_arity(GateKind kind);
size_t gate_angle_count(GateKind kind);
std::string_view gate_name(GateKind kind);
GateKind gate_from_name(std::string_view name);

/// An angle is either a literal value in radians or a reference to a free parameter.
struct Angle {
    double value = 0;
    int32_t param = -1;

    Angle() = default;
    Angle(double v) : value(v) {
    }
    static Angle parameter(int32_t index) {
        Angle a;
        a.param = index;
        return a;
    }
    bool bound() const {
        return param < 0;
    }
    bool operator==(const Angle &other) const = default;
};

struct Gate {
    GateKind kind = GateKind::H;
    std::array<uint32_t, 2> qubits{};
    std::array<Angle, 2> angles{};

    size_t arity() const {
        return gate_arity(kind);
    }
    bool operator==(const Gate &other) const = default;
};

struct Measure {
    uint32_t qubit = 0;
    uint32_t clbit = 0;
    bool operator==(const Measure &other) const = default;
};

struct Delay {
    std::vector<uint32_t> qubits;
    double duration = 0;
    bool operator==(const Delay &other) const = default;
};

struct Barrier {
    std::vector<uint32_t> qubits;
    bool operator==(const Barrier &other) const = default;
};

struct Instruction;

/// Selects case number sum_i bit(conditions[i]) << i.
struct Switch {
    std::vector<uint32_t> conditions;
    std::vector<std::vector<Instruction>> cases;
    /// Set when a delay window preceding the switch already models the latency.
    bool latency_covered = false;
    /// Case index is supplied by an external coordinator.
    bool remote = false;
    bool operator==(const Switch &other) const;
};

constexpr uint32_t kNoLabel = std::numeric_limits<uint32_t>::max();

struct Instruction {
    std::variant<Gate, Measure, Delay, Barrier, Switch> op;
    uint32_t label = kNoLabel;

    Instruction() = default;
    template <typename T>
        requires(!std::is_same_v<std::decay_t<T>, Instruction>)
    Instruction(T v, uint32_t label = kNoLabel) : op(std::move(v)), label(label) {
    }

    template <typename T>
    bool is() const {
        return std::holds_alternative<T>(op);
    }
    template <typename T>
    const T &as() const {
        return std::get<T>(op);
    }
    template <typename T>
    T &as() {
        return std::get<T>(op);
    }
    bool operator==(const Instruction &other) const = default;
};

struct Circuit {
    uint32_t num_qubits = 0;
    uint32_t num_clbits = 0;
    std::vector<Instruction> instructions;
    std::vector<std::string> parameters;

    Circuit() = default;
    Circuit(uint32_t num_qubits, uint32_t num_clbits = 0) : num_qubits(num_qubits), num_clbits(num_clbits) {
    }

    Angle add_parameter(std::string name);

    Circuit &gate(GateKind kind, std::initializer_list<uint32_t> qubits, std::initializer_list<Angle> angles = {});
    Circuit &h(uint32_t q);
    Circuit &x(uint32_t q);
    Circuit &z(uint32_t q);
    Circuit &sx(uint32_t q);
    Circuit &rz(uint32_t q, Angle theta);
    Circuit &u2(uint32_t q, Angle theta, Angle phi);
    Circuit &cz(uint32_t a, uint32_t b);
    Circuit &cx(uint32_t control, uint32_t target);
    Circuit &swap(uint32_t a, uint32_t b);
    Circuit &measure(uint32_t q, uint32_t c);
    Circuit &delay(std::vector<uint32_t> qubits, double duration);
    Circuit &barrier(std::vector<uint32_t> qubits);
    Circuit &switch_on(std::vector<uint32_t> conditions, std::vector<std::vector<Instruction>> cases);
    Circuit &append(Instruction inst);

    size_t num_free_parameters() const {
        return parameters.size();
    }
    bool is_bound() const;
    size_t count_gates(GateKind kind) const;
    size_t count_measurements() const;
    size_t count_switches() const;
    std::string str() const;

    bool operator==(const Circuit &other) const = default;
};

/// Checks register bounds, switch shape, case contents and clbit read-after-write order.
void validate(const Circuit &circuit);

Circuit bind_parameters(const Circuit &templ, const std::vector<double> &values);

/// Appends b after a. qubit_map[i] / clbit_map[i] are the targets of b's qubit i / clbit i.
Circuit compose(const Circuit &a, const Circuit &b, const std::vector<uint32_t> &qubit_map,
                const std::vector<uint32_t> &clbit_map);

/// Applies `f` to every instruction, descending into switch cases.
template <typename F>
void for_each_instruction(const std::vector<Instruction> &insts, F &&f) {
    for (const auto &inst : insts) {
        f(inst);
        if (inst.is<Switch>()) {
            for (const auto &c : inst.as<Switch>().cases) {
                for_each_instruction(c, f);
            }
        }
    }
}

std::vector<uint32_t> instruction_qubits(const Instruction &inst);

struct CouplingMap {
    uint32_t num_qubits = 0;
    std::vector<std::pair<uint32_t, uint32_t>> edges;
    std::vector<uint32_t> qpu_of;

    CouplingMap() = default;
    CouplingMap(uint32_t n, std::vector<std::pair<uint32_t, uint32_t>> edges, std::vector<uint32_t> qpu_of = {});
    static CouplingMap line(uint32_t n);
    static CouplingMap ring(uint32_t n);
    /// 127-qubit heavy-hex lattice: seven rows joined by four-qubit bridge rows.
    static CouplingMap eagle();

    bool adjacent(uint32_t a, uint32_t b) const;
    std::vector<std::vector<uint32_t>> adjacency() const;
    void validate() const;
};

struct RoutedCircuit {
    Circuit circuit;
    /// layout[logical] = physical position at the end of the circuit.
    std::vector<uint32_t> final_layout;
    size_t swaps_inserted = 0;
};

/// Shortest path between two nodes, lexicographically smallest among the shortest.
std::vector<uint32_t> shortest_path(const CouplingMap &map, uint32_t from, uint32_t to);

RoutedCircuit swap_route(const Circuit &circuit, const CouplingMap &map);

/// Two-qubit gate count with SWAP counted as three CNOTs.
size_t cnot_count(const Circuit &circuit);

std::string to_text(const Circuit &circuit);
Circuit from_text(std::string_view text);

}  // namespace qlink

#endif
