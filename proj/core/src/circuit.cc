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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <set>
#include <sstream>

#include "qlink/errors.h"

namespace qlink {

namespace {

constexpr size_t kMaxRegister = 1u << 16;

struct GateInfo {
    GateKind kind;
    std::string_view name;
    size_t arity;
    size_t angles;
};

constexpr GateInfo kGates[] = {
    {GateKind::H, "H", 1, 0},       {GateKind::X, "X", 1, 0},         {GateKind::Z, "Z", 1, 0},
    {GateKind::SqrtX, "SX", 1, 0},  {GateKind::Rz, "RZ", 1, 1},       {GateKind::CZ, "CZ", 2, 0},
    {GateKind::CNOT, "CNOT", 2, 0}, {GateKind::SWAP, "SWAP", 2, 0},   {GateKind::U2, "U2", 1, 2},
};

const GateInfo &info(GateKind kind) {
    return kGates[static_cast<size_t>(kind)];
}

}  // namespace

size_t gate_arity(GateKind kind) {
    return info(kind).arity;
}

size_t gate_angle_count(GateKind kind) {
    return info(kind).angles;
}

std::string_view gate_name(GateKind kind) {
    return info(kind).name;
}

GateKind gate_from_name(std::string_view name) {
    for (const auto &g : kGates) {
        if (g.name == name) {
            return g.kind;
        }
    }
    throw ParseError("unknown gate '" + std::string(name) + "'");
}

bool Switch::operator==(const Switch &other) const {
    return conditions == other.conditions && cases == other.cases && latency_covered == other.latency_covered &&
           remote == other.remote;
}

Angle Circuit::add_parameter(std::string name) {
    parameters.push_back(std::move(name));
    return Angle::parameter(static_cast<int32_t>(parameters.size() - 1));
}

Circuit &Circuit::gate(GateKind kind, std::initializer_list<uint32_t> qubits, std::initializer_list<Angle> angles) {
    if (qubits.size() != gate_arity(kind) || angles.size() != gate_angle_count(kind)) {
        throw CircuitError("wrong operand count for " + std::string(gate_name(kind)));
    }
    Gate g;
    g.kind = kind;
    std::copy(qubits.begin(), qubits.end(), g.qubits.begin());
    std::copy(angles.begin(), angles.end(), g.angles.begin());
    instructions.emplace_back(g);
    return *this;
}

Circuit &Circuit::h(uint32_t q) {
    return gate(GateKind::H, {q});
}
Circuit &Circuit::x(uint32_t q) {
    return gate(GateKind::X, {q});
}
Circuit &Circuit::z(uint32_t q) {
    return gate(GateKind::Z, {q});
}
Circuit &Circuit::sx(uint32_t q) {
    return gate(GateKind::SqrtX, {q});
}
Circuit &Circuit::rz(uint32_t q, Angle theta) {
    return gate(GateKind::Rz, {q}, {theta});
}
Circuit &Circuit::u2(uint32_t q, Angle theta, Angle phi) {
    return gate(GateKind::U2, {q}, {theta, phi});
}
Circuit &Circuit::cz(uint32_t a, uint32_t b) {
    return gate(GateKind::CZ, {a, b});
}
Circuit &Circuit::cx(uint32_t control, uint32_t target) {
    return gate(GateKind::CNOT, {control, target});
}
Circuit &Circuit::swap(uint32_t a, uint32_t b) {
    return gate(GateKind::SWAP, {a, b});
}
Circuit &Circuit::measure(uint32_t q, uint32_t c) {
    instructions.emplace_back(Measure{q, c});
    return *this;
}
Circuit &Circuit::delay(std::vector<uint32_t> qubits, double duration) {
    instructions.emplace_back(Delay{std::move(qubits), duration});
    return *this;
}
Circuit &Circuit::barrier(std::vector<uint32_t> qubits) {
    instructions.emplace_back(Barrier{std::move(qubits)});
    return *this;
}
Circuit &Circuit::switch_on(std::vector<uint32_t> conditions, std::vector<std::vector<Instruction>> cases) {
    Switch s;
    s.conditions = std::move(conditions);
    s.cases = std::move(cases);
    instructions.emplace_back(std::move(s));
    return *this;
}
Circuit &Circuit::append(Instruction inst) {
    instructions.push_back(std::move(inst));
    return *this;
}

bool Circuit::is_bound() const {
    return parameters.empty();
}

size_t Circuit::count_gates(GateKind kind) const {
    size_t n = 0;
    for_each_instruction(instructions, [&](const Instruction &inst) {
        if (inst.is<Gate>() && inst.as<Gate>().kind == kind) {
            n++;
        }
    });
    return n;
}

size_t Circuit::count_measurements() const {
    size_t n = 0;
    for_each_instruction(instructions, [&](const Instruction &inst) { n += inst.is<Measure>(); });
    return n;
}

size_t Circuit::count_switches() const {
    size_t n = 0;
    for (const auto &inst : instructions) {
        n += inst.is<Switch>();
    }
    return n;
}

std::string Circuit::str() const {
    return to_text(*this);
}

std::vector<uint32_t> instruction_qubits(const Instruction &inst) {
    std::vector<uint32_t> out;
    std::visit(
        [&](const auto &op) {
            using T = std::decay_t<decltype(op)>;
            if constexpr (std::is_same_v<T, Gate>) {
                out.assign(op.qubits.begin(), op.qubits.begin() + op.arity());
            } else if constexpr (std::is_same_v<T, Measure>) {
                out.push_back(op.qubit);
            } else if constexpr (std::is_same_v<T, Delay> || std::is_same_v<T, Barrier>) {
                out = op.qubits;
            } else {
                std::set<uint32_t> qs;
                for (const auto &c : op.cases) {
                    for (const auto &i : c) {
                        for (auto q : instruction_qubits(i)) {
                            qs.insert(q);
                        }
                    }
                }
                out.assign(qs.begin(), qs.end());
            }
        },
        inst.op);
    return out;
}

namespace {

void check_angle(const Angle &a, const Circuit &c) {
    if (a.param >= 0) {
        if (static_cast<size_t>(a.param) >= c.parameters.size()) {
            throw CircuitError("angle references undeclared parameter");
        }
    } else if (!std::isfinite(a.value)) {
        throw CircuitError("angle is not finite");
    }
}

void validate_block(const std::vector<Instruction> &insts, const Circuit &c, std::vector<bool> &written,
                    bool in_case) {
    auto check_qubit = [&](uint32_t q) {
        if (q >= c.num_qubits) {
            throw CircuitError("qubit index " + std::to_string(q) + " out of range");
        }
    };
    for (const auto &inst : insts) {
        if (inst.is<Gate>()) {
            const auto &g = inst.as<Gate>();
            for (size_t k = 0; k < g.arity(); k++) {
                check_qubit(g.qubits[k]);
            }
            if (g.arity() == 2 && g.qubits[0] == g.qubits[1]) {
                throw CircuitError("two-qubit gate on a single qubit");
            }
            if (in_case && g.arity() != 1) {
                throw CircuitError("switch cases may only hold single-qubit gates and delays");
            }
            for (size_t k = 0; k < gate_angle_count(g.kind); k++) {
                check_angle(g.angles[k], c);
            }
        } else if (inst.is<Measure>()) {
            const auto &m = inst.as<Measure>();
            if (in_case) {
                throw CircuitError("switch cases may only hold single-qubit gates and delays");
            }
            check_qubit(m.qubit);
            if (m.clbit >= c.num_clbits) {
                throw CircuitError("clbit index " + std::to_string(m.clbit) + " out of range");
            }
            written[m.clbit] = true;
        } else if (inst.is<Delay>()) {
            const auto &d = inst.as<Delay>();
            for (auto q : d.qubits) {
                check_qubit(q);
            }
            if (!(d.duration >= 0) || !std::isfinite(d.duration)) {
                throw CircuitError("delay duration must be finite and non-negative");
            }
        } else if (inst.is<Barrier>()) {
            if (in_case) {
                throw CircuitError("switch cases may only hold single-qubit gates and delays");
            }
            for (auto q : inst.as<Barrier>().qubits) {
                check_qubit(q);
            }
        } else {
            const auto &s = inst.as<Switch>();
            if (in_case) {
                throw CircuitError("nested switch");
            }
            if (s.conditions.size() > 20 || s.cases.size() != (size_t{1} << s.conditions.size())) {
                throw CircuitError("switch over " + std::to_string(s.conditions.size()) + " bits needs " +
                                   std::to_string(size_t{1} << std::min<size_t>(s.conditions.size(), 20)) +
                                   " cases, has " + std::to_string(s.cases.size()));
            }
            for (auto b : s.conditions) {
                if (b >= c.num_clbits) {
                    throw CircuitError("switch condition clbit out of range");
                }
                if (!written[b] && !s.remote) {
                    throw CircuitError("switch reads clbit " + std::to_string(b) + " before it is measured");
                }
            }
            for (const auto &block : s.cases) {
                validate_block(block, c, written, true);
            }
        }
    }
}

}  // namespace

void validate(const Circuit &circuit) {
    if (circuit.num_qubits > kMaxRegister || circuit.num_clbits > kMaxRegister) {
        throw CircuitError("register too large");
    }
    std::vector<bool> written(circuit.num_clbits, false);
    validate_block(circuit.instructions, circuit, written, false);
}

namespace {

Angle bind_angle(const Angle &a, const std::vector<double> &values) {
    return a.param >= 0 ? Angle(values[a.param]) : a;
}

void bind_block(std::vector<Instruction> &insts, const std::vector<double> &values) {
    for (auto &inst : insts) {
        if (inst.is<Gate>()) {
            auto &g = inst.as<Gate>();
            g.angles[0] = bind_angle(g.angles[0], values);
            g.angles[1] = bind_angle(g.angles[1], values);
        } else if (inst.is<Switch>()) {
            for (auto &c : inst.as<Switch>().cases) {
                bind_block(c, values);
            }
        }
    }
}

}  // namespace

Circuit bind_parameters(const Circuit &templ, const std::vector<double> &values) {
    if (values.size() != templ.parameters.size()) {
        throw ParameterArityError("template has " + std::to_string(templ.parameters.size()) +
                                  " free parameters, got " + std::to_string(values.size()) + " values");
    }
    Circuit out = templ;
    out.parameters.clear();
    bind_block(out.instructions, values);
    return out;
}

namespace {

void remap_block(std::vector<Instruction> &insts, const std::vector<uint32_t> &qmap,
                 const std::vector<uint32_t> &cmap, int32_t param_offset) {
    for (auto &inst : insts) {
        std::visit(
            [&](auto &op) {
                using T = std::decay_t<decltype(op)>;
                if constexpr (std::is_same_v<T, Gate>) {
                    for (size_t k = 0; k < op.arity(); k++) {
                        op.qubits[k] = qmap.at(op.qubits[k]);
                    }
                    for (auto &a : op.angles) {
                        if (a.param >= 0) {
                            a.param += param_offset;
                        }
                    }
                } else if constexpr (std::is_same_v<T, Measure>) {
                    op.qubit = qmap.at(op.qubit);
                    op.clbit = cmap.at(op.clbit);
                } else if constexpr (std::is_same_v<T, Delay> || std::is_same_v<T, Barrier>) {
                    for (auto &q : op.qubits) {
                        q = qmap.at(q);
                    }
                } else {
                    for (auto &b : op.conditions) {
                        b = cmap.at(b);
                    }
                    for (auto &c : op.cases) {
                        remap_block(c, qmap, cmap, param_offset);
                    }
                }
            },
            inst.op);
    }
}

void check_map(const std::vector<uint32_t> &map, uint32_t expected, const char *what) {
    if (map.size() != expected) {
        throw CompositionError(std::string(what) + " map has " + std::to_string(map.size()) +
                               " entries, fragment register has " + std::to_string(expected));
    }
    std::set<uint32_t> seen;
    for (auto v : map) {
        if (v >= kMaxRegister) {
            throw CompositionError(std::string(what) + " map target out of range");
        }
        if (!seen.insert(v).second) {
            throw CompositionError(std::string(what) + " map collision on index " + std::to_string(v));
        }
    }
}

}  // namespace

Circuit compose(const Circuit &a, const Circuit &b, const std::vector<uint32_t> &qubit_map,
                const std::vector<uint32_t> &clbit_map) {
    check_map(qubit_map, b.num_qubits, "qubit");
    check_map(clbit_map, b.num_clbits, "clbit");
    Circuit out = a;
    for (auto q : qubit_map) {
        out.num_qubits = std::max(out.num_qubits, q + 1);
    }
    for (auto c : clbit_map) {
        out.num_clbits = std::max(out.num_clbits, c + 1);
    }
    std::vector<Instruction> tail = b.instructions;
    remap_block(tail, qubit_map, clbit_map, static_cast<int32_t>(a.parameters.size()));
    for (auto &inst : tail) {
        out.instructions.push_back(std::move(inst));
    }
    out.parameters.insert(out.parameters.end(), b.parameters.begin(), b.parameters.end());
    return out;
}

CouplingMap::CouplingMap(uint32_t n, std::vector<std::pair<uint32_t, uint32_t>> edges, std::vector<uint32_t> qpu_of)
    : num_qubits(n), edges(std::move(edges)), qpu_of(std::move(qpu_of)) {
    if (this->qpu_of.empty()) {
        this->qpu_of.assign(n, 0);
    }
    validate();
}

CouplingMap CouplingMap::line(uint32_t n) {
    std::vector<std::pair<uint32_t, uint32_t>> e;
    for (uint32_t i = 0; i + 1 < n; i++) {
        e.emplace_back(i, i + 1);
    }
    return CouplingMap(n, e);
}

CouplingMap CouplingMap::ring(uint32_t n) {
    auto m = line(n);
    if (n > 2) {
        m.edges.emplace_back(n - 1, 0);
    }
    return m;
}

CouplingMap CouplingMap::eagle() {
    constexpr uint32_t rows[7][2] = {{0, 13}, {18, 32}, {37, 51}, {56, 70}, {75, 89}, {94, 108}, {113, 126}};
    constexpr uint32_t bridge[6] = {14, 33, 52, 71, 90, 109};
    constexpr uint32_t up[6][4] = {{0, 4, 8, 12},     {20, 24, 28, 32}, {37, 41, 45, 49},
                                   {58, 62, 66, 70},  {75, 79, 83, 87}, {96, 100, 104, 108}};
    constexpr uint32_t down[6][4] = {{18, 22, 26, 30}, {39, 43, 47, 51},   {56, 60, 64, 68},
                                     {77, 81, 85, 89}, {94, 98, 102, 106}, {114, 118, 122, 126}};
    std::vector<std::pair<uint32_t, uint32_t>> e;
    for (const auto &r : rows) {
        for (uint32_t q = r[0]; q < r[1]; q++) {
            e.emplace_back(q, q + 1);
        }
    }
    for (int b = 0; b < 6; b++) {
        for (int j = 0; j < 4; j++) {
            e.emplace_back(up[b][j], bridge[b] + j);
            e.emplace_back(bridge[b] + j, down[b][j]);
        }
    }
    return CouplingMap(127, std::move(e));
}

bool CouplingMap::adjacent(uint32_t a, uint32_t b) const {
    for (const auto &[x, y] : edges) {
        if ((x == a && y == b) || (x == b && y == a)) {
            return true;
        }
    }
    return false;
}

std::vector<std::vector<uint32_t>> CouplingMap::adjacency() const {
    std::vector<std::vector<uint32_t>> adj(num_qubits);
    for (const auto &[x, y] : edges) {
        adj[x].push_back(y);
        adj[y].push_back(x);
    }
    for (auto &v : adj) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    return adj;
}

void CouplingMap::validate() const {
    for (const auto &[x, y] : edges) {
        if (x >= num_qubits || y >= num_qubits || x == y) {
            throw RoutingError("coupling map edge (" + std::to_string(x) + "," + std::to_string(y) + ") is invalid");
        }
    }
    if (qpu_of.size() != num_qubits) {
        throw RoutingError("qpu_of must assign every qubit");
    }
}

std::vector<uint32_t> shortest_path(const CouplingMap &map, uint32_t from, uint32_t to) {
    auto adj = map.adjacency();
    constexpr uint32_t kInf = std::numeric_limits<uint32_t>::max();
    std::vector<uint32_t> dist(map.num_qubits, kInf);
    std::deque<uint32_t> queue{to};
    dist[to] = 0;
    while (!queue.empty()) {
        auto v = queue.front();
        queue.pop_front();
        for (auto w : adj[v]) {
            if (dist[w] == kInf) {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    if (dist[from] == kInf) {
        throw RoutingError("qubits " + std::to_string(from) + " and " + std::to_string(to) + " are disconnected");
    }
    std::vector<uint32_t> path{from};
    uint32_t v = from;
    while (v != to) {
        for (auto w : adj[v]) {
            if (dist[w] + 1 == dist[v]) {
                v = w;
                break;
            }
        }
        path.push_back(v);
    }
    return path;
}

RoutedCircuit swap_route(const Circuit &circuit, const CouplingMap &map) {
    map.validate();
    if (circuit.num_qubits > map.num_qubits) {
        throw RoutingError("circuit is wider than the coupling map");
    }
    RoutedCircuit out;
    out.circuit = Circuit(map.num_qubits, circuit.num_clbits);
    out.circuit.parameters = circuit.parameters;
    std::vector<uint32_t> l2p(map.num_qubits), p2l(map.num_qubits);
    for (uint32_t i = 0; i < map.num_qubits; i++) {
        l2p[i] = p2l[i] = i;
    }
    auto do_swap = [&](uint32_t pa, uint32_t pb) {
        out.circuit.swap(pa, pb);
        out.swaps_inserted++;
        std::swap(p2l[pa], p2l[pb]);
        l2p[p2l[pa]] = pa;
        l2p[p2l[pb]] = pb;
    };
    for (const auto &inst : circuit.instructions) {
        if (inst.is<Gate>()) {
            Gate g = inst.as<Gate>();
            if (g.arity() == 2) {
                if (g.kind == GateKind::SWAP) {
                    throw RoutingError("input circuits may not contain SWAP");
                }
                uint32_t pa = l2p[g.qubits[0]], pb = l2p[g.qubits[1]];
                if (!map.adjacent(pa, pb)) {
                    auto path = shortest_path(map, pa, pb);
                    size_t d = path.size() - 1;
                    size_t k = (d - 1) / 2;
                    for (size_t s = 0; s < k; s++) {
                        do_swap(path[s], path[s + 1]);
                    }
                    for (size_t s = d; s > k + 1; s--) {
                        do_swap(path[s], path[s - 1]);
                    }
                }
                g.qubits[0] = l2p[g.qubits[0]];
                g.qubits[1] = l2p[g.qubits[1]];
            } else {
                g.qubits[0] = l2p[g.qubits[0]];
            }
            out.circuit.instructions.emplace_back(g, inst.label);
        } else if (inst.is<Measure>()) {
            Measure m = inst.as<Measure>();
            m.qubit = l2p[m.qubit];
            out.circuit.instructions.emplace_back(m, inst.label);
        } else if (inst.is<Barrier>() || inst.is<Delay>()) {
            Instruction copy = inst;
            auto &qs = copy.is<Barrier>() ? copy.as<Barrier>().qubits : copy.as<Delay>().qubits;
            for (auto &q : qs) {
                q = l2p[q];
            }
            out.circuit.instructions.push_back(std::move(copy));
        } else {
            throw RoutingError("switch blocks cannot be routed");
        }
    }
    out.final_layout.assign(l2p.begin(), l2p.begin() + circuit.num_qubits);
    return out;
}

size_t cnot_count(const Circuit &circuit) {
    return circuit.count_gates(GateKind::CZ) + circuit.count_gates(GateKind::CNOT) +
           3 * circuit.count_gates(GateKind::SWAP);
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

std::string fmt_angle(const Angle &a) {
    if (a.param >= 0) {
        return "$" + std::to_string(a.param);
    }
    return fmt_double(a.value);
}

void write_block(std::ostringstream &os, const std::vector<Instruction> &insts, int depth) {
    std::string indent(2 * depth, ' ');
    for (const auto &inst : insts) {
        os << indent;
        if (inst.label != kNoLabel) {
            os << "@" << inst.label << " ";
        }
        std::visit(
            [&](const auto &op) {
                using T = std::decay_t<decltype(op)>;
                if constexpr (std::is_same_v<T, Gate>) {
                    os << gate_name(op.kind);
                    for (size_t k = 0; k < op.arity(); k++) {
                        os << " " << op.qubits[k];
                    }
                    for (size_t k = 0; k < gate_angle_count(op.kind); k++) {
                        os << " " << fmt_angle(op.angles[k]);
                    }
                    os << "\n";
                } else if constexpr (std::is_same_v<T, Measure>) {
                    os << "MEASURE " << op.qubit << " " << op.clbit << "\n";
                } else if constexpr (std::is_same_v<T, Delay>) {
                    os << "DELAY " << fmt_double(op.duration);
                    for (auto q : op.qubits) {
                        os << " " << q;
                    }
                    os << "\n";
                } else if constexpr (std::is_same_v<T, Barrier>) {
                    os << "BARRIER";
                    for (auto q : op.qubits) {
                        os << " " << q;
                    }
                    os << "\n";
                } else {
                    os << "SWITCH " << op.conditions.size();
                    for (auto b : op.conditions) {
                        os << " " << b;
                    }
                    if (op.latency_covered) {
                        os << " covered";
                    }
                    if (op.remote) {
                        os << " remote";
                    }
                    os << "\n";
                    for (size_t c = 0; c < op.cases.size(); c++) {
                        os << indent << "CASE " << c << "\n";
                        write_block(os, op.cases[c], depth + 1);
                    }
                    os << indent << "END\n";
                }
            },
            inst.op);
    }
}

struct LineReader {
    std::vector<std::string> lines;
    size_t pos = 0;

    explicit LineReader(std::string_view text) {
        std::string cur;
        for (char ch : text) {
            if (ch == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur.push_back(ch);
            }
        }
        if (!cur.empty()) {
            lines.push_back(cur);
        }
    }

    bool next(std::vector<std::string> &tokens) {
        while (pos < lines.size()) {
            std::istringstream is(lines[pos++]);
            tokens.clear();
            std::string t;
            while (is >> t) {
                if (t[0] == '#') {
                    break;
                }
                tokens.push_back(t);
            }
            if (!tokens.empty()) {
                return true;
            }
        }
        return false;
    }

    [[noreturn]] void fail(const std::string &msg) const {
        throw ParseError("line " + std::to_string(pos) + ": " + msg);
    }
};

uint32_t parse_index(const LineReader &r, const std::string &t) {
    size_t used = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(t, &used);
    } catch (const std::exception &) {
        r.fail("expected an index, got '" + t + "'");
    }
    if (used != t.size() || v >= kMaxRegister) {
        r.fail("bad index '" + t + "'");
    }
    return static_cast<uint32_t>(v);
}

double parse_double(const LineReader &r, const std::string &t) {
    char *end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) {
        r.fail("expected a number, got '" + t + "'");
    }
    return v;
}

Angle parse_angle(const LineReader &r, const std::string &t) {
    if (!t.empty() && t[0] == '$') {
        return Angle::parameter(static_cast<int32_t>(parse_index(r, t.substr(1))));
    }
    return Angle(parse_double(r, t));
}

// Returns the terminating keyword ("CASE", "END") or "" at end of input.
std::string read_block(LineReader &r, std::vector<Instruction> &out, std::vector<std::string> &tokens) {
    while (r.next(tokens)) {
        uint32_t label = kNoLabel;
        size_t i = 0;
        if (tokens[0][0] == '@') {
            label = parse_index(r, tokens[0].substr(1));
            i = 1;
            if (tokens.size() < 2) {
                r.fail("label without instruction");
            }
        }
        const std::string &op = tokens[i];
        auto args = std::vector<std::string>(tokens.begin() + i + 1, tokens.end());
        if (op == "CASE" || op == "END") {
            return op;
        }
        if (op == "MEASURE") {
            if (args.size() != 2) {
                r.fail("MEASURE takes qubit and clbit");
            }
            out.emplace_back(Measure{parse_index(r, args[0]), parse_index(r, args[1])}, label);
        } else if (op == "DELAY") {
            if (args.empty()) {
                r.fail("DELAY needs a duration");
            }
            Delay d;
            d.duration = parse_double(r, args[0]);
            for (size_t k = 1; k < args.size(); k++) {
                d.qubits.push_back(parse_index(r, args[k]));
            }
            out.emplace_back(std::move(d), label);
        } else if (op == "BARRIER") {
            Barrier b;
            for (const auto &a : args) {
                b.qubits.push_back(parse_index(r, a));
            }
            out.emplace_back(std::move(b), label);
        } else if (op == "SWITCH") {
            if (args.empty()) {
                r.fail("SWITCH needs a condition count");
            }
            Switch s;
            size_t m = parse_index(r, args[0]);
            if (args.size() < 1 + m || m > 20) {
                r.fail("SWITCH condition list is short");
            }
            for (size_t k = 0; k < m; k++) {
                s.conditions.push_back(parse_index(r, args[1 + k]));
            }
            for (size_t k = 1 + m; k < args.size(); k++) {
                if (args[k] == "covered") {
                    s.latency_covered = true;
                } else if (args[k] == "remote") {
                    s.remote = true;
                } else {
                    r.fail("unknown SWITCH flag '" + args[k] + "'");
                }
            }
            std::vector<std::string> sub;
            if (!r.next(sub) || sub[0] != "CASE") {
                r.fail("SWITCH must be followed by CASE");
            }
            while (true) {
                if (sub.size() != 2 || parse_index(r, sub[1]) != s.cases.size()) {
                    r.fail("CASE numbers must be consecutive");
                }
                s.cases.emplace_back();
                auto end = read_block(r, s.cases.back(), sub);
                if (end == "END") {
                    break;
                }
                if (end != "CASE") {
                    r.fail("unterminated SWITCH");
                }
            }
            out.emplace_back(std::move(s), label);
        } else {
            Gate g;
            g.kind = gate_from_name(op);
            size_t na = gate_arity(g.kind), nang = gate_angle_count(g.kind);
            if (args.size() != na + nang) {
                r.fail("wrong operand count for " + op);
            }
            for (size_t k = 0; k < na; k++) {
                g.qubits[k] = parse_index(r, args[k]);
            }
            for (size_t k = 0; k < nang; k++) {
                g.angles[k] = parse_angle(r, args[na + k]);
            }
            out.emplace_back(g, label);
        }
    }
    return "";
}

}  // namespace

std::string to_text(const Circuit &circuit) {
    std::ostringstream os;
    os << "QLINK 1\n";
    os << "qubits " << circuit.num_qubits << "\n";
    os << "clbits " << circuit.num_clbits << "\n";
    for (const auto &p : circuit.parameters) {
        os << "param " << p << "\n";
    }
    write_block(os, circuit.instructions, 0);
    return os.str();
}

Circuit from_text(std::string_view text) {
    LineReader r(text);
    std::vector<std::string> tokens;
    if (!r.next(tokens) || tokens.size() != 2 || tokens[0] != "QLINK" || tokens[1] != "1") {
        r.fail("missing 'QLINK 1' header");
    }
    Circuit c;
    if (!r.next(tokens) || tokens.size() != 2 || tokens[0] != "qubits") {
        r.fail("expected 'qubits N'");
    }
    c.num_qubits = parse_index(r, tokens[1]);
    if (!r.next(tokens) || tokens.size() != 2 || tokens[0] != "clbits") {
        r.fail("expected 'clbits N'");
    }
    c.num_clbits = parse_index(r, tokens[1]);
    size_t mark = r.pos;
    while (r.next(tokens) && tokens[0] == "param") {
        if (tokens.size() != 2) {
            r.fail("expected 'param NAME'");
        }
        c.parameters.push_back(tokens[1]);
        mark = r.pos;
    }
    r.pos = mark;
    auto end = read_block(r, c.instructions, tokens);
    if (!end.empty()) {
        r.fail("unexpected " + end);
    }
    validate(c);
    return c;
}

}  // namespace qlink
