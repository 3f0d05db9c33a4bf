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

#include "qlink/graph_state.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "qlink/errors.h"

namespace qlink {

namespace {

Edge normalized(uint32_t a, uint32_t b) {
    return a < b ? Edge{a, b} : Edge{b, a};
}

}  // namespace

Graph Graph::path(uint32_t n) {
    Graph g;
    g.num_nodes = n;
    for (uint32_t i = 0; i + 1 < n; i++) {
        g.edges.push_back({i, i + 1});
    }
    return g;
}

Graph Graph::ring(uint32_t n, uint32_t num_cuts) {
    if (n < 3 || num_cuts < 1 || num_cuts > n) {
        throw GraphError("ring needs n >= 3 and 1 <= cuts <= n");
    }
    Graph g;
    g.num_nodes = n;
    std::set<uint32_t> cut_at;
    for (uint32_t j = 0; j < num_cuts; j++) {
        cut_at.insert(static_cast<uint32_t>((uint64_t{j} + 1) * n / num_cuts - 1));
    }
    for (uint32_t i = 0; i < n; i++) {
        Edge e{i, (i + 1) % n};
        g.edges.push_back(e);
        if (cut_at.count(i)) {
            g.cut_edges.push_back(e);
        }
    }
    return g;
}

void Graph::validate() const {
    std::set<Edge> seen;
    for (auto [a, b] : edges) {
        if (a >= num_nodes || b >= num_nodes) {
            throw GraphError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") references a missing node");
        }
        if (a == b) {
            throw GraphError("self loop on node " + std::to_string(a));
        }
        if (!seen.insert(normalized(a, b)).second) {
            throw GraphError("duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
        }
    }
    std::set<Edge> cuts;
    for (auto [a, b] : cut_edges) {
        if (!seen.count(normalized(a, b))) {
            throw GraphError("cut edge (" + std::to_string(a) + "," + std::to_string(b) + ") is not an edge");
        }
        if (!cuts.insert(normalized(a, b)).second) {
            throw GraphError("duplicate cut edge");
        }
    }
}

bool Graph::has_edge(uint32_t a, uint32_t b) const {
    auto e = normalized(a, b);
    return std::any_of(edges.begin(), edges.end(), [&](const Edge &x) { return normalized(x.first, x.second) == e; });
}

bool Graph::is_cut(uint32_t a, uint32_t b) const {
    auto e = normalized(a, b);
    return std::any_of(cut_edges.begin(), cut_edges.end(),
                       [&](const Edge &x) { return normalized(x.first, x.second) == e; });
}

std::vector<uint32_t> Graph::neighbors(uint32_t i) const {
    std::vector<uint32_t> out;
    for (auto [a, b] : edges) {
        if (a == i) {
            out.push_back(b);
        } else if (b == i) {
            out.push_back(a);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<bool> Graph::cut_adjacent() const {
    std::vector<bool> out(num_nodes, false);
    for (auto [a, b] : cut_edges) {
        out[a] = out[b] = true;
    }
    return out;
}

PauliString node_stabilizer(const Graph &g, uint32_t i) {
    if (i >= g.num_nodes) {
        throw GraphError("node " + std::to_string(i) + " out of range");
    }
    PauliString p;
    p.set(i, 'X');
    for (uint32_t k : g.neighbors(i)) {
        p.set(k, 'Z');
    }
    return p;
}

PauliString edge_stabilizer(const Graph &g, uint32_t i, uint32_t j) {
    if (!g.has_edge(i, j)) {
        throw GraphError("(" + std::to_string(i) + "," + std::to_string(j) + ") is not an edge");
    }
    return node_stabilizer(g, i) * node_stabilizer(g, j);
}

std::vector<PauliString> all_stabilizers(const Graph &g) {
    std::vector<PauliString> out;
    for (uint32_t i = 0; i < g.num_nodes; i++) {
        out.push_back(node_stabilizer(g, i));
    }
    for (auto [a, b] : g.edges) {
        out.push_back(edge_stabilizer(g, a, b));
    }
    return out;
}

std::vector<std::vector<size_t>> commuting_groups(const std::vector<PauliString> &observables) {
    const size_t n = observables.size();
    std::vector<std::vector<size_t>> conflicts(n);
    for (size_t a = 0; a < n; a++) {
        for (size_t b = a + 1; b < n; b++) {
            if (!observables[a].qubit_wise_commutes(observables[b])) {
                conflicts[a].push_back(b);
                conflicts[b].push_back(a);
            }
        }
    }
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; i++) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return conflicts[a].size() > conflicts[b].size(); });
    std::vector<int> colour(n, -1);
    int num_colours = 0;
    for (size_t v : order) {
        std::vector<bool> used(num_colours + 1, false);
        for (size_t u : conflicts[v]) {
            if (colour[u] >= 0) {
                used[colour[u]] = true;
            }
        }
        int c = 0;
        while (used[c]) {
            c++;
        }
        colour[v] = c;
        num_colours = std::max(num_colours, c + 1);
    }
    std::vector<std::vector<size_t>> groups(num_colours);
    for (size_t i = 0; i < n; i++) {
        groups[colour[i]].push_back(i);
    }
    return groups;
}

PauliString group_basis(const std::vector<PauliString> &observables, const std::vector<size_t> &group) {
    PauliString basis;
    for (size_t i : group) {
        for (auto [q, op] : observables[i].ops()) {
            char have = basis.at(q);
            if (have != 'I' && have != op) {
                throw GraphError("group is not qubit-wise commuting");
            }
            basis.set(q, op);
        }
    }
    return basis;
}

double witness(double si, double sj, double sij) {
    return (1 - si - sj - sij) / 4;
}

double witness_prime(double si, double sj) {
    return 1 - si - sj;
}

double witness_sigma(double sigma_i, double sigma_j, double sigma_ij) {
    return std::sqrt(sigma_i * sigma_i + sigma_j * sigma_j + sigma_ij * sigma_ij) / 4;
}

double witness_prime_sigma(double sigma_i, double sigma_j) {
    return std::sqrt(sigma_i * sigma_i + sigma_j * sigma_j);
}

double entanglement_margin(double w, double sigma, WitnessVariant variant) {
    if (variant == WitnessVariant::W) {
        return -0.5 + std::abs(w + 0.5) + kZ99 * sigma;
    }
    return -1 + std::abs(w + 1) + kZ99 * sigma;
}

bool entanglement_test(double w, double sigma, WitnessVariant variant) {
    return entanglement_margin(w, sigma, variant) < 0;
}

StabilizerReport make_report(const Graph &g, const std::vector<Estimate> &nodes, const std::vector<Estimate> &edges) {
    g.validate();
    if (nodes.size() != g.num_nodes || edges.size() != g.edges.size()) {
        throw GraphError("report needs one estimate per node and per edge");
    }
    StabilizerReport r;
    r.nodes = nodes;
    size_t pass_w = 0, pass_wp = 0;
    for (size_t e = 0; e < g.edges.size(); e++) {
        auto [i, j] = g.edges[e];
        EdgeReport er;
        er.edge = g.edges[e];
        er.cut = g.is_cut(i, j);
        er.product = edges[e];
        er.w = witness(nodes[i].value, nodes[j].value, edges[e].value);
        er.sigma_w = witness_sigma(nodes[i].sigma, nodes[j].sigma, edges[e].sigma);
        er.w_prime = witness_prime(nodes[i].value, nodes[j].value);
        er.sigma_w_prime = witness_prime_sigma(nodes[i].sigma, nodes[j].sigma);
        er.pass_w = entanglement_test(er.w, er.sigma_w, WitnessVariant::W);
        er.pass_w_prime = entanglement_test(er.w_prime, er.sigma_w_prime, WitnessVariant::WPrime);
        pass_w += er.pass_w;
        pass_wp += er.pass_w_prime;
        r.edges.push_back(er);
    }
    for (const auto &n : nodes) {
        r.sum_abs_node_error += std::abs(n.value - 1);
    }
    if (!g.edges.empty()) {
        r.pass_fraction_w = static_cast<double>(pass_w) / g.edges.size();
        r.pass_fraction_w_prime = static_cast<double>(pass_wp) / g.edges.size();
    }
    return r;
}

std::string StabilizerReport::to_text() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "report\n";
    for (const auto &[k, v] : provenance) {
        out << "meta " << k << " " << v << "\n";
    }
    out << "sum_abs_node_error " << sum_abs_node_error << "\n";
    out << "pass_fraction_w " << pass_fraction_w << "\n";
    out << "pass_fraction_w_prime " << pass_fraction_w_prime << "\n";
    for (size_t i = 0; i < nodes.size(); i++) {
        out << "node " << i << " " << nodes[i].value << " " << nodes[i].sigma;
        if (i < raw_nodes.size()) {
            out << " raw " << raw_nodes[i].value << " " << raw_nodes[i].sigma;
        }
        out << "\n";
    }
    for (size_t e = 0; e < edges.size(); e++) {
        const auto &er = edges[e];
        out << "edge " << er.edge.first << " " << er.edge.second << (er.cut ? " cut" : " native") << " "
            << er.product.value << " " << er.product.sigma << " W " << er.w << " " << er.sigma_w << " "
            << (er.pass_w ? "pass" : "fail") << " Wp " << er.w_prime << " " << er.sigma_w_prime << " "
            << (er.pass_w_prime ? "pass" : "fail");
        if (e < raw_edges.size()) {
            out << " raw " << raw_edges[e].value << " " << raw_edges[e].sigma;
        }
        out << "\n";
    }
    return out.str();
}

std::string_view method_name(GraphMethod m) {
    switch (m) {
        case GraphMethod::Native:
            return "native";
        case GraphMethod::DroppedEdge:
            return "dropped_edge";
        case GraphMethod::Swap:
            return "swap";
        case GraphMethod::LO:
            return "lo";
        case GraphMethod::LOCC:
            return "locc";
    }
    return "?";
}

GraphMethod method_from_name(std::string_view name) {
    for (auto m : {GraphMethod::Native, GraphMethod::DroppedEdge, GraphMethod::Swap, GraphMethod::LO,
                   GraphMethod::LOCC}) {
        if (method_name(m) == name) {
            return m;
        }
    }
    throw ConfigError("unknown method " + std::string(name));
}

PauliString GraphStateProgram::place(const PauliString &p) const {
    PauliString out;
    for (auto [q, op] : p.ops()) {
        if (q >= layout.size()) {
            throw GraphError("observable acts outside the graph");
        }
        out.set(layout[q], op);
    }
    return out;
}

GraphStateProgram graph_state_circuit(const Graph &g, GraphMethod method, const CouplingMap &map,
                                      const GraphStateOptions &options) {
    g.validate();
    const uint32_t n = g.num_nodes;
    const bool needs_cuts = method == GraphMethod::Swap || method == GraphMethod::LO || method == GraphMethod::LOCC ||
                            method == GraphMethod::DroppedEdge;
    if (needs_cuts && g.cut_edges.empty()) {
        throw GraphError(std::string(method_name(method)) + " needs at least one cut edge");
    }
    GraphStateProgram prog;
    prog.method = method;
    prog.layout.resize(n);
    for (uint32_t i = 0; i < n; i++) {
        prog.layout[i] = i;
    }
    const uint32_t width = method == GraphMethod::LOCC ? n + 2 * static_cast<uint32_t>(g.cut_edges.size()) : n;
    if (map.num_qubits > 0 && map.num_qubits < width) {
        throw GraphError(method == GraphMethod::LOCC ? "insufficient ancillas on the coupling map"
                                                     : "coupling map is smaller than the graph");
    }
    prog.qpu_of.assign(n, 0);
    for (uint32_t i = 0; i < n && i < map.qpu_of.size(); i++) {
        prog.qpu_of[i] = map.qpu_of[i];
    }
    Circuit c(width);
    for (uint32_t i = 0; i < n; i++) {
        c.h(i);
    }
    for (auto [a, b] : g.edges) {
        if (!g.is_cut(a, b)) {
            c.cz(a, b);
        }
    }
    switch (method) {
        case GraphMethod::Native:
            for (auto [a, b] : g.cut_edges) {
                c.cz(a, b);
            }
            prog.cc.base = std::move(c);
            break;
        case GraphMethod::DroppedEdge:
            prog.cc.base = std::move(c);
            break;
        case GraphMethod::Swap: {
            for (auto [a, b] : g.cut_edges) {
                c.cz(a, b);
            }
            auto routed = swap_route(c, map.num_qubits ? map : CouplingMap::line(n));
            prog.cc.base = std::move(routed.circuit);
            prog.layout = routed.final_layout;
            prog.swaps = routed.swaps_inserted;
            break;
        }
        case GraphMethod::LO: {
            prog.cc.base = std::move(c);
            VirtualGateSpec spec{VirtualGate::CZ, g.cut_edges, CutProtocol::LO, {}};
            for (auto &placed : lo_virtual_qpds(spec)) {
                prog.cc.cuts.push_back({prog.cc.base.instructions.size(), placed.qubits, std::move(placed.qpd)});
            }
            break;
        }
        case GraphMethod::LOCC: {
            prog.cc.base = std::move(c);
            const uint32_t per = std::max(1u, options.pairs_per_gate);
            uint32_t next = n;
            prog.qpu_of.resize(width, 0);
            for (size_t s = 0; s < g.cut_edges.size(); s += per) {
                size_t e = std::min(g.cut_edges.size(), s + per);
                uint32_t k = static_cast<uint32_t>(e - s);
                VirtualGateSpec spec;
                spec.gate = VirtualGate::CZ;
                spec.protocol = CutProtocol::LOCC;
                for (size_t i = s; i < e; i++) {
                    auto [u, v] = g.cut_edges[i];
                    if (prog.qpu_of[u] > prog.qpu_of[v]) {
                        std::swap(u, v);
                    }
                    spec.pairs.push_back({u, v});
                    spec.ancillas.push_back({next, next + 1});
                    prog.qpu_of[next] = prog.qpu_of[u];
                    prog.qpu_of[next + 1] = prog.qpu_of[v];
                    next += 2;
                }
                const CutBellFactory *f = nullptr;
                for (const auto &cand : options.factories) {
                    if (cand.k == k) {
                        f = &cand;
                        break;
                    }
                }
                CutBellFactory built;
                if (!f) {
                    built = build_factory(k, options.factory_seed);
                    f = &built;
                }
                auto placed = locc_virtual_qpd(spec, *f);
                prog.cc.cuts.push_back({prog.cc.base.instructions.size(), placed.qubits, std::move(placed.qpd)});
            }
            break;
        }
    }
    return prog;
}

}  // namespace qlink
