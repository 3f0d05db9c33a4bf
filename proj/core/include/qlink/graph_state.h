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

#ifndef QLINK_GRAPH_STATE_H
#define QLINK_GRAPH_STATE_H

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qlink/circuit.h"
#include "qlink/gate_cutting.h"
#include "qlink/pauli.h"
#include "qlink/qpd.h"

namespace qlink {

using Edge = std::pair<uint32_t, uint32_t>;

struct Graph {
    uint32_t num_nodes = 0;
    std::vector<Edge> edges;
    /// Long-range edges; each must also appear in `edges`.
    std::vector<Edge> cut_edges;

    static Graph path(uint32_t n);
    /// Path 0..n-1 closed by the listed extra edges, which are the cut edges.
    static Graph ring(uint32_t n, uint32_t num_cuts = 1);

    void validate() const;
    bool has_edge(uint32_t a, uint32_t b) const;
    bool is_cut(uint32_t a, uint32_t b) const;
    std::vector<uint32_t> neighbors(uint32_t i) const;
    /// Nodes touching a cut edge.
    std::vector<bool> cut_adjacent() const;
};

/// X_i prod_{k in N(i)} Z_k.
PauliString node_stabilizer(const Graph &g, uint32_t i);
/// S_i S_j for an edge (i, j).
PauliString edge_stabilizer(const Graph &g, uint32_t i, uint32_t j);
/// Node stabilizers in node order followed by edge stabilizers in edge order.
std::vector<PauliString> all_stabilizers(const Graph &g);

/// Qubit-wise commuting partition by greedy colouring, largest degree first, ties by index.
std::vector<std::vector<size_t>> commuting_groups(const std::vector<PauliString> &observables);
/// The single-qubit basis shared by a qubit-wise commuting group.
PauliString group_basis(const std::vector<PauliString> &observables, const std::vector<size_t> &group);

double witness(double si, double sj, double sij);
double witness_prime(double si, double sj);
double witness_sigma(double sigma_i, double sigma_j, double sigma_ij);
double witness_prime_sigma(double sigma_i, double sigma_j);

enum class WitnessVariant { W, WPrime };

constexpr double kZ99 = 2.326;

bool entanglement_test(double w, double sigma, WitnessVariant variant);
/// Left-hand side of the one-tailed test; negative means entanglement is detected.
double entanglement_margin(double w, double sigma, WitnessVariant variant);

struct Estimate {
    double value = 0;
    double sigma = 0;
};

struct EdgeReport {
    Edge edge;
    bool cut = false;
    Estimate product;
    double w = 0;
    double sigma_w = 0;
    double w_prime = 0;
    double sigma_w_prime = 0;
    bool pass_w = false;
    bool pass_w_prime = false;
};

struct StabilizerReport {
    std::vector<Estimate> nodes;
    std::vector<EdgeReport> edges;
    /// Unmitigated values in the same order, when available.
    std::vector<Estimate> raw_nodes;
    std::vector<Estimate> raw_edges;
    double sum_abs_node_error = 0;
    double pass_fraction_w = 0;
    double pass_fraction_w_prime = 0;
    std::map<std::string, std::string> provenance;

    std::string to_text() const;
};

StabilizerReport make_report(const Graph &g, const std::vector<Estimate> &nodes, const std::vector<Estimate> &edges);

enum class GraphMethod { Native, DroppedEdge, Swap, LO, LOCC };

std::string_view method_name(GraphMethod m);
GraphMethod method_from_name(std::string_view name);

struct GraphStateOptions {
    /// Cut edges per LOCC virtual gate; the last gate takes the remainder. Pairs are oriented so the
    /// control sits on the lower-numbered QPU.
    uint32_t pairs_per_gate = 2;
    /// Factories to use by k; missing ones are built with `factory_seed`.
    std::vector<CutBellFactory> factories;
    uint64_t factory_seed = 0;
};

struct GraphStateProgram {
    GraphMethod method = GraphMethod::Native;
    CutCircuit cc;
    /// layout[node] is the circuit qubit holding that node at the end.
    std::vector<uint32_t> layout;
    /// QPU of every circuit qubit: nodes follow the coupling map, ancillas follow their pair end.
    std::vector<uint32_t> qpu_of;
    size_t swaps = 0;

    PauliString place(const PauliString &p) const;
};

GraphStateProgram graph_state_circuit(const Graph &g, GraphMethod method, const CouplingMap &map = {},
                                      const GraphStateOptions &options = {});

}  // namespace qlink

#endif
