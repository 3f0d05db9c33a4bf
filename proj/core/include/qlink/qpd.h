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

#ifndef QLINK_QPD_H
#define QLINK_QPD_H

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qlink/circuit.h"
#include "qlink/noise.h"
#include "qlink/pauli.h"
#include "qlink/sim.h"

namespace qlink {

/// One term a_i * E_i. The realization acts on the QPD's local qubits and owns its classical bits;
/// the member's sign is (-1)^{parity of sign_clbits}.
struct QpdMember {
    double coeff = 0;
    Circuit circuit;
    std::vector<uint32_t> sign_clbits;
};

struct Qpd {
    uint32_t num_qubits = 0;
    std::vector<QpdMember> members;

    size_t size() const {
        return members.size();
    }
    double gamma() const;
    std::vector<double> probabilities() const;
    int sign(size_t i) const {
        return members[i].coeff < 0 ? -1 : 1;
    }
    double coefficient_sum() const;
    /// Largest clbit count over members.
    uint32_t num_clbits() const;
    void validate() const;

    std::string to_json() const;
    static Qpd from_json(const std::string &text);
};

/// The identity channel as a one-member QPD.
Qpd trivial_qpd(uint32_t num_qubits);

/// prod_j gamma_j^{2 n_j}.
double sampling_overhead(const std::vector<double> &gammas, const std::vector<uint32_t> &counts);

/// I * sum_i a_i^2.
double enumeration_cost(const Qpd &qpd);

/// A QPD acting on a subset of qubits of a larger register.
struct PlacedQpd {
    Qpd qpd;
    std::vector<uint32_t> qubits;
};

/// Product QPD over disjoint supports. Qubits of the result are the concatenated supports.
PlacedQpd tensor(const std::vector<PlacedQpd> &qpds);

/// A QPD inserted into a base circuit before instruction `position`.
struct CutSite {
    size_t position = 0;
    std::vector<uint32_t> qubits;
    Qpd qpd;
};

struct CutCircuit {
    Circuit base;
    std::vector<CutSite> cuts;

    void validate() const;
};

struct Instance {
    Circuit circuit;
    /// Global clbits carrying the sign of each instantiated cut.
    std::vector<uint32_t> sign_clbits;
    double coeff = 1;
};

/// Builds the circuit for one member choice per cut; -1 drops the cut (identity substitution).
/// Fragment clbits are appended after the base clbits in cut order.
Instance instantiate(const CutCircuit &cc, const std::vector<int> &choice);

/// Qubits reachable from `start` through two-qubit gates and classically controlled switches.
std::vector<bool> forward_cone(const std::vector<Instruction> &insts, uint32_t num_qubits, uint32_t num_clbits,
                               std::vector<bool> start);

/// Indices of cuts whose influence reaches the observable support, directly or through a retained cut.
std::vector<size_t> light_cone_reduce(const CutCircuit &cc, const std::vector<uint32_t> &support);

/// Mixed-radix enumeration of member choices for the listed cuts; others are dropped (-1).
std::vector<std::vector<int>> enumerate_choices(const CutCircuit &cc, const std::vector<size_t> &active);

/// Exact sum over member choices of coeff * <O * signs>, restricted to each observable's light cone.
std::vector<double> exact_cut_expectations(const CutCircuit &cc, const std::vector<PauliString> &observables,
                                           const NoiseModel &noise = {}, bool reduce = true);

struct MemberEstimate {
    double mean = 0;
    double variance = 0;
    uint64_t shots = 0;
};

/// Estimates <O> (including the observable's clbit signs) for a bound circuit.
using Backend =
    std::function<MemberEstimate(const Circuit &circuit, const Observable &obs, uint64_t shots, uint64_t seed)>;

/// Exact expectations; with shots > 0 the mean is drawn from the binomial of that many +-1 outcomes.
Backend exact_backend(NoiseModel noise = {});
/// Basis rotation, terminal measurement and sampled shots from the exact outcome distribution.
Backend shot_backend(NoiseModel noise = {});

enum class EstimatorMode { Enumerate, Sample };

struct EstimatorResult {
    double value = 0;
    double std_dev = 0;
    uint64_t shots_used = 0;
    EstimatorMode mode = EstimatorMode::Enumerate;
};

/// Appends the single-qubit rotations and measurements that read `p` in the computational basis.
/// Returns the clbits that were written; their parity is the Pauli eigenvalue.
std::vector<uint32_t> append_pauli_measurement(Circuit &c, const PauliString &p);

/// Estimates <O> through `qpd`, whose members are run on `input` followed by the member circuit.
/// `input` prepares the state on qpd.num_qubits qubits; `after` runs once the member is applied.
EstimatorResult estimate(const Qpd &qpd, const Circuit &input, const Circuit &after, const PauliString &observable,
                         const Backend &backend, EstimatorMode mode, uint64_t shots, uint64_t seed);

/// Quasi-probability histogram: weight(b) = sum_i a_i f_i(b) / shots_i.
struct WeightedCounts {
    uint32_t num_clbits = 0;
    std::map<uint64_t, double> weights;
    std::vector<std::pair<size_t, uint64_t>> provenance;

    double total() const;
    double parity_expectation(uint64_t mask) const;
};

WeightedCounts merge_weighted(const std::vector<std::pair<double, Counts>> &members);

struct SampleStats {
    double mean = 0;
    /// Per-draw variance and fourth central moment.
    double variance = 0;
    double m4 = 0;
    uint64_t draws = 0;

    double std_err() const;
};

/// Single-shot sample mode over a cut circuit: each draw picks one member per cut in the observable's light cone
/// with probability |a|/gamma, runs one shot and scores gamma * sign * parity.
SampleStats sample_estimator(const CutCircuit &cc, const PauliString &observable, uint64_t draws, uint64_t seed,
                             const NoiseModel &noise = {});

}  // namespace qlink

#endif
