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

#ifndef QLINK_GATE_CUTTING_H
#define QLINK_GATE_CUTTING_H

#include <cstdint>
#include <string>
#include <vector>

#include "qlink/circuit.h"
#include "qlink/qpd.h"
#include "qlink/sim.h"

namespace qlink {

/// Six-member LO decomposition of CZ on qubits (0, 1). Members with a mid-circuit measurement
/// write one clbit whose outcome sets the sign.
Qpd lo_cz_qpd();

/// prod_b (-1)^b.
int lo_sign(const std::vector<int> &outcome_bits);

uint64_t factory_t(uint32_t k);
uint64_t factory_n_plus(uint32_t k);
uint64_t factory_n_minus(uint32_t k);
uint64_t factory_size(uint32_t k);
double factory_gamma(uint32_t k);

/// Parametric circuit on 2k qubits: side A is qubits 0..k-1, side B is k..2k-1, Bell pairs are (i, k+i).
/// Each layer holds a U2 on every qubit (angles ordered per qubit as theta, phi), followed by
/// CNOT ladders inside each side between layers.
Circuit factory_template(uint32_t k);

struct CutBellFactory {
    uint32_t k = 0;
    Circuit templ;
    std::vector<std::vector<double>> params;
    std::vector<double> coeffs;
    /// Largest per-state L2 fit error.
    double residual = 0;
    uint64_t seed = 0;

    size_t size() const {
        return params.size();
    }
    double gamma() const;
    Circuit member(size_t i) const;
    Qpd qpd() const;

    std::string to_json() const;
    static CutBellFactory from_json(const std::string &text);
};

struct FactoryOptions {
    uint32_t restarts = 64;
    double tolerance = 1e-8;
    unsigned threads = 1;
};

/// k = 1 uses the closed-form parameter sets; k = 2, 3 fit each positive-branch state.
CutBellFactory build_factory(uint32_t k, uint64_t seed, const FactoryOptions &options = {});
CutBellFactory load_factory(const std::string &path);

/// Phase-coded product states whose uniform mixture equals the positive branch rho_k^+; side A of member j.
std::vector<std::vector<cplx>> factory_positive_targets(uint32_t k);

/// sum_i a_i |psi_i><psi_i|.
DensityMatrix factory_density(const CutBellFactory &f);
/// Normalized mixture of the positive (sign > 0) or negative members.
DensityMatrix factory_branch_density(const CutBellFactory &f, bool positive);
/// (|Phi+><Phi+|)^{(x)k} on pairs (i, k+i).
DensityMatrix bell_projector(uint32_t k);

/// Second singular value of the amplitude matrix across the A|B split (0 for product states).
double schmidt_residual(const StateVector &psi, uint32_t num_a);

enum class VirtualGate { CZ, CNOT };
enum class CutProtocol { LO, LOCC };

struct VirtualGateSpec {
    VirtualGate gate = VirtualGate::CZ;
    /// (control-side qubit, target-side qubit).
    std::vector<std::pair<uint32_t, uint32_t>> pairs;
    CutProtocol protocol = CutProtocol::LOCC;
    /// (a, b) ancillas per pair; a sits with the control, b with the target.
    std::vector<std::pair<uint32_t, uint32_t>> ancillas;

    void validate() const;
    /// Qubits in fragment order: c0, t0, c1, t1, ..., a0..a_{k-1}, b0..b_{k-1}.
    std::vector<uint32_t> fragment_qubits() const;
};

/// Teleportation fragment in fragment order: per-pair CNOTs into and out of the ancillas,
/// 2k measurements, then one switch over 4^k cases with the Pauli corrections.
Circuit teleport_consumer(const VirtualGateSpec &spec);

/// QPD whose member i is the bound factory member on the ancillas followed by the consumer.
PlacedQpd locc_virtual_qpd(const VirtualGateSpec &spec, const CutBellFactory &factory);
/// One LO QPD per pair; CNOT pairs are conjugated by H on the target.
std::vector<PlacedQpd> lo_virtual_qpds(const VirtualGateSpec &spec);

/// Four-qubit line: a Bell pair on the middle qubits is consumed to build a two-node graph state on 0 and 3.
Circuit bell_benchmark_circuit();
double mse(double zx, double xz);

}  // namespace qlink

#endif
