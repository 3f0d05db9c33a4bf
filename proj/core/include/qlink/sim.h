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

#ifndef QLINK_SIM_H
#define QLINK_SIM_H

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qlink/circuit.h"
#include "qlink/noise.h"
#include "qlink/pauli.h"

namespace qlink {

using cplx = std::complex<double>;
/// Row-major 2x2 matrix.
using Mat2 = std::array<cplx, 4>;

Mat2 single_qubit_matrix(GateKind kind, double a0 = 0, double a1 = 0);
Mat2 matmul(const Mat2 &a, const Mat2 &b);

/// Dense statevector. Qubit q is bit q of the amplitude index.
class StateVector {
   public:
    explicit StateVector(uint32_t num_qubits);
    static StateVector basis(uint32_t num_qubits, uint64_t index);

    uint32_t num_qubits() const {
        return n_;
    }
    std::vector<cplx> &amps() {
        return amps_;
    }
    const std::vector<cplx> &amps() const {
        return amps_;
    }

    void apply_1q(uint32_t q, const Mat2 &m);
    void apply_cz(uint32_t a, uint32_t b);
    void apply_cnot(uint32_t control, uint32_t target);
    void apply_swap(uint32_t a, uint32_t b);
    void apply_gate(const Gate &g);
    /// Multiplies by exp(-i theta/2 Z_a Z_b).
    void apply_zz_phase(uint32_t a, uint32_t b, double theta);
    /// Multiplies by exp(-i theta/2 Z_q).
    void apply_z_phase(uint32_t q, double theta);
    /// Applies exp(-i t/2 H) with H the ZZ and Z detuning terms supported on `qubits`.
    void apply_idle_phase(const std::vector<uint32_t> &qubits, const NoiseModel &noise, double t);

    double prob_one(uint32_t q) const;
    /// Projects qubit q onto |bit> and renormalizes by the given branch probability.
    void project(uint32_t q, int bit, double prob);
    double norm2() const;
    void normalize();

    cplx expectation_complex(const PauliString &p) const;
    double expectation(const PauliString &p) const;
    cplx inner(const StateVector &other) const;

   private:
    uint32_t n_;
    std::vector<cplx> amps_;
};

/// Density matrix stored column-major as a 2n-qubit vector: entry (r, c) at r + (c << n).
class DensityMatrix {
   public:
    explicit DensityMatrix(uint32_t num_qubits);
    static DensityMatrix from_state(const StateVector &psi);
    static DensityMatrix zero(uint32_t num_qubits);

    uint32_t num_qubits() const {
        return n_;
    }
    size_t dim() const {
        return size_t{1} << n_;
    }
    cplx at(size_t r, size_t c) const {
        return vec_.amps()[r + (c << n_)];
    }
    cplx &at(size_t r, size_t c) {
        return vec_.amps()[r + (c << n_)];
    }

    void apply_1q(uint32_t q, const Mat2 &m);
    void apply_cz(uint32_t a, uint32_t b);
    void apply_cnot(uint32_t control, uint32_t target);
    void apply_swap(uint32_t a, uint32_t b);
    void apply_gate(const Gate &g);
    void apply_idle_phase(const std::vector<uint32_t> &qubits, const NoiseModel &noise, double t);

    void amplitude_damp(uint32_t q, double gamma);
    /// Applies Z with probability p.
    void dephase(uint32_t q, double p);
    /// Applies X with probability p.
    void bit_flip(uint32_t q, double p);
    /// Replaces the (a, b) marginal by the maximally mixed state with probability p.
    void depolarize2(uint32_t a, uint32_t b, double p);

    double prob_one(uint32_t q) const;
    void project(uint32_t q, int bit, double prob);

    cplx trace() const;
    double expectation(const PauliString &p) const;
    double frobenius_distance(const DensityMatrix &other) const;
    /// Largest deviation from Hermiticity, unit trace and non-negative spectrum.
    double max_hermitian_error() const;
    double min_eigenvalue() const;

    DensityMatrix &operator+=(const DensityMatrix &other);
    DensityMatrix &operator*=(double s);

   private:
    uint32_t n_;
    StateVector vec_;
};

struct Counts {
    uint32_t num_clbits = 0;
    uint64_t shots = 0;
    uint64_t seed = 0;
    std::map<uint64_t, uint64_t> hist;

    static std::string bitstring(uint64_t bits, uint32_t num_clbits);
    static uint64_t parse_bitstring(const std::string &s);
    uint64_t total() const;
    double parity_expectation(uint64_t mask) const;
    std::string to_text() const;
    static Counts from_text(const std::string &text);
    bool operator==(const Counts &other) const = default;
};

struct Distribution {
    uint32_t num_clbits = 0;
    std::map<uint64_t, double> probs;

    double total() const;
    double parity_expectation(uint64_t mask) const;
};

/// Expectation of (-1)^{popcount(bits & mask)}.
inline int parity_sign(uint64_t bits, uint64_t mask) {
    return (__builtin_popcountll(bits & mask) & 1) ? -1 : 1;
}

uint64_t clbit_mask(const std::vector<uint32_t> &clbits);

struct SimOptions {
    uint32_t max_qubits = 20;
    unsigned threads = 1;
    /// Global identities of the local qubits, used to key random events. Empty means identity.
    std::vector<uint32_t> qubit_ids;
};

/// Resolves the case of a remote switch: (shot, label, switch, local bits) -> case index.
using RemoteResolver = std::function<uint64_t(uint64_t shot, uint32_t label, const Switch &sw, uint64_t bits)>;

/// Runs one trajectory and returns the final classical register.
uint64_t run_single_shot(const Circuit &circuit, const NoiseModel &noise, uint64_t seed, uint64_t shot,
                         const SimOptions &options = {}, const RemoteResolver *resolver = nullptr);

Counts run_shots(const Circuit &circuit, const NoiseModel &noise, uint64_t shots, uint64_t seed,
                 const SimOptions &options = {});

/// Exact distribution over the classical register by enumerating measurement branches.
Distribution outcome_distribution(const Circuit &circuit, const NoiseModel &noise = {});

/// Distributions of prefix+suffix for each suffix. Suffixes hold single-qubit gates and terminal measurements.
std::vector<Distribution> outcome_distributions(const Circuit &prefix, const std::vector<Circuit> &suffixes,
                                                const NoiseModel &noise = {});

Counts sample_counts(const Distribution &dist, uint64_t shots, uint64_t seed);

double exact_expectation(const Circuit &circuit, const PauliString &observable);
/// Exact Tr[O rho_out] for each observable, times (-1)^{sign clbits} averaged over measurement branches.
std::vector<double> exact_expectations(const Circuit &circuit, const std::vector<Observable> &observables,
                                       const NoiseModel &noise = {});

StateVector final_state(const Circuit &circuit);
/// Branch-averaged output state.
DensityMatrix final_density_matrix(const Circuit &circuit, const NoiseModel &noise = {});

/// Idle evolution of all qubits for `duration`: coherent ZZ/Z phases, then T1 and pure dephasing.
DensityMatrix apply_noise_channel(const DensityMatrix &rho, const NoiseModel &noise, double duration);

}  // namespace qlink

#endif
