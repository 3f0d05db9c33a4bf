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

#ifndef QLINK_MITIGATION_H
#define QLINK_MITIGATION_H

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "qlink/circuit.h"
#include "qlink/noise.h"
#include "qlink/pauli.h"
#include "qlink/sim.h"

namespace qlink {

struct TrexConfig {
    uint32_t n_samples = 5;
    uint64_t seed = 0;
    /// Smallest |<S'>| accepted as a denominator.
    double floor = 0.05;
    /// Extra initial X-flip probability applied to calibration runs only.
    double calibration_prep_error = 0;

    void validate() const;
};

struct TwirlSample {
    Circuit circuit;
    /// Clbits whose measured qubit received an X.
    uint64_t mask = 0;
};

/// One X mask per sample over the (qubit, clbit) measurements.
std::vector<uint64_t> trex_masks(const std::vector<std::pair<uint32_t, uint32_t>> &measurements, const TrexConfig &cfg);
/// Prepends a random X layer to the terminal measurements.
std::vector<TwirlSample> trex_twirl(const Circuit &circuit, const TrexConfig &cfg);
/// The same masks applied to an all-|0> preparation measured into the same clbits.
std::vector<TwirlSample> trex_calibration(const Circuit &circuit, const TrexConfig &cfg);
/// Noise used for the calibration runs.
NoiseModel calibration_noise(const NoiseModel &noise, const TrexConfig &cfg, uint32_t num_qubits);

Counts trex_merge(const std::vector<std::pair<Counts, uint64_t>> &samples);
/// Z on every qubit where `s` acts.
PauliString trex_shadow(const PauliString &s);
double trex_mitigate(double s_twirl, double s_prime, double floor = 0.05);

/// Staggered X-X echo before every top-level switch: four windows of tau + delta with X on colour A
/// after the first and third and on colour B after the second and fourth. The switch latency is then
/// carried by the inserted delays. Colours 2-colour the ZZ coupling graph; qubits default to index parity.
Circuit insert_dd(const Circuit &circuit, double tau, double delta, const std::vector<ZZCoupling> &couplings = {});
/// The echo colouring used by insert_dd.
std::vector<int> dd_colouring(uint32_t num_qubits, const std::vector<ZZCoupling> &couplings);
/// Same window length as insert_dd without the echo pulses.
Circuit stretch_switch(const Circuit &circuit, double tau, double delta);
/// Largest `signal(tau)` over the candidates.
double tune_dd_tau(const std::vector<double> &candidates, const std::function<double(double)> &signal);

struct ZneSchedule {
    std::vector<double> factors{1, 1.5, 2, 2.5, 3};

    void validate() const;
    /// delta = (c - 1) tau.
    double delta(size_t i, double tau) const {
        return (factors[i] - 1) * tau;
    }
};

struct ZnePoint {
    double c = 0;
    double value = 0;
    double sigma = 0;
};

struct ZneResult {
    double value = 0;
    double sigma = 0;
    double slope = 0;
};

/// Weighted linear fit with weights 1/sigma^2 (sigma floored at 1e-6), evaluated at c = 0.
ZneResult zne_extrapolate(const std::vector<ZnePoint> &points);

struct ResampleResult {
    double mean = 0;
    double sigma = 0;
};

/// `reps` subsamples of round(frac * shots) shots drawn without replacement; mean and spread of their parities.
ResampleResult resample(const Counts &counts, uint64_t mask, double frac = 0.1, uint32_t reps = 10, uint64_t seed = 0);
struct ResampleTerm {
    double weight = 0;
    const Counts *counts = nullptr;
    /// Clbits whose parity is the term's outcome.
    uint64_t mask = 0;
};

/// Each rep subsamples every term and sums weight times its parity.
ResampleResult resample_terms(const std::vector<ResampleTerm> &terms, double frac = 0.1, uint32_t reps = 10,
                              uint64_t seed = 0);
/// As above on a signed mixture: each rep subsamples every member and evaluates the weighted merge.
ResampleResult resample_weighted(const std::vector<std::pair<double, Counts>> &members, uint64_t mask,
                                 double frac = 0.1, uint32_t reps = 10, uint64_t seed = 0);

}  // namespace qlink

#endif
