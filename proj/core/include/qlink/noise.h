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

#ifndef QLINK_NOISE_H
#define QLINK_NOISE_H

#include <cstdint>
#include <string>
#include <vector>

namespace qlink {

struct ZZCoupling {
    uint32_t a = 0;
    uint32_t b = 0;
    /// Angular rate in radians per time unit; the Ramsey phase after time t is rate * t.
    double rate = 0;
    bool operator==(const ZZCoupling &other) const = default;
};

/// Per-qubit vectors may be shorter than the register; missing entries are zero.
struct NoiseModel {
    std::vector<double> readout_error;
    /// Probability that a qubit starts in |1> instead of |0>.
    std::vector<double> prep_error;
    /// Static Z detuning in radians per time unit, active during idle windows.
    std::vector<double> z_rate;
    std::vector<double> t1_rate;
    /// Pure-dephasing rate.
    std::vector<double> t2_rate;
    std::vector<ZZCoupling> zz;
    double twoq_depol = 0;
    double switch_latency_tau = 0;

    double readout(uint32_t q) const;
    double prep(uint32_t q) const;
    double detuning(uint32_t q) const;
    double t1(uint32_t q) const;
    double t2(uint32_t q) const;

    bool has_incoherent() const;
    bool has_idle() const;
    bool is_identity() const;
    void validate() const;

    /// Restricts to the listed qubits; new qubit i is old qubit qubits[i]. ZZ pairs leaving the set are dropped.
    NoiseModel restricted(const std::vector<uint32_t> &qubits) const;

    static NoiseModel uniform_readout(uint32_t n, double r);

    std::string to_json() const;
    static NoiseModel from_json(const std::string &text);

    bool operator==(const NoiseModel &other) const = default;
};

}  // namespace qlink

#endif
