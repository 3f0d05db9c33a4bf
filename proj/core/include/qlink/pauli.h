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

#ifndef QLINK_PAULI_H
#define QLINK_PAULI_H

#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qlink {

/// Sparse Pauli string with a phase i^phase. Identity on qubits not listed.
class PauliString {
   public:
    PauliString() = default;

    /// Parses "+X0 Z1 Y5" style text. A leading sign of "+", "-", "i" or "-i" is optional.
    static PauliString parse(std::string_view text);
    /// Parses a dense string "XIZ" where character k acts on qubit k.
    static PauliString dense(std::string_view text);
    static PauliString single(uint32_t qubit, char op);

    char at(uint32_t qubit) const;
    void set(uint32_t qubit, char op);
    const std::map<uint32_t, char> &ops() const {
        return ops_;
    }
    std::vector<uint32_t> support() const;
    size_t weight() const {
        return ops_.size();
    }
    bool empty() const {
        return ops_.empty();
    }

    /// Phase as a power of i.
    int phase() const {
        return phase_;
    }
    std::complex<double> coefficient() const;
    /// +1 or -1; throws when the phase is imaginary.
    int sign() const;

    PauliString operator*(const PauliString &other) const;
    bool commutes(const PauliString &other) const;
    bool qubit_wise_commutes(const PauliString &other) const;

    uint64_t x_mask() const;
    uint64_t z_mask() const;

    std::string str() const;
    bool operator==(const PauliString &other) const = default;
    bool operator<(const PauliString &other) const;

   private:
    std::map<uint32_t, char> ops_;
    int phase_ = 0;
};

/// A Pauli expectation optionally multiplied by (-1)^c for a list of classical bits.
struct Observable {
    PauliString pauli;
    std::vector<uint32_t> sign_clbits;

    Observable() = default;
    Observable(PauliString p, std::vector<uint32_t> s = {}) : pauli(std::move(p)), sign_clbits(std::move(s)) {
    }
};

}  // namespace qlink

#endif
