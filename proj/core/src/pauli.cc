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

#include "qlink/pauli.h"

#include <sstream>

#include "qlink/errors.h"

namespace qlink {

namespace {

// Product of single-qubit Paulis a*b = i^phase * result.
char mul1(char a, char b, int &phase) {
    if (a == 'I') {
        return b;
    }
    if (b == 'I') {
        return a;
    }
    if (a == b) {
        return 'I';
    }
    static const std::string cyc = "XYZ";
    int ia = static_cast<int>(cyc.find(a)), ib = static_cast<int>(cyc.find(b));
    phase += ((ib - ia + 3) % 3 == 1) ? 1 : 3;
    return cyc[3 - ia - ib];
}

void check_op(char op) {
    if (op != 'X' && op != 'Y' && op != 'Z' && op != 'I') {
        throw ParseError(std::string("invalid Pauli '") + op + "'");
    }
}

}  // namespace

PauliString PauliString::single(uint32_t qubit, char op) {
    PauliString p;
    p.set(qubit, op);
    return p;
}

PauliString PauliString::dense(std::string_view text) {
    PauliString p;
    for (size_t k = 0; k < text.size(); k++) {
        char c = text[k] == '_' ? 'I' : text[k];
        check_op(c);
        p.set(static_cast<uint32_t>(k), c);
    }
    return p;
}

PauliString PauliString::parse(std::string_view text) {
    PauliString p;
    std::istringstream is{std::string(text)};
    std::string tok;
    bool first = true;
    while (is >> tok) {
        if (first) {
            first = false;
            if (tok == "+" || tok == "-" || tok == "i" || tok == "-i" || tok == "+i") {
                p.phase_ = tok == "-" ? 2 : tok == "-i" ? 3 : (tok == "i" || tok == "+i") ? 1 : 0;
                continue;
            }
            if (tok[0] == '+' || tok[0] == '-') {
                p.phase_ = tok[0] == '-' ? 2 : 0;
                tok = tok.substr(1);
            }
        }
        if (tok.size() < 2) {
            throw ParseError("bad Pauli token '" + tok + "'");
        }
        check_op(tok[0]);
        size_t used = 0;
        unsigned long q = 0;
        try {
            q = std::stoul(tok.substr(1), &used);
        } catch (const std::exception &) {
            throw ParseError("bad Pauli token '" + tok + "'");
        }
        if (used + 1 != tok.size()) {
            throw ParseError("bad Pauli token '" + tok + "'");
        }
        if (p.ops_.count(static_cast<uint32_t>(q))) {
            throw ParseError("qubit repeated in Pauli string");
        }
        p.set(static_cast<uint32_t>(q), tok[0]);
    }
    return p;
}

char PauliString::at(uint32_t qubit) const {
    auto it = ops_.find(qubit);
    return it == ops_.end() ? 'I' : it->second;
}

void PauliString::set(uint32_t qubit, char op) {
    check_op(op);
    if (op == 'I') {
        ops_.erase(qubit);
    } else {
        ops_[qubit] = op;
    }
}

std::vector<uint32_t> PauliString::support() const {
    std::vector<uint32_t> s;
    for (const auto &[q, _] : ops_) {
        s.push_back(q);
    }
    return s;
}

std::complex<double> PauliString::coefficient() const {
    static const std::complex<double> table[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    return table[phase_ & 3];
}

int PauliString::sign() const {
    if (phase_ & 1) {
        throw Error("Pauli string has an imaginary phase");
    }
    return phase_ == 0 ? 1 : -1;
}

PauliString PauliString::operator*(const PauliString &other) const {
    PauliString out = *this;
    int phase = phase_ + other.phase_;
    for (const auto &[q, op] : other.ops_) {
        char r = mul1(at(q), op, phase);
        out.set(q, r);
    }
    out.phase_ = phase & 3;
    return out;
}

bool PauliString::commutes(const PauliString &other) const {
    int anti = 0;
    for (const auto &[q, op] : ops_) {
        char b = other.at(q);
        anti += b != 'I' && b != op;
    }
    return anti % 2 == 0;
}

bool PauliString::qubit_wise_commutes(const PauliString &other) const {
    for (const auto &[q, op] : ops_) {
        char b = other.at(q);
        if (b != 'I' && b != op) {
            return false;
        }
    }
    return true;
}

uint64_t PauliString::x_mask() const {
    uint64_t m = 0;
    for (const auto &[q, op] : ops_) {
        if (q >= 64) {
            throw CapacityError("Pauli mask limited to 64 qubits");
        }
        if (op == 'X' || op == 'Y') {
            m |= uint64_t{1} << q;
        }
    }
    return m;
}

uint64_t PauliString::z_mask() const {
    uint64_t m = 0;
    for (const auto &[q, op] : ops_) {
        if (q >= 64) {
            throw CapacityError("Pauli mask limited to 64 qubits");
        }
        if (op == 'Z' || op == 'Y') {
            m |= uint64_t{1} << q;
        }
    }
    return m;
}

std::string PauliString::str() const {
    static const char *signs[4] = {"+", "+i", "-", "-i"};
    std::string s = signs[phase_ & 3];
    bool first = true;
    for (const auto &[q, op] : ops_) {
        s += first ? "" : " ";
        first = false;
        s += op;
        s += std::to_string(q);
    }
    if (first) {
        s += "I";
    }
    return s;
}

bool PauliString::operator<(const PauliString &other) const {
    if (ops_ != other.ops_) {
        return ops_ < other.ops_;
    }
    return phase_ < other.phase_;
}

}  // namespace qlink
