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

#include <Eigen/Dense>
#include <cmath>

#include "qlink/errors.h"
#include "qlink/sim.h"

namespace qlink {

namespace {

constexpr double kSqrtHalf = 0.70710678118654752440;

Mat2 rz(double theta) {
    return {std::polar(1.0, -theta / 2), 0, 0, std::polar(1.0, theta / 2)};
}

Mat2 conj(const Mat2 &m) {
    return {std::conj(m[0]), std::conj(m[1]), std::conj(m[2]), std::conj(m[3])};
}

}  // namespace

Mat2 matmul(const Mat2 &a, const Mat2 &b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3]};
}

Mat2 single_qubit_matrix(GateKind kind, double a0, double a1) {
    switch (kind) {
        case GateKind::H:
            return {kSqrtHalf, kSqrtHalf, kSqrtHalf, -kSqrtHalf};
        case GateKind::X:
            return {0, 1, 1, 0};
        case GateKind::Z:
            return {1, 0, 0, -1};
        case GateKind::SqrtX:
            return {cplx(0.5, 0.5), cplx(0.5, -0.5), cplx(0.5, -0.5), cplx(0.5, 0.5)};
        case GateKind::Rz:
            return rz(a0);
        case GateKind::U2: {
            auto sx = single_qubit_matrix(GateKind::SqrtX);
            return matmul(rz(a1), matmul(sx, matmul(rz(a0), sx)));
        }
        default:
            throw CircuitError("not a single-qubit gate: " + std::string(gate_name(kind)));
    }
}

StateVector::StateVector(uint32_t num_qubits) : n_(num_qubits), amps_(size_t{1} << num_qubits, 0) {
    if (num_qubits > 30) {
        throw CapacityError("statevector too large");
    }
    amps_[0] = 1;
}

StateVector StateVector::basis(uint32_t num_qubits, uint64_t index) {
    StateVector s(num_qubits);
    s.amps_[0] = 0;
    s.amps_.at(index) = 1;
    return s;
}

void StateVector::apply_1q(uint32_t q, const Mat2 &m) {
    const size_t stride = size_t{1} << q;
    const size_t size = amps_.size();
    cplx *a = amps_.data();
    if (m[1] == cplx(0) && m[2] == cplx(0)) {
        if (m[0] == cplx(1)) {
            for (size_t i = stride; i < size; i += 2 * stride) {
                for (size_t j = i; j < i + stride; j++) {
                    a[j] *= m[3];
                }
            }
            return;
        }
        for (size_t i = 0; i < size; i += 2 * stride) {
            for (size_t j = i; j < i + stride; j++) {
                a[j] *= m[0];
                a[j + stride] *= m[3];
            }
        }
        return;
    }
    if (m[0] == cplx(0) && m[3] == cplx(0) && m[1] == cplx(1) && m[2] == cplx(1)) {
        for (size_t i = 0; i < size; i += 2 * stride) {
            for (size_t j = i; j < i + stride; j++) {
                std::swap(a[j], a[j + stride]);
            }
        }
        return;
    }
    for (size_t i = 0; i < size; i += 2 * stride) {
        for (size_t j = i; j < i + stride; j++) {
            cplx x = a[j], y = a[j + stride];
            a[j] = m[0] * x + m[1] * y;
            a[j + stride] = m[2] * x + m[3] * y;
        }
    }
}

void StateVector::apply_cz(uint32_t qa, uint32_t qb) {
    const size_t mask = (size_t{1} << qa) | (size_t{1} << qb);
    for (size_t i = 0; i < amps_.size(); i++) {
        if ((i & mask) == mask) {
            amps_[i] = -amps_[i];
        }
    }
}

void StateVector::apply_cnot(uint32_t control, uint32_t target) {
    const size_t cm = size_t{1} << control, tm = size_t{1} << target;
    for (size_t i = 0; i < amps_.size(); i++) {
        if ((i & cm) && !(i & tm)) {
            std::swap(amps_[i], amps_[i | tm]);
        }
    }
}

void StateVector::apply_swap(uint32_t qa, uint32_t qb) {
    const size_t am = size_t{1} << qa, bm = size_t{1} << qb;
    for (size_t i = 0; i < amps_.size(); i++) {
        if ((i & am) && !(i & bm)) {
            std::swap(amps_[i], amps_[(i ^ am) | bm]);
        }
    }
}

void StateVector::apply_gate(const Gate &g) {
    if (!g.angles[0].bound() || !g.angles[1].bound()) {
        throw CircuitError("cannot simulate an unbound parameter");
    }
    switch (g.kind) {
        case GateKind::CZ:
            apply_cz(g.qubits[0], g.qubits[1]);
            return;
        case GateKind::CNOT:
            apply_cnot(g.qubits[0], g.qubits[1]);
            return;
        case GateKind::SWAP:
            apply_swap(g.qubits[0], g.qubits[1]);
            return;
        default:
            apply_1q(g.qubits[0], single_qubit_matrix(g.kind, g.angles[0].value, g.angles[1].value));
    }
}

void StateVector::apply_zz_phase(uint32_t qa, uint32_t qb, double theta) {
    const cplx same = std::polar(1.0, -theta / 2), diff = std::polar(1.0, theta / 2);
    for (size_t i = 0; i < amps_.size(); i++) {
        bool p = ((i >> qa) ^ (i >> qb)) & 1;
        amps_[i] *= p ? diff : same;
    }
}

void StateVector::apply_z_phase(uint32_t q, double theta) {
    apply_1q(q, rz(theta));
}

void StateVector::apply_idle_phase(const std::vector<uint32_t> &qubits, const NoiseModel &noise, double t) {
    if (t == 0) {
        return;
    }
    std::vector<bool> in(n_, false);
    for (auto q : qubits) {
        in.at(q) = true;
    }
    for (const auto &c : noise.zz) {
        if (c.rate != 0 && c.a < n_ && c.b < n_ && in[c.a] && in[c.b]) {
            apply_zz_phase(c.a, c.b, c.rate * t);
        }
    }
    for (auto q : qubits) {
        if (noise.detuning(q) != 0) {
            apply_z_phase(q, noise.detuning(q) * t);
        }
    }
}

double StateVector::prob_one(uint32_t q) const {
    const size_t stride = size_t{1} << q;
    double p = 0;
    for (size_t i = stride; i < amps_.size(); i += 2 * stride) {
        for (size_t j = i; j < i + stride; j++) {
            p += std::norm(amps_[j]);
        }
    }
    return p;
}

void StateVector::project(uint32_t q, int bit, double prob) {
    const size_t stride = size_t{1} << q;
    const double scale = 1.0 / std::sqrt(prob);
    for (size_t i = 0; i < amps_.size(); i += 2 * stride) {
        for (size_t j = i; j < i + stride; j++) {
            if (bit) {
                amps_[j] = 0;
                amps_[j + stride] *= scale;
            } else {
                amps_[j] *= scale;
                amps_[j + stride] = 0;
            }
        }
    }
}

double StateVector::norm2() const {
    double s = 0;
    for (const auto &a : amps_) {
        s += std::norm(a);
    }
    return s;
}

void StateVector::normalize() {
    double s = 1.0 / std::sqrt(norm2());
    for (auto &a : amps_) {
        a *= s;
    }
}

cplx StateVector::expectation_complex(const PauliString &p) const {
    if (!p.empty() && p.ops().rbegin()->first >= n_) {
        throw Error("observable acts outside the register");
    }
    const uint64_t x = p.x_mask(), z = p.z_mask();
    int ny = __builtin_popcountll(x & z);
    cplx acc = 0;
    for (size_t s = 0; s < amps_.size(); s++) {
        cplx v = std::conj(amps_[s ^ x]) * amps_[s];
        acc += (__builtin_popcountll(s & z) & 1) ? -v : v;
    }
    static const cplx iy[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    return acc * iy[ny & 3] * p.coefficient();
}

double StateVector::expectation(const PauliString &p) const {
    return expectation_complex(p).real();
}

cplx StateVector::inner(const StateVector &other) const {
    cplx acc = 0;
    for (size_t i = 0; i < amps_.size(); i++) {
        acc += std::conj(amps_[i]) * other.amps_[i];
    }
    return acc;
}

DensityMatrix::DensityMatrix(uint32_t num_qubits) : n_(num_qubits), vec_(2 * num_qubits) {
    if (num_qubits > 13) {
        throw CapacityError("density matrix limited to 13 qubits");
    }
}

DensityMatrix DensityMatrix::zero(uint32_t num_qubits) {
    DensityMatrix d(num_qubits);
    d.vec_.amps()[0] = 0;
    return d;
}

DensityMatrix DensityMatrix::from_state(const StateVector &psi) {
    DensityMatrix d(psi.num_qubits());
    size_t dim = d.dim();
    const auto &a = psi.amps();
    for (size_t c = 0; c < dim; c++) {
        for (size_t r = 0; r < dim; r++) {
            d.at(r, c) = a[r] * std::conj(a[c]);
        }
    }
    return d;
}

void DensityMatrix::apply_1q(uint32_t q, const Mat2 &m) {
    vec_.apply_1q(q, m);
    vec_.apply_1q(q + n_, conj(m));
}

void DensityMatrix::apply_cz(uint32_t a, uint32_t b) {
    vec_.apply_cz(a, b);
    vec_.apply_cz(a + n_, b + n_);
}

void DensityMatrix::apply_cnot(uint32_t control, uint32_t target) {
    vec_.apply_cnot(control, target);
    vec_.apply_cnot(control + n_, target + n_);
}

void DensityMatrix::apply_swap(uint32_t a, uint32_t b) {
    vec_.apply_swap(a, b);
    vec_.apply_swap(a + n_, b + n_);
}

void DensityMatrix::apply_gate(const Gate &g) {
    if (!g.angles[0].bound() || !g.angles[1].bound()) {
        throw CircuitError("cannot simulate an unbound parameter");
    }
    switch (g.kind) {
        case GateKind::CZ:
            apply_cz(g.qubits[0], g.qubits[1]);
            return;
        case GateKind::CNOT:
            apply_cnot(g.qubits[0], g.qubits[1]);
            return;
        case GateKind::SWAP:
            apply_swap(g.qubits[0], g.qubits[1]);
            return;
        default:
            apply_1q(g.qubits[0], single_qubit_matrix(g.kind, g.angles[0].value, g.angles[1].value));
    }
}

void DensityMatrix::apply_idle_phase(const std::vector<uint32_t> &qubits, const NoiseModel &noise, double t) {
    if (t == 0) {
        return;
    }
    std::vector<bool> in(n_, false);
    for (auto q : qubits) {
        in.at(q) = true;
    }
    for (const auto &c : noise.zz) {
        if (c.rate != 0 && c.a < n_ && c.b < n_ && in[c.a] && in[c.b]) {
            vec_.apply_zz_phase(c.a, c.b, c.rate * t);
            vec_.apply_zz_phase(c.a + n_, c.b + n_, -c.rate * t);
        }
    }
    for (auto q : qubits) {
        double z = noise.detuning(q);
        if (z != 0) {
            vec_.apply_z_phase(q, z * t);
            vec_.apply_z_phase(q + n_, -z * t);
        }
    }
}

void DensityMatrix::amplitude_damp(uint32_t q, double gamma) {
    if (gamma == 0) {
        return;
    }
    const size_t rb = size_t{1} << q, cb = size_t{1} << (q + n_);
    const double keep = std::sqrt(1 - gamma);
    auto &a = vec_.amps();
    for (size_t i = 0; i < a.size(); i++) {
        bool r1 = i & rb, c1 = i & cb;
        if (r1 && c1) {
            a[i ^ rb ^ cb] += gamma * a[i];
            a[i] *= 1 - gamma;
        } else if (r1 != c1) {
            a[i] *= keep;
        }
    }
}

void DensityMatrix::dephase(uint32_t q, double p) {
    if (p == 0) {
        return;
    }
    const size_t rb = size_t{1} << q, cb = size_t{1} << (q + n_);
    auto &a = vec_.amps();
    for (size_t i = 0; i < a.size(); i++) {
        if (!(i & rb) != !(i & cb)) {
            a[i] *= 1 - 2 * p;
        }
    }
}

void DensityMatrix::bit_flip(uint32_t q, double p) {
    if (p == 0) {
        return;
    }
    const size_t rb = size_t{1} << q, cb = size_t{1} << (q + n_);
    auto &a = vec_.amps();
    std::vector<cplx> out(a.size());
    for (size_t i = 0; i < a.size(); i++) {
        out[i] = (1 - p) * a[i] + p * a[i ^ rb ^ cb];
    }
    a.swap(out);
}

void DensityMatrix::depolarize2(uint32_t qa, uint32_t qb, double p) {
    if (p == 0) {
        return;
    }
    const size_t ra = size_t{1} << qa, rbm = size_t{1} << qb;
    const size_t ca = ra << n_, cbm = rbm << n_;
    const size_t row_mask = ra | rbm, col_mask = ca | cbm;
    auto &a = vec_.amps();
    for (size_t i = 0; i < a.size(); i++) {
        if (i & (row_mask | col_mask)) {
            continue;
        }
        cplx tr = 0;
        for (size_t x = 0; x < 4; x++) {
            size_t off = ((x & 1) ? ra : 0) | ((x & 2) ? rbm : 0);
            tr += a[i | off | (off << n_)];
        }
        for (size_t x = 0; x < 4; x++) {
            size_t rx = ((x & 1) ? ra : 0) | ((x & 2) ? rbm : 0);
            for (size_t y = 0; y < 4; y++) {
                size_t cy = (((y & 1) ? ra : 0) | ((y & 2) ? rbm : 0)) << n_;
                cplx &e = a[i | rx | cy];
                e *= 1 - p;
                if (x == y) {
                    e += p * tr / 4.0;
                }
            }
        }
    }
}

double DensityMatrix::prob_one(uint32_t q) const {
    double p = 0;
    for (size_t r = 0; r < dim(); r++) {
        if ((r >> q) & 1) {
            p += at(r, r).real();
        }
    }
    return p;
}

void DensityMatrix::project(uint32_t q, int bit, double prob) {
    const size_t rb = size_t{1} << q, cb = size_t{1} << (q + n_);
    auto &a = vec_.amps();
    for (size_t i = 0; i < a.size(); i++) {
        bool r1 = i & rb, c1 = i & cb;
        if (r1 != static_cast<bool>(bit) || c1 != static_cast<bool>(bit)) {
            a[i] = 0;
        } else {
            a[i] /= prob;
        }
    }
}

cplx DensityMatrix::trace() const {
    cplx t = 0;
    for (size_t r = 0; r < dim(); r++) {
        t += at(r, r);
    }
    return t;
}

double DensityMatrix::expectation(const PauliString &p) const {
    if (!p.empty() && p.ops().rbegin()->first >= n_) {
        throw Error("observable acts outside the register");
    }
    const uint64_t x = p.x_mask(), z = p.z_mask();
    int ny = __builtin_popcountll(x & z);
    cplx acc = 0;
    for (size_t s = 0; s < dim(); s++) {
        cplx v = at(s, s ^ x);
        acc += (__builtin_popcountll(s & z) & 1) ? -v : v;
    }
    static const cplx iy[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    return (acc * iy[ny & 3] * p.coefficient()).real();
}

double DensityMatrix::frobenius_distance(const DensityMatrix &other) const {
    if (other.n_ != n_) {
        throw Error("density matrix size mismatch");
    }
    double s = 0;
    for (size_t i = 0; i < vec_.amps().size(); i++) {
        s += std::norm(vec_.amps()[i] - other.vec_.amps()[i]);
    }
    return std::sqrt(s);
}

double DensityMatrix::max_hermitian_error() const {
    double e = 0;
    for (size_t r = 0; r < dim(); r++) {
        for (size_t c = 0; c < dim(); c++) {
            e = std::max(e, std::abs(at(r, c) - std::conj(at(c, r))));
        }
    }
    return e;
}

double DensityMatrix::min_eigenvalue() const {
    Eigen::MatrixXcd m(dim(), dim());
    for (size_t r = 0; r < dim(); r++) {
        for (size_t c = 0; c < dim(); c++) {
            m(r, c) = at(r, c);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

DensityMatrix &DensityMatrix::operator+=(const DensityMatrix &other) {
    if (other.n_ != n_) {
        throw Error("density matrix size mismatch");
    }
    for (size_t i = 0; i < vec_.amps().size(); i++) {
        vec_.amps()[i] += other.vec_.amps()[i];
    }
    return *this;
}

DensityMatrix &DensityMatrix::operator*=(double s) {
    for (auto &a : vec_.amps()) {
        a *= s;
    }
    return *this;
}

}  // namespace qlink
