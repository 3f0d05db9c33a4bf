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

#include "qlink/gate_cutting.h"

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "qlink/errors.h"
#include "qlink/rng.h"

namespace qlink {

using std::numbers::pi;

Qpd lo_cz_qpd() {
    Qpd q;
    q.num_qubits = 2;
    auto rz_pair = [](double a) {
        Circuit c(2);
        c.rz(0, a).rz(1, a);
        return c;
    };
    auto rz_measure = [](uint32_t rz_qubit, double angle) {
        Circuit c(2, 1);
        c.rz(rz_qubit, angle).measure(1 - rz_qubit, 0);
        return c;
    };
    q.members.push_back({0.5, rz_pair(pi / 2), {}});
    q.members.push_back({0.5, rz_pair(-pi / 2), {}});
    q.members.push_back({-0.5, rz_measure(0, -pi), {0}});
    q.members.push_back({0.5, rz_measure(0, 0), {0}});
    q.members.push_back({-0.5, rz_measure(1, -pi), {0}});
    q.members.push_back({0.5, rz_measure(1, 0), {0}});
    return q;
}

int lo_sign(const std::vector<int> &outcome_bits) {
    int s = 1;
    for (int b : outcome_bits) {
        if (b != 0 && b != 1) {
            throw QpdError("outcome bits must be 0 or 1");
        }
        s *= b ? -1 : 1;
    }
    return s;
}

namespace {

void check_k(uint32_t k) {
    if (k < 1 || k > 3) {
        throw QpdError("factories exist for k = 1, 2, 3");
    }
}

// Greedy Sidon set modulo n: all pairwise differences distinct.
std::vector<uint64_t> sidon_set(size_t size, uint64_t n) {
    std::vector<uint64_t> g;
    std::set<uint64_t> diffs;
    for (uint64_t c = 0; g.size() < size && c < n; c++) {
        std::vector<uint64_t> fresh;
        bool ok = true;
        for (auto x : g) {
            for (auto d : {(c + n - x) % n, (x + n - c) % n}) {
                if (diffs.count(d) || std::find(fresh.begin(), fresh.end(), d) != fresh.end()) {
                    ok = false;
                }
                fresh.push_back(d);
            }
        }
        if (ok) {
            diffs.insert(fresh.begin(), fresh.end());
            g.push_back(c);
        }
    }
    if (g.size() != size) {
        throw QpdError("no Sidon set of the requested size");
    }
    return g;
}

uint32_t num_layers(uint32_t k) {
    return k;
}

// CNOT ladder inside one side, local indices 0..k-1.
std::vector<std::pair<uint32_t, uint32_t>> ladder(uint32_t k) {
    std::vector<std::pair<uint32_t, uint32_t>> out;
    for (uint32_t i = 0; i + 1 < k; i++) {
        out.push_back({i, i + 1});
    }
    return out;
}

// State of one side: layers of U2 then ladders, from |0..0>.
StateVector side_state(uint32_t k, const double *angles) {
    StateVector s(k);
    for (uint32_t l = 0; l < num_layers(k); l++) {
        if (l > 0) {
            for (auto [c, t] : ladder(k)) {
                s.apply_cnot(c, t);
            }
        }
        for (uint32_t q = 0; q < k; q++) {
            s.apply_1q(q, single_qubit_matrix(GateKind::U2, angles[2 * (l * k + q)], angles[2 * (l * k + q) + 1]));
        }
    }
    return s;
}

struct SideFit {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    uint32_t k;
    std::vector<cplx> target;

    int inputs() const {
        return static_cast<int>(2 * k * num_layers(k) + 1);
    }
    int values() const {
        return std::max(inputs(), static_cast<int>(2 * target.size()));
    }
    int operator()(const Eigen::VectorXd &x, Eigen::VectorXd &f) const {
        auto s = side_state(k, x.data());
        cplx phase = std::polar(1.0, x[inputs() - 1]);
        f.setZero(values());
        for (size_t i = 0; i < target.size(); i++) {
            cplx d = phase * s.amps()[i] - target[i];
            f[2 * i] = d.real();
            f[2 * i + 1] = d.imag();
        }
        return 0;
    }
};

struct FitResult {
    std::vector<double> angles;
    double residual = 0;
};

FitResult fit_side(uint32_t k, const std::vector<cplx> &target, uint64_t key, const FactoryOptions &opt) {
    SideFit fn{k, target};
    Eigen::NumericalDiff<SideFit, Eigen::Central> diff(fn);
    FitResult best{{}, std::numeric_limits<double>::infinity()};
    for (uint32_t r = 0; r < opt.restarts; r++) {
        std::mt19937_64 rng(mix_keys({key, r}));
        std::uniform_real_distribution<double> u(-pi, pi);
        Eigen::VectorXd x(fn.inputs());
        for (int i = 0; i < x.size(); i++) {
            x[i] = u(rng);
        }
        Eigen::LevenbergMarquardt<Eigen::NumericalDiff<SideFit, Eigen::Central>> lm(diff);
        lm.parameters.maxfev = 4000;
        lm.parameters.xtol = 1e-14;
        lm.parameters.ftol = 1e-15;
        lm.minimize(x);
        Eigen::VectorXd f;
        fn(x, f);
        double res = f.norm();
        if (res < best.residual) {
            best.residual = res;
            best.angles.assign(x.data(), x.data() + x.size() - 1);
        }
        if (best.residual < opt.tolerance) {
            break;
        }
    }
    return best;
}

// Angles that prepare |x> on one side: the first layer writes the CNOT-network preimage, later layers are Z-like.
std::vector<double> basis_side_angles(uint32_t k, uint64_t x) {
    // Invert the ladders applied between layers.
    uint64_t p = x;
    for (uint32_t l = 1; l < num_layers(k); l++) {
        auto lad = ladder(k);
        for (auto it = lad.rbegin(); it != lad.rend(); ++it) {
            if ((p >> it->first) & 1) {
                p ^= uint64_t{1} << it->second;
            }
        }
    }
    std::vector<double> a(2 * k * num_layers(k), 0.0);
    for (uint32_t q = 0; q < k; q++) {
        a[2 * q] = ((p >> q) & 1) ? 0.0 : pi;
    }
    for (uint32_t l = 1; l < num_layers(k); l++) {
        for (uint32_t q = 0; q < k; q++) {
            a[2 * (l * k + q)] = pi;
        }
    }
    return a;
}

// Interleaves per-side angle vectors into the template's per-layer, per-qubit order.
std::vector<double> join_sides(uint32_t k, const std::vector<double> &a, const std::vector<double> &b) {
    std::vector<double> out;
    for (uint32_t l = 0; l < num_layers(k); l++) {
        for (uint32_t q = 0; q < k; q++) {
            out.push_back(a[2 * (l * k + q)]);
            out.push_back(a[2 * (l * k + q) + 1]);
        }
        for (uint32_t q = 0; q < k; q++) {
            out.push_back(b[2 * (l * k + q)]);
            out.push_back(b[2 * (l * k + q) + 1]);
        }
    }
    return out;
}

std::vector<double> analytic_coeffs(uint32_t k) {
    std::vector<double> c;
    double t = static_cast<double>(factory_t(k));
    for (uint64_t i = 0; i < factory_n_plus(k); i++) {
        c.push_back((1 + t) / static_cast<double>(factory_n_plus(k)));
    }
    for (uint64_t i = 0; i < factory_n_minus(k); i++) {
        c.push_back(-t / static_cast<double>(factory_n_minus(k)));
    }
    return c;
}

}  // namespace

uint64_t factory_t(uint32_t k) {
    check_k(k);
    return (uint64_t{1} << k) - 1;
}

uint64_t factory_n_plus(uint32_t k) {
    check_k(k);
    return (uint64_t{1} << (uint64_t{1} << k)) - 1;
}

uint64_t factory_n_minus(uint32_t k) {
    check_k(k);
    return (uint64_t{1} << (2 * k)) - (uint64_t{1} << k);
}

uint64_t factory_size(uint32_t k) {
    return factory_n_plus(k) + factory_n_minus(k);
}

double factory_gamma(uint32_t k) {
    return static_cast<double>(2 * factory_t(k) + 1);
}

Circuit factory_template(uint32_t k) {
    check_k(k);
    Circuit c(2 * k);
    std::vector<Angle> params;
    for (uint32_t l = 0; l < num_layers(k); l++) {
        for (uint32_t q = 0; q < 2 * k; q++) {
            params.push_back(c.add_parameter("theta_" + std::to_string(l) + "_" + std::to_string(q)));
            params.push_back(c.add_parameter("phi_" + std::to_string(l) + "_" + std::to_string(q)));
        }
    }
    for (uint32_t l = 0; l < num_layers(k); l++) {
        if (l > 0) {
            for (auto [a, b] : ladder(k)) {
                c.cx(a, b);
                c.cx(k + a, k + b);
            }
        }
        for (uint32_t q = 0; q < 2 * k; q++) {
            c.u2(q, params[2 * (l * 2 * k + q)], params[2 * (l * 2 * k + q) + 1]);
        }
    }
    return c;
}

std::vector<std::vector<cplx>> factory_positive_targets(uint32_t k) {
    uint64_t n = factory_n_plus(k);
    size_t dim = size_t{1} << k;
    auto g = sidon_set(dim, n);
    std::vector<std::vector<cplx>> out;
    double norm = 1 / std::sqrt(static_cast<double>(dim));
    for (uint64_t j = 0; j < n; j++) {
        std::vector<cplx> v(dim);
        for (size_t x = 0; x < dim; x++) {
            v[x] = std::polar(norm, 2 * pi * static_cast<double>((j * g[x]) % n) / static_cast<double>(n));
        }
        out.push_back(std::move(v));
    }
    return out;
}

double CutBellFactory::gamma() const {
    double g = 0;
    for (double c : coeffs) {
        g += std::abs(c);
    }
    return g;
}

Circuit CutBellFactory::member(size_t i) const {
    return bind_parameters(templ, params.at(i));
}

Qpd CutBellFactory::qpd() const {
    Qpd q;
    q.num_qubits = 2 * k;
    for (size_t i = 0; i < size(); i++) {
        q.members.push_back({coeffs[i], member(i), {}});
    }
    return q;
}

std::string CutBellFactory::to_json() const {
    nlohmann::json j;
    j["k"] = k;
    j["seed"] = seed;
    j["residual"] = residual;
    j["template"] = qlink::to_text(templ);
    auto ps = nlohmann::json::array();
    for (const auto &p : params) {
        auto row = nlohmann::json::array();
        for (double v : p) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%a", v);
            row.push_back(buf);
        }
        ps.push_back(row);
    }
    j["params"] = ps;
    auto cs = nlohmann::json::array();
    for (double v : coeffs) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%a", v);
        cs.push_back(buf);
    }
    j["coeffs"] = cs;
    return j.dump(1);
}

CutBellFactory CutBellFactory::from_json(const std::string &text) {
    CutBellFactory f;
    try {
        auto j = nlohmann::json::parse(text);
        f.k = j.at("k").get<uint32_t>();
        f.seed = j.at("seed").get<uint64_t>();
        f.residual = j.at("residual").get<double>();
        f.templ = from_text(j.at("template").get<std::string>());
        for (const auto &row : j.at("params")) {
            std::vector<double> p;
            for (const auto &v : row) {
                p.push_back(std::strtod(v.get<std::string>().c_str(), nullptr));
            }
            f.params.push_back(std::move(p));
        }
        for (const auto &v : j.at("coeffs")) {
            f.coeffs.push_back(std::strtod(v.get<std::string>().c_str(), nullptr));
        }
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("bad factory file: ") + e.what());
    }
    check_k(f.k);
    if (f.params.size() != factory_size(f.k) || f.coeffs.size() != f.params.size()) {
        throw ParseError("factory file has the wrong member count");
    }
    for (const auto &p : f.params) {
        if (p.size() != f.templ.num_free_parameters()) {
            throw ParseError("factory parameter vector has the wrong length");
        }
    }
    return f;
}

CutBellFactory build_factory(uint32_t k, uint64_t seed, const FactoryOptions &options) {
    check_k(k);
    CutBellFactory f;
    f.k = k;
    f.seed = seed;
    f.templ = factory_template(k);
    f.coeffs = analytic_coeffs(k);
    if (k == 1) {
        f.params = {{pi / 2, 0, pi / 2, 0},
                    {pi / 2, -2 * pi / 3, pi / 2, 2 * pi / 3},
                    {pi / 2, 2 * pi / 3, pi / 2, -2 * pi / 3},
                    {pi, 0, 0, 0},
                    {0, 0, pi, 0}};
        return f;
    }
    auto targets = factory_positive_targets(k);
    std::vector<FitResult> sides(2 * targets.size());
    unsigned threads = std::max(1u, options.threads);
    auto work = [&](unsigned t) {
        for (size_t i = t; i < sides.size(); i += threads) {
            auto target = targets[i / 2];
            if (i % 2) {
                for (auto &v : target) {
                    v = std::conj(v);
                }
            }
            sides[i] = fit_side(k, target, mix_keys({seed, k, i}), options);
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; t++) {
            pool.emplace_back(work, t);
        }
        for (auto &th : pool) {
            th.join();
        }
    }
    for (size_t j = 0; j < targets.size(); j++) {
        const auto &a = sides[2 * j], &b = sides[2 * j + 1];
        f.residual = std::max({f.residual, a.residual, b.residual});
        f.params.push_back(join_sides(k, a.angles, b.angles));
    }
    if (!(f.residual < options.tolerance)) {
        throw ConvergenceError("factory fit did not reach the tolerance", f.residual);
    }
    uint64_t dim = uint64_t{1} << k;
    for (uint64_t x = 0; x < dim; x++) {
        for (uint64_t y = 0; y < dim; y++) {
            if (x != y) {
                f.params.push_back(join_sides(k, basis_side_angles(k, x), basis_side_angles(k, y)));
            }
        }
    }
    return f;
}

CutBellFactory load_factory(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open factory file " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return CutBellFactory::from_json(ss.str());
}

DensityMatrix factory_density(const CutBellFactory &f) {
    auto rho = DensityMatrix::zero(2 * f.k);
    for (size_t i = 0; i < f.size(); i++) {
        auto d = DensityMatrix::from_state(final_state(f.member(i)));
        d *= f.coeffs[i];
        rho += d;
    }
    return rho;
}

DensityMatrix factory_branch_density(const CutBellFactory &f, bool positive) {
    auto rho = DensityMatrix::zero(2 * f.k);
    double total = 0;
    for (size_t i = 0; i < f.size(); i++) {
        if ((f.coeffs[i] > 0) != positive) {
            continue;
        }
        auto d = DensityMatrix::from_state(final_state(f.member(i)));
        d *= std::abs(f.coeffs[i]);
        rho += d;
        total += std::abs(f.coeffs[i]);
    }
    rho *= 1 / total;
    return rho;
}

DensityMatrix bell_projector(uint32_t k) {
    Circuit c(2 * k);
    for (uint32_t i = 0; i < k; i++) {
        c.h(i).cx(i, k + i);
    }
    return DensityMatrix::from_state(final_state(c));
}

double schmidt_residual(const StateVector &psi, uint32_t num_a) {
    uint32_t num_b = psi.num_qubits() - num_a;
    Eigen::MatrixXcd m(size_t{1} << num_a, size_t{1} << num_b);
    for (size_t i = 0; i < psi.amps().size(); i++) {
        m(i & ((size_t{1} << num_a) - 1), i >> num_a) = psi.amps()[i];
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
    const auto &s = svd.singularValues();
    return s.size() > 1 ? s[1] : 0.0;
}

void VirtualGateSpec::validate() const {
    if (pairs.empty()) {
        throw QpdError("virtual gate needs at least one pair");
    }
    std::set<uint32_t> used;
    for (auto [c, t] : pairs) {
        if (!used.insert(c).second || !used.insert(t).second) {
            throw QpdError("virtual gate pairs must use distinct qubits");
        }
    }
    if (protocol == CutProtocol::LOCC) {
        if (ancillas.size() != pairs.size()) {
            throw QpdError("LOCC needs two ancillas per pair");
        }
        for (auto [a, b] : ancillas) {
            if (!used.insert(a).second || !used.insert(b).second) {
                throw QpdError("ancilla collides with another qubit of the virtual gate");
            }
        }
    }
}

std::vector<uint32_t> VirtualGateSpec::fragment_qubits() const {
    std::vector<uint32_t> q;
    for (auto [c, t] : pairs) {
        q.push_back(c);
        q.push_back(t);
    }
    for (auto [a, _] : ancillas) {
        q.push_back(a);
    }
    for (auto [_, b] : ancillas) {
        q.push_back(b);
    }
    return q;
}

Circuit teleport_consumer(const VirtualGateSpec &spec) {
    spec.validate();
    if (spec.protocol != CutProtocol::LOCC) {
        throw QpdError("teleportation consumer requires the LOCC protocol");
    }
    const uint32_t k = static_cast<uint32_t>(spec.pairs.size());
    Circuit c(4 * k, 2 * k);
    auto ctl = [](uint32_t i) { return 2 * i; };
    auto tgt = [](uint32_t i) { return 2 * i + 1; };
    auto anc_a = [&](uint32_t i) { return 2 * k + i; };
    auto anc_b = [&](uint32_t i) { return 3 * k + i; };
    for (uint32_t i = 0; i < k; i++) {
        c.cx(ctl(i), anc_a(i));
        if (spec.gate == VirtualGate::CNOT) {
            c.cx(anc_b(i), tgt(i));
        } else {
            c.cz(anc_b(i), tgt(i));
        }
        c.measure(anc_a(i), 2 * i);
        c.h(anc_b(i));
        c.measure(anc_b(i), 2 * i + 1);
    }
    std::vector<uint32_t> cond;
    for (uint32_t b = 0; b < 2 * k; b++) {
        cond.push_back(b);
    }
    std::vector<std::vector<Instruction>> cases(size_t{1} << (2 * k));
    for (size_t v = 0; v < cases.size(); v++) {
        for (uint32_t i = 0; i < k; i++) {
            bool m1 = (v >> (2 * i)) & 1, m2 = (v >> (2 * i + 1)) & 1;
            if (m1) {
                GateKind kind = spec.gate == VirtualGate::CNOT ? GateKind::X : GateKind::Z;
                cases[v].push_back(Gate{kind, {tgt(i), 0}, {}});
            }
            if (m2) {
                cases[v].push_back(Gate{GateKind::Z, {ctl(i), 0}, {}});
            }
        }
    }
    c.switch_on(cond, std::move(cases));
    return c;
}

PlacedQpd locc_virtual_qpd(const VirtualGateSpec &spec, const CutBellFactory &factory) {
    spec.validate();
    const uint32_t k = static_cast<uint32_t>(spec.pairs.size());
    if (factory.k != k) {
        throw ParameterArityError("factory provides " + std::to_string(factory.k) + " pairs, gate needs " +
                                  std::to_string(k));
    }
    auto consumer = teleport_consumer(spec);
    std::vector<uint32_t> anc(2 * k), all(4 * k), bits(2 * k);
    for (uint32_t i = 0; i < 4 * k; i++) {
        all[i] = i;
    }
    for (uint32_t i = 0; i < 2 * k; i++) {
        anc[i] = 2 * k + i;
        bits[i] = i;
    }
    PlacedQpd out;
    out.qubits = spec.fragment_qubits();
    out.qpd.num_qubits = 4 * k;
    for (size_t i = 0; i < factory.size(); i++) {
        Circuit m(4 * k, 2 * k);
        m = compose(m, factory.member(i), anc, {});
        m = compose(m, consumer, all, bits);
        out.qpd.members.push_back({factory.coeffs[i], std::move(m), {}});
    }
    return out;
}

std::vector<PlacedQpd> lo_virtual_qpds(const VirtualGateSpec &spec) {
    spec.validate();
    std::vector<PlacedQpd> out;
    for (auto [c, t] : spec.pairs) {
        PlacedQpd p;
        p.qpd = lo_cz_qpd();
        p.qubits = {c, t};
        if (spec.gate == VirtualGate::CNOT) {
            for (auto &m : p.qpd.members) {
                Circuit w(2, m.circuit.num_clbits);
                w.h(1);
                w = compose(w, m.circuit, {0, 1}, m.circuit.num_clbits ? std::vector<uint32_t>{0} : std::vector<uint32_t>{});
                w.h(1);
                m.circuit = std::move(w);
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

Circuit bell_benchmark_circuit() {
    Circuit c(4, 2);
    c.h(0).h(3).h(1).cx(1, 2);
    c.cx(0, 1).cz(2, 3).measure(1, 0).h(2).measure(2, 1);
    std::vector<std::vector<Instruction>> cases(4);
    for (uint32_t v = 0; v < 4; v++) {
        if (v & 1) {
            cases[v].push_back(Gate{GateKind::Z, {3, 0}, {}});
        }
        if (v & 2) {
            cases[v].push_back(Gate{GateKind::Z, {0, 0}, {}});
        }
    }
    c.switch_on({0, 1}, std::move(cases));
    return c;
}

double mse(double zx, double xz) {
    return ((zx - 1) * (zx - 1) + (xz - 1) * (xz - 1)) / 2;
}

}  // namespace qlink
