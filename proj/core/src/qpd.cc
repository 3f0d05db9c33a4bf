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

#include "qlink/qpd.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"
#include "qlink/errors.h"
#include "qlink/rng.h"

namespace qlink {

namespace {

std::vector<uint32_t> iota(uint32_t n, uint32_t start = 0) {
    std::vector<uint32_t> v(n);
    for (uint32_t i = 0; i < n; i++) {
        v[i] = start + i;
    }
    return v;
}

std::string hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

// Appends `frag` to `out` on the given qubits with clbits shifted by `offset`.
void splice(Circuit &out, const Circuit &frag, const std::vector<uint32_t> &qubits, uint32_t offset) {
    out = compose(out, frag, qubits, iota(frag.num_clbits, offset));
}

}  // namespace

double Qpd::gamma() const {
    double g = 0;
    for (const auto &m : members) {
        g += std::abs(m.coeff);
    }
    return g;
}

std::vector<double> Qpd::probabilities() const {
    double g = gamma();
    std::vector<double> p;
    for (const auto &m : members) {
        p.push_back(std::abs(m.coeff) / g);
    }
    return p;
}

double Qpd::coefficient_sum() const {
    double s = 0;
    for (const auto &m : members) {
        s += m.coeff;
    }
    return s;
}

uint32_t Qpd::num_clbits() const {
    uint32_t n = 0;
    for (const auto &m : members) {
        n = std::max(n, m.circuit.num_clbits);
    }
    return n;
}

void Qpd::validate() const {
    if (members.empty()) {
        throw QpdError("QPD has no members");
    }
    for (const auto &m : members) {
        if (!std::isfinite(m.coeff)) {
            throw QpdError("QPD coefficient is not finite");
        }
        if (m.circuit.num_qubits > num_qubits) {
            throw QpdError("QPD member is wider than the QPD");
        }
        for (auto c : m.sign_clbits) {
            if (c >= m.circuit.num_clbits) {
                throw QpdError("sign clbit out of range");
            }
        }
        qlink::validate(m.circuit);
    }
}

std::string Qpd::to_json() const {
    nlohmann::json j;
    j["num_qubits"] = num_qubits;
    auto arr = nlohmann::json::array();
    for (const auto &m : members) {
        arr.push_back({{"coeff", hexfloat(m.coeff)},
                       {"coeff_decimal", m.coeff},
                       {"sign_clbits", m.sign_clbits},
                       {"circuit", qlink::to_text(m.circuit)}});
    }
    j["members"] = arr;
    return j.dump(1);
}

Qpd Qpd::from_json(const std::string &text) {
    Qpd q;
    try {
        auto j = nlohmann::json::parse(text);
        q.num_qubits = j.at("num_qubits").get<uint32_t>();
        for (const auto &e : j.at("members")) {
            QpdMember m;
            m.coeff = std::strtod(e.at("coeff").get<std::string>().c_str(), nullptr);
            m.sign_clbits = e.at("sign_clbits").get<std::vector<uint32_t>>();
            m.circuit = from_text(e.at("circuit").get<std::string>());
            q.members.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("bad QPD: ") + e.what());
    }
    q.validate();
    return q;
}

Qpd trivial_qpd(uint32_t num_qubits) {
    Qpd q;
    q.num_qubits = num_qubits;
    q.members.push_back({1.0, Circuit(num_qubits), {}});
    return q;
}

double sampling_overhead(const std::vector<double> &gammas, const std::vector<uint32_t> &counts) {
    if (gammas.size() != counts.size()) {
        throw QpdError("gammas and counts differ in length");
    }
    double o = 1;
    for (size_t i = 0; i < gammas.size(); i++) {
        o *= std::pow(gammas[i], 2.0 * counts[i]);
    }
    return o;
}

double enumeration_cost(const Qpd &qpd) {
    if (qpd.members.empty()) {
        throw QpdError("QPD has no members");
    }
    double s = 0;
    for (const auto &m : qpd.members) {
        s += m.coeff * m.coeff;
    }
    return static_cast<double>(qpd.size()) * s;
}

PlacedQpd tensor(const std::vector<PlacedQpd> &qpds) {
    if (qpds.empty()) {
        throw QpdError("tensor of nothing");
    }
    PlacedQpd out;
    std::set<uint32_t> seen;
    for (const auto &p : qpds) {
        if (p.qubits.size() != p.qpd.num_qubits) {
            throw QpdError("placed QPD support size mismatch");
        }
        for (auto q : p.qubits) {
            if (!seen.insert(q).second) {
                throw QpdError("QPD supports overlap on qubit " + std::to_string(q));
            }
            out.qubits.push_back(q);
        }
    }
    out.qpd.num_qubits = static_cast<uint32_t>(out.qubits.size());
    out.qpd.members.push_back({1.0, Circuit(out.qpd.num_qubits), {}});
    uint32_t qoff = 0;
    for (const auto &p : qpds) {
        std::vector<QpdMember> next;
        auto local = iota(p.qpd.num_qubits, qoff);
        for (const auto &acc : out.qpd.members) {
            for (const auto &m : p.qpd.members) {
                QpdMember r;
                r.coeff = acc.coeff * m.coeff;
                r.circuit = acc.circuit;
                uint32_t off = r.circuit.num_clbits;
                splice(r.circuit, m.circuit, local, off);
                r.circuit.num_qubits = out.qpd.num_qubits;
                r.sign_clbits = acc.sign_clbits;
                for (auto c : m.sign_clbits) {
                    r.sign_clbits.push_back(c + off);
                }
                next.push_back(std::move(r));
            }
        }
        out.qpd.members = std::move(next);
        qoff += p.qpd.num_qubits;
    }
    return out;
}

void CutCircuit::validate() const {
    qlink::validate(base);
    for (const auto &c : cuts) {
        c.qpd.validate();
        if (c.position > base.instructions.size()) {
            throw QpdError("cut position beyond the circuit");
        }
        if (c.qubits.size() != c.qpd.num_qubits) {
            throw QpdError("cut wiring does not match QPD width");
        }
        std::set<uint32_t> s(c.qubits.begin(), c.qubits.end());
        if (s.size() != c.qubits.size() || (!s.empty() && *s.rbegin() >= base.num_qubits)) {
            throw QpdError("cut wiring is not injective or out of range");
        }
    }
}

Instance instantiate(const CutCircuit &cc, const std::vector<int> &choice) {
    if (choice.size() != cc.cuts.size()) {
        throw QpdError("one member choice per cut is required");
    }
    std::vector<uint32_t> offsets;
    uint32_t nclbits = cc.base.num_clbits;
    for (const auto &c : cc.cuts) {
        offsets.push_back(nclbits);
        nclbits += c.qpd.num_clbits();
    }
    Instance inst;
    inst.circuit = Circuit(cc.base.num_qubits, nclbits);
    inst.circuit.parameters = cc.base.parameters;
    auto insert_cuts_at = [&](size_t pos) {
        for (size_t k = 0; k < cc.cuts.size(); k++) {
            const auto &cut = cc.cuts[k];
            if (cut.position != pos || choice[k] < 0) {
                continue;
            }
            if (static_cast<size_t>(choice[k]) >= cut.qpd.size()) {
                throw QpdError("member choice out of range");
            }
            const auto &m = cut.qpd.members[choice[k]];
            splice(inst.circuit, m.circuit, std::vector<uint32_t>(cut.qubits.begin(), cut.qubits.begin() + m.circuit.num_qubits),
                   offsets[k]);
            inst.circuit.num_clbits = nclbits;
            inst.coeff *= m.coeff;
            for (auto c : m.sign_clbits) {
                inst.sign_clbits.push_back(c + offsets[k]);
            }
        }
    };
    for (size_t i = 0; i < cc.base.instructions.size(); i++) {
        insert_cuts_at(i);
        inst.circuit.instructions.push_back(cc.base.instructions[i]);
    }
    insert_cuts_at(cc.base.instructions.size());
    return inst;
}

std::vector<bool> forward_cone(const std::vector<Instruction> &insts, uint32_t num_qubits, uint32_t num_clbits,
                               std::vector<bool> cone) {
    cone.resize(num_qubits, false);
    std::vector<bool> tainted(num_clbits, false);
    for (const auto &inst : insts) {
        if (inst.is<Gate>()) {
            const auto &g = inst.as<Gate>();
            if (g.arity() == 2 && (cone[g.qubits[0]] || cone[g.qubits[1]])) {
                cone[g.qubits[0]] = cone[g.qubits[1]] = true;
            }
        } else if (inst.is<Measure>()) {
            const auto &m = inst.as<Measure>();
            tainted[m.clbit] = cone[m.qubit];
        } else if (inst.is<Switch>()) {
            const auto &s = inst.as<Switch>();
            bool hit = std::any_of(s.conditions.begin(), s.conditions.end(), [&](uint32_t b) { return tainted[b]; });
            if (hit) {
                for (auto q : instruction_qubits(inst)) {
                    cone[q] = true;
                }
            }
        }
    }
    return cone;
}

namespace {

// Propagates `cone` through every member of a cut; the result is the union over members.
void through_cut(const CutSite &cut, std::vector<bool> &cone) {
    std::vector<bool> local(cut.qpd.num_qubits);
    bool any = false;
    for (uint32_t i = 0; i < cut.qpd.num_qubits; i++) {
        local[i] = cone[cut.qubits[i]];
        any = any || local[i];
    }
    if (!any) {
        return;
    }
    for (const auto &m : cut.qpd.members) {
        auto out = forward_cone(m.circuit.instructions, cut.qpd.num_qubits, m.circuit.num_clbits, local);
        for (uint32_t i = 0; i < cut.qpd.num_qubits; i++) {
            if (out[i]) {
                cone[cut.qubits[i]] = true;
            }
        }
    }
}

}  // namespace

std::vector<size_t> light_cone_reduce(const CutCircuit &cc, const std::vector<uint32_t> &support) {
    const size_t n = cc.cuts.size();
    const uint32_t nq = cc.base.num_qubits;
    std::vector<bool> in_support(nq, false);
    for (auto q : support) {
        if (q >= nq) {
            throw QpdError("observable support outside the circuit");
        }
        in_support[q] = true;
    }
    // Cuts in execution order: by position, then by index.
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; i++) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return cc.cuts[a].position < cc.cuts[b].position; });
    std::vector<bool> reaches_support(n, false);
    std::vector<std::vector<size_t>> feeds(n);
    for (size_t oi = 0; oi < n; oi++) {
        size_t i = order[oi];
        const auto &cut = cc.cuts[i];
        std::vector<bool> cone(nq, false);
        for (auto q : cut.qubits) {
            cone[q] = true;
        }
        through_cut(cut, cone);
        std::vector<bool> tainted(cc.base.num_clbits, false);
        size_t next = oi + 1;
        for (size_t p = cut.position; p <= cc.base.instructions.size(); p++) {
            for (; next < n && cc.cuts[order[next]].position == p; next++) {
                const auto &other = cc.cuts[order[next]];
                bool touches = std::any_of(other.qubits.begin(), other.qubits.end(), [&](uint32_t q) { return cone[q]; });
                if (touches) {
                    feeds[i].push_back(order[next]);
                    through_cut(other, cone);
                }
            }
            if (p == cc.base.instructions.size()) {
                break;
            }
            const auto &inst = cc.base.instructions[p];
            if (inst.is<Measure>()) {
                tainted[inst.as<Measure>().clbit] = cone[inst.as<Measure>().qubit];
            } else if (inst.is<Switch>()) {
                const auto &s = inst.as<Switch>();
                if (std::any_of(s.conditions.begin(), s.conditions.end(), [&](uint32_t b) { return tainted[b]; })) {
                    for (auto q : instruction_qubits(inst)) {
                        cone[q] = true;
                    }
                }
            } else if (inst.is<Gate>() && inst.as<Gate>().arity() == 2) {
                const auto &g = inst.as<Gate>();
                if (cone[g.qubits[0]] || cone[g.qubits[1]]) {
                    cone[g.qubits[0]] = cone[g.qubits[1]] = true;
                }
            }
        }
        for (uint32_t q = 0; q < nq; q++) {
            if (cone[q] && in_support[q]) {
                reaches_support[i] = true;
            }
        }
    }
    std::vector<bool> keep = reaches_support;
    for (bool changed = true; changed;) {
        changed = false;
        for (size_t i = 0; i < n; i++) {
            if (keep[i]) {
                continue;
            }
            for (auto j : feeds[i]) {
                if (keep[j]) {
                    keep[i] = changed = true;
                    break;
                }
            }
        }
    }
    std::vector<size_t> out;
    for (size_t i = 0; i < n; i++) {
        if (keep[i]) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::vector<int>> enumerate_choices(const CutCircuit &cc, const std::vector<size_t> &active) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(cc.cuts.size(), -1);
    for (auto a : active) {
        cur[a] = 0;
    }
    for (;;) {
        out.push_back(cur);
        size_t k = 0;
        for (; k < active.size(); k++) {
            auto a = active[k];
            if (++cur[a] < static_cast<int>(cc.cuts[a].qpd.size())) {
                break;
            }
            cur[a] = 0;
        }
        if (k == active.size()) {
            return out;
        }
    }
}

std::vector<double> exact_cut_expectations(const CutCircuit &cc, const std::vector<PauliString> &observables,
                                           const NoiseModel &noise, bool reduce) {
    cc.validate();
    std::map<std::vector<size_t>, std::vector<size_t>> groups;
    std::vector<size_t> all(cc.cuts.size());
    for (size_t i = 0; i < all.size(); i++) {
        all[i] = i;
    }
    for (size_t k = 0; k < observables.size(); k++) {
        groups[reduce ? light_cone_reduce(cc, observables[k].support()) : all].push_back(k);
    }
    std::vector<double> out(observables.size(), 0.0);
    for (const auto &[active, members] : groups) {
        for (const auto &choice : enumerate_choices(cc, active)) {
            auto inst = instantiate(cc, choice);
            std::vector<Observable> obs;
            for (auto k : members) {
                obs.emplace_back(observables[k], inst.sign_clbits);
            }
            auto vals = exact_expectations(inst.circuit, obs, noise);
            for (size_t j = 0; j < members.size(); j++) {
                out[members[j]] += inst.coeff * vals[j];
            }
        }
    }
    return out;
}

Backend exact_backend(NoiseModel noise) {
    return [noise](const Circuit &c, const Observable &obs, uint64_t shots, uint64_t seed) {
        double m = exact_expectations(c, {obs}, noise)[0];
        MemberEstimate e{m, 1 - m * m, shots};
        if (shots > 0) {
            std::mt19937_64 rng(seed);
            std::binomial_distribution<uint64_t> bin(shots, std::clamp((1 + m) / 2, 0.0, 1.0));
            double mean = (2.0 * static_cast<double>(bin(rng)) - static_cast<double>(shots)) / static_cast<double>(shots);
            e.mean = mean;
            e.variance = 1 - mean * mean;
        }
        return e;
    };
}

std::vector<uint32_t> append_pauli_measurement(Circuit &c, const PauliString &p) {
    std::vector<uint32_t> bits;
    for (auto [q, op] : p.ops()) {
        if (op == 'X') {
            c.h(q);
        } else if (op == 'Y') {
            c.rz(q, -std::numbers::pi / 2);
            c.h(q);
        }
        uint32_t b = c.num_clbits++;
        c.measure(q, b);
        bits.push_back(b);
    }
    return bits;
}

Backend shot_backend(NoiseModel noise) {
    return [noise](const Circuit &c, const Observable &obs, uint64_t shots, uint64_t seed) {
        if (shots == 0) {
            throw QpdError("shot backend needs shots");
        }
        Circuit m = c;
        auto bits = append_pauli_measurement(m, obs.pauli);
        bits.insert(bits.end(), obs.sign_clbits.begin(), obs.sign_clbits.end());
        auto counts = sample_counts(outcome_distribution(m, noise), shots, seed);
        double mean = counts.parity_expectation(clbit_mask(bits)) * obs.pauli.sign();
        return MemberEstimate{mean, 1 - mean * mean, shots};
    };
}

EstimatorResult estimate(const Qpd &qpd, const Circuit &input, const Circuit &after, const PauliString &observable,
                         const Backend &backend, EstimatorMode mode, uint64_t shots, uint64_t seed) {
    qpd.validate();
    if (mode == EstimatorMode::Sample && shots == 0) {
        throw QpdError("sample mode needs shots");
    }
    const uint32_t nq = qpd.num_qubits;
    auto member_circuit = [&](size_t i, Observable &obs) {
        const auto &m = qpd.members[i];
        Circuit c = input;
        c.num_qubits = std::max(c.num_qubits, nq);
        uint32_t off = c.num_clbits;
        splice(c, m.circuit, iota(m.circuit.num_qubits), off);
        c.num_clbits = off + qpd.num_clbits();
        splice(c, after, iota(after.num_qubits), c.num_clbits);
        obs = Observable(observable);
        for (auto b : m.sign_clbits) {
            obs.sign_clbits.push_back(b + off);
        }
        return c;
    };
    EstimatorResult r;
    r.mode = mode;
    if (mode == EstimatorMode::Enumerate) {
        double var = 0;
        for (size_t i = 0; i < qpd.size(); i++) {
            Observable obs;
            auto c = member_circuit(i, obs);
            auto e = backend(c, obs, shots, mix_keys({seed, i}));
            double a = qpd.members[i].coeff;
            r.value += a * e.mean;
            if (shots > 0) {
                var += a * a * e.variance / static_cast<double>(shots);
            }
            r.shots_used += shots;
        }
        r.std_dev = std::sqrt(var);
        return r;
    }
    auto probs = qpd.probabilities();
    std::mt19937_64 rng(seed);
    std::discrete_distribution<size_t> pick(probs.begin(), probs.end());
    std::vector<uint64_t> draws(qpd.size(), 0);
    for (uint64_t s = 0; s < shots; s++) {
        draws[pick(rng)]++;
    }
    double gamma = qpd.gamma(), sum = 0;
    for (size_t i = 0; i < qpd.size(); i++) {
        if (draws[i] == 0) {
            continue;
        }
        Observable obs;
        auto c = member_circuit(i, obs);
        auto e = backend(c, obs, draws[i], mix_keys({seed, i, 1}));
        sum += gamma * qpd.sign(i) * e.mean * static_cast<double>(draws[i]);
    }
    r.value = sum / static_cast<double>(shots);
    r.std_dev = std::sqrt(std::max(0.0, gamma * gamma - r.value * r.value) / static_cast<double>(shots));
    r.shots_used = shots;
    return r;
}

double WeightedCounts::total() const {
    double t = 0;
    for (const auto &[_, w] : weights) {
        t += w;
    }
    return t;
}

double WeightedCounts::parity_expectation(uint64_t mask) const {
    double s = 0;
    for (const auto &[b, w] : weights) {
        s += parity_sign(b, mask) * w;
    }
    return s;
}

WeightedCounts merge_weighted(const std::vector<std::pair<double, Counts>> &members) {
    WeightedCounts out;
    if (members.empty()) {
        return out;
    }
    out.num_clbits = members[0].second.num_clbits;
    for (size_t i = 0; i < members.size(); i++) {
        const auto &[a, counts] = members[i];
        if (counts.num_clbits != out.num_clbits) {
            throw QpdError("clbit layouts differ between merged members");
        }
        uint64_t shots = counts.total();
        if (shots == 0) {
            throw QpdError("member has no shots");
        }
        for (const auto &[b, n] : counts.hist) {
            out.weights[b] += a * static_cast<double>(n) / static_cast<double>(shots);
        }
        out.provenance.emplace_back(i, shots);
    }
    return out;
}


double SampleStats::std_err() const {
    return draws == 0 ? 0 : std::sqrt(variance / static_cast<double>(draws));
}

SampleStats sample_estimator(const CutCircuit &cc, const PauliString &observable, uint64_t draws, uint64_t seed,
                             const NoiseModel &noise) {
    cc.validate();
    if (draws == 0) {
        throw QpdError("sample mode needs draws");
    }
    auto active = light_cone_reduce(cc, observable.support());
    double gamma = 1;
    std::vector<std::vector<double>> cdf;
    for (size_t a : active) {
        const auto &q = cc.cuts[a].qpd;
        gamma *= q.gamma();
        std::vector<double> c;
        double acc = 0;
        for (double p : q.probabilities()) {
            acc += p;
            c.push_back(acc);
        }
        cdf.push_back(std::move(c));
    }
    std::map<std::vector<int>, uint64_t> tally;
    for (uint64_t d = 0; d < draws; d++) {
        std::vector<int> choice(cc.cuts.size(), -1);
        for (size_t k = 0; k < active.size(); k++) {
            double u = key_uniform(mix_keys({seed, 0x5a, d, k})) * cdf[k].back();
            auto it = std::upper_bound(cdf[k].begin(), cdf[k].end(), u);
            choice[active[k]] = static_cast<int>(std::min<size_t>(it - cdf[k].begin(), cdf[k].size() - 1));
        }
        tally[choice]++;
    }
    std::vector<double> values;
    std::vector<uint64_t> weights;
    size_t index = 0;
    for (const auto &[choice, n] : tally) {
        auto inst = instantiate(cc, choice);
        Circuit c = inst.circuit;
        auto bits = append_pauli_measurement(c, observable);
        bits.insert(bits.end(), inst.sign_clbits.begin(), inst.sign_clbits.end());
        const uint64_t mask = clbit_mask(bits);
        const double scale = gamma * (inst.coeff < 0 ? -1 : 1) * observable.sign();
        auto counts = sample_counts(outcome_distribution(c, noise), n, mix_keys({seed, 0x5b, index++}));
        for (const auto &[b, k] : counts.hist) {
            values.push_back(scale * parity_sign(b, mask));
            weights.push_back(k);
        }
    }
    SampleStats s;
    s.draws = draws;
    const double N = static_cast<double>(draws);
    for (size_t i = 0; i < values.size(); i++) {
        s.mean += values[i] * static_cast<double>(weights[i]) / N;
    }
    for (size_t i = 0; i < values.size(); i++) {
        double d = values[i] - s.mean;
        s.variance += d * d * static_cast<double>(weights[i]) / N;
        s.m4 += d * d * d * d * static_cast<double>(weights[i]) / N;
    }
    return s;
}

}  // namespace qlink
