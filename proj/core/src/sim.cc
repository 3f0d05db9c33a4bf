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

#include "qlink/sim.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "qlink/errors.h"
#include "qlink/rng.h"

namespace qlink {

namespace {

constexpr double kTinyBranch = 1e-18;
constexpr uint32_t kMaxDensityQubits = 12;

enum Event : uint64_t { kPrep = 1, kMeasure, kReadout, kDepol, kDepolPauli, kT1, kT2 };
constexpr uint64_t kPrepLabel = 0xFFFFFFFFull + 1;

void check_runnable(const Circuit &c, uint32_t max_qubits) {
    validate(c);
    if (!c.is_bound()) {
        throw CircuitError("circuit has unbound parameters");
    }
    if (c.num_qubits > max_qubits) {
        throw CapacityError("circuit has " + std::to_string(c.num_qubits) + " qubits, cap is " +
                            std::to_string(max_qubits));
    }
    if (c.num_clbits > 64) {
        throw CapacityError("at most 64 classical bits are supported");
    }
}

std::vector<uint32_t> all_qubits(uint32_t n) {
    std::vector<uint32_t> q(n);
    for (uint32_t i = 0; i < n; i++) {
        q[i] = i;
    }
    return q;
}

uint64_t case_index(const Switch &s, uint64_t bits) {
    uint64_t idx = 0;
    for (size_t i = 0; i < s.conditions.size(); i++) {
        idx |= ((bits >> s.conditions[i]) & 1) << i;
    }
    return idx;
}

uint64_t set_bit(uint64_t bits, uint32_t c, int v) {
    return (bits & ~(uint64_t{1} << c)) | (uint64_t(v & 1) << c);
}

// ---------------------------------------------------------------------------
// Exact branch enumeration.

void idle_exact(StateVector &s, const std::vector<uint32_t> &qubits, const NoiseModel &noise, double t) {
    s.apply_idle_phase(qubits, noise, t);
}

void idle_exact(DensityMatrix &d, const std::vector<uint32_t> &qubits, const NoiseModel &noise, double t) {
    if (t == 0) {
        return;
    }
    d.apply_idle_phase(qubits, noise, t);
    for (auto q : qubits) {
        if (noise.t1(q) > 0) {
            d.amplitude_damp(q, 1 - std::exp(-noise.t1(q) * t));
        }
        if (noise.t2(q) > 0) {
            d.dephase(q, (1 - std::exp(-noise.t2(q) * t)) / 2);
        }
    }
}

void gate_exact(StateVector &s, const Gate &g, const NoiseModel &) {
    s.apply_gate(g);
}

void gate_exact(DensityMatrix &d, const Gate &g, const NoiseModel &noise) {
    d.apply_gate(g);
    if (g.arity() == 2 && noise.twoq_depol > 0) {
        d.depolarize2(g.qubits[0], g.qubits[1], noise.twoq_depol);
    }
}

template <class State>
struct Leaf {
    State state;
    uint64_t bits;
    double prob;
};

template <class State>
class Walker {
   public:
    Walker(const Circuit &c, const NoiseModel &noise, size_t stop) : c_(c), noise_(noise), stop_(stop) {
    }

    template <typename F>
    void run(State init, uint64_t bits, double prob, F &&leaf) {
        Pending pending;
        walk(0, std::move(init), bits, pending, prob, leaf);
    }

   private:
    /// Recorded bits whose readout flip is not drawn yet, with the flip probability of each.
    struct Pending {
        uint64_t mask = 0;
        std::array<double, 64> rate{};
    };

    void run_block(State &st, const std::vector<Instruction> &block) {
        for (const auto &inst : block) {
            if (inst.is<Gate>()) {
                gate_exact(st, inst.as<Gate>(), noise_);
            } else if (inst.is<Delay>()) {
                const auto &d = inst.as<Delay>();
                idle_exact(st, d.qubits, noise_, d.duration);
            }
        }
    }

    /// Draws the flips of the pending bits in `which` and calls `next` once per outcome.
    template <typename G>
    static void resolve(uint64_t which, uint64_t bits, Pending pending, double prob, G &&next) {
        which &= pending.mask;
        if (which == 0) {
            next(bits, pending, prob, true);
            return;
        }
        std::vector<uint32_t> idx;
        for (uint32_t c = 0; c < 64; c++) {
            if ((which >> c) & 1) {
                idx.push_back(c);
            }
        }
        pending.mask &= ~which;
        const size_t n = size_t{1} << idx.size();
        for (size_t f = 0; f < n; f++) {
            double p = prob;
            uint64_t b = bits;
            for (size_t j = 0; j < idx.size(); j++) {
                double r = pending.rate[idx[j]];
                if ((f >> j) & 1) {
                    p *= r;
                    b ^= uint64_t{1} << idx[j];
                } else {
                    p *= 1 - r;
                }
            }
            if (p <= kTinyBranch) {
                continue;
            }
            next(b, pending, p, f + 1 == n);
        }
    }

    template <typename F>
    void walk(size_t i, State st, uint64_t bits, Pending pending, double prob, F &leaf) {
        for (; i < stop_; i++) {
            const auto &inst = c_.instructions[i];
            if (inst.is<Gate>()) {
                gate_exact(st, inst.as<Gate>(), noise_);
            } else if (inst.is<Delay>()) {
                const auto &d = inst.as<Delay>();
                idle_exact(st, d.qubits, noise_, d.duration);
            } else if (inst.is<Switch>()) {
                const auto &s = inst.as<Switch>();
                uint64_t cond = 0;
                for (uint32_t c : s.conditions) {
                    cond |= uint64_t{1} << c;
                }
                if (cond & pending.mask) {
                    resolve(cond, bits, pending, prob, [&](uint64_t b, const Pending &p, double pr, bool last) {
                        walk(i, last ? std::move(st) : st, b, p, pr, leaf);
                    });
                    return;
                }
                if (noise_.switch_latency_tau > 0 && !s.latency_covered) {
                    idle_exact(st, all_qubits(c_.num_qubits), noise_, noise_.switch_latency_tau);
                }
                run_block(st, s.cases[case_index(s, bits)]);
            } else if (inst.is<Measure>()) {
                const auto &m = inst.as<Measure>();
                double p1 = std::clamp(st.prob_one(m.qubit), 0.0, 1.0);
                const double r = noise_.readout(m.qubit);
                Pending next_pending = pending;
                if (r > 0) {
                    next_pending.mask |= uint64_t{1} << m.clbit;
                    next_pending.rate[m.clbit] = r;
                } else {
                    next_pending.mask &= ~(uint64_t{1} << m.clbit);
                }
                std::array<double, 2> pv{1 - p1, p1};
                int live = (pv[0] * prob > kTinyBranch) + (pv[1] * prob > kTinyBranch);
                for (int v = 0; v < 2; v++) {
                    if (pv[v] * prob <= kTinyBranch) {
                        continue;
                    }
                    State next = (--live == 0) ? std::move(st) : st;
                    next.project(m.qubit, v, pv[v]);
                    walk(i + 1, std::move(next), set_bit(bits, m.clbit, v), next_pending, prob * pv[v], leaf);
                }
                return;
            }
        }
        if (pending.mask) {
            resolve(pending.mask, bits, pending, prob, [&](uint64_t b, const Pending &, double pr, bool last) {
                leaf(last ? std::move(st) : st, b, pr);
            });
            return;
        }
        leaf(std::move(st), bits, prob);
    }

    const Circuit &c_;
    const NoiseModel &noise_;
    size_t stop_;
};

// Start of the trailing run of measurements on distinct qubits (barriers allowed).
size_t terminal_start(const Circuit &c) {
    std::set<uint32_t> seen;
    size_t i = c.instructions.size();
    while (i > 0) {
        const auto &inst = c.instructions[i - 1];
        if (inst.is<Barrier>()) {
            i--;
            continue;
        }
        if (!inst.is<Measure>() || !seen.insert(inst.as<Measure>().qubit).second) {
            break;
        }
        i--;
    }
    return i;
}

struct TerminalPlan {
    std::vector<uint32_t> qubits;
    std::vector<uint32_t> clbits;
};

TerminalPlan terminal_plan(const Circuit &c, size_t start) {
    TerminalPlan plan;
    for (size_t i = start; i < c.instructions.size(); i++) {
        if (c.instructions[i].is<Measure>()) {
            plan.qubits.push_back(c.instructions[i].as<Measure>().qubit);
            plan.clbits.push_back(c.instructions[i].as<Measure>().clbit);
        }
    }
    return plan;
}

std::vector<double> diagonal(const StateVector &s) {
    std::vector<double> d(s.amps().size());
    for (size_t i = 0; i < d.size(); i++) {
        d[i] = std::norm(s.amps()[i]);
    }
    return d;
}

std::vector<double> diagonal(const DensityMatrix &m) {
    std::vector<double> d(m.dim());
    for (size_t i = 0; i < d.size(); i++) {
        d[i] = m.at(i, i).real();
    }
    return d;
}

void apply_readout(std::vector<double> &marg, const TerminalPlan &plan, const NoiseModel &noise) {
    for (size_t j = 0; j < plan.qubits.size(); j++) {
        double r = noise.readout(plan.qubits[j]);
        if (r == 0) {
            continue;
        }
        size_t stride = size_t{1} << j;
        for (size_t i = 0; i < marg.size(); i += 2 * stride) {
            for (size_t t = i; t < i + stride; t++) {
                double a = marg[t], b = marg[t + stride];
                marg[t] = (1 - r) * a + r * b;
                marg[t + stride] = r * a + (1 - r) * b;
            }
        }
    }
}

template <class State>
std::vector<double> marginal(const State &st, const TerminalPlan &plan) {
    std::vector<double> marg(size_t{1} << plan.qubits.size(), 0.0);
    auto diag = diagonal(st);
    for (size_t x = 0; x < diag.size(); x++) {
        if (diag[x] == 0) {
            continue;
        }
        size_t key = 0;
        for (size_t j = 0; j < plan.qubits.size(); j++) {
            key |= ((x >> plan.qubits[j]) & 1) << j;
        }
        marg[key] += diag[x];
    }
    return marg;
}

template <class State>
void accumulate_terminal(const State &st, uint64_t bits, double prob, const TerminalPlan &plan,
                         const NoiseModel &noise, std::unordered_map<uint64_t, double> &out) {
    const size_t k = plan.qubits.size();
    auto marg = marginal(st, plan);
    apply_readout(marg, plan, noise);
    for (size_t key = 0; key < marg.size(); key++) {
        double p = marg[key] * prob;
        if (p <= 0) {
            continue;
        }
        uint64_t b = bits;
        for (size_t j = 0; j < k; j++) {
            b = set_bit(b, plan.clbits[j], (key >> j) & 1);
        }
        out[b] += p;
    }
}

void finish(std::unordered_map<uint64_t, double> &acc, Distribution &out) {
    out.probs.insert(acc.begin(), acc.end());
    acc.clear();
}

// Enumerates initial basis flips from state-preparation errors.
template <class State, typename F>
void with_prep_branches(const Circuit &c, const NoiseModel &noise, F &&f) {
    if constexpr (std::is_same_v<State, DensityMatrix>) {
        DensityMatrix d(c.num_qubits);
        for (uint32_t q = 0; q < c.num_qubits; q++) {
            d.bit_flip(q, noise.prep(q));
        }
        f(std::move(d), 1.0);
    } else {
        std::vector<uint32_t> flips;
        for (uint32_t q = 0; q < c.num_qubits; q++) {
            if (noise.prep(q) > 0) {
                flips.push_back(q);
            }
        }
        if (flips.size() > 16) {
            throw CapacityError("too many qubits with preparation error for exact enumeration");
        }
        for (uint64_t m = 0; m < (uint64_t{1} << flips.size()); m++) {
            double p = 1;
            uint64_t index = 0;
            for (size_t j = 0; j < flips.size(); j++) {
                bool on = (m >> j) & 1;
                p *= on ? noise.prep(flips[j]) : 1 - noise.prep(flips[j]);
                if (on) {
                    index |= uint64_t{1} << flips[j];
                }
            }
            if (p <= kTinyBranch) {
                continue;
            }
            f(StateVector::basis(c.num_qubits, index), p);
        }
    }
}

bool use_density(const Circuit &c, const NoiseModel &noise) {
    if (!noise.has_incoherent()) {
        return false;
    }
    if (c.num_qubits > kMaxDensityQubits) {
        throw CapacityError("exact simulation with incoherent noise is limited to " +
                            std::to_string(kMaxDensityQubits) + " qubits");
    }
    return true;
}

template <class State>
Distribution distribution_impl(const Circuit &c, const NoiseModel &noise) {
    size_t start = terminal_start(c);
    auto plan = terminal_plan(c, start);
    Distribution out;
    out.num_clbits = c.num_clbits;
    std::unordered_map<uint64_t, double> acc;
    Walker<State> w(c, noise, start);
    with_prep_branches<State>(c, noise, [&](State init, double p) {
        w.run(std::move(init), 0, p, [&](State st, uint64_t bits, double prob) {
            accumulate_terminal(st, bits, prob, plan, noise, acc);
        });
    });
    finish(acc, out);
    return out;
}

template <class State>
std::vector<Distribution> distributions_impl(const Circuit &prefix, const std::vector<Circuit> &suffixes,
                                             const NoiseModel &noise) {
    std::vector<Leaf<State>> leaves;
    Walker<State> w(prefix, noise, prefix.instructions.size());
    with_prep_branches<State>(prefix, noise, [&](State init, double p) {
        w.run(std::move(init), 0, p, [&](State st, uint64_t bits, double prob) {
            leaves.push_back({std::move(st), bits, prob});
        });
    });
    std::vector<Distribution> out(suffixes.size());
    std::vector<TerminalPlan> plans;
    std::vector<size_t> starts;
    std::vector<uint64_t> flips;
    std::map<std::pair<std::vector<uint32_t>, std::vector<uint32_t>>, std::vector<size_t>> permuting;
    for (size_t si = 0; si < suffixes.size(); si++) {
        const auto &suf = suffixes[si];
        size_t start = terminal_start(suf);
        bool perm = true;
        for (size_t i = 0; i < start; i++) {
            const auto &inst = suf.instructions[i];
            if (!(inst.is<Barrier>() || (inst.is<Gate>() && inst.as<Gate>().arity() == 1))) {
                throw CircuitError("measurement suffix may only hold single-qubit gates before its measurements");
            }
            if (inst.is<Gate>() && inst.as<Gate>().kind != GateKind::X && inst.as<Gate>().kind != GateKind::Z) {
                perm = false;
            }
        }
        auto plan = terminal_plan(suf, start);
        uint64_t flip = 0;
        for (size_t i = 0; i < start && perm; i++) {
            const auto &inst = suf.instructions[i];
            if (inst.is<Gate>() && inst.as<Gate>().kind == GateKind::X) {
                uint32_t q = inst.as<Gate>().qubits[0];
                for (size_t j = 0; j < plan.qubits.size(); j++) {
                    if (plan.qubits[j] == q) {
                        flip ^= uint64_t{1} << j;
                    }
                }
            }
        }
        out[si].num_clbits = std::max(prefix.num_clbits, suf.num_clbits);
        if (perm) {
            permuting[{plan.qubits, plan.clbits}].push_back(si);
        }
        plans.push_back(std::move(plan));
        starts.push_back(start);
        flips.push_back(perm ? flip : ~uint64_t{0});
    }
    for (const auto &[key, members] : permuting) {
        const auto &plan = plans[members[0]];
        uint64_t plan_mask = 0;
        for (uint32_t c : plan.clbits) {
            plan_mask |= uint64_t{1} << c;
        }
        std::map<uint64_t, std::vector<double>> buckets;
        for (const auto &leaf : leaves) {
            auto marg = marginal(leaf.state, plan);
            auto &b = buckets[leaf.bits & ~plan_mask];
            if (b.empty()) {
                b.assign(marg.size(), 0.0);
            }
            for (size_t x = 0; x < marg.size(); x++) {
                b[x] += marg[x] * leaf.prob;
            }
        }
        for (size_t si : members) {
            for (const auto &[base, bucket] : buckets) {
                std::vector<double> v(bucket.size());
                for (size_t x = 0; x < bucket.size(); x++) {
                    v[x ^ flips[si]] = bucket[x];
                }
                apply_readout(v, plan, noise);
                for (size_t x = 0; x < v.size(); x++) {
                    if (v[x] <= 0) {
                        continue;
                    }
                    uint64_t b = base;
                    for (size_t j = 0; j < plan.clbits.size(); j++) {
                        b = set_bit(b, plan.clbits[j], (x >> j) & 1);
                    }
                    out[si].probs[b] += v[x];
                }
            }
        }
    }
    for (size_t si = 0; si < suffixes.size(); si++) {
        if (flips[si] != ~uint64_t{0}) {
            continue;
        }
        const auto &suf = suffixes[si];
        std::unordered_map<uint64_t, double> acc;
        for (const auto &leaf : leaves) {
            State st = leaf.state;
            for (size_t i = 0; i < starts[si]; i++) {
                if (suf.instructions[i].is<Gate>()) {
                    st.apply_gate(suf.instructions[i].as<Gate>());
                }
            }
            accumulate_terminal(st, leaf.bits, leaf.prob, plans[si], noise, acc);
        }
        finish(acc, out[si]);
    }
    return out;
}

template <class State>
std::vector<double> expectations_impl(const Circuit &c, const std::vector<Observable> &obs,
                                      const NoiseModel &noise) {
    std::vector<double> out(obs.size(), 0.0);
    std::vector<uint64_t> masks;
    for (const auto &o : obs) {
        masks.push_back(clbit_mask(o.sign_clbits));
    }
    Walker<State> w(c, noise, c.instructions.size());
    with_prep_branches<State>(c, noise, [&](State init, double p) {
        w.run(std::move(init), 0, p, [&](State st, uint64_t bits, double prob) {
            for (size_t k = 0; k < obs.size(); k++) {
                out[k] += prob * parity_sign(bits, masks[k]) * st.expectation(obs[k].pauli);
            }
        });
    });
    return out;
}

// ---------------------------------------------------------------------------
// Trajectories.

class ShotEngine {
   public:
    ShotEngine(const Circuit &c, const NoiseModel &noise, uint64_t seed, uint64_t shot, const SimOptions &opt,
               const RemoteResolver *resolver)
        : c_(c), noise_(noise), seed_(seed), shot_(shot), opt_(opt), resolver_(resolver), st_(c.num_qubits) {
    }

    uint64_t run() {
        for (uint32_t q = 0; q < c_.num_qubits; q++) {
            double p = noise_.prep(q);
            if (p > 0 && u(kPrepLabel, 0, qid(q), kPrep) < p) {
                st_.apply_1q(q, single_qubit_matrix(GateKind::X));
            }
        }
        for (size_t i = 0; i < c_.instructions.size(); i++) {
            const auto &inst = c_.instructions[i];
            uint64_t label = inst.label != kNoLabel ? inst.label : i;
            exec(inst, label, 0);
        }
        return bits_;
    }

   private:
    uint32_t qid(uint32_t q) const {
        return opt_.qubit_ids.empty() ? q : opt_.qubit_ids[q];
    }

    double u(uint64_t label, uint64_t sub, uint64_t q, uint64_t event) const {
        return key_uniform(mix_keys({seed_, shot_, label, sub, q, event}));
    }

    void idle(const std::vector<uint32_t> &qubits, double t, uint64_t label, uint64_t sub) {
        if (t == 0) {
            return;
        }
        st_.apply_idle_phase(qubits, noise_, t);
        for (auto q : qubits) {
            double lam = noise_.t1(q);
            if (lam > 0) {
                double gamma = 1 - std::exp(-lam * t);
                double p1 = st_.prob_one(q);
                auto &a = st_.amps();
                size_t bit = size_t{1} << q;
                if (u(label, sub, qid(q), kT1) < gamma * p1) {
                    for (size_t i = 0; i < a.size(); i++) {
                        if (i & bit) {
                            a[i ^ bit] = a[i];
                            a[i] = 0;
                        }
                    }
                } else {
                    double keep = std::sqrt(1 - gamma);
                    for (size_t i = 0; i < a.size(); i++) {
                        if (i & bit) {
                            a[i] *= keep;
                        }
                    }
                }
                st_.normalize();
            }
            double r2 = noise_.t2(q);
            if (r2 > 0) {
                double p = (1 - std::exp(-r2 * t)) / 2;
                if (u(label, sub, qid(q), kT2) < p) {
                    st_.apply_1q(q, single_qubit_matrix(GateKind::Z));
                }
            }
        }
    }

    void exec(const Instruction &inst, uint64_t label, uint64_t sub) {
        if (inst.is<Gate>()) {
            const auto &g = inst.as<Gate>();
            st_.apply_gate(g);
            if (g.arity() == 2 && noise_.twoq_depol > 0) {
                uint64_t qa = qid(g.qubits[0]), qb = qid(g.qubits[1]);
                if (u(label, sub, qa * 65536 + qb, kDepol) < noise_.twoq_depol) {
                    auto k = static_cast<int>(u(label, sub, qa * 65536 + qb, kDepolPauli) * 16) & 15;
                    apply_pauli(g.qubits[0], k & 3);
                    apply_pauli(g.qubits[1], k >> 2);
                }
            }
        } else if (inst.is<Measure>()) {
            const auto &m = inst.as<Measure>();
            double p1 = st_.prob_one(m.qubit);
            int v = u(label, sub, qid(m.qubit), kMeasure) < p1 ? 1 : 0;
            st_.project(m.qubit, v, v ? p1 : 1 - p1);
            double r = noise_.readout(m.qubit);
            if (r > 0 && u(label, sub, qid(m.qubit), kReadout) < r) {
                v ^= 1;
            }
            bits_ = set_bit(bits_, m.clbit, v);
        } else if (inst.is<Delay>()) {
            const auto &d = inst.as<Delay>();
            idle(d.qubits, d.duration, label, sub);
        } else if (inst.is<Switch>()) {
            const auto &s = inst.as<Switch>();
            if (noise_.switch_latency_tau > 0 && !s.latency_covered) {
                idle(all_qubits(c_.num_qubits), noise_.switch_latency_tau, label, sub);
            }
            uint64_t idx = (s.remote && resolver_) ? (*resolver_)(shot_, static_cast<uint32_t>(label), s, bits_)
                                                    : case_index(s, bits_);
            if (idx >= s.cases.size()) {
                throw LinkError("case index out of range");
            }
            const auto &block = s.cases[idx];
            for (size_t j = 0; j < block.size(); j++) {
                exec(block[j], label, block[j].label != kNoLabel ? block[j].label : j + 1);
            }
        }
    }

    void apply_pauli(uint32_t q, int k) {
        static const GateKind kinds[] = {GateKind::X, GateKind::X, GateKind::Z, GateKind::Z};
        if (k == 0) {
            return;
        }
        if (k == 2) {
            st_.apply_1q(q, {0, cplx(0, -1), cplx(0, 1), 0});
            return;
        }
        st_.apply_1q(q, single_qubit_matrix(kinds[k]));
    }

    const Circuit &c_;
    const NoiseModel &noise_;
    uint64_t seed_, shot_;
    const SimOptions &opt_;
    const RemoteResolver *resolver_;
    StateVector st_;
    uint64_t bits_ = 0;
};

}  // namespace

uint64_t clbit_mask(const std::vector<uint32_t> &clbits) {
    uint64_t m = 0;
    for (auto c : clbits) {
        if (c >= 64) {
            throw CapacityError("clbit index beyond 64");
        }
        m ^= uint64_t{1} << c;
    }
    return m;
}

std::string Counts::bitstring(uint64_t bits, uint32_t num_clbits) {
    std::string s(num_clbits, '0');
    for (uint32_t c = 0; c < num_clbits; c++) {
        if ((bits >> c) & 1) {
            s[num_clbits - 1 - c] = '1';
        }
    }
    return s;
}

uint64_t Counts::parse_bitstring(const std::string &s) {
    if (s.size() > 64) {
        throw ParseError("bitstring longer than 64");
    }
    uint64_t b = 0;
    for (size_t i = 0; i < s.size(); i++) {
        char ch = s[s.size() - 1 - i];
        if (ch != '0' && ch != '1') {
            throw ParseError("bad bitstring '" + s + "'");
        }
        if (ch == '1') {
            b |= uint64_t{1} << i;
        }
    }
    return b;
}

uint64_t Counts::total() const {
    uint64_t t = 0;
    for (const auto &[_, n] : hist) {
        t += n;
    }
    return t;
}

double Counts::parity_expectation(uint64_t mask) const {
    double s = 0;
    uint64_t t = 0;
    for (const auto &[b, n] : hist) {
        s += parity_sign(b, mask) * static_cast<double>(n);
        t += n;
    }
    if (t == 0) {
        throw Error("empty counts");
    }
    return s / static_cast<double>(t);
}

std::string Counts::to_text() const {
    std::ostringstream os;
    os << "counts clbits=" << num_clbits << " shots=" << shots << " seed=" << seed << "\n";
    for (const auto &[b, n] : hist) {
        os << bitstring(b, num_clbits) << " " << n << "\n";
    }
    return os.str();
}

Counts Counts::from_text(const std::string &text) {
    std::istringstream is(text);
    std::string head;
    Counts c;
    if (!std::getline(is, head) ||
        std::sscanf(head.c_str(), "counts clbits=%u shots=%lu seed=%lu", &c.num_clbits, &c.shots, &c.seed) != 3) {
        throw ParseError("bad counts header");
    }
    std::string bs;
    uint64_t n;
    while (is >> bs >> n) {
        c.hist[parse_bitstring(bs)] += n;
    }
    if (c.total() != c.shots) {
        throw ParseError("counts do not sum to shots");
    }
    return c;
}

double Distribution::total() const {
    double t = 0;
    for (const auto &[_, p] : probs) {
        t += p;
    }
    return t;
}

double Distribution::parity_expectation(uint64_t mask) const {
    double s = 0;
    for (const auto &[b, p] : probs) {
        s += parity_sign(b, mask) * p;
    }
    return s;
}

uint64_t run_single_shot(const Circuit &circuit, const NoiseModel &noise, uint64_t seed, uint64_t shot,
                         const SimOptions &options, const RemoteResolver *resolver) {
    ShotEngine e(circuit, noise, seed, shot, options, resolver);
    return e.run();
}

Counts run_shots(const Circuit &circuit, const NoiseModel &noise, uint64_t shots, uint64_t seed,
                 const SimOptions &options) {
    check_runnable(circuit, options.max_qubits);
    noise.validate();
    std::vector<uint64_t> results(shots);
    unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(shots)));
    auto work = [&](unsigned t) {
        for (uint64_t s = t; s < shots; s += threads) {
            results[s] = run_single_shot(circuit, noise, seed, s, options);
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
    Counts c;
    c.num_clbits = circuit.num_clbits;
    c.shots = shots;
    c.seed = seed;
    for (auto b : results) {
        c.hist[b]++;
    }
    return c;
}

Distribution outcome_distribution(const Circuit &circuit, const NoiseModel &noise) {
    check_runnable(circuit, 24);
    noise.validate();
    if (use_density(circuit, noise)) {
        return distribution_impl<DensityMatrix>(circuit, noise);
    }
    return distribution_impl<StateVector>(circuit, noise);
}

std::vector<Distribution> outcome_distributions(const Circuit &prefix, const std::vector<Circuit> &suffixes,
                                                const NoiseModel &noise) {
    check_runnable(prefix, 24);
    noise.validate();
    for (const auto &s : suffixes) {
        if (s.num_qubits > prefix.num_qubits || s.num_clbits > 64) {
            throw CircuitError("suffix does not fit the prefix registers");
        }
    }
    if (use_density(prefix, noise)) {
        return distributions_impl<DensityMatrix>(prefix, suffixes, noise);
    }
    return distributions_impl<StateVector>(prefix, suffixes, noise);
}

Counts sample_counts(const Distribution &dist, uint64_t shots, uint64_t seed) {
    std::mt19937_64 rng(seed);
    Counts c;
    c.num_clbits = dist.num_clbits;
    c.shots = shots;
    c.seed = seed;
    double rest = dist.total();
    uint64_t left = shots;
    size_t k = 0;
    for (const auto &[b, p] : dist.probs) {
        if (left == 0) {
            break;
        }
        uint64_t n;
        if (++k == dist.probs.size() || p >= rest) {
            n = left;
        } else {
            std::binomial_distribution<uint64_t> bin(left, std::clamp(p / rest, 0.0, 1.0));
            n = bin(rng);
        }
        if (n) {
            c.hist[b] += n;
        }
        left -= n;
        rest -= p;
    }
    return c;
}

double exact_expectation(const Circuit &circuit, const PauliString &observable) {
    return exact_expectations(circuit, {Observable(observable)})[0];
}

std::vector<double> exact_expectations(const Circuit &circuit, const std::vector<Observable> &observables,
                                       const NoiseModel &noise) {
    check_runnable(circuit, 24);
    noise.validate();
    if (use_density(circuit, noise)) {
        return expectations_impl<DensityMatrix>(circuit, observables, noise);
    }
    return expectations_impl<StateVector>(circuit, observables, noise);
}

StateVector final_state(const Circuit &circuit) {
    check_runnable(circuit, 24);
    StateVector s(circuit.num_qubits);
    for (const auto &inst : circuit.instructions) {
        if (inst.is<Gate>()) {
            s.apply_gate(inst.as<Gate>());
        } else if (inst.is<Measure>() || inst.is<Switch>()) {
            throw CircuitError("final_state needs a unitary circuit");
        }
    }
    return s;
}

DensityMatrix final_density_matrix(const Circuit &circuit, const NoiseModel &noise) {
    check_runnable(circuit, kMaxDensityQubits);
    noise.validate();
    DensityMatrix acc = DensityMatrix::zero(circuit.num_qubits);
    if (use_density(circuit, noise)) {
        Walker<DensityMatrix> w(circuit, noise, circuit.instructions.size());
        with_prep_branches<DensityMatrix>(circuit, noise, [&](DensityMatrix init, double p) {
            w.run(std::move(init), 0, p, [&](DensityMatrix st, uint64_t, double prob) {
                st *= prob;
                acc += st;
            });
        });
    } else {
        Walker<StateVector> w(circuit, noise, circuit.instructions.size());
        with_prep_branches<StateVector>(circuit, noise, [&](StateVector init, double p) {
            w.run(std::move(init), 0, p, [&](StateVector st, uint64_t, double prob) {
                auto d = DensityMatrix::from_state(st);
                d *= prob;
                acc += d;
            });
        });
    }
    return acc;
}

DensityMatrix apply_noise_channel(const DensityMatrix &rho, const NoiseModel &noise, double duration) {
    if (!(duration >= 0)) {
        throw Error("duration must be non-negative");
    }
    DensityMatrix out = rho;
    idle_exact(out, all_qubits(rho.num_qubits()), noise, duration);
    return out;
}

}  // namespace qlink
