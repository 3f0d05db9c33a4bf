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

#include "qlink/mitigation.h"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

#include "qlink/errors.h"
#include "qlink/rng.h"

namespace qlink {

void TrexConfig::validate() const {
    if (n_samples < 1) {
        throw MitigationError("TREX needs at least one sample");
    }
    if (!(floor >= 0)) {
        throw MitigationError("TREX floor must be non-negative");
    }
    if (calibration_prep_error < 0 || calibration_prep_error > 1) {
        throw MitigationError("calibration prep error must be a probability");
    }
}

namespace {

// Measurements whose qubit is not touched again and whose clbit feeds no later switch.
std::vector<std::pair<uint32_t, uint32_t>> terminal_measurements(const Circuit &circuit) {
    std::vector<bool> qubit_used(circuit.num_qubits, false), clbit_read(circuit.num_clbits, false);
    std::vector<std::pair<uint32_t, uint32_t>> out;
    for (auto it = circuit.instructions.rbegin(); it != circuit.instructions.rend(); ++it) {
        if (it->is<Measure>()) {
            const auto &m = it->as<Measure>();
            if (!qubit_used[m.qubit] && !clbit_read[m.clbit]) {
                out.push_back({m.qubit, m.clbit});
            }
        } else if (it->is<Switch>()) {
            for (uint32_t c : it->as<Switch>().conditions) {
                clbit_read[c] = true;
            }
        }
        for (uint32_t q : instruction_qubits(*it)) {
            qubit_used[q] = true;
        }
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<uint64_t> twirl_masks(const Circuit &circuit, const TrexConfig &cfg) {
    return trex_masks(terminal_measurements(circuit), cfg);
}

}  // namespace

std::vector<uint64_t> trex_masks(const std::vector<std::pair<uint32_t, uint32_t>> &meas, const TrexConfig &cfg) {
    cfg.validate();
    if (meas.empty()) {
        throw MitigationError("TREX needs measurements to twirl");
    }
    std::vector<uint64_t> masks;
    for (uint32_t s = 0; s < cfg.n_samples; s++) {
        std::mt19937_64 rng(mix_keys({cfg.seed, 0x7eec, s}));
        uint64_t mask = 0;
        for (auto [q, c] : meas) {
            if (rng() & 1) {
                mask |= uint64_t{1} << c;
            }
        }
        masks.push_back(mask);
    }
    return masks;
}

std::vector<TwirlSample> trex_twirl(const Circuit &circuit, const TrexConfig &cfg) {
    auto masks = twirl_masks(circuit, cfg);
    auto meas = terminal_measurements(circuit);
    std::vector<TwirlSample> out;
    for (uint64_t mask : masks) {
        TwirlSample s;
        s.mask = mask;
        s.circuit = circuit;
        s.circuit.instructions.clear();
        for (const auto &inst : circuit.instructions) {
            if (inst.is<Measure>() && ((mask >> inst.as<Measure>().clbit) & 1) &&
                std::find(meas.begin(), meas.end(), std::pair{inst.as<Measure>().qubit, inst.as<Measure>().clbit}) !=
                    meas.end()) {
                s.circuit.x(inst.as<Measure>().qubit);
            }
            s.circuit.instructions.push_back(inst);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TwirlSample> trex_calibration(const Circuit &circuit, const TrexConfig &cfg) {
    auto masks = twirl_masks(circuit, cfg);
    auto meas = terminal_measurements(circuit);
    std::vector<TwirlSample> out;
    for (uint64_t mask : masks) {
        TwirlSample s;
        s.mask = mask;
        s.circuit = Circuit(circuit.num_qubits, circuit.num_clbits);
        for (auto [q, c] : meas) {
            if ((mask >> c) & 1) {
                s.circuit.x(q);
            }
        }
        for (auto [q, c] : meas) {
            s.circuit.measure(q, c);
        }
        out.push_back(std::move(s));
    }
    return out;
}

NoiseModel calibration_noise(const NoiseModel &noise, const TrexConfig &cfg, uint32_t num_qubits) {
    NoiseModel out = noise;
    if (cfg.calibration_prep_error > 0) {
        out.prep_error.resize(std::max<size_t>(out.prep_error.size(), num_qubits), 0);
        for (uint32_t q = 0; q < num_qubits; q++) {
            double p = out.prep_error[q];
            out.prep_error[q] = p + cfg.calibration_prep_error - 2 * p * cfg.calibration_prep_error;
        }
    }
    return out;
}

Counts trex_merge(const std::vector<std::pair<Counts, uint64_t>> &samples) {
    if (samples.empty()) {
        throw MitigationError("nothing to merge");
    }
    Counts out;
    out.num_clbits = samples[0].first.num_clbits;
    out.seed = samples[0].first.seed;
    for (const auto &[c, mask] : samples) {
        if (c.num_clbits != out.num_clbits) {
            throw MitigationError("TREX samples have different register widths");
        }
        for (auto [bits, n] : c.hist) {
            out.hist[bits ^ mask] += n;
        }
        out.shots += c.shots;
    }
    return out;
}

PauliString trex_shadow(const PauliString &s) {
    PauliString out;
    for (auto [q, op] : s.ops()) {
        out.set(q, 'Z');
    }
    return out;
}

double trex_mitigate(double s_twirl, double s_prime, double floor) {
    if (!(std::abs(s_prime) > floor)) {
        throw MitigationError("TREX denominator " + std::to_string(s_prime) + " is below the floor");
    }
    return s_twirl / s_prime;
}

std::vector<int> dd_colouring(uint32_t num_qubits, const std::vector<ZZCoupling> &couplings) {
    std::vector<int> colour(num_qubits, -1);
    std::vector<std::vector<uint32_t>> adj(num_qubits);
    for (const auto &z : couplings) {
        if (z.a < num_qubits && z.b < num_qubits && z.a != z.b) {
            adj[z.a].push_back(z.b);
            adj[z.b].push_back(z.a);
        }
    }
    for (uint32_t s = 0; s < num_qubits; s++) {
        if (colour[s] >= 0) {
            continue;
        }
        if (adj[s].empty()) {
            colour[s] = s % 2;
            continue;
        }
        colour[s] = 0;
        std::queue<uint32_t> todo;
        todo.push(s);
        while (!todo.empty()) {
            uint32_t u = todo.front();
            todo.pop();
            for (uint32_t v : adj[u]) {
                if (colour[v] < 0) {
                    colour[v] = 1 - colour[u];
                    todo.push(v);
                }
            }
        }
    }
    return colour;
}

namespace {

template <typename Window>
Circuit rewrite_switches(const Circuit &circuit, Window &&window) {
    bool found = false;
    Circuit out = circuit;
    out.instructions.clear();
    for (const auto &inst : circuit.instructions) {
        if (inst.is<Switch>()) {
            found = true;
            window(out);
            Instruction copy = inst;
            copy.as<Switch>().latency_covered = true;
            out.instructions.push_back(std::move(copy));
        } else {
            out.instructions.push_back(inst);
        }
    }
    if (!found) {
        throw MitigationError("circuit has no switch");
    }
    return out;
}

std::vector<uint32_t> all_qubits(uint32_t n) {
    std::vector<uint32_t> q(n);
    for (uint32_t i = 0; i < n; i++) {
        q[i] = i;
    }
    return q;
}

}  // namespace

Circuit insert_dd(const Circuit &circuit, double tau, double delta, const std::vector<ZZCoupling> &couplings) {
    if (tau < 0 || delta < 0) {
        throw MitigationError("DD delays must be non-negative");
    }
    auto colour = dd_colouring(circuit.num_qubits, couplings);
    auto qubits = all_qubits(circuit.num_qubits);
    const bool pulses = tau + delta > 0;
    return rewrite_switches(circuit, [&](Circuit &out) {
        for (int step = 0; step < 4; step++) {
            out.delay(qubits, tau + delta);
            if (pulses) {
                for (uint32_t q = 0; q < circuit.num_qubits; q++) {
                    if (colour[q] == step % 2) {
                        out.x(q);
                    }
                }
            }
        }
    });
}

Circuit stretch_switch(const Circuit &circuit, double tau, double delta) {
    if (tau < 0 || delta < 0) {
        throw MitigationError("delays must be non-negative");
    }
    auto qubits = all_qubits(circuit.num_qubits);
    return rewrite_switches(circuit, [&](Circuit &out) { out.delay(qubits, 4 * (tau + delta)); });
}

double tune_dd_tau(const std::vector<double> &candidates, const std::function<double(double)> &signal) {
    if (candidates.empty()) {
        throw MitigationError("no tau candidates");
    }
    double best = candidates[0], best_signal = signal(best);
    for (size_t i = 1; i < candidates.size(); i++) {
        double s = signal(candidates[i]);
        if (s > best_signal) {
            best = candidates[i];
            best_signal = s;
        }
    }
    return best;
}

void ZneSchedule::validate() const {
    if (factors.empty()) {
        throw MitigationError("empty ZNE schedule");
    }
    for (size_t i = 0; i < factors.size(); i++) {
        if (factors[i] < 1) {
            throw MitigationError("stretch factors must be at least 1");
        }
        if (i > 0 && factors[i] <= factors[i - 1]) {
            throw MitigationError("stretch factors must increase strictly");
        }
    }
}

ZneResult zne_extrapolate(const std::vector<ZnePoint> &points) {
    if (points.size() < 2) {
        throw MitigationError("ZNE needs at least two points");
    }
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (const auto &p : points) {
        double s = std::max(p.sigma, 1e-6);
        double w = 1 / (s * s);
        sw += w;
        swx += w * p.c;
        swy += w * p.value;
        swxx += w * p.c * p.c;
        swxy += w * p.c * p.value;
    }
    double det = sw * swxx - swx * swx;
    if (!(det > 1e-12 * sw * swxx)) {
        throw MitigationError("ZNE needs at least two distinct stretch factors");
    }
    ZneResult r;
    r.slope = (sw * swxy - swx * swy) / det;
    r.value = (swxx * swy - swx * swxy) / det;
    r.sigma = std::sqrt(swxx / det);
    return r;
}

namespace {

double log_choose(double n, double k) {
    return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

/// Hypergeometric draw: even-parity shots among `m` taken without replacement from `n`, `plus` of them even.
/// Inversion that walks outward from the mode, so the cost follows the spread rather than the support.
uint64_t hypergeometric(uint64_t n, uint64_t plus, uint64_t m, double u) {
    const double N = static_cast<double>(n), K = static_cast<double>(plus), M = static_cast<double>(m);
    const uint64_t lo = m > n - plus ? m - (n - plus) : 0;
    const uint64_t hi = std::min(plus, m);
    uint64_t mode = static_cast<uint64_t>(std::floor((M + 1) * (K + 1) / (N + 2)));
    mode = std::clamp(mode, lo, hi);
    const double km = static_cast<double>(mode);
    double p_mode = std::exp(log_choose(K, km) + log_choose(N - K, M - km) - log_choose(N, M));
    u -= p_mode;
    if (u <= 0) {
        return mode;
    }
    double pu = p_mode, pd = p_mode;
    uint64_t ku = mode, kd = mode;
    while (ku < hi || kd > lo) {
        if (ku < hi) {
            const double k = static_cast<double>(ku);
            pu *= (K - k) * (M - k) / ((k + 1) * (N - K - M + k + 1));
            ku++;
            u -= pu;
            if (u <= 0) {
                return ku;
            }
        }
        if (kd > lo) {
            const double k = static_cast<double>(kd);
            pd *= k * (N - K - M + k) / ((K - k + 1) * (M - k + 1));
            kd--;
            u -= pd;
            if (u <= 0) {
                return kd;
            }
        }
    }
    return mode;
}

/// Mean parity of `m` shots drawn without replacement from `n` shots of which `plus` have even parity.
double subsample_parity(uint64_t n, uint64_t plus, uint64_t m, uint64_t key) {
    double k = static_cast<double>(hypergeometric(n, plus, m, key_uniform(key)));
    return (2 * k - static_cast<double>(m)) / static_cast<double>(m);
}

ResampleResult summarize(const std::vector<double> &values) {
    ResampleResult r;
    for (double v : values) {
        r.mean += v;
    }
    r.mean /= values.size();
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) {
            ss += (v - r.mean) * (v - r.mean);
        }
        r.sigma = std::sqrt(ss / (values.size() - 1));
    }
    return r;
}

}  // namespace

ResampleResult resample_terms(const std::vector<ResampleTerm> &terms, double frac, uint32_t reps, uint64_t seed) {
    if (terms.empty() || reps < 1 || !(frac > 0 && frac <= 1)) {
        throw MitigationError("resampling needs members, reps >= 1 and 0 < frac <= 1");
    }
    std::vector<uint64_t> totals, plus, sizes;
    for (const auto &t : terms) {
        uint64_t n = 0, p = 0;
        for (auto [bits, k] : t.counts->hist) {
            n += k;
            p += parity_sign(bits, t.mask) > 0 ? k : 0;
        }
        uint64_t m = static_cast<uint64_t>(std::llround(frac * static_cast<double>(n)));
        if (m < 1) {
            throw MitigationError("resample fraction selects no shots");
        }
        totals.push_back(n);
        plus.push_back(p);
        sizes.push_back(m);
    }
    std::vector<double> values;
    for (uint32_t r = 0; r < reps; r++) {
        double v = 0;
        for (size_t i = 0; i < terms.size(); i++) {
            v += terms[i].weight * subsample_parity(totals[i], plus[i], sizes[i], mix_keys({seed, 0x5a3e, r, i}));
        }
        values.push_back(v);
    }
    return summarize(values);
}

ResampleResult resample_weighted(const std::vector<std::pair<double, Counts>> &members, uint64_t mask, double frac,
                                 uint32_t reps, uint64_t seed) {
    std::vector<ResampleTerm> terms;
    for (const auto &[a, c] : members) {
        terms.push_back({a, &c, mask});
    }
    return resample_terms(terms, frac, reps, seed);
}

ResampleResult resample(const Counts &counts, uint64_t mask, double frac, uint32_t reps, uint64_t seed) {
    if (counts.shots == 0) {
        throw MitigationError("cannot resample empty counts");
    }
    return resample_weighted({{1.0, counts}}, mask, frac, reps, seed);
}

}  // namespace qlink
