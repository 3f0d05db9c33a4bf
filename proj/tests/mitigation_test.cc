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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qlink/errors.h"
#include "qlink/gate_cutting.h"
#include "qlink/qpd.h"
#include "test_util.h"

using namespace qlink;

namespace {

// Exact twirled-and-merged parity under `noise`.
double exact_trex_parity(const std::vector<TwirlSample> &samples, const NoiseModel &noise, uint64_t mask) {
    double total = 0;
    for (const auto &s : samples) {
        auto d = outcome_distribution(s.circuit, noise);
        for (auto [bits, p] : d.probs) {
            total += p * parity_sign(bits ^ s.mask, mask);
        }
    }
    return total / samples.size();
}

Circuit bell_zz() {
    Circuit c(2, 2);
    c.h(0).cx(0, 1).measure(0, 0).measure(1, 1);
    return c;
}

}  // namespace

TEST(trex, masks_are_seeded_and_zero_mask_is_identity) {
    auto c = bell_zz();
    TrexConfig cfg;
    cfg.seed = 9;
    auto a = trex_twirl(c, cfg), b = trex_twirl(c, cfg);
    ASSERT_EQ(a.size(), 5u);
    bool saw_zero = false;
    for (size_t i = 0; i < a.size(); i++) {
        EXPECT_EQ(a[i].mask, b[i].mask);
        EXPECT_EQ(a[i].circuit, b[i].circuit);
        EXPECT_EQ(a[i].circuit.count_gates(GateKind::X), static_cast<size_t>(__builtin_popcountll(a[i].mask)));
        if (a[i].mask == 0) {
            saw_zero = true;
            EXPECT_EQ(a[i].circuit, c);
        }
    }
    for (uint64_t seed = 0; !saw_zero && seed < 50; seed++) {
        cfg.seed = seed;
        for (const auto &s : trex_twirl(c, cfg)) {
            if (s.mask == 0) {
                saw_zero = true;
                EXPECT_EQ(s.circuit, c);
            }
        }
    }
    EXPECT_TRUE(saw_zero);
    EXPECT_THROW(trex_twirl(Circuit(2), cfg), MitigationError);
    cfg.n_samples = 0;
    EXPECT_THROW(trex_twirl(c, cfg), MitigationError);
}

TEST(trex, mid_circuit_measurements_are_not_twirled) {
    auto c = bell_benchmark_circuit();
    c.num_clbits = 4;
    c.measure(0, 2).measure(3, 3);
    TrexConfig cfg;
    for (uint64_t seed = 0; seed < 20; seed++) {
        cfg.seed = seed;
        for (const auto &s : trex_twirl(c, cfg)) {
            EXPECT_EQ(s.mask & 3u, 0u);
        }
    }
}

TEST(trex, merge) {
    Counts c;
    c.num_clbits = 1;
    c.shots = 100;
    c.hist = {{1, 100}};
    auto m = trex_merge({{c, 1}});
    EXPECT_EQ(m.hist, (std::map<uint64_t, uint64_t>{{0, 100}}));
    EXPECT_EQ(trex_merge({{c, 0}}).hist, c.hist);
    Counts d = c;
    d.num_clbits = 2;
    EXPECT_THROW(trex_merge({{c, 0}, {d, 0}}), MitigationError);
    EXPECT_EQ(trex_merge({{c, 0}, {c, 1}}).shots, 200u);
}

TEST(trex, merged_twirls_reproduce_untwirled_statistics) {
    auto c = bell_zz();
    TrexConfig cfg;
    cfg.n_samples = 8;
    std::vector<std::pair<Counts, uint64_t>> parts;
    for (const auto &s : trex_twirl(c, cfg)) {
        parts.push_back({run_shots(s.circuit, {}, 1000, 3), s.mask});
    }
    auto merged = trex_merge(parts);
    for (auto [bits, n] : merged.hist) {
        EXPECT_TRUE(bits == 0 || bits == 3);
    }
    EXPECT_EQ(merged.shots, 8000u);
}

TEST(trex, property_exact_under_symmetric_readout) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 10; t++) {
        uint32_t n = 2 + rng() % 3;
        Circuit c(n, n);
        testgen::random_local_layer(c, [&] {
            std::vector<uint32_t> q(n);
            for (uint32_t i = 0; i < n; i++) {
                q[i] = i;
            }
            return q;
        }(), rng);
        for (uint32_t q = 0; q + 1 < n; q++) {
            c.cx(q, q + 1);
        }
        for (uint32_t q = 0; q < n; q++) {
            c.measure(q, q);
        }
        NoiseModel noise;
        for (uint32_t q = 0; q < n; q++) {
            noise.readout_error.push_back(0.05 * std::uniform_real_distribution<double>(0, 1)(rng));
        }
        TrexConfig cfg;
        cfg.seed = t;
        uint64_t mask = 1 + rng() % ((uint64_t{1} << n) - 1);
        double ideal = outcome_distribution(c).parity_expectation(mask);
        double twirled = exact_trex_parity(trex_twirl(c, cfg), noise, mask);
        double prime = exact_trex_parity(trex_calibration(c, cfg), noise, mask);
        EXPECT_NEAR(trex_mitigate(twirled, prime), ideal, 1e-9);
    }
}

TEST(trex, injected_prep_error_over_mitigates) {
    Circuit c(2, 2);
    c.h(0).cx(0, 1).measure(0, 0).measure(1, 1);
    auto noise = NoiseModel::uniform_readout(2, 0.03);
    TrexConfig cfg;
    cfg.calibration_prep_error = 0.04;
    double twirled = exact_trex_parity(trex_twirl(c, cfg), noise, 3);
    double prime = exact_trex_parity(trex_calibration(c, cfg), calibration_noise(noise, cfg, 2), 3);
    EXPECT_GT(trex_mitigate(twirled, prime), 1);
}

TEST(trex, mitigate_and_shadow) {
    EXPECT_DOUBLE_EQ(trex_mitigate(0.7, 1), 0.7);
    EXPECT_DOUBLE_EQ(trex_mitigate(0.45, 0.5), 0.9);
    EXPECT_THROW(trex_mitigate(0.1, 0.01), MitigationError);
    EXPECT_EQ(trex_shadow(PauliString::parse("X0 Y2 Z3")), PauliString::parse("Z0 Z2 Z3"));
}

TEST(dd, colouring) {
    EXPECT_EQ(dd_colouring(4, {}), (std::vector<int>{0, 1, 0, 1}));
    EXPECT_EQ(dd_colouring(3, {{0, 2, 1}}), (std::vector<int>{0, 1, 1}));
}

TEST(dd, zero_tau_only_adds_zero_delays) {
    auto c = bell_benchmark_circuit();
    auto d = insert_dd(c, 0, 0);
    EXPECT_EQ(d.instructions.size(), c.instructions.size() + 4);
    EXPECT_EQ(d.count_gates(GateKind::X), 0u);
    for (const auto &inst : d.instructions) {
        if (inst.is<Delay>()) {
            EXPECT_EQ(inst.as<Delay>().duration, 0);
        }
    }
    EXPECT_THROW(insert_dd(Circuit(2), 1, 0), MitigationError);
}

TEST(dd, property_echo_is_identity_for_static_z_terms) {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 20; t++) {
        uint32_t n = 2 + rng() % 3;
        Circuit c(n + 1, 1);
        std::vector<uint32_t> q(n);
        for (uint32_t i = 0; i < n; i++) {
            q[i] = i;
        }
        testgen::random_local_layer(c, q, rng);
        c.measure(n, 0);
        c.switch_on({0}, {{}, {}});
        NoiseModel noise;
        for (uint32_t i = 0; i + 1 < n; i++) {
            noise.zz.push_back({i, i + 1, u(rng)});
            noise.z_rate.push_back(u(rng));
        }
        double tau = 0.1 + std::abs(u(rng)), delta = std::abs(u(rng)) * (t % 2);
        noise.switch_latency_tau = tau;
        auto ideal = final_density_matrix(c);
        auto echoed = final_density_matrix(insert_dd(c, tau, delta, noise.zz), noise);
        EXPECT_LT(echoed.frobenius_distance(ideal), 1e-10) << t;
        auto bare = final_density_matrix(c, noise);
        EXPECT_GT(bare.frobenius_distance(ideal), 1e-6) << t;
    }
}

TEST(dd, echo_cancels_zz_on_bell_benchmark) {
    auto c = bell_benchmark_circuit();
    NoiseModel noise;
    noise.zz = {{0, 1, 0.7}, {1, 2, 1.3}, {2, 3, 0.4}};
    std::vector<Observable> obs{PauliString::parse("Z0 X3"), PauliString::parse("X0 Z3")};
    std::vector<double> bare;
    for (double tau : {0.5, 1.0, 1.5, 2.0}) {
        noise.switch_latency_tau = tau;
        auto v = exact_expectations(insert_dd(c, tau, 0, noise.zz), obs, noise);
        EXPECT_NEAR(v[0], 1, 1e-9);
        EXPECT_NEAR(v[1], 1, 1e-9);
        bare.push_back(exact_expectations(c, obs, noise)[1]);
    }
    double spread = *std::max_element(bare.begin(), bare.end()) - *std::min_element(bare.begin(), bare.end());
    EXPECT_GT(spread, 0.1);
}

TEST(dd, stretch_and_tuning) {
    auto c = bell_benchmark_circuit();
    auto s = stretch_switch(c, 1, 0.5);
    double total = 0;
    for (const auto &inst : s.instructions) {
        if (inst.is<Delay>()) {
            total += inst.as<Delay>().duration;
        }
    }
    EXPECT_DOUBLE_EQ(total, 6);
    EXPECT_DOUBLE_EQ(tune_dd_tau({1, 2, 3}, [](double t) { return -(t - 2) * (t - 2); }), 2);
    EXPECT_THROW(tune_dd_tau({}, [](double) { return 0.0; }), MitigationError);
}

TEST(zne, schedule) {
    ZneSchedule s;
    EXPECT_NO_THROW(s.validate());
    EXPECT_DOUBLE_EQ(s.delta(4, 2), 4);
    s.factors = {1, 1};
    EXPECT_THROW(s.validate(), MitigationError);
    s.factors = {0.5, 1};
    EXPECT_THROW(s.validate(), MitigationError);
}

TEST(zne, linear_fits) {
    EXPECT_NEAR(zne_extrapolate({{1, 0.9, 0}, {2, 0.8, 0}}).value, 1.0, 1e-12);
    auto flat = zne_extrapolate({{1, 1, 0.1}, {2, 1, 0.1}, {3, 1, 0.1}});
    EXPECT_NEAR(flat.value, 1, 1e-12);
    EXPECT_NEAR(flat.slope, 0, 1e-12);
    EXPECT_GT(flat.sigma, 0);
    EXPECT_THROW(zne_extrapolate({{1, 1, 0}}), MitigationError);
    EXPECT_THROW(zne_extrapolate({{2, 1, 0}, {2, 0.5, 0}}), MitigationError);
}

TEST(zne, property_affine_exact_and_convex_improves) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    ZneSchedule sched;
    for (int t = 0; t < 50; t++) {
        double a = u(rng), b = u(rng) - 0.5, lambda = 0.05 + u(rng);
        std::vector<ZnePoint> affine, decay;
        for (double c : sched.factors) {
            affine.push_back({c, a + b * c, 0.01});
            decay.push_back({c, std::exp(-lambda * c), 0.01});
        }
        EXPECT_NEAR(zne_extrapolate(affine).value, a, 1e-9);
        EXPECT_LT(std::abs(zne_extrapolate(decay).value - 1), std::abs(decay[0].value - 1));
    }
}

TEST(resample, deterministic_and_errors) {
    Counts c;
    c.num_clbits = 1;
    c.shots = 1000;
    c.hist = {{0, 1000}};
    auto r = resample(c, 1);
    EXPECT_DOUBLE_EQ(r.mean, 1);
    EXPECT_DOUBLE_EQ(r.sigma, 0);
    Counts empty;
    EXPECT_THROW(resample(empty, 1), MitigationError);
    Counts few = c;
    few.shots = 4;
    few.hist = {{0, 4}};
    EXPECT_THROW(resample(few, 1), MitigationError);
}

TEST(resample, fair_coin_statistics) {
    const uint64_t n = 10240;
    Counts c;
    c.num_clbits = 1;
    c.shots = n;
    c.hist = {{0, n / 2}, {1, n / 2}};
    auto a = resample(c, 1, 0.1, 10, 5), b = resample(c, 1, 0.1, 10, 5);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.sigma, b.sigma);
    double expected_sigma = std::sqrt(1.0 / (0.1 * n));
    EXPECT_LT(std::abs(a.mean), 5 * expected_sigma);
    EXPECT_GT(a.sigma, expected_sigma / 2);
    EXPECT_LT(a.sigma, expected_sigma * 2);
}

TEST(resample, property_unbiased) {
    Counts c;
    c.num_clbits = 2;
    c.shots = 1000;
    c.hist = {{0, 400}, {1, 250}, {2, 200}, {3, 150}};
    double exact = c.parity_expectation(3);
    double total = 0, ss = 0;
    const int reps = 1000;
    for (int i = 0; i < reps; i++) {
        double v = resample(c, 3, 0.1, 1, i).mean;
        total += v;
        ss += v * v;
    }
    double mean = total / reps;
    double sd = std::sqrt(ss / reps - mean * mean);
    EXPECT_LT(std::abs(mean - exact), 5 * sd / std::sqrt(reps));
}

TEST(resample, weighted_members) {
    Counts up, down;
    up.num_clbits = down.num_clbits = 1;
    up.shots = down.shots = 100;
    up.hist = {{0, 100}};
    down.hist = {{1, 100}};
    auto r = resample_weighted({{1.5, up}, {-0.5, down}}, 1);
    EXPECT_DOUBLE_EQ(r.mean, 2);
    EXPECT_DOUBLE_EQ(r.sigma, 0);
}
