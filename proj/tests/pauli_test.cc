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

#include <gtest/gtest.h>

#include <random>

#include "qlink/errors.h"
#include "qlink/sim.h"
#include "test_util.h"

using namespace qlink;

TEST(pauli, parse_and_str) {
    auto p = PauliString::parse("+X0 Z1 Y5");
    EXPECT_EQ(p.str(), "+X0 Z1 Y5");
    EXPECT_EQ(p.weight(), 3u);
    EXPECT_EQ(p.at(5), 'Y');
    EXPECT_EQ(p.at(2), 'I');
    EXPECT_EQ(PauliString::parse("-Z3").sign(), -1);
    EXPECT_EQ(PauliString::dense("XIZ"), PauliString::parse("X0 Z2"));
    EXPECT_THROW(PauliString::parse("Q0"), ParseError);
    EXPECT_THROW(PauliString::parse("X0 Z0"), ParseError);
}

TEST(pauli, multiplication_table) {
    auto x = PauliString::single(0, 'X'), y = PauliString::single(0, 'Y'), z = PauliString::single(0, 'Z');
    EXPECT_EQ((x * y).str(), "+iZ0");
    EXPECT_EQ((y * x).str(), "-iZ0");
    EXPECT_EQ((z * x).str(), "+iY0");
    EXPECT_EQ((x * x).str(), "+I");
    EXPECT_THROW((x * y).sign(), Error);
}

TEST(pauli, commutation) {
    auto a = PauliString::parse("X0 X1"), b = PauliString::parse("Z0 Z1");
    EXPECT_TRUE(a.commutes(b));
    EXPECT_FALSE(a.qubit_wise_commutes(b));
    EXPECT_TRUE(PauliString::parse("X0 Z2").qubit_wise_commutes(PauliString::parse("X0 Y1")));
    EXPECT_FALSE(PauliString::parse("X0").commutes(PauliString::parse("Z0")));
}

TEST(pauli, property_product_matches_matrix_action) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; t++) {
        uint32_t n = 3;
        auto a = testgen::random_pauli(n, rng, true), b = testgen::random_pauli(n, rng, true);
        auto psi = final_state(testgen::random_unitary_circuit(n, 20, rng));
        // <psi|a b|psi> computed two ways: product string vs sequential action.
        auto ab = a * b;
        cplx direct = psi.expectation_complex(ab);
        StateVector phi = psi;
        for (const auto *p : {&b, &a}) {
            for (auto [q, op] : p->ops()) {
                GateKind k = op == 'X' ? GateKind::X : GateKind::Z;
                if (op == 'Y') {
                    phi.apply_1q(q, {0, cplx(0, -1), cplx(0, 1), 0});
                } else {
                    phi.apply_1q(q, single_qubit_matrix(k));
                }
            }
            phi.amps();
        }
        cplx seq = psi.inner(phi) * a.coefficient() * b.coefficient();
        EXPECT_NEAR(std::abs(direct - seq), 0, 1e-12);
    }
}

TEST(pauli, commutes_iff_product_order_agrees) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 200; t++) {
        auto a = testgen::random_pauli(4, rng), b = testgen::random_pauli(4, rng);
        EXPECT_EQ(a.commutes(b), (a * b) == (b * a));
    }
}

TEST(pauli, masks) {
    auto p = PauliString::parse("X0 Y1 Z2");
    EXPECT_EQ(p.x_mask(), 0b011u);
    EXPECT_EQ(p.z_mask(), 0b110u);
}
