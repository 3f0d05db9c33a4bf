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

#include "qlink/noise.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "qlink/errors.h"

namespace qlink {

namespace {

double get(const std::vector<double> &v, uint32_t q) {
    return q < v.size() ? v[q] : 0.0;
}

bool any_positive(const std::vector<double> &v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x != 0; });
}

void check_probs(const std::vector<double> &v, const char *name) {
    for (double p : v) {
        if (!(p >= 0 && p <= 1)) {
            throw ConfigError(std::string(name) + " must lie in [0, 1]");
        }
    }
}

void check_rates(const std::vector<double> &v, const char *name) {
    for (double r : v) {
        if (!(r >= 0) || !std::isfinite(r)) {
            throw ConfigError(std::string(name) + " must be finite and non-negative");
        }
    }
}

std::vector<double> pick(const std::vector<double> &v, const std::vector<uint32_t> &qubits) {
    std::vector<double> out;
    if (v.empty()) {
        return out;
    }
    for (auto q : qubits) {
        out.push_back(get(v, q));
    }
    return out;
}

}  // namespace

double NoiseModel::readout(uint32_t q) const {
    return get(readout_error, q);
}
double NoiseModel::prep(uint32_t q) const {
    return get(prep_error, q);
}
double NoiseModel::detuning(uint32_t q) const {
    return get(z_rate, q);
}
double NoiseModel::t1(uint32_t q) const {
    return get(t1_rate, q);
}
double NoiseModel::t2(uint32_t q) const {
    return get(t2_rate, q);
}

bool NoiseModel::has_incoherent() const {
    return any_positive(t1_rate) || any_positive(t2_rate) || twoq_depol != 0;
}

bool NoiseModel::has_idle() const {
    return any_positive(t1_rate) || any_positive(t2_rate) || any_positive(z_rate) ||
           std::any_of(zz.begin(), zz.end(), [](const ZZCoupling &c) { return c.rate != 0; });
}

bool NoiseModel::is_identity() const {
    return !has_incoherent() && !has_idle() && !any_positive(readout_error) && !any_positive(prep_error);
}

void NoiseModel::validate() const {
    check_probs(readout_error, "readout_error");
    check_probs(prep_error, "prep_error");
    check_rates(t1_rate, "t1_rate");
    check_rates(t2_rate, "t2_rate");
    for (double z : z_rate) {
        if (!std::isfinite(z)) {
            throw ConfigError("z_rate must be finite");
        }
    }
    if (!(twoq_depol >= 0 && twoq_depol <= 1)) {
        throw ConfigError("twoq_depol must lie in [0, 1]");
    }
    if (!(switch_latency_tau >= 0) || !std::isfinite(switch_latency_tau)) {
        throw ConfigError("switch_latency_tau must be finite and non-negative");
    }
    for (const auto &c : zz) {
        if (c.a == c.b || !std::isfinite(c.rate)) {
            throw ConfigError("zz coupling must join two distinct qubits with a finite rate");
        }
    }
}

NoiseModel NoiseModel::restricted(const std::vector<uint32_t> &qubits) const {
    NoiseModel out;
    out.readout_error = pick(readout_error, qubits);
    out.prep_error = pick(prep_error, qubits);
    out.z_rate = pick(z_rate, qubits);
    out.t1_rate = pick(t1_rate, qubits);
    out.t2_rate = pick(t2_rate, qubits);
    out.twoq_depol = twoq_depol;
    out.switch_latency_tau = switch_latency_tau;
    std::map<uint32_t, uint32_t> local;
    for (uint32_t i = 0; i < qubits.size(); i++) {
        local[qubits[i]] = i;
    }
    for (const auto &c : zz) {
        auto a = local.find(c.a), b = local.find(c.b);
        if (a != local.end() && b != local.end()) {
            out.zz.push_back({a->second, b->second, c.rate});
        }
    }
    return out;
}

NoiseModel NoiseModel::uniform_readout(uint32_t n, double r) {
    NoiseModel m;
    m.readout_error.assign(n, r);
    return m;
}

std::string NoiseModel::to_json() const {
    nlohmann::json j;
    j["readout_error"] = readout_error;
    j["prep_error"] = prep_error;
    j["z_rate"] = z_rate;
    j["t1_rate"] = t1_rate;
    j["t2_rate"] = t2_rate;
    j["twoq_depol"] = twoq_depol;
    j["switch_latency_tau"] = switch_latency_tau;
    auto arr = nlohmann::json::array();
    for (const auto &c : zz) {
        arr.push_back({c.a, c.b, c.rate});
    }
    j["zz"] = arr;
    return j.dump();
}

NoiseModel NoiseModel::from_json(const std::string &text) {
    NoiseModel m;
    try {
        auto j = nlohmann::json::parse(text);
        auto vec = [&](const char *key, std::vector<double> &out) {
            if (j.contains(key)) {
                out = j.at(key).get<std::vector<double>>();
            }
        };
        vec("readout_error", m.readout_error);
        vec("prep_error", m.prep_error);
        vec("z_rate", m.z_rate);
        vec("t1_rate", m.t1_rate);
        vec("t2_rate", m.t2_rate);
        m.twoq_depol = j.value("twoq_depol", 0.0);
        m.switch_latency_tau = j.value("switch_latency_tau", 0.0);
        if (j.contains("zz")) {
            for (const auto &e : j.at("zz")) {
                m.zz.push_back({e.at(0).get<uint32_t>(), e.at(1).get<uint32_t>(), e.at(2).get<double>()});
            }
        }
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("bad noise model: ") + e.what());
    }
    m.validate();
    return m;
}

}  // namespace qlink
