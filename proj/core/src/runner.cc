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

#include "qlink/runner.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Dense>
#include <json.hpp>

#include "qlink/errors.h"
#include "qlink/rng.h"

namespace qlink {

using json = nlohmann::json;

namespace {

constexpr uint64_t kJobStream = 0x6a6f62;
constexpr uint64_t kTrexStream = 0x7265;
constexpr uint64_t kCalibrationStream = 0xca1;
constexpr uint64_t kResampleStream = 0x5e;
constexpr uint64_t kDrawStream = 0xd4a3;

std::vector<Edge> edges_from_json(const json &j) {
    std::vector<Edge> out;
    for (const auto &e : j) {
        if (!e.is_array() || e.size() != 2) {
            throw ConfigError("edges are [a, b] pairs");
        }
        out.push_back({e[0].get<uint32_t>(), e[1].get<uint32_t>()});
    }
    return out;
}

json edges_to_json(const std::vector<Edge> &edges) {
    json out = json::array();
    for (auto [a, b] : edges) {
        out.push_back({a, b});
    }
    return out;
}

void check_keys(const json &j, std::initializer_list<const char *> allowed, const char *what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char *k) { return it.key() == k; }) ==
            allowed.end()) {
            throw ConfigError(std::string("unknown ") + what + " key '" + it.key() + "'");
        }
    }
}

Graph parse_graph(const json &j) {
    if (!j.is_object()) {
        throw ConfigError("graph must be an object");
    }
    Graph g;
    if (j.contains("ring")) {
        check_keys(j, {"ring", "cuts"}, "graph");
        try {
            g = Graph::ring(j["ring"].get<uint32_t>(), j.value("cuts", 1u));
        } catch (const GraphError &e) {
            throw ConfigError(e.what());
        }
    } else if (j.contains("device")) {
        check_keys(j, {"device", "long_range"}, "graph");
        if (j["device"] != "eagle") {
            throw ConfigError("unknown device " + j["device"].dump());
        }
        auto map = CouplingMap::eagle();
        g.num_nodes = map.num_qubits;
        g.edges = map.edges;
        for (auto e : edges_from_json(j.value("long_range", json::array()))) {
            g.edges.push_back(e);
            g.cut_edges.push_back(e);
        }
    } else {
        check_keys(j, {"nodes", "edges", "cut_edges"}, "graph");
        if (!j.contains("nodes")) {
            throw ConfigError("graph needs 'ring', 'device' or 'nodes'");
        }
        g.num_nodes = j["nodes"].get<uint32_t>();
        g.edges = edges_from_json(j.value("edges", json::array()));
        g.cut_edges = edges_from_json(j.value("cut_edges", json::array()));
    }
    return g;
}

CouplingMap parse_map(const json &j) {
    if (!j.is_object()) {
        throw ConfigError("map must be an object");
    }
    CouplingMap m;
    if (j.contains("kind")) {
        check_keys(j, {"kind", "qubits", "qpu_of"}, "map");
        std::string kind = j["kind"];
        if (kind == "line") {
            m = CouplingMap::line(j.at("qubits").get<uint32_t>());
        } else if (kind == "ring") {
            m = CouplingMap::ring(j.at("qubits").get<uint32_t>());
        } else if (kind == "eagle") {
            m = CouplingMap::eagle();
        } else {
            throw ConfigError("unknown map kind '" + kind + "'");
        }
    } else {
        check_keys(j, {"qubits", "edges", "qpu_of"}, "map");
        m.num_qubits = j.at("qubits").get<uint32_t>();
        m.edges = edges_from_json(j.value("edges", json::array()));
        m.qpu_of.assign(m.num_qubits, 0);
    }
    if (j.contains("qpu_of")) {
        m.qpu_of = j["qpu_of"].get<std::vector<uint32_t>>();
    }
    try {
        m.validate();
    } catch (const Error &e) {
        throw ConfigError(std::string("invalid map: ") + e.what());
    }
    return m;
}

json map_to_json(const CouplingMap &m) {
    return json{{"qubits", m.num_qubits}, {"edges", edges_to_json(m.edges)}, {"qpu_of", m.qpu_of}};
}

std::vector<CutBellFactory> load_factories(const ExperimentConfig &config) {
    std::vector<CutBellFactory> out;
    for (const auto &path : config.factories) {
        out.push_back(load_factory(path));
    }
    return out;
}

GraphStateProgram build_program(const ExperimentConfig &config) {
    GraphStateOptions opt;
    opt.pairs_per_gate = config.pairs_per_gate;
    opt.factories = load_factories(config);
    opt.factory_seed = config.seed;
    return graph_state_circuit(config.graph, config.method, config.map, opt);
}

std::vector<PauliString> placed_stabilizers(const Graph &g, const GraphStateProgram &prog) {
    std::vector<PauliString> out;
    for (const auto &s : all_stabilizers(g)) {
        out.push_back(prog.place(s));
    }
    return out;
}

template <typename F>
void parallel_for(size_t n, unsigned threads, F &&f) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = static_cast<unsigned>(std::min<size_t>(threads, n));
    if (threads <= 1) {
        for (size_t i = 0; i < n; i++) {
            f(i);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; t++) {
        pool.emplace_back([&] {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= n) {
                    return;
                }
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) {
                        error = std::current_exception();
                    }
                    next = n;
                }
            }
        });
    }
    for (auto &t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

Circuit concat(const Circuit &prefix, const Circuit &suffix) {
    Circuit out = prefix;
    out.num_clbits = std::max(prefix.num_clbits, suffix.num_clbits);
    for (const auto &inst : suffix.instructions) {
        out.instructions.push_back(inst);
    }
    return out;
}

Circuit twirled_readout(uint32_t num_qubits, uint32_t num_clbits,
                        const std::vector<std::pair<uint32_t, uint32_t>> &meas, uint64_t mask) {
    Circuit c(num_qubits, num_clbits);
    for (auto [q, b] : meas) {
        if ((mask >> b) & 1) {
            c.x(q);
        }
    }
    for (auto [q, b] : meas) {
        c.measure(q, b);
    }
    return c;
}

}  // namespace

std::string_view mode_name(RunMode m) {
    return m == RunMode::Enumerate ? "enumerate" : "sample";
}

RunMode mode_from_name(std::string_view name) {
    if (name == "enumerate") {
        return RunMode::Enumerate;
    }
    if (name == "sample") {
        return RunMode::Sample;
    }
    throw ConfigError("unknown mode " + std::string(name));
}

Graph graph_from_json(const std::string &text) {
    try {
        return parse_graph(json::parse(text));
    } catch (const json::exception &e) {
        throw ConfigError(std::string("graph: ") + e.what());
    }
}

CouplingMap map_from_json(const std::string &text) {
    try {
        return parse_map(json::parse(text));
    } catch (const json::exception &e) {
        throw ConfigError(std::string("map: ") + e.what());
    }
}

void ExperimentConfig::validate() const {
    try {
        graph.validate();
        noise.validate();
        if (map.num_qubits > 0) {
            map.validate();
        }
        zne.validate();
    } catch (const ConfigError &) {
        throw;
    } catch (const Error &e) {
        throw ConfigError(e.what());
    }
    if (graph.num_nodes == 0) {
        throw ConfigError("graph has no nodes");
    }
    if (method != GraphMethod::Native && graph.cut_edges.empty()) {
        throw ConfigError(std::string(method_name(method)) + " needs at least one cut edge");
    }
    if (shots == 0) {
        throw ConfigError("shots must be positive");
    }
    if (trex == 0) {
        throw ConfigError("trex needs at least one sample");
    }
    if (pairs_per_gate < 1 || pairs_per_gate > 3) {
        throw ConfigError("pairs_per_gate must be 1, 2 or 3");
    }
    if (!(resample_fraction > 0 && resample_fraction <= 1) || resample_reps < 2) {
        throw ConfigError("resampling needs 0 < fraction <= 1 and at least 2 reps");
    }
    if (std::llround(resample_fraction * static_cast<double>(shots * trex)) < 1) {
        throw ConfigError("resample fraction selects no shots");
    }
    if (!(hop_latency >= 0)) {
        throw ConfigError("hop_latency must be non-negative");
    }
    if (!(trex_prep_error >= 0 && trex_prep_error <= 1)) {
        throw ConfigError("trex_prep_error must lie in [0, 1]");
    }
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["graph"] = json{{"nodes", graph.num_nodes}, {"edges", edges_to_json(graph.edges)},
                      {"cut_edges", edges_to_json(graph.cut_edges)}};
    j["method"] = method_name(method);
    if (map.num_qubits > 0) {
        j["map"] = map_to_json(map);
    }
    j["noise"] = json::parse(noise.to_json());
    j["shots"] = shots;
    j["trex"] = trex;
    j["trex_prep_error"] = trex_prep_error;
    j["zne"] = zne.factors;
    j["mode"] = mode_name(mode);
    j["seed"] = seed;
    j["out"] = out;
    j["pairs_per_gate"] = pairs_per_gate;
    j["factories"] = factories;
    j["dd"] = dd;
    j["resample"] = json{{"fraction", resample_fraction}, {"reps", resample_reps}};
    j["hop_latency"] = hop_latency;
    j["threads"] = threads;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string &text, const std::string &base_dir) {
    ExperimentConfig c;
    try {
        json j = json::parse(text);
        if (!j.is_object()) {
            throw ConfigError("config must be a JSON object");
        }
        check_keys(j,
                   {"graph", "method", "map", "noise", "shots", "trex", "trex_prep_error", "zne", "mode", "seed", "out",
                    "pairs_per_gate", "factories", "dd", "resample", "hop_latency", "threads"},
                   "config");
        if (!j.contains("graph")) {
            throw ConfigError("config needs a graph");
        }
        c.graph = parse_graph(j["graph"]);
        c.method = method_from_name(j.value("method", std::string("native")));
        if (j.contains("map")) {
            c.map = parse_map(j["map"]);
        }
        if (j.contains("noise")) {
            c.noise = NoiseModel::from_json(j["noise"].dump());
        }
        c.shots = j.value("shots", c.shots);
        c.trex = j.value("trex", c.trex);
        c.trex_prep_error = j.value("trex_prep_error", c.trex_prep_error);
        if (j.contains("zne")) {
            c.zne.factors = j["zne"].get<std::vector<double>>();
        }
        c.mode = mode_from_name(j.value("mode", std::string("enumerate")));
        c.seed = j.value("seed", c.seed);
        c.out = j.value("out", c.out);
        c.pairs_per_gate = j.value("pairs_per_gate", c.pairs_per_gate);
        for (const auto &f : j.value("factories", std::vector<std::string>{})) {
            std::filesystem::path p(f);
            if (p.is_relative() && !base_dir.empty()) {
                p = std::filesystem::path(base_dir) / p;
            }
            c.factories.push_back(p.lexically_normal().string());
        }
        c.dd = j.value("dd", c.dd);
        if (j.contains("resample")) {
            check_keys(j["resample"], {"fraction", "reps"}, "resample");
            c.resample_fraction = j["resample"].value("fraction", c.resample_fraction);
            c.resample_reps = j["resample"].value("reps", c.resample_reps);
        }
        c.hop_latency = j.value("hop_latency", c.hop_latency);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ConfigError &) {
        throw;
    } catch (const Error &e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str(), std::filesystem::path(path).parent_path().string());
}

size_t SlotPlan::size() const {
    size_t s = 1;
    for (size_t x : slot_size) {
        s *= x;
    }
    return s;
}

std::vector<size_t> SlotPlan::digits(size_t index) const {
    std::vector<size_t> d(slot_size.size());
    for (size_t s = 0; s < slot_size.size(); s++) {
        d[s] = index % slot_size[s];
        index /= slot_size[s];
    }
    return d;
}

std::vector<int> SlotPlan::choice(size_t index, const CutCircuit &cc) const {
    auto d = digits(index);
    std::vector<int> out(cc.cuts.size());
    for (size_t c = 0; c < cc.cuts.size(); c++) {
        out[c] = static_cast<int>(d[slot_of_cut[c]] % cc.cuts[c].qpd.size());
    }
    return out;
}

SlotPlan plan_slots(const CutCircuit &cc, const std::vector<PauliString> &observables) {
    SlotPlan plan;
    const size_t n = cc.cuts.size();
    std::vector<std::vector<bool>> conflict(n, std::vector<bool>(n, false));
    for (const auto &o : observables) {
        auto cone = light_cone_reduce(cc, o.support());
        for (size_t a : cone) {
            for (size_t b : cone) {
                if (a != b) {
                    conflict[a][b] = true;
                }
            }
        }
        plan.cones.push_back(std::move(cone));
    }
    plan.slot_of_cut.assign(n, 0);
    for (size_t c = 0; c < n; c++) {
        uint32_t s = 0;
        while (true) {
            bool clash = false;
            for (size_t p = 0; p < c; p++) {
                clash |= conflict[c][p] && plan.slot_of_cut[p] == s;
            }
            if (!clash) {
                break;
            }
            s++;
        }
        plan.slot_of_cut[c] = s;
        if (plan.slot_size.size() <= s) {
            plan.slot_size.resize(s + 1, 1);
        }
        plan.slot_size[s] = std::max(plan.slot_size[s], cc.cuts[c].qpd.size());
    }
    return plan;
}

CircuitCount circuit_count(const ExperimentConfig &config) {
    config.validate();
    CircuitCount c;
    c.groups = commuting_groups(all_stabilizers(config.graph)).size();
    c.trex = config.trex;
    if (config.method == GraphMethod::LO || config.method == GraphMethod::LOCC) {
        auto prog = build_program(config);
        c.instances = plan_slots(prog.cc, placed_stabilizers(config.graph, prog)).size();
    }
    if (config.method == GraphMethod::LOCC) {
        c.zne = config.zne.factors.size();
    }
    return c;
}

Executor local_executor() {
    return [](const Circuit &prefix, const std::vector<Circuit> &suffixes, const NoiseModel &noise, uint64_t shots,
              uint64_t seed, const std::vector<uint32_t> &) {
        std::vector<Counts> out;
        if (!noise.has_incoherent() || prefix.num_qubits <= 10) {
            auto dists = outcome_distributions(prefix, suffixes, noise);
            for (size_t i = 0; i < dists.size(); i++) {
                out.push_back(sample_counts(dists[i], shots, mix_keys({seed, i})));
            }
        } else {
            for (size_t i = 0; i < suffixes.size(); i++) {
                out.push_back(run_shots(concat(prefix, suffixes[i]), noise, shots, mix_keys({seed, i})));
            }
        }
        return out;
    };
}

Executor distributed_executor(std::array<Channel *, 2> workers, double hop_latency, const LinkOptions &options) {
    auto mu = std::make_shared<std::mutex>();
    return [workers, hop_latency, options, mu](const Circuit &prefix, const std::vector<Circuit> &suffixes,
                                               const NoiseModel &noise, uint64_t shots, uint64_t seed,
                                               const std::vector<uint32_t> &qpu_of) {
        std::lock_guard<std::mutex> lock(*mu);
        std::vector<uint32_t> placement = qpu_of;
        placement.resize(prefix.num_qubits, 0);
        std::vector<Counts> out;
        for (size_t i = 0; i < suffixes.size(); i++) {
            auto p = partition(concat(prefix, suffixes[i]), placement, hop_latency);
            out.push_back(run_distributed(p, shots, noise, mix_keys({seed, i}), workers, options));
        }
        return out;
    };
}

MergedCounts merge_twirled(const std::vector<Counts> &runs, const std::vector<uint64_t> &masks) {
    if (runs.size() != masks.size()) {
        throw MitigationError("one mask per twirled run is required");
    }
    std::vector<std::pair<Counts, uint64_t>> samples;
    for (size_t i = 0; i < runs.size(); i++) {
        samples.push_back({runs[i], masks[i]});
    }
    MergedCounts m;
    m.counts_ = trex_merge(samples);
    return m;
}

MixtureEstimate resample_mixture(const std::vector<MixtureTerm> &terms, double frac, uint32_t reps, uint64_t seed) {
    std::vector<ResampleTerm> flat;
    for (const auto &t : terms) {
        flat.push_back({t.weight, &t.counts->counts(), t.mask});
    }
    auto r = resample_terms(flat, frac, reps, seed);
    MixtureEstimate e;
    e.value_ = r.mean;
    e.sigma_ = r.sigma;
    return e;
}

ReadoutCorrected trex_correct(const MixtureEstimate &m, double calibration, double floor) {
    ReadoutCorrected r;
    r.value_ = trex_mitigate(m.value(), calibration, floor);
    r.sigma_ = m.sigma() / std::abs(calibration);
    return r;
}

Extrapolated zne_finish(const std::vector<std::pair<double, ReadoutCorrected>> &points) {
    if (points.empty()) {
        throw MitigationError("no points to extrapolate");
    }
    Extrapolated e;
    if (points.size() == 1) {
        e.value_ = points[0].second.value();
        e.sigma_ = points[0].second.sigma();
        return e;
    }
    std::vector<ZnePoint> zp;
    for (const auto &[c, r] : points) {
        zp.push_back({c, r.value(), r.sigma()});
    }
    auto fit = zne_extrapolate(zp);
    e.value_ = fit.value;
    e.sigma_ = fit.sigma;
    e.slope_ = fit.slope;
    return e;
}

std::string ExperimentResult::to_json() const {
    auto est = [](const Estimate &e) { return json{{"value", e.value}, {"sigma", e.sigma}}; };
    json j;
    json meta = json::object();
    for (const auto &[k, v] : report.provenance) {
        meta[k] = v;
    }
    j["meta"] = meta;
    j["circuits"] = json{{"groups", count.groups},      {"trex", count.trex},   {"instances", count.instances},
                         {"zne", count.zne},            {"total", count.total()},
                         {"dispatched", circuits_dispatched}};
    j["sum_abs_node_error"] = report.sum_abs_node_error;
    j["pass_fraction_w"] = report.pass_fraction_w;
    j["pass_fraction_w_prime"] = report.pass_fraction_w_prime;
    json nodes = json::array();
    for (size_t i = 0; i < report.nodes.size(); i++) {
        json n = est(report.nodes[i]);
        n["node"] = i;
        if (i < report.raw_nodes.size()) {
            n["raw"] = est(report.raw_nodes[i]);
        }
        nodes.push_back(n);
    }
    j["nodes"] = nodes;
    json edges = json::array();
    for (size_t e = 0; e < report.edges.size(); e++) {
        const auto &er = report.edges[e];
        json x{{"edge", {er.edge.first, er.edge.second}},
               {"cut", er.cut},
               {"product", est(er.product)},
               {"w", er.w},
               {"sigma_w", er.sigma_w},
               {"pass_w", er.pass_w},
               {"w_prime", er.w_prime},
               {"sigma_w_prime", er.sigma_w_prime},
               {"pass_w_prime", er.pass_w_prime}};
        if (e < report.raw_edges.size()) {
            x["raw"] = est(report.raw_edges[e]);
        }
        edges.push_back(x);
    }
    j["edges"] = edges;
    std::vector<double> errors;
    for (const auto &n : report.nodes) {
        errors.push_back(std::abs(n.value - 1));
    }
    std::sort(errors.begin(), errors.end());
    json cdf = json::array();
    for (size_t i = 0; i < errors.size(); i++) {
        cdf.push_back({errors[i], static_cast<double>(i + 1) / static_cast<double>(errors.size())});
    }
    j["node_error_cdf"] = cdf;
    json z = json::array();
    for (const auto &s : zne) {
        json pts = json::array();
        for (const auto &p : s.points) {
            pts.push_back({{"c", p.c}, {"value", p.value}, {"sigma", p.sigma}});
        }
        z.push_back({{"observable", s.observable},
                     {"points", pts},
                     {"intercept", s.fit.value},
                     {"sigma", s.fit.sigma},
                     {"slope", s.fit.slope}});
    }
    j["zne"] = z;
    return j.dump(2) + "\n";
}

namespace {

/// One dispatched prefix: a member choice at one stretch factor, read in one group basis.
struct Job {
    size_t group = 0;
    size_t tuple = 0;
    size_t zne = 0;
    std::vector<int> choice;
    uint64_t shots = 0;
    /// Sample mode: fraction of the draws landing on this choice.
    double fraction = 1;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig &config, const Executor &executor) {
    config.validate();
    auto prog = build_program(config);
    const auto &cc = prog.cc;
    const auto stabs = placed_stabilizers(config.graph, prog);
    const auto groups = commuting_groups(stabs);
    const auto plan = plan_slots(cc, stabs);
    const bool locc = config.method == GraphMethod::LOCC;
    const std::vector<double> factors = locc ? config.zne.factors : std::vector<double>{1};
    const double tau = config.noise.switch_latency_tau;

    std::vector<size_t> group_of(stabs.size());
    for (size_t g = 0; g < groups.size(); g++) {
        for (size_t o : groups[g]) {
            group_of[o] = g;
        }
    }

    std::vector<uint32_t> clbit_offset;
    uint32_t fragment_clbits = cc.base.num_clbits;
    for (const auto &cut : cc.cuts) {
        clbit_offset.push_back(fragment_clbits);
        fragment_clbits += cut.qpd.num_clbits();
    }
    const uint32_t width = cc.base.num_qubits;

    struct GroupLayout {
        PauliString basis;
        std::vector<std::pair<uint32_t, uint32_t>> meas;
        std::vector<uint32_t> clbit_of;
        uint32_t num_clbits = 0;
    };
    std::vector<GroupLayout> layouts(groups.size());
    for (size_t g = 0; g < groups.size(); g++) {
        auto &L = layouts[g];
        L.basis = group_basis(stabs, groups[g]);
        L.clbit_of.assign(width, 0);
        uint32_t b = fragment_clbits;
        for (auto [q, op] : L.basis.ops()) {
            (void)op;
            L.meas.push_back({q, b});
            L.clbit_of[q] = b++;
        }
        L.num_clbits = b;
    }

    std::vector<Job> jobs;
    for (size_t g = 0; g < groups.size(); g++) {
        for (size_t z = 0; z < factors.size(); z++) {
            if (config.mode == RunMode::Enumerate) {
                for (size_t t = 0; t < plan.size(); t++) {
                    jobs.push_back({g, t, z, plan.choice(t, cc), config.shots, 1});
                }
                continue;
            }
            const uint64_t draws = config.shots * plan.size();
            std::map<std::vector<int>, uint64_t> tally;
            for (uint64_t d = 0; d < draws; d++) {
                std::vector<int> choice(cc.cuts.size());
                for (size_t c = 0; c < cc.cuts.size(); c++) {
                    const auto probs = cc.cuts[c].qpd.probabilities();
                    double u = key_uniform(mix_keys({config.seed, kDrawStream, g, z, d, c}));
                    size_t m = 0;
                    while (m + 1 < probs.size() && u >= probs[m]) {
                        u -= probs[m];
                        m++;
                    }
                    choice[c] = static_cast<int>(m);
                }
                tally[choice]++;
            }
            size_t t = 0;
            for (const auto &[choice, n] : tally) {
                jobs.push_back({g, t++, z, choice, n, static_cast<double>(n) / static_cast<double>(draws)});
            }
        }
    }

    std::vector<MergedCounts> merged(jobs.size());
    parallel_for(jobs.size(), config.threads, [&](size_t j) {
        const auto &job = jobs[j];
        const auto &L = layouts[job.group];
        auto inst = instantiate(cc, job.choice);
        Circuit circuit = std::move(inst.circuit);
        if (locc) {
            const double delta = config.zne.delta(job.zne, tau);
            circuit = config.dd ? insert_dd(circuit, tau, delta, config.noise.zz) : stretch_switch(circuit, tau, delta);
        }
        circuit.num_clbits = L.num_clbits;
        for (auto [q, op] : L.basis.ops()) {
            if (op == 'X') {
                circuit.h(q);
            } else if (op == 'Y') {
                circuit.rz(q, -std::numbers::pi / 2);
                circuit.h(q);
            }
        }
        TrexConfig tc;
        tc.n_samples = config.trex;
        tc.seed = mix_keys({config.seed, kTrexStream, job.group, job.tuple, job.zne});
        auto masks = trex_masks(L.meas, tc);
        std::vector<Circuit> suffixes;
        for (uint64_t m : masks) {
            suffixes.push_back(twirled_readout(width, L.num_clbits, L.meas, m));
        }
        auto runs = executor(circuit, suffixes, config.noise, job.shots,
                             mix_keys({config.seed, kJobStream, job.group, job.tuple, job.zne}), prog.qpu_of);
        merged[j] = merge_twirled(runs, masks);
    });
    const size_t dispatched = jobs.size() * config.trex;
    CircuitCount count = circuit_count(config);
    if (config.mode == RunMode::Enumerate && dispatched != count.total()) {
        throw Error("dispatched " + std::to_string(dispatched) + " circuits, expected " +
                    std::to_string(count.total()));
    }

    std::vector<double> calibration(stabs.size(), 1);
    {
        const NoiseModel cal_noise = [&] {
            TrexConfig tc;
            tc.calibration_prep_error = config.trex_prep_error;
            return calibration_noise(config.noise, tc, width);
        }();
        std::vector<MergedCounts> cal(groups.size());
        parallel_for(groups.size(), config.threads, [&](size_t g) {
            const auto &L = layouts[g];
            TrexConfig tc;
            tc.n_samples = config.trex;
            tc.seed = mix_keys({config.seed, kCalibrationStream, g});
            auto masks = trex_masks(L.meas, tc);
            std::vector<Circuit> suffixes;
            for (uint64_t m : masks) {
                suffixes.push_back(twirled_readout(width, L.num_clbits, L.meas, m));
            }
            auto runs = executor(Circuit(width, L.num_clbits), suffixes, cal_noise, config.shots,
                                 mix_keys({config.seed, kCalibrationStream, g, 1}), prog.qpu_of);
            cal[g] = merge_twirled(runs, masks);
        });
        for (size_t o = 0; o < stabs.size(); o++) {
            const auto &L = layouts[group_of[o]];
            std::vector<uint32_t> bits;
            for (uint32_t q : stabs[o].support()) {
                bits.push_back(L.clbit_of[q]);
            }
            calibration[o] = cal[group_of[o]].counts().parity_expectation(clbit_mask(bits));
        }
    }

    std::vector<std::vector<size_t>> jobs_of(groups.size() * factors.size());
    for (size_t j = 0; j < jobs.size(); j++) {
        jobs_of[jobs[j].group * factors.size() + jobs[j].zne].push_back(j);
    }

    std::vector<Estimate> mitigated(stabs.size()), raw(stabs.size());
    std::vector<ZneSeries> series;
    for (size_t o = 0; o < stabs.size(); o++) {
        const auto &L = layouts[group_of[o]];
        const auto &cone = plan.cones[o];
        std::vector<uint32_t> bits;
        for (uint32_t q : stabs[o].support()) {
            bits.push_back(L.clbit_of[q]);
        }
        const double pauli_sign = stabs[o].sign();

        auto member_weight = [&](const Job &job, uint64_t &mask) {
            double w = pauli_sign;
            mask = clbit_mask(bits);
            for (size_t c : cone) {
                const auto &member = cc.cuts[c].qpd.members[job.choice[c]];
                if (config.mode == RunMode::Enumerate) {
                    w *= member.coeff;
                } else {
                    w *= cc.cuts[c].qpd.gamma() * (member.coeff < 0 ? -1 : 1);
                }
                for (uint32_t b : member.sign_clbits) {
                    mask ^= uint64_t{1} << (b + clbit_offset[c]);
                }
            }
            return w * job.fraction;
        };

        std::map<std::vector<int>, size_t> multiplicity;
        if (config.mode == RunMode::Enumerate) {
            for (size_t j : jobs_of[group_of[o] * factors.size()]) {
                std::vector<int> key;
                for (size_t c : cone) {
                    key.push_back(jobs[j].choice[c]);
                }
                multiplicity[key]++;
            }
        }

        const bool extrapolate = locc && !cone.empty();
        std::vector<std::pair<double, ReadoutCorrected>> points;
        for (size_t z = 0; z < (extrapolate ? factors.size() : 1); z++) {
            std::vector<MixtureTerm> terms;
            for (size_t j : jobs_of[group_of[o] * factors.size() + z]) {
                uint64_t mask = 0;
                double w = member_weight(jobs[j], mask);
                if (config.mode == RunMode::Enumerate) {
                    std::vector<int> key;
                    for (size_t c : cone) {
                        key.push_back(jobs[j].choice[c]);
                    }
                    w /= static_cast<double>(multiplicity[key]);
                }
                if (w != 0) {
                    terms.push_back({w, &merged[j], mask});
                }
            }
            auto mixture = resample_mixture(terms, config.resample_fraction, config.resample_reps,
                                            mix_keys({config.seed, kResampleStream, o, z}));
            if (z == 0) {
                raw[o] = {mixture.value(), mixture.sigma()};
            }
            auto corrected = trex_correct(mixture, calibration[o]);
            points.push_back({factors[z], corrected});
        }
        auto fin = zne_finish(points);
        mitigated[o] = {fin.value(), fin.sigma()};
        if (extrapolate) {
            ZneSeries s;
            s.observable = o;
            for (const auto &[c, r] : points) {
                s.points.push_back({c, r.value(), r.sigma()});
            }
            s.fit = {fin.value(), fin.sigma(), fin.slope()};
            series.push_back(std::move(s));
        }
    }

    const size_t n = config.graph.num_nodes;
    std::vector<Estimate> nodes(mitigated.begin(), mitigated.begin() + n);
    std::vector<Estimate> edges(mitigated.begin() + n, mitigated.end());
    ExperimentResult res;
    res.report = make_report(config.graph, nodes, edges);
    res.report.raw_nodes.assign(raw.begin(), raw.begin() + n);
    res.report.raw_edges.assign(raw.begin() + n, raw.end());
    auto &meta = res.report.provenance;
    meta["method"] = method_name(config.method);
    meta["mode"] = mode_name(config.mode);
    meta["seed"] = std::to_string(config.seed);
    meta["shots"] = std::to_string(config.shots);
    meta["trex"] = std::to_string(config.trex);
    meta["dd"] = config.dd ? "on" : "off";
    meta["swaps"] = std::to_string(prog.swaps);
    std::ostringstream zf;
    for (size_t i = 0; i < factors.size(); i++) {
        zf << (i ? "," : "") << factors[i];
    }
    meta["zne"] = zf.str();
    res.count = count;
    res.circuits_dispatched = dispatched;
    res.zne = std::move(series);
    return res;
}

ExperimentResult run_and_write(const ExperimentConfig &config, const Executor &executor) {
    if (config.out.empty()) {
        throw ConfigError("config has no output path");
    }
    auto res = run_experiment(config, executor);
    const std::string tmp = config.out + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ConfigError("cannot write " + tmp);
        }
        out << res.to_json();
        if (!out) {
            std::remove(tmp.c_str());
            throw ConfigError("cannot write " + tmp);
        }
    }
    std::filesystem::rename(tmp, config.out);
    return res;
}

std::string VarianceRatio::to_text() const {
    std::ostringstream out;
    out << std::setprecision(6);
    out << "observable lo_variance locc_variance\n";
    for (size_t i = 0; i < observables.size(); i++) {
        out << observables[i] << " " << lo[i].variance << " " << locc[i].variance << "\n";
    }
    out << "ratio " << ratio << " ci95 [" << ci_low << ", " << ci_high << "] draws " << draws << "\n";
    return out.str();
}

VarianceRatio variance_ratio(const ExperimentConfig &config, uint64_t total_draws) {
    config.validate();
    auto lo_config = config, locc_config = config;
    lo_config.method = GraphMethod::LO;
    locc_config.method = GraphMethod::LOCC;
    auto lo = build_program(lo_config);
    auto locc = build_program(locc_config);
    auto lo_obs = placed_stabilizers(config.graph, lo);
    auto locc_obs = placed_stabilizers(config.graph, locc);
    VarianceRatio r;
    for (size_t o = 0; o < lo_obs.size(); o++) {
        if (!light_cone_reduce(lo.cc, lo_obs[o].support()).empty()) {
            r.observables.push_back(o);
        }
    }
    if (r.observables.empty()) {
        throw ConfigError("no stabilizer has a cut in its light cone");
    }
    const uint64_t per = total_draws / (2 * r.observables.size());
    if (per < 2) {
        throw ConfigError("too few draws for a variance estimate");
    }
    double a = 0, b = 0, va = 0, vb = 0;
    for (size_t o : r.observables) {
        r.lo.push_back(sample_estimator(lo.cc, lo_obs[o], per, mix_keys({config.seed, 0x7661, 0, o}), config.noise));
        r.locc.push_back(
            sample_estimator(locc.cc, locc_obs[o], per, mix_keys({config.seed, 0x7661, 1, o}), config.noise));
        const auto &x = r.lo.back();
        const auto &y = r.locc.back();
        a += x.variance;
        b += y.variance;
        va += (x.m4 - x.variance * x.variance) / static_cast<double>(per);
        vb += (y.m4 - y.variance * y.variance) / static_cast<double>(per);
        r.draws += 2 * per;
    }
    r.ratio = a / b;
    const double rel = std::sqrt(std::max(0.0, va) / (a * a) + std::max(0.0, vb) / (b * b));
    r.ci_low = r.ratio * (1 - 1.96 * rel);
    r.ci_high = r.ratio * (1 + 1.96 * rel);
    return r;
}

double CostModel::compile_time(double m) const {
    return compile[0] + compile[1] * m + compile[2] * m * m;
}

double CostModel::execute_time(double m) const {
    return static_cast<double>(parameter_sets) / m * (t0 + m * t1);
}

double CostModel::total_time(double m) const {
    return compile_time(m) + execute_time(m);
}

uint64_t CostModel::argmin() const {
    uint64_t best = 1;
    double best_t = total_time(1);
    for (uint64_t m = 2; m <= parameter_sets; m++) {
        double t = total_time(static_cast<double>(m));
        if (t < best_t) {
            best_t = t;
            best = m;
        }
    }
    return best;
}

CostFit fit_cost_model(const std::vector<Timing> &timings, uint64_t parameter_sets) {
    if (parameter_sets == 0) {
        throw ConfigError("cost model needs at least one parameter set");
    }
    std::vector<uint64_t> ms;
    for (const auto &t : timings) {
        if (t.m == 0) {
            throw ConfigError("multiplicity must be positive");
        }
        ms.push_back(t.m);
    }
    std::sort(ms.begin(), ms.end());
    if (std::unique(ms.begin(), ms.end()) - ms.begin() < 4) {
        throw ConfigError("cost model needs at least 4 distinct multiplicities");
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(timings.size());
    const double S = static_cast<double>(parameter_sets);
    Eigen::MatrixXd A(rows, 3), B(rows, 2);
    Eigen::VectorXd yc(rows), ye(rows);
    for (Eigen::Index i = 0; i < rows; i++) {
        double m = static_cast<double>(timings[i].m);
        A.row(i) << 1, m, m * m;
        B.row(i) << S / m, S;
        yc(i) = timings[i].compile_s;
        ye(i) = timings[i].execute_s;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qa(A), qb(B);
    if (qa.rank() < 3 || qb.rank() < 2) {
        throw ConfigError("degenerate design matrix");
    }
    Eigen::VectorXd c = qa.solve(yc), e = qb.solve(ye);
    CostFit fit;
    fit.model.compile = {c(0), c(1), c(2)};
    fit.model.t0 = e(0);
    fit.model.t1 = e(1);
    fit.model.parameter_sets = parameter_sets;
    for (double v : {c(0), c(1), c(2), e(0), e(1)}) {
        if (!std::isfinite(v)) {
            throw ConfigError("cost model fit is not finite");
        }
    }
    fit.m_star = fit.model.argmin();
    return fit;
}

bool ValidationReport::pass() const {
    return std::all_of(lines.begin(), lines.end(), [](const ValidationLine &l) { return l.pass; });
}

std::string ValidationReport::to_text() const {
    std::ostringstream out;
    out << std::setprecision(6);
    out << protocol << " k=" << k << " gamma=" << gamma << " size=" << size << "\n";
    for (const auto &l : lines) {
        out << (l.pass ? "PASS " : "FAIL ") << l.name << " residual=" << l.residual << " tolerance=" << l.tolerance
            << "\n";
    }
    out << (pass() ? "PASS" : "FAIL") << "\n";
    return out.str();
}

namespace {

void random_layer(Circuit &c, uint32_t lo, uint32_t hi, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    for (uint32_t q = lo; q < hi; q++) {
        c.u2(q, ang(rng), ang(rng));
        c.rz(q, ang(rng));
    }
}

PauliString random_observable(uint32_t n, std::mt19937_64 &rng) {
    PauliString p;
    while (p.empty()) {
        for (uint32_t q = 0; q < n; q++) {
            p.set(q, "IXYZ"[rng() % 4]);
        }
    }
    return p;
}

void append_gate(Circuit &c, VirtualGate g, uint32_t a, uint32_t b) {
    if (g == VirtualGate::CZ) {
        c.cz(a, b);
    } else {
        c.cx(a, b);
    }
}

/// Max |cut - uncut| over random inputs for `pairs` gates between data qubits (i, pairs + i).
double cut_residual(VirtualGate gate, uint32_t pairs, CutProtocol protocol, const CutBellFactory *factory,
                    int instances, std::mt19937_64 &rng) {
    const uint32_t data = 2 * pairs;
    const uint32_t width = protocol == CutProtocol::LOCC ? 2 * data : data;
    double worst = 0;
    for (int t = 0; t < instances; t++) {
        Circuit pre(width), post(width);
        random_layer(pre, 0, data, rng);
        random_layer(post, 0, data, rng);
        Circuit uncut = pre;
        VirtualGateSpec spec{gate, {}, protocol, {}};
        for (uint32_t i = 0; i < pairs; i++) {
            append_gate(uncut, gate, i, pairs + i);
            spec.pairs.push_back({i, pairs + i});
            if (protocol == CutProtocol::LOCC) {
                spec.ancillas.push_back({data + i, data + pairs + i});
            }
        }
        for (const auto &inst : post.instructions) {
            uncut.instructions.push_back(inst);
        }
        CutCircuit cc;
        cc.base = pre;
        if (protocol == CutProtocol::LOCC) {
            auto placed = locc_virtual_qpd(spec, *factory);
            cc.cuts.push_back({pre.instructions.size(), placed.qubits, placed.qpd});
        } else {
            for (auto &placed : lo_virtual_qpds(spec)) {
                cc.cuts.push_back({pre.instructions.size(), placed.qubits, placed.qpd});
            }
        }
        for (const auto &inst : post.instructions) {
            cc.base.instructions.push_back(inst);
        }
        auto p = random_observable(data, rng);
        double truth = exact_expectation(uncut, p);
        worst = std::max(worst, std::abs(exact_cut_expectations(cc, {p}, {}, false)[0] - truth));
    }
    return worst;
}

}  // namespace

ValidationReport validate_qpd(CutProtocol protocol, VirtualGate gate, uint32_t k, double tolerance,
                              const CutBellFactory *factory, uint64_t seed) {
    ValidationReport r;
    std::mt19937_64 rng(mix_keys({seed, 0x7a1}));
    auto line = [&](std::string name, double residual, double tol) {
        r.lines.push_back({std::move(name), residual, tol, residual <= tol});
    };
    if (protocol == CutProtocol::LO) {
        auto q = lo_cz_qpd();
        r.protocol = "LO";
        r.k = 1;
        r.gamma = q.gamma();
        r.size = q.size();
        line("gamma", std::abs(q.gamma() - 3), 1e-12);
        line("coefficient_sum", std::abs(q.coefficient_sum() - 1), 1e-12);
        line(gate == VirtualGate::CZ ? "cut_cz" : "cut_cnot", cut_residual(gate, 1, protocol, nullptr, 100, rng),
             tolerance);
        return r;
    }
    CutBellFactory built;
    if (!factory) {
        built = build_factory(k, seed);
        factory = &built;
    }
    if (factory->k != k) {
        throw ConfigError("factory is for k=" + std::to_string(factory->k));
    }
    r.protocol = "LOCC";
    r.k = k;
    r.gamma = factory->gamma();
    r.size = factory->size();
    line("gamma", std::abs(factory->gamma() - factory_gamma(k)), 1e-9);
    line("size", std::abs(static_cast<double>(factory->size()) - static_cast<double>(factory_size(k))), 0);
    line("bell_frobenius", factory_density(*factory).frobenius_distance(bell_projector(k)), tolerance);
    double schmidt = 0;
    for (size_t i = 0; i < factory->size(); i++) {
        schmidt = std::max(schmidt, schmidt_residual(final_state(factory->member(i)), k));
    }
    line("schmidt", schmidt, 1e-8);
    if (k <= 2) {
        line(gate == VirtualGate::CZ ? "teleported_cz" : "teleported_cnot",
             cut_residual(gate, k, protocol, factory, k == 1 ? 8 : 2, rng), std::max(tolerance, 1e-9) * 10);
    }
    return r;
}

std::vector<std::array<uint32_t, 4>> four_chains(const CouplingMap &map) {
    auto adj = map.adjacency();
    std::vector<std::array<uint32_t, 4>> out;
    for (uint32_t a = 0; a < map.num_qubits; a++) {
        for (uint32_t b : adj[a]) {
            for (uint32_t c : adj[b]) {
                if (c == a) {
                    continue;
                }
                for (uint32_t d : adj[c]) {
                    if (d == a || d == b || a > d) {
                        continue;
                    }
                    out.push_back({a, b, c, d});
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ChainScore> bell_benchmark(const CouplingMap &map, const NoiseModel &noise, uint64_t shots, uint64_t seed) {
    auto chains = four_chains(map);
    if (chains.empty()) {
        throw ConfigError("coupling map has no 4-qubit path");
    }
    const Circuit base = bell_benchmark_circuit();
    const std::array<PauliString, 2> bases{PauliString::parse("Z0 X3"), PauliString::parse("X0 Z3")};
    std::vector<ChainScore> out(chains.size());
    parallel_for(chains.size(), 0, [&](size_t i) {
        const auto &ch = chains[i];
        auto local = noise.restricted({ch[0], ch[1], ch[2], ch[3]});
        std::array<double, 2> v{};
        for (int b = 0; b < 2; b++) {
            Circuit c = base;
            auto bits = append_pauli_measurement(c, bases[b]);
            auto dist = outcome_distribution(c, local);
            double e = shots ? sample_counts(dist, shots, mix_keys({seed, i, static_cast<uint64_t>(b)}))
                                   .parity_expectation(clbit_mask(bits))
                             : dist.parity_expectation(clbit_mask(bits));
            v[b] = e * bases[b].sign();
        }
        out[i] = {ch, v[0], v[1], mse(v[0], v[1])};
    });
    std::stable_sort(out.begin(), out.end(), [](const ChainScore &a, const ChainScore &b) { return a.mse < b.mse; });
    return out;
}

}  // namespace qlink
