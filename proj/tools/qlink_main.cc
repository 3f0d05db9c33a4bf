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

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "qlink/errors.h"
#include "qlink/gate_cutting.h"
#include "qlink/link.h"
#include "qlink/runner.h"

using namespace qlink;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitLink = 3;
constexpr int kExitValidation = 4;

std::string read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::pair<std::string, uint16_t> parse_endpoint(const std::string &s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
        throw ConfigError("worker endpoint must be host:port, got '" + s + "'");
    }
    unsigned long port = 0;
    try {
        port = std::stoul(s.substr(colon + 1));
    } catch (const std::exception &) {
        throw ConfigError("bad port in '" + s + "'");
    }
    if (port == 0 || port > 65535) {
        throw ConfigError("bad port in '" + s + "'");
    }
    return {s.substr(0, colon), static_cast<uint16_t>(port)};
}

struct RunArgs {
    std::string config;
    uint64_t seed = 0;
    bool has_seed = false;
    std::string out;
    std::string workers;
    std::string mode;
};

int cmd_run(const RunArgs &a) {
    auto config = ExperimentConfig::load(a.config);
    if (a.has_seed) {
        config.seed = a.seed;
    }
    if (!a.out.empty()) {
        config.out = a.out;
    }
    if (!a.mode.empty()) {
        config.mode = mode_from_name(a.mode);
    }
    config.validate();

    ExperimentResult result;
    if (a.workers.empty()) {
        result = run_and_write(config);
    } else {
        std::vector<std::unique_ptr<SocketChannel>> channels;
        std::stringstream ss(a.workers);
        std::string item;
        while (std::getline(ss, item, ',')) {
            auto [host, port] = parse_endpoint(item);
            channels.push_back(SocketChannel::connect(host, port));
        }
        if (channels.size() != 2) {
            throw ConfigError("--workers needs exactly two endpoints");
        }
        result = run_and_write(config, distributed_executor({channels[0].get(), channels[1].get()}, config.hop_latency));
        for (auto &c : channels) {
            c->close();
        }
    }
    std::cout << result.report.to_text();
    std::printf("circuits %zu\n", result.circuits_dispatched);
    if (!config.out.empty()) {
        std::printf("wrote %s\n", config.out.c_str());
    }
    return kExitOk;
}

int cmd_circuit_count(const std::string &path, const std::string &mode) {
    auto config = ExperimentConfig::load(path);
    if (!mode.empty()) {
        config.mode = mode_from_name(mode);
    }
    auto n = circuit_count(config);
    std::printf("method %s\n", std::string(method_name(config.method)).c_str());
    std::printf("groups %zu\ntrex %zu\ninstances %zu\nzne %zu\ntotal %zu\n", n.groups, n.trex, n.instances, n.zne,
                n.total());
    return kExitOk;
}

int cmd_validate_qpd(const std::string &protocol, const std::string &gate, uint32_t k, double tolerance,
                     const std::string &factory_path, uint64_t seed) {
    CutProtocol p;
    if (protocol == "lo") {
        p = CutProtocol::LO;
    } else if (protocol == "locc") {
        p = CutProtocol::LOCC;
    } else {
        throw ConfigError("protocol must be lo or locc");
    }
    VirtualGate g;
    if (gate == "cz") {
        g = VirtualGate::CZ;
    } else if (gate == "cnot") {
        g = VirtualGate::CNOT;
    } else {
        throw ConfigError("gate must be cz or cnot");
    }
    std::optional<CutBellFactory> factory;
    if (!factory_path.empty()) {
        factory = load_factory(factory_path);
    }
    auto report = validate_qpd(p, g, k, tolerance, factory ? &*factory : nullptr, seed);
    std::cout << report.to_text();
    return report.pass() ? kExitOk : kExitValidation;
}

int cmd_bell_benchmark(const std::string &map_path, const std::string &noise_path, uint64_t shots, uint64_t seed,
                       size_t top) {
    auto map = map_from_json(read_file(map_path));
    NoiseModel noise;
    if (!noise_path.empty()) {
        try {
            noise = NoiseModel::from_json(read_file(noise_path));
        } catch (const ParseError &e) {
            throw ConfigError(e.what());
        }
    }
    auto scores = bell_benchmark(map, noise, shots, seed);
    std::printf("rank chain zx xz mse\n");
    for (size_t i = 0; i < scores.size() && (top == 0 || i < top); i++) {
        const auto &s = scores[i];
        std::printf("%zu %u-%u-%u-%u %.6f %.6f %.6e\n", i + 1, s.chain[0], s.chain[1], s.chain[2], s.chain[3], s.zx,
                    s.xz, s.mse);
    }
    return kExitOk;
}

int cmd_serve_qpu(const std::string &host, uint16_t port, bool once, double idle_s) {
    SocketListener listener(host, port);
    std::printf("listening %s:%u\n", host.c_str(), listener.port());
    std::fflush(stdout);
    do {
        auto ch = listener.accept(std::chrono::hours(24 * 365));
        size_t jobs = serve_session(*ch, std::chrono::milliseconds(static_cast<int64_t>(idle_s * 1000)));
        std::printf("served %zu jobs\n", jobs);
        std::fflush(stdout);
    } while (!once);
    return kExitOk;
}

int cmd_cost_model(const std::string &path, uint64_t sets) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read " + path);
    }
    std::vector<Timing> timings;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) {
            continue;
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        Timing t;
        if (!(ls >> t.m >> t.compile_s >> t.execute_s)) {
            throw ConfigError("bad timing row '" + line + "'");
        }
        timings.push_back(t);
    }
    auto fit = fit_cost_model(timings, sets);
    const auto &m = fit.model;
    std::printf("compile %.6e %.6e %.6e\n", m.compile[0], m.compile[1], m.compile[2]);
    std::printf("t0 %.6e\nt1 %.6e\nS %llu\n", m.t0, m.t1, static_cast<unsigned long long>(m.parameter_sets));
    std::printf("m_star %llu\ntotal %.6e\n", static_cast<unsigned long long>(fit.m_star),
                m.total_time(static_cast<double>(fit.m_star)));
    return kExitOk;
}

int cmd_build_factory(uint32_t k, uint64_t seed, uint32_t restarts, unsigned threads, const std::string &out) {
    FactoryOptions o;
    o.restarts = restarts;
    o.threads = threads;
    auto f = build_factory(k, seed, o);
    std::printf("k %u size %zu gamma %g residual %.3e\n", f.k, f.size(), f.gamma(), f.residual);
    if (!out.empty()) {
        std::string tmp = out + ".partial";
        {
            std::ofstream o2(tmp);
            if (!o2) {
                throw ConfigError("cannot write " + out);
            }
            o2 << f.to_json();
        }
        std::filesystem::rename(tmp, out);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Distributed graph-state experiments with cut gates"};
    app.require_subcommand(1);

    RunArgs run;
    auto *run_cmd = app.add_subcommand("run", "Run an experiment config and write the report");
    run_cmd->add_option("--config", run.config, "Experiment config")->required();
    run_cmd->add_option("--seed", run.seed, "Root seed")->each([&](const std::string &) { run.has_seed = true; });
    run_cmd->add_option("--out", run.out, "Report path");
    run_cmd->add_option("--workers", run.workers, "host:port,host:port");
    run_cmd->add_option("--mode", run.mode, "enumerate or sample");

    std::string count_config, count_mode;
    auto *count_cmd = app.add_subcommand("circuit-count", "Count the circuits a config dispatches");
    count_cmd->add_option("--config", count_config, "Experiment config")->required();
    count_cmd->add_option("--mode", count_mode, "enumerate or sample");

    std::string protocol = "lo", gate = "cz", factory_path;
    uint32_t k = 1;
    double tolerance = 1e-6;
    uint64_t vseed = 0;
    auto *val_cmd = app.add_subcommand("validate-qpd", "Check a gate cut or a cut Bell-pair factory");
    val_cmd->add_option("--protocol", protocol, "lo or locc");
    val_cmd->add_option("--gate", gate, "cz or cnot");
    val_cmd->add_option("--k", k, "Bell pairs per factory");
    val_cmd->add_option("--tolerance", tolerance, "Residual tolerance");
    val_cmd->add_option("--factory", factory_path, "Factory JSON");
    val_cmd->add_option("--seed", vseed, "Seed");

    std::string map_path, noise_path;
    uint64_t bshots = 1024, bseed = 0;
    size_t top = 0;
    auto *bell_cmd = app.add_subcommand("bell-benchmark", "Rank 4-qubit chains for cut Bell pairs");
    bell_cmd->add_option("--map", map_path, "Coupling map JSON")->required();
    bell_cmd->add_option("--noise", noise_path, "Noise JSON");
    bell_cmd->add_option("--shots", bshots, "Shots per circuit");
    bell_cmd->add_option("--seed", bseed, "Seed");
    bell_cmd->add_option("--top", top, "Rows to print (0 for all)");

    std::string host = "127.0.0.1";
    uint16_t port = 0;
    bool once = false;
    double idle = 86400;
    auto *serve_cmd = app.add_subcommand("serve-qpu", "Serve one QPU of a distributed run");
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--port", port, "Port (0 picks one)");
    serve_cmd->add_flag("--once", once, "Exit after the first coordinator");
    serve_cmd->add_option("--idle", idle, "Seconds to wait between jobs");

    std::string timings_path;
    uint64_t sets = 0;
    auto *cost_cmd = app.add_subcommand("cost-model", "Fit compile and execute times and pick the multiplicity");
    cost_cmd->add_option("--timings", timings_path, "CSV rows m,compile_s,execute_s")->required();
    cost_cmd->add_option("--sets", sets, "Parameter sets S")->required();

    uint32_t fk = 2, restarts = 64;
    uint64_t fseed = 0;
    unsigned threads = 1;
    std::string fout;
    auto *fac_cmd = app.add_subcommand("build-factory", "Optimize a cut Bell-pair factory");
    fac_cmd->add_option("--k", fk, "Bell pairs");
    fac_cmd->add_option("--seed", fseed, "Seed");
    fac_cmd->add_option("--restarts", restarts, "Multi-start count");
    fac_cmd->add_option("--threads", threads, "Worker threads");
    fac_cmd->add_option("--out", fout, "Output JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run_cmd) {
            return cmd_run(run);
        }
        if (*count_cmd) {
            return cmd_circuit_count(count_config, count_mode);
        }
        if (*val_cmd) {
            return cmd_validate_qpd(protocol, gate, k, tolerance, factory_path, vseed);
        }
        if (*bell_cmd) {
            return cmd_bell_benchmark(map_path, noise_path, bshots, bseed, top);
        }
        if (*serve_cmd) {
            return cmd_serve_qpu(host, port, once, idle);
        }
        if (*cost_cmd) {
            return cmd_cost_model(timings_path, sets);
        }
        if (*fac_cmd) {
            return cmd_build_factory(fk, fseed, restarts, threads, fout);
        }
    } catch (const ConfigError &e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const LinkError &e) {
        std::fprintf(stderr, "link error: %s\n", e.what());
        return kExitLink;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}
