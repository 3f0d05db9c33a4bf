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

#ifndef QLINK_RUNNER_H
#define QLINK_RUNNER_H

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "qlink/circuit.h"
#include "qlink/gate_cutting.h"
#include "qlink/graph_state.h"
#include "qlink/link.h"
#include "qlink/mitigation.h"
#include "qlink/noise.h"
#include "qlink/qpd.h"
#include "qlink/sim.h"

namespace qlink {

enum class RunMode { Enumerate, Sample };

std::string_view mode_name(RunMode m);
RunMode mode_from_name(std::string_view name);

struct ExperimentConfig {
    Graph graph;
    GraphMethod method = GraphMethod::Native;
    /// Empty (zero qubits) selects the method's default layout.
    CouplingMap map;
    NoiseModel noise;
    uint64_t shots = 1024;
    uint32_t trex = 5;
    /// Extra state-preparation flip applied to the TREX calibration runs only.
    double trex_prep_error = 0;
    ZneSchedule zne;
    RunMode mode = RunMode::Enumerate;
    uint64_t seed = 0;
    std::string out;
    uint32_t pairs_per_gate = 2;
    /// Factory JSON files; missing sizes are built from the seed.
    std::vector<std::string> factories;
    bool dd = true;
    double resample_fraction = 0.1;
    uint32_t resample_reps = 10;
    /// Link hop latency used when dispatching to remote workers.
    double hop_latency = 1;
    /// 0 uses the hardware concurrency.
    unsigned threads = 0;

    void validate() const;
    std::string to_json() const;
    /// Relative factory paths resolve against `base_dir`.
    static ExperimentConfig from_json(const std::string &text, const std::string &base_dir = "");
    static ExperimentConfig load(const std::string &path);
};

/// Graph from a JSON spec: {"ring": n, "cuts": c}, {"device": "eagle", "long_range": [[a, b], ...]}
/// or {"nodes": n, "edges": [...], "cut_edges": [...]}.
Graph graph_from_json(const std::string &text);
CouplingMap map_from_json(const std::string &text);

/// Joint-QPD diagonal: cuts sharing an observable's light cone sit in different slots, and circuit v
/// runs member v_s mod size on every cut of slot s.
struct SlotPlan {
    std::vector<uint32_t> slot_of_cut;
    std::vector<size_t> slot_size;
    /// Active cuts per observable.
    std::vector<std::vector<size_t>> cones;

    size_t size() const;
    std::vector<size_t> digits(size_t index) const;
    std::vector<int> choice(size_t index, const CutCircuit &cc) const;
};

SlotPlan plan_slots(const CutCircuit &cc, const std::vector<PauliString> &observables);

struct CircuitCount {
    size_t groups = 0;
    size_t trex = 0;
    size_t instances = 1;
    size_t zne = 1;

    size_t total() const {
        return groups * trex * instances * zne;
    }
};

CircuitCount circuit_count(const ExperimentConfig &config);

/// Runs `prefix` followed by each suffix for `shots` shots. `qpu_of` places the prefix qubits.
using Executor = std::function<std::vector<Counts>(const Circuit &prefix, const std::vector<Circuit> &suffixes,
                                                   const NoiseModel &noise, uint64_t shots, uint64_t seed,
                                                   const std::vector<uint32_t> &qpu_of)>;

/// Samples exact outcome distributions; falls back to trajectories for wide circuits with incoherent noise.
Executor local_executor();
/// Shot-by-shot dispatch to two workers through the link protocol.
Executor distributed_executor(std::array<Channel *, 2> workers, double hop_latency, const LinkOptions &options = {});

/// TREX-merged register of one circuit.
class MergedCounts {
   public:
    const Counts &counts() const {
        return counts_;
    }

   private:
    friend MergedCounts merge_twirled(const std::vector<Counts> &runs, const std::vector<uint64_t> &masks);
    Counts counts_;
};

MergedCounts merge_twirled(const std::vector<Counts> &runs, const std::vector<uint64_t> &masks);

struct MixtureTerm {
    double weight = 0;
    const MergedCounts *counts = nullptr;
    uint64_t mask = 0;
};

/// Resampled value of a signed mixture of merged registers.
class MixtureEstimate {
   public:
    double value() const {
        return value_;
    }
    double sigma() const {
        return sigma_;
    }

   private:
    friend MixtureEstimate resample_mixture(const std::vector<MixtureTerm> &terms, double frac, uint32_t reps,
                                            uint64_t seed);
    double value_ = 0;
    double sigma_ = 0;
};

MixtureEstimate resample_mixture(const std::vector<MixtureTerm> &terms, double frac, uint32_t reps, uint64_t seed);

/// Mixture divided by the calibrated shadow expectation.
class ReadoutCorrected {
   public:
    double value() const {
        return value_;
    }
    double sigma() const {
        return sigma_;
    }

   private:
    friend ReadoutCorrected trex_correct(const MixtureEstimate &m, double calibration, double floor);
    double value_ = 0;
    double sigma_ = 0;
};

ReadoutCorrected trex_correct(const MixtureEstimate &m, double calibration, double floor = 0.05);

/// Final stabilizer value; extrapolated when more than one stretch factor is given.
class Extrapolated {
   public:
    double value() const {
        return value_;
    }
    double sigma() const {
        return sigma_;
    }
    double slope() const {
        return slope_;
    }

   private:
    friend Extrapolated zne_finish(const std::vector<std::pair<double, ReadoutCorrected>> &points);
    double value_ = 0;
    double sigma_ = 0;
    double slope_ = 0;
};

Extrapolated zne_finish(const std::vector<std::pair<double, ReadoutCorrected>> &points);

struct ZneSeries {
    size_t observable = 0;
    std::vector<ZnePoint> points;
    ZneResult fit;
};

struct ExperimentResult {
    StabilizerReport report;
    CircuitCount count;
    size_t circuits_dispatched = 0;
    std::vector<ZneSeries> zne;

    /// Deterministic JSON with the report, raw values, node-error CDF and ZNE fits.
    std::string to_json() const;
};

ExperimentResult run_experiment(const ExperimentConfig &config, const Executor &executor = local_executor());
/// Runs and writes config.out atomically; nothing is written on failure.
ExperimentResult run_and_write(const ExperimentConfig &config, const Executor &executor = local_executor());

/// Per-draw sample-mode variance of LO against LOCC on the stabilizers whose light cone holds a cut.
struct VarianceRatio {
    double ratio = 0;
    double ci_low = 0;
    double ci_high = 0;
    uint64_t draws = 0;
    std::vector<size_t> observables;
    std::vector<SampleStats> lo;
    std::vector<SampleStats> locc;

    std::string to_text() const;
};

/// Splits `total_draws` evenly over both methods and the selected stabilizers; the interval is 95%.
VarianceRatio variance_ratio(const ExperimentConfig &config, uint64_t total_draws);

struct Timing {
    uint64_t m = 0;
    double compile_s = 0;
    double execute_s = 0;
};

struct CostModel {
    /// f_c(m) = compile[0] + compile[1] m + compile[2] m^2.
    std::array<double, 3> compile{0, 0, 0};
    double t0 = 0;
    double t1 = 0;
    uint64_t parameter_sets = 0;

    double compile_time(double m) const;
    double execute_time(double m) const;
    double total_time(double m) const;
    /// Smallest integer minimizer of the total over [1, S].
    uint64_t argmin() const;
};

struct CostFit {
    CostModel model;
    uint64_t m_star = 1;
};

CostFit fit_cost_model(const std::vector<Timing> &timings, uint64_t parameter_sets);

struct ValidationLine {
    std::string name;
    double residual = 0;
    double tolerance = 0;
    bool pass = false;
};

struct ValidationReport {
    std::string protocol;
    uint32_t k = 0;
    double gamma = 0;
    size_t size = 0;
    std::vector<ValidationLine> lines;

    bool pass() const;
    std::string to_text() const;
};

/// LO checks the cut gate on random inputs and observables; LOCC checks the factory against the Bell
/// projector, the product structure of its members and the teleported gate.
ValidationReport validate_qpd(CutProtocol protocol, VirtualGate gate, uint32_t k, double tolerance,
                              const CutBellFactory *factory = nullptr, uint64_t seed = 0);

struct ChainScore {
    std::array<uint32_t, 4> chain{};
    double zx = 0;
    double xz = 0;
    double mse = 0;
};

/// Every simple 4-qubit path of the map, best first. Ties keep path order.
std::vector<std::array<uint32_t, 4>> four_chains(const CouplingMap &map);
std::vector<ChainScore> bell_benchmark(const CouplingMap &map, const NoiseModel &noise, uint64_t shots,
                                       uint64_t seed = 0);

}  // namespace qlink

#endif
