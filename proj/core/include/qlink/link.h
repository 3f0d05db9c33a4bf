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

#ifndef QLINK_LINK_H
#define QLINK_LINK_H

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qlink/circuit.h"
#include "qlink/noise.h"
#include "qlink/sim.h"

namespace qlink {

constexpr uint32_t kProtocolVersion = 1;
constexpr size_t kMaxMessageBytes = size_t{1} << 24;

enum class MessageType { Hello, ShotStart, McmBits, CaseBroadcast, ShotDone, Results, Bye, Error };

std::string_view message_type_name(MessageType t);

struct LinkMessage {
    MessageType type = MessageType::Hello;
    uint32_t version = kProtocolVersion;
    uint64_t shot = 0;
    /// ShotStart: number of shots in the batch.
    uint64_t count = 0;
    /// McmBits / CaseBroadcast: global label of the switch.
    uint32_t label = 0;
    /// McmBits: the sender's bits; ShotDone: the final register.
    uint64_t bits = 0;
    /// CaseBroadcast.
    uint64_t case_index = 0;
    /// Results.
    std::optional<Counts> counts;
    /// Hello from the coordinator: the worker's job; Error: the reason.
    std::string body;

    /// One line of JSON without the trailing newline.
    std::string encode() const;
    static LinkMessage decode(const std::string &line);
};

/// One cross-QPU switch.
struct LinkDependency {
    uint32_t label = 0;
    std::vector<uint32_t> conditions;
    /// QPUs owning at least one condition bit; each sends MCM_BITS.
    std::vector<uint32_t> sources;
    /// QPUs with gates in some case; all receive CASE_BROADCAST.
    std::vector<uint32_t> targets;
    /// Number of link hops on the longest chain ending here.
    uint32_t depth = 1;
};

struct Partition {
    uint32_t num_qubits = 0;
    uint32_t num_clbits = 0;
    std::array<Circuit, 2> sub;
    /// Global qubit of each local qubit.
    std::array<std::vector<uint32_t>, 2> qubits;
    /// Clbits written by each QPU.
    std::array<uint64_t, 2> owned{0, 0};
    std::vector<LinkDependency> schedule;
    double hop_latency = 0;
    double latency = 0;
};

/// Splits by qpu_of (entries 0 or 1). Every switch is kept on both sides with case bodies restricted
/// to local qubits; cross-QPU switches are marked remote.
Partition partition(const Circuit &circuit, const std::vector<uint32_t> &qpu_of, double hop_latency = 1);
Partition partition(const Circuit &circuit, const CouplingMap &map, double hop_latency = 1);

/// Bidirectional line transport.
class Channel {
   public:
    virtual ~Channel() = default;
    virtual void send(const std::string &line) = 0;
    /// Throws LinkError on timeout or closed peer.
    virtual std::string recv(std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
};

/// Two connected in-process endpoints. `jitter_seed` > 0 inserts seeded random yields before deliveries.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_channel_pair(uint64_t jitter_seed = 0);

/// Records every line through `inner` as "> " (sent) and "< " (received).
class RecordingChannel : public Channel {
   public:
    explicit RecordingChannel(Channel &inner) : inner_(inner) {
    }
    void send(const std::string &line) override;
    std::string recv(std::chrono::milliseconds timeout) override;
    void close() override {
        inner_.close();
    }
    const std::vector<std::string> &transcript() const {
        return lines_;
    }

   private:
    Channel &inner_;
    std::vector<std::string> lines_;
};

/// Stream socket endpoints.
class SocketChannel : public Channel {
   public:
    explicit SocketChannel(int fd);
    ~SocketChannel() override;
    static std::unique_ptr<SocketChannel> connect(const std::string &host, uint16_t port,
                                                  std::chrono::milliseconds timeout = std::chrono::seconds(10));
    void send(const std::string &line) override;
    std::string recv(std::chrono::milliseconds timeout) override;
    void close() override;

   private:
    int fd_;
    std::string buffer_;
};

class SocketListener {
   public:
    /// Port 0 picks a free port.
    SocketListener(const std::string &host, uint16_t port);
    ~SocketListener();
    uint16_t port() const {
        return port_;
    }
    int fd() const {
        return fd_;
    }
    std::unique_ptr<SocketChannel> accept(std::chrono::milliseconds timeout = std::chrono::seconds(30));

   private:
    int fd_;
    uint16_t port_;
};

/// Serves one coordinator session until BYE.
void serve_worker(Channel &channel, std::chrono::milliseconds timeout = std::chrono::seconds(30));
/// Serves consecutive jobs until the coordinator closes the channel or stays silent for `idle`.
/// Returns the number of completed jobs.
size_t serve_session(Channel &channel, std::chrono::milliseconds idle = std::chrono::hours(24),
                     std::chrono::milliseconds timeout = std::chrono::seconds(30));

struct LinkOptions {
    uint64_t batch = 64;
    std::chrono::milliseconds timeout{30000};
    /// Version announced in HELLO; tests use it to provoke a mismatch.
    uint32_t version = kProtocolVersion;
};

/// Drives both workers shot by shot and merges their registers. The switch latency of the run is partition.latency.
Counts run_distributed(const Partition &p, uint64_t shots, const NoiseModel &noise, uint64_t seed,
                       std::array<Channel *, 2> workers, const LinkOptions &options = {});

/// Both workers on threads joined by in-process channels.
Counts run_distributed_in_process(const Partition &p, uint64_t shots, const NoiseModel &noise, uint64_t seed,
                                  const LinkOptions &options = {}, uint64_t jitter_seed = 0,
                                  std::array<std::vector<std::string>, 2> *transcripts = nullptr);

/// Noise for the equivalent single-process run.
NoiseModel link_noise(const NoiseModel &noise, const Partition &p);

}  // namespace qlink

#endif
