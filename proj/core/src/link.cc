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

#include "qlink/link.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "json.hpp"
#include "qlink/errors.h"
#include "qlink/rng.h"

namespace qlink {

using json = nlohmann::json;

namespace {

constexpr std::array<std::pair<MessageType, std::string_view>, 8> kTypeNames{{
    {MessageType::Hello, "HELLO"},
    {MessageType::ShotStart, "SHOT_START"},
    {MessageType::McmBits, "MCM_BITS"},
    {MessageType::CaseBroadcast, "CASE_BROADCAST"},
    {MessageType::ShotDone, "SHOT_DONE"},
    {MessageType::Results, "RESULTS"},
    {MessageType::Bye, "BYE"},
    {MessageType::Error, "ERROR"},
}};

MessageType type_from_name(const std::string &name) {
    for (auto [t, n] : kTypeNames) {
        if (n == name) {
            return t;
        }
    }
    throw ProtocolError("unknown message type " + name);
}

}  // namespace

std::string_view message_type_name(MessageType t) {
    for (auto [k, n] : kTypeNames) {
        if (k == t) {
            return n;
        }
    }
    return "?";
}

std::string LinkMessage::encode() const {
    json j;
    j["v"] = version;
    j["type"] = std::string(message_type_name(type));
    switch (type) {
        case MessageType::Hello:
        case MessageType::Error:
            if (!body.empty()) {
                j["body"] = body;
            }
            break;
        case MessageType::ShotStart:
            j["shot"] = shot;
            j["count"] = count;
            break;
        case MessageType::McmBits:
            j["shot"] = shot;
            j["label"] = label;
            j["bits"] = bits;
            break;
        case MessageType::CaseBroadcast:
            j["shot"] = shot;
            j["label"] = label;
            j["case"] = case_index;
            break;
        case MessageType::ShotDone:
            j["shot"] = shot;
            j["bits"] = bits;
            break;
        case MessageType::Results: {
            j["shot"] = shot;
            json hist = json::array();
            if (counts) {
                for (auto [b, n] : counts->hist) {
                    hist.push_back({b, n});
                }
                j["clbits"] = counts->num_clbits;
                j["shots"] = counts->shots;
            }
            j["hist"] = hist;
            break;
        }
        case MessageType::Bye:
            break;
    }
    return j.dump();
}

LinkMessage LinkMessage::decode(const std::string &line) {
    if (line.size() > kMaxMessageBytes) {
        throw ProtocolError("message exceeds the length cap");
    }
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception &e) {
        throw ProtocolError(std::string("malformed message: ") + e.what());
    }
    try {
        LinkMessage m;
        m.version = j.at("v").get<uint32_t>();
        m.type = type_from_name(j.at("type").get<std::string>());
        m.shot = j.value("shot", uint64_t{0});
        m.count = j.value("count", uint64_t{0});
        m.label = j.value("label", uint32_t{0});
        m.bits = j.value("bits", uint64_t{0});
        m.case_index = j.value("case", uint64_t{0});
        m.body = j.value("body", std::string{});
        if (m.type == MessageType::Results) {
            Counts c;
            c.num_clbits = j.value("clbits", uint32_t{0});
            c.shots = j.value("shots", uint64_t{0});
            for (const auto &e : j.at("hist")) {
                c.hist[e.at(0).get<uint64_t>()] += e.at(1).get<uint64_t>();
            }
            m.counts = c;
        }
        return m;
    } catch (const json::exception &e) {
        throw ProtocolError(std::string("bad message fields: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Partitioning.

namespace {

std::string describe(const Instruction &inst) {
    if (inst.is<Gate>()) {
        const auto &g = inst.as<Gate>();
        std::string s(gate_name(g.kind));
        for (size_t i = 0; i < g.arity(); i++) {
            s += " " + std::to_string(g.qubits[i]);
        }
        return s;
    }
    return "instruction";
}

struct Splitter {
    const std::vector<uint32_t> &qpu_of;
    std::array<std::vector<uint32_t>, 2> local;

    int side_of(const Instruction &inst) const {
        auto qs = instruction_qubits(inst);
        if (qs.empty()) {
            return -1;
        }
        int side = static_cast<int>(qpu_of[qs[0]]);
        for (auto q : qs) {
            if (static_cast<int>(qpu_of[q]) != side) {
                throw PartitionError("'" + describe(inst) + "' spans both QPUs");
            }
        }
        return side;
    }

    Instruction relabel(const Instruction &inst, int side) const {
        Instruction out = inst;
        auto map = [&](uint32_t &q) { q = local[side][q]; };
        if (out.is<Gate>()) {
            auto &g = out.as<Gate>();
            for (size_t i = 0; i < g.arity(); i++) {
                map(g.qubits[i]);
            }
        } else if (out.is<Measure>()) {
            map(out.as<Measure>().qubit);
        } else if (out.is<Delay>()) {
            for (auto &q : out.as<Delay>().qubits) {
                map(q);
            }
        } else if (out.is<Barrier>()) {
            for (auto &q : out.as<Barrier>().qubits) {
                map(q);
            }
        } else if (out.is<Switch>()) {
            for (auto &block : out.as<Switch>().cases) {
                for (auto &i : block) {
                    i = relabel(i, side);
                }
            }
        }
        return out;
    }
};

void collect_owners(const std::vector<Instruction> &insts, const std::vector<uint32_t> &qpu_of,
                    std::vector<int> &owner) {
    for_each_instruction(insts, [&](const Instruction &inst) {
        if (inst.is<Measure>()) {
            const auto &m = inst.as<Measure>();
            int side = static_cast<int>(qpu_of[m.qubit]);
            if (owner[m.clbit] >= 0 && owner[m.clbit] != side) {
                throw PartitionError("clbit " + std::to_string(m.clbit) + " is written on both QPUs");
            }
            owner[m.clbit] = side;
        }
    });
}

}  // namespace

Partition partition(const Circuit &circuit, const std::vector<uint32_t> &qpu_of, double hop_latency) {
    validate(circuit);
    if (qpu_of.size() < circuit.num_qubits) {
        throw PartitionError("every qubit needs a QPU");
    }
    if (!(hop_latency >= 0)) {
        throw PartitionError("hop latency must be non-negative");
    }
    Partition p;
    p.num_qubits = circuit.num_qubits;
    p.num_clbits = circuit.num_clbits;
    p.hop_latency = hop_latency;
    Splitter split{qpu_of, {}};
    for (int s = 0; s < 2; s++) {
        split.local[s].assign(circuit.num_qubits, 0);
    }
    for (uint32_t q = 0; q < circuit.num_qubits; q++) {
        uint32_t side = qpu_of[q];
        if (side > 1) {
            throw PartitionError("QPU index must be 0 or 1");
        }
        split.local[side][q] = static_cast<uint32_t>(p.qubits[side].size());
        p.qubits[side].push_back(q);
    }
    for (int s = 0; s < 2; s++) {
        p.sub[s] = Circuit(static_cast<uint32_t>(p.qubits[s].size()), circuit.num_clbits);
        p.sub[s].parameters = circuit.parameters;
    }
    std::vector<int> owner(circuit.num_clbits, -1);
    collect_owners(circuit.instructions, qpu_of, owner);
    for (uint32_t c = 0; c < circuit.num_clbits; c++) {
        if (owner[c] >= 0) {
            p.owned[owner[c]] |= uint64_t{1} << c;
        }
    }

    std::vector<uint32_t> qdepth(circuit.num_qubits, 0), cdepth(circuit.num_clbits, 0);
    uint32_t max_depth = 0;
    for (size_t i = 0; i < circuit.instructions.size(); i++) {
        const auto &inst = circuit.instructions[i];
        uint32_t label = inst.label != kNoLabel ? inst.label : static_cast<uint32_t>(i);
        if (inst.is<Gate>() || inst.is<Measure>()) {
            int side = split.side_of(inst);
            auto qs = instruction_qubits(inst);
            uint32_t d = 0;
            for (auto q : qs) {
                d = std::max(d, qdepth[q]);
            }
            for (auto q : qs) {
                qdepth[q] = d;
            }
            if (inst.is<Measure>()) {
                cdepth[inst.as<Measure>().clbit] = d;
            }
            Instruction out = split.relabel(inst, side);
            out.label = label;
            p.sub[side].instructions.push_back(std::move(out));
        } else if (inst.is<Delay>() || inst.is<Barrier>()) {
            const auto &qs = inst.is<Delay>() ? inst.as<Delay>().qubits : inst.as<Barrier>().qubits;
            for (int s = 0; s < 2; s++) {
                std::vector<uint32_t> mine;
                for (auto q : qs) {
                    if (static_cast<int>(qpu_of[q]) == s) {
                        mine.push_back(split.local[s][q]);
                    }
                }
                if (mine.empty()) {
                    continue;
                }
                Instruction out = inst;
                (out.is<Delay>() ? out.as<Delay>().qubits : out.as<Barrier>().qubits) = mine;
                out.label = label;
                p.sub[s].instructions.push_back(std::move(out));
            }
        } else {
            const auto &sw = inst.as<Switch>();
            std::array<Switch, 2> parts;
            std::array<bool, 2> has_body{false, false};
            std::vector<uint32_t> body_qubits;
            for (int s = 0; s < 2; s++) {
                parts[s] = sw;
                for (auto &block : parts[s].cases) {
                    block.clear();
                }
            }
            for (size_t v = 0; v < sw.cases.size(); v++) {
                for (size_t j = 0; j < sw.cases[v].size(); j++) {
                    const auto &bi = sw.cases[v][j];
                    int side = split.side_of(bi);
                    if (side < 0) {
                        continue;
                    }
                    if (bi.is<Switch>()) {
                        for (auto c : bi.as<Switch>().conditions) {
                            if (owner[c] >= 0 && owner[c] != side) {
                                throw PartitionError("nested switch reads a clbit from the other QPU");
                            }
                        }
                    }
                    for (auto q : instruction_qubits(bi)) {
                        body_qubits.push_back(q);
                    }
                    Instruction out = split.relabel(bi, side);
                    out.label = bi.label != kNoLabel ? bi.label : static_cast<uint32_t>(j + 1);
                    parts[side].cases[v].push_back(std::move(out));
                    has_body[side] = true;
                }
            }
            std::vector<uint32_t> sources;
            uint32_t cond_depth = 0;
            for (auto c : sw.conditions) {
                cond_depth = std::max(cond_depth, cdepth[c]);
                if (owner[c] >= 0 &&
                    std::find(sources.begin(), sources.end(), static_cast<uint32_t>(owner[c])) == sources.end()) {
                    sources.push_back(owner[c]);
                }
            }
            std::sort(sources.begin(), sources.end());
            bool remote = false;
            std::vector<uint32_t> targets;
            for (int s = 0; s < 2; s++) {
                if (!has_body[s]) {
                    continue;
                }
                targets.push_back(s);
                for (auto c : sw.conditions) {
                    remote = remote || owner[c] != s;
                }
            }
            uint32_t body_depth = cond_depth;
            if (remote) {
                LinkDependency dep;
                dep.label = label;
                dep.conditions = sw.conditions;
                dep.sources = sources;
                dep.targets = targets;
                dep.depth = cond_depth + 1;
                body_depth = dep.depth;
                max_depth = std::max(max_depth, dep.depth);
                p.schedule.push_back(std::move(dep));
            }
            for (auto q : body_qubits) {
                qdepth[q] = std::max(qdepth[q], body_depth);
            }
            for (int s = 0; s < 2; s++) {
                Switch out = std::move(parts[s]);
                if (remote) {
                    out.remote = true;
                } else if (!has_body[s]) {
                    out.conditions.clear();
                    out.cases.assign(1, {});
                }
                p.sub[s].instructions.emplace_back(std::move(out), label);
            }
        }
    }
    p.latency = hop_latency * max_depth;
    return p;
}

Partition partition(const Circuit &circuit, const CouplingMap &map, double hop_latency) {
    if (map.qpu_of.size() < circuit.num_qubits) {
        throw PartitionError("coupling map does not assign every qubit to a QPU");
    }
    return partition(circuit, map.qpu_of, hop_latency);
}

NoiseModel link_noise(const NoiseModel &noise, const Partition &p) {
    NoiseModel out = noise;
    out.switch_latency_tau = p.latency;
    std::vector<int> side(p.num_qubits, -1);
    for (int s = 0; s < 2; s++) {
        for (auto q : p.qubits[s]) {
            side[q] = s;
        }
    }
    out.zz.clear();
    for (const auto &z : noise.zz) {
        if (z.a < p.num_qubits && z.b < p.num_qubits && side[z.a] == side[z.b]) {
            out.zz.push_back(z);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transports.

namespace {

struct Pipe {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> lines;
    bool closed = false;
};

class MemoryChannel : public Channel {
   public:
    MemoryChannel(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out, uint64_t jitter)
        : in_(std::move(in)), out_(std::move(out)), jitter_(jitter), rng_(jitter) {
    }
    ~MemoryChannel() override {
        close();
    }

    void send(const std::string &line) override {
        if (jitter_) {
            for (uint64_t k = rng_() % 4; k > 0; k--) {
                std::this_thread::yield();
            }
            if (rng_() % 8 == 0) {
                std::this_thread::sleep_for(std::chrono::microseconds(rng_() % 200));
            }
        }
        std::lock_guard<std::mutex> lock(out_->mu);
        if (out_->closed) {
            throw LinkError("peer closed the channel");
        }
        out_->lines.push_back(line);
        out_->cv.notify_all();
    }

    std::string recv(std::chrono::milliseconds timeout) override {
        std::unique_lock<std::mutex> lock(in_->mu);
        if (!in_->cv.wait_for(lock, timeout, [&] { return !in_->lines.empty() || in_->closed; })) {
            throw LinkError("timed out waiting for the peer");
        }
        if (in_->lines.empty()) {
            throw LinkError("peer closed the channel");
        }
        std::string line = std::move(in_->lines.front());
        in_->lines.pop_front();
        return line;
    }

    void close() override {
        for (auto *p : {in_.get(), out_.get()}) {
            std::lock_guard<std::mutex> lock(p->mu);
            p->closed = true;
            p->cv.notify_all();
        }
    }

   private:
    std::shared_ptr<Pipe> in_, out_;
    uint64_t jitter_;
    std::mt19937_64 rng_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_channel_pair(uint64_t jitter_seed) {
    auto ab = std::make_shared<Pipe>(), ba = std::make_shared<Pipe>();
    uint64_t ja = jitter_seed ? mix_keys({jitter_seed, 1}) | 1 : 0;
    uint64_t jb = jitter_seed ? mix_keys({jitter_seed, 2}) | 1 : 0;
    return {std::make_unique<MemoryChannel>(ba, ab, ja), std::make_unique<MemoryChannel>(ab, ba, jb)};
}

void RecordingChannel::send(const std::string &line) {
    lines_.push_back("> " + line);
    inner_.send(line);
}

std::string RecordingChannel::recv(std::chrono::milliseconds timeout) {
    auto line = inner_.recv(timeout);
    lines_.push_back("< " + line);
    return line;
}

SocketChannel::SocketChannel(int fd) : fd_(fd) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

SocketChannel::~SocketChannel() {
    close();
}

std::unique_ptr<SocketChannel> SocketChannel::connect(const std::string &host, uint16_t port,
                                                      std::chrono::milliseconds timeout) {
    addrinfo hints{}, *res = nullptr;
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
        throw LinkError("cannot resolve " + host);
    }
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
            freeaddrinfo(res);
            return std::make_unique<SocketChannel>(fd);
        }
        if (fd >= 0) {
            ::close(fd);
        }
        if (std::chrono::steady_clock::now() > deadline) {
            freeaddrinfo(res);
            throw LinkError("cannot connect to " + host + ":" + std::to_string(port));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

void SocketChannel::send(const std::string &line) {
    if (fd_ < 0) {
        throw LinkError("socket is closed");
    }
    if (line.size() > kMaxMessageBytes) {
        throw ProtocolError("message exceeds the length cap");
    }
    std::string data = line + "\n";
    size_t off = 0;
    while (off < data.size()) {
        ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw LinkError("send failed: " + std::string(std::strerror(errno)));
        }
        off += static_cast<size_t>(n);
    }
}

std::string SocketChannel::recv(std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (buffer_.size() > kMaxMessageBytes) {
            throw ProtocolError("message exceeds the length cap");
        }
        if (fd_ < 0) {
            throw LinkError("socket is closed");
        }
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            throw LinkError("timed out waiting for the peer");
        }
        pollfd pfd{fd_, POLLIN, 0};
        int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (r < 0 && errno == EINTR) {
            continue;
        }
        if (r < 0) {
            throw LinkError("poll failed");
        }
        if (r == 0) {
            continue;
        }
        char buf[65536];
        ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw LinkError("peer closed the connection");
        }
        buffer_.append(buf, static_cast<size_t>(n));
    }
}

void SocketChannel::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

SocketListener::SocketListener(const std::string &host, uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) {
        throw LinkError("cannot create socket");
    }
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw LinkError("bad listen address " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 4) != 0) {
        ::close(fd_);
        throw LinkError("cannot listen on " + host + ":" + std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    getsockname(fd_, reinterpret_cast<sockaddr *>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

SocketListener::~SocketListener() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

std::unique_ptr<SocketChannel> SocketListener::accept(std::chrono::milliseconds timeout) {
    pollfd pfd{fd_, POLLIN, 0};
    int r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (r <= 0) {
        throw LinkError("no coordinator connected");
    }
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) {
        throw LinkError("accept failed");
    }
    return std::make_unique<SocketChannel>(fd);
}

// ---------------------------------------------------------------------------
// Worker and coordinator.

namespace {

struct WorkerJob {
    Circuit circuit;
    NoiseModel noise;
    uint64_t seed = 0;
    std::vector<uint32_t> qubits;
    uint64_t owned = 0;
};

std::string encode_job(const Partition &p, int side, const NoiseModel &noise, uint64_t seed) {
    json j;
    j["qpu"] = side;
    j["circuit"] = to_text(p.sub[side]);
    j["noise"] = json::parse(link_noise(noise, p).restricted(p.qubits[side]).to_json());
    j["seed"] = seed;
    j["qubits"] = p.qubits[side];
    j["owned"] = p.owned[side];
    return j.dump();
}

WorkerJob decode_job(const std::string &body) {
    try {
        auto j = json::parse(body);
        WorkerJob w;
        w.circuit = from_text(j.at("circuit").get<std::string>());
        w.noise = NoiseModel::from_json(j.at("noise").dump());
        w.seed = j.at("seed").get<uint64_t>();
        w.qubits = j.at("qubits").get<std::vector<uint32_t>>();
        w.owned = j.at("owned").get<uint64_t>();
        return w;
    } catch (const json::exception &e) {
        throw ProtocolError(std::string("bad worker job: ") + e.what());
    }
}

LinkMessage receive(Channel &ch, std::chrono::milliseconds timeout) {
    auto m = LinkMessage::decode(ch.recv(timeout));
    if (m.type == MessageType::Error) {
        throw LinkError("peer reported: " + m.body);
    }
    return m;
}

LinkMessage expect(Channel &ch, MessageType type, uint64_t shot, std::chrono::milliseconds timeout) {
    auto m = receive(ch, timeout);
    if (m.type != type) {
        throw ProtocolError("expected " + std::string(message_type_name(type)) + ", got " +
                            std::string(message_type_name(m.type)));
    }
    if (type != MessageType::Hello && type != MessageType::Bye && m.shot != shot) {
        throw ProtocolError("out-of-order shot " + std::to_string(m.shot) + ", expected " + std::to_string(shot));
    }
    return m;
}

void send_error(Channel &ch, const std::string &why) {
    try {
        LinkMessage e;
        e.type = MessageType::Error;
        e.body = why;
        ch.send(e.encode());
    } catch (const std::exception &) {
    }
}

}  // namespace

void serve_worker(Channel &ch, std::chrono::milliseconds timeout) {
    auto hello = LinkMessage::decode(ch.recv(timeout));
    if (hello.type != MessageType::Hello) {
        send_error(ch, "expected HELLO");
        throw ProtocolError("expected HELLO");
    }
    if (hello.version != kProtocolVersion) {
        send_error(ch, "protocol version mismatch");
        throw HandshakeError("coordinator speaks version " + std::to_string(hello.version));
    }
    WorkerJob job;
    try {
        job = decode_job(hello.body);
    } catch (const Error &e) {
        send_error(ch, e.what());
        throw;
    }
    LinkMessage reply;
    reply.type = MessageType::Hello;
    ch.send(reply.encode());

    SimOptions opt;
    opt.qubit_ids = job.qubits;
    RemoteResolver resolver = [&](uint64_t shot, uint32_t label, const Switch &, uint64_t bits) -> uint64_t {
        LinkMessage m;
        m.type = MessageType::McmBits;
        m.shot = shot;
        m.label = label;
        m.bits = bits & job.owned;
        ch.send(m.encode());
        auto c = expect(ch, MessageType::CaseBroadcast, shot, timeout);
        if (c.label != label) {
            throw ProtocolError("case broadcast for label " + std::to_string(c.label) + ", expected " +
                                std::to_string(label));
        }
        return c.case_index;
    };
    while (true) {
        auto m = LinkMessage::decode(ch.recv(timeout));
        if (m.type == MessageType::Bye) {
            return;
        }
        if (m.type != MessageType::ShotStart) {
            send_error(ch, "unexpected " + std::string(message_type_name(m.type)));
            throw ProtocolError("worker got " + std::string(message_type_name(m.type)));
        }
        Counts local;
        local.num_clbits = job.circuit.num_clbits;
        local.seed = job.seed;
        try {
            for (uint64_t s = m.shot; s < m.shot + m.count; s++) {
                uint64_t bits = run_single_shot(job.circuit, job.noise, job.seed, s, opt, &resolver);
                LinkMessage done;
                done.type = MessageType::ShotDone;
                done.shot = s;
                done.bits = bits;
                ch.send(done.encode());
                local.hist[bits]++;
                local.shots++;
            }
        } catch (const LinkError &) {
            throw;
        } catch (const Error &e) {
            send_error(ch, e.what());
            throw;
        }
        LinkMessage res;
        res.type = MessageType::Results;
        res.shot = m.shot;
        res.counts = local;
        ch.send(res.encode());
    }
}

namespace {

class PushbackChannel : public Channel {
   public:
    PushbackChannel(Channel &inner, std::string first) : inner_(inner), first_(std::move(first)) {
    }
    void send(const std::string &line) override {
        inner_.send(line);
    }
    std::string recv(std::chrono::milliseconds timeout) override {
        if (first_) {
            std::string line = std::move(*first_);
            first_.reset();
            return line;
        }
        return inner_.recv(timeout);
    }
    void close() override {
        inner_.close();
    }

   private:
    Channel &inner_;
    std::optional<std::string> first_;
};

}  // namespace

size_t serve_session(Channel &channel, std::chrono::milliseconds idle, std::chrono::milliseconds timeout) {
    size_t jobs = 0;
    while (true) {
        std::string first;
        try {
            first = channel.recv(idle);
        } catch (const ProtocolError &) {
            throw;
        } catch (const LinkError &) {
            return jobs;
        }
        PushbackChannel ch(channel, std::move(first));
        serve_worker(ch, timeout);
        jobs++;
    }
}

Counts run_distributed(const Partition &p, uint64_t shots, const NoiseModel &noise, uint64_t seed,
                       std::array<Channel *, 2> workers, const LinkOptions &options) {
    const auto timeout = options.timeout;
    for (int w = 0; w < 2; w++) {
        LinkMessage hello;
        hello.type = MessageType::Hello;
        hello.version = options.version;
        hello.body = encode_job(p, w, noise, seed);
        workers[w]->send(hello.encode());
    }
    for (int w = 0; w < 2; w++) {
        LinkMessage m;
        try {
            m = receive(*workers[w], timeout);
        } catch (const LinkError &e) {
            throw HandshakeError(std::string("handshake with worker failed: ") + e.what());
        }
        if (m.type != MessageType::Hello || m.version != options.version) {
            throw HandshakeError("worker protocol version " + std::to_string(m.version));
        }
    }
    std::vector<uint64_t> results(shots);
    const uint64_t batch = std::max<uint64_t>(1, options.batch);
    for (uint64_t start = 0; start < shots; start += batch) {
        uint64_t n = std::min(batch, shots - start);
        for (auto *w : workers) {
            LinkMessage s;
            s.type = MessageType::ShotStart;
            s.shot = start;
            s.count = n;
            w->send(s.encode());
        }
        for (uint64_t shot = start; shot < start + n; shot++) {
            for (const auto &dep : p.schedule) {
                uint64_t bits = 0;
                for (int w = 0; w < 2; w++) {
                    auto m = expect(*workers[w], MessageType::McmBits, shot, timeout);
                    if (m.label != dep.label) {
                        throw ProtocolError("MCM bits for label " + std::to_string(m.label) + ", expected " +
                                            std::to_string(dep.label));
                    }
                    bits |= m.bits & p.owned[w];
                }
                uint64_t idx = 0;
                for (size_t i = 0; i < dep.conditions.size(); i++) {
                    idx |= ((bits >> dep.conditions[i]) & 1) << i;
                }
                for (auto *w : workers) {
                    LinkMessage c;
                    c.type = MessageType::CaseBroadcast;
                    c.shot = shot;
                    c.label = dep.label;
                    c.case_index = idx;
                    w->send(c.encode());
                }
            }
            uint64_t bits = 0;
            for (int w = 0; w < 2; w++) {
                bits |= expect(*workers[w], MessageType::ShotDone, shot, timeout).bits & p.owned[w];
            }
            results[shot] = bits;
        }
        for (auto *w : workers) {
            auto r = expect(*w, MessageType::Results, start, timeout);
            if (!r.counts || r.counts->shots != n) {
                throw ProtocolError("worker results do not cover the batch");
            }
        }
    }
    for (auto *w : workers) {
        LinkMessage bye;
        bye.type = MessageType::Bye;
        w->send(bye.encode());
    }
    Counts out;
    out.num_clbits = p.num_clbits;
    out.shots = shots;
    out.seed = seed;
    for (uint64_t b : results) {
        out.hist[b]++;
    }
    return out;
}

Counts run_distributed_in_process(const Partition &p, uint64_t shots, const NoiseModel &noise, uint64_t seed,
                                  const LinkOptions &options, uint64_t jitter_seed,
                                  std::array<std::vector<std::string>, 2> *transcripts) {
    auto [c0, w0] = make_channel_pair(jitter_seed ? mix_keys({jitter_seed, 0}) : 0);
    auto [c1, w1] = make_channel_pair(jitter_seed ? mix_keys({jitter_seed, 1}) : 0);
    std::array<std::exception_ptr, 2> errors;
    auto run_worker = [&](Channel *ch, std::exception_ptr *err) {
        try {
            serve_worker(*ch, options.timeout);
        } catch (...) {
            *err = std::current_exception();
            ch->close();
        }
    };
    std::thread t0(run_worker, w0.get(), &errors[0]);
    std::thread t1(run_worker, w1.get(), &errors[1]);
    RecordingChannel r0(*c0), r1(*c1);
    Counts out;
    std::exception_ptr coord_error;
    try {
        out = run_distributed(p, shots, noise, seed, {&r0, &r1}, options);
    } catch (...) {
        coord_error = std::current_exception();
        c0->close();
        c1->close();
    }
    t0.join();
    t1.join();
    if (transcripts) {
        (*transcripts)[0] = r0.transcript();
        (*transcripts)[1] = r1.transcript();
    }
    if (coord_error) {
        std::rethrow_exception(coord_error);
    }
    for (auto &e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    return out;
}

}  // namespace qlink
