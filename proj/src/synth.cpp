// Deterministic scenario generator: a SYN+FIN port sweep, one FTP control
// session that ends in a format-string variant probe, a rootkit upload to a
// backdoor port, and optional benign background FTP sessions.
#include <algorithm>
#include <cstring>
#include <random>
#include <string>

#include "dendrite/trace.hpp"

namespace dendrite {

namespace {

constexpr uint8_t kFin = 0x01, kSyn = 0x02, kAck = 0x10, kPsh = 0x08;

uint16_t checksum16(const std::vector<uint8_t>& data) {
    uint32_t sum = 0;
    for (size_t i = 0; i + 1 < data.size(); i += 2)
        sum += static_cast<uint32_t>(data[i] << 8 | data[i + 1]);
    if (data.size() % 2)
        sum += static_cast<uint32_t>(data.back() << 8);
    while (sum >> 16)
        sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<uint16_t>(~sum);
}

struct Endpoint {
    Ipv4Addr ip;
    uint16_t port;
    uint32_t seq;
    std::array<uint8_t, 6> mac;
};

class FrameBuilder {
  public:
    explicit FrameBuilder(uint64_t start_ts) : ts_(start_ts) {}

    PacketRecord tcp(const Endpoint& src, const Endpoint& dst, uint8_t flags, uint32_t seq,
                     uint32_t ack, const std::string& payload, uint8_t ttl) {
        std::vector<uint8_t> frame;
        frame.reserve(54 + payload.size());
        frame.insert(frame.end(), dst.mac.begin(), dst.mac.end());
        frame.insert(frame.end(), src.mac.begin(), src.mac.end());
        frame.push_back(0x08);
        frame.push_back(0x00);

        uint16_t total_len = static_cast<uint16_t>(20 + 20 + payload.size());
        std::vector<uint8_t> ip = {
            0x45, 0x00,
            static_cast<uint8_t>(total_len >> 8), static_cast<uint8_t>(total_len & 0xff),
            static_cast<uint8_t>(ip_id_ >> 8), static_cast<uint8_t>(ip_id_ & 0xff),
            0x40, 0x00,  // DF
            ttl, 6, 0x00, 0x00,
            static_cast<uint8_t>(src.ip.value >> 24), static_cast<uint8_t>(src.ip.value >> 16),
            static_cast<uint8_t>(src.ip.value >> 8), static_cast<uint8_t>(src.ip.value),
            static_cast<uint8_t>(dst.ip.value >> 24), static_cast<uint8_t>(dst.ip.value >> 16),
            static_cast<uint8_t>(dst.ip.value >> 8), static_cast<uint8_t>(dst.ip.value)};
        ++ip_id_;
        uint16_t ip_ck = checksum16(ip);
        ip[10] = static_cast<uint8_t>(ip_ck >> 8);
        ip[11] = static_cast<uint8_t>(ip_ck & 0xff);

        std::vector<uint8_t> tcp = {static_cast<uint8_t>(src.port >> 8),
                                    static_cast<uint8_t>(src.port & 0xff),
                                    static_cast<uint8_t>(dst.port >> 8),
                                    static_cast<uint8_t>(dst.port & 0xff),
                                    static_cast<uint8_t>(seq >> 24),
                                    static_cast<uint8_t>(seq >> 16),
                                    static_cast<uint8_t>(seq >> 8),
                                    static_cast<uint8_t>(seq),
                                    static_cast<uint8_t>(ack >> 24),
                                    static_cast<uint8_t>(ack >> 16),
                                    static_cast<uint8_t>(ack >> 8),
                                    static_cast<uint8_t>(ack),
                                    0x50,
                                    flags,
                                    0xfa, 0xf0,  // window 64240
                                    0x00, 0x00, 0x00, 0x00};
        tcp.insert(tcp.end(), payload.begin(), payload.end());
        std::vector<uint8_t> pseudo = {
            static_cast<uint8_t>(src.ip.value >> 24), static_cast<uint8_t>(src.ip.value >> 16),
            static_cast<uint8_t>(src.ip.value >> 8),  static_cast<uint8_t>(src.ip.value),
            static_cast<uint8_t>(dst.ip.value >> 24), static_cast<uint8_t>(dst.ip.value >> 16),
            static_cast<uint8_t>(dst.ip.value >> 8),  static_cast<uint8_t>(dst.ip.value),
            0x00, 6,
            static_cast<uint8_t>(tcp.size() >> 8), static_cast<uint8_t>(tcp.size() & 0xff)};
        pseudo.insert(pseudo.end(), tcp.begin(), tcp.end());
        uint16_t tcp_ck = checksum16(pseudo);
        tcp[16] = static_cast<uint8_t>(tcp_ck >> 8);
        tcp[17] = static_cast<uint8_t>(tcp_ck & 0xff);

        frame.insert(frame.end(), ip.begin(), ip.end());
        frame.insert(frame.end(), tcp.begin(), tcp.end());

        PacketRecord rec;
        rec.ts_sec = static_cast<uint32_t>(ts_ / 1000000ull);
        rec.ts_usec = static_cast<uint32_t>(ts_ % 1000000ull);
        rec.link_type = 1;
        rec.bytes = std::move(frame);
        return rec;
    }

    void advance(uint64_t usec) { ts_ += usec; }
    void set_ts(uint64_t ts) { ts_ = ts; }
    uint64_t ts() const { return ts_; }

  private:
    uint64_t ts_;
    uint16_t ip_id_ = 0x1000;
};

struct Tagged {
    PacketRecord rec;
    bool variant = false;
};

// One full FTP control conversation; when variant_payloads is non-empty the
// probes are sent right before QUIT and tagged as true positives.
void ftp_session(FrameBuilder& fb, std::vector<Tagged>& out, Endpoint client, Endpoint server,
                 int commands, const std::vector<std::string>& variant_payloads,
                 uint64_t step_usec, std::mt19937_64& rng, uint8_t client_ttl) {
    std::uniform_int_distribution<uint64_t> jitter(0, step_usec / 4);
    auto emit = [&](const Endpoint& from, const Endpoint& to, uint8_t flags, uint32_t seq,
                    uint32_t ack, const std::string& payload, bool variant = false) {
        uint8_t ttl = from.ip.value == client.ip.value ? client_ttl : 64;
        out.push_back({fb.tcp(from, to, flags, seq, ack, payload, ttl), variant});
        fb.advance(step_usec + jitter(rng));
    };

    uint32_t cseq = client.seq, sseq = server.seq;
    emit(client, server, kSyn, cseq, 0, "");
    ++cseq;
    emit(server, client, kSyn | kAck, sseq, cseq, "");
    ++sseq;
    emit(client, server, kAck, cseq, sseq, "");

    auto client_say = [&](const std::string& line, bool variant = false) {
        emit(client, server, kPsh | kAck, cseq, sseq, line, variant);
        cseq += static_cast<uint32_t>(line.size());
    };
    auto server_say = [&](const std::string& line) {
        emit(server, client, kPsh | kAck, sseq, cseq, line);
        sseq += static_cast<uint32_t>(line.size());
    };

    server_say("220 ftp.victim.example FTP server ready.\r\n");
    client_say("USER operator\r\n");
    server_say("331 Password required for operator.\r\n");
    client_say("PASS hunter2\r\n");
    server_say("230 User operator logged in.\r\n");

    static const char* kCommands[] = {"PWD\r\n",    "SYST\r\n",   "NOOP\r\n",
                                      "TYPE I\r\n", "STAT\r\n",   "CWD /pub\r\n",
                                      "TYPE A\r\n", "CWD ..\r\n", "HELP\r\n"};
    static const char* kReplies[] = {"257 \"/\" is the current directory.\r\n",
                                     "215 UNIX Type: L8\r\n",
                                     "200 NOOP command successful.\r\n",
                                     "200 Type set to I.\r\n",
                                     "211 Status OK.\r\n",
                                     "250 CWD command successful.\r\n",
                                     "200 Type set to A.\r\n",
                                     "250 CWD command successful.\r\n",
                                     "214 Help OK.\r\n"};
    for (int i = 0; i < commands; ++i) {
        size_t k = static_cast<size_t>(i) % (sizeof(kCommands) / sizeof(kCommands[0]));
        client_say(kCommands[k]);
        server_say(kReplies[k]);
    }

    for (const auto& probe : variant_payloads) {
        client_say(probe, true);
        server_say("500 'SITE EXEC': command not understood.\r\n");
    }

    client_say("QUIT\r\n");
    server_say("221 Goodbye.\r\n");
    emit(client, server, kFin | kAck, cseq, sseq, "");
    ++cseq;
    emit(server, client, kAck, sseq, cseq, "");
    emit(server, client, kFin | kAck, sseq, cseq, "");
    ++sseq;
    emit(client, server, kAck, cseq, sseq, "");
}

}  // namespace

SynthResult synth_scenario(const ScenarioConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    FrameBuilder fb(cfg.start_ts_usec);
    std::vector<Tagged> packets;

    Endpoint victim{cfg.victim, cfg.ftp_port, 0, {0x02, 0, 0, 0, 0, 0x01}};
    Endpoint attacker{cfg.attacker, 3432, 0, {0x02, 0, 0, 0, 0, 0x02}};

    bool attack = cfg.scan_probes > 0 || cfg.session_commands > 0;

    // 1. Reconnaissance: SYN+FIN sweep over low ports.
    if (attack && cfg.scan_probes > 0) {
        std::uniform_int_distribution<uint32_t> isn(1u << 20, 1u << 30);
        std::uniform_int_distribution<uint64_t> gap(1500, 2500);
        for (int i = 0; i < cfg.scan_probes; ++i) {
            Endpoint probe_src = attacker;
            probe_src.port = static_cast<uint16_t>(40000 + (i % 2000));
            Endpoint target = victim;
            target.port = static_cast<uint16_t>(1 + (i % 65535));
            packets.push_back({fb.tcp(probe_src, target, kSyn | kFin, isn(rng), 0, "", 62), false});
            fb.advance(gap(rng));
        }
        fb.advance(3 * 1000000ull);  // short pause before the session
    }

    // 2. FTP attack session ending in the variant probes.
    if (attack && cfg.session_commands > 0) {
        std::uniform_int_distribution<uint32_t> isn(1u << 20, 1u << 30);
        Endpoint client = attacker;
        client.port = 3432;
        client.seq = isn(rng);
        Endpoint server = victim;
        server.seq = isn(rng);
        std::vector<std::string> probes;
        for (int i = 0; i < cfg.variant_probes; ++i) {
            std::string p = "SITE EXEC ";
            for (int j = 0; j < 12; ++j)
                p += "%p";
            p += "\n";
            probes.push_back(p);
        }
        ftp_session(fb, packets, client, server, cfg.session_commands, probes, 150000, rng, 62);
        fb.advance(2 * 1000000ull);
    }

    // 3. Rootkit upload to the backdoor port.
    if (attack && cfg.session_commands > 0) {
        std::uniform_int_distribution<uint32_t> isn(1u << 20, 1u << 30);
        Endpoint client = attacker;
        client.port = 3433;
        Endpoint door = victim;
        door.port = cfg.backdoor_port;
        uint32_t cseq = isn(rng), sseq = isn(rng);
        auto emit = [&](const Endpoint& from, const Endpoint& to, uint8_t flags, uint32_t seq,
                        uint32_t ack, const std::string& payload) {
            packets.push_back(
                {fb.tcp(from, to, flags, seq, ack, payload,
                        from.ip.value == cfg.attacker.value ? 62 : 64),
                 false});
            fb.advance(30000);
        };
        emit(client, door, kSyn, cseq, 0, "");
        ++cseq;
        emit(door, client, kSyn | kAck, sseq, cseq, "");
        ++sseq;
        emit(client, door, kAck, cseq, sseq, "");
        std::string marker = "STOR rootkit.tar.gz\n";
        emit(client, door, kPsh | kAck, cseq, sseq, marker);
        cseq += static_cast<uint32_t>(marker.size());
        std::uniform_int_distribution<int> letter(0, 15);
        for (int i = 0; i < cfg.rootkit_data_packets; ++i) {
            std::string block;
            for (int j = 0; j < 512; ++j)
                block.push_back(static_cast<char>('a' + letter(rng)));
            emit(client, door, kPsh | kAck, cseq, sseq, block);
            cseq += static_cast<uint32_t>(block.size());
        }
        emit(client, door, kFin | kAck, cseq, sseq, "");
        ++cseq;
        emit(door, client, kAck, sseq, cseq, "");
        emit(door, client, kFin | kAck, sseq, cseq, "");
        ++sseq;
        emit(client, door, kAck, cseq, sseq, "");
    }

    // 4. Benign background FTP sessions spread over their own span.
    if (cfg.background_sessions > 0) {
        uint64_t stride = cfg.background_span_usec /
                          static_cast<uint64_t>(std::max(1, cfg.background_sessions));
        for (int s = 0; s < cfg.background_sessions; ++s) {
            std::uniform_int_distribution<uint32_t> isn(1u << 20, 1u << 30);
            Endpoint client;
            if (s % 3 == 2) {  // every third client is external
                client.ip = Ipv4Addr{0xc6120000u + static_cast<uint32_t>(s)};  // 198.18.x.x
            } else {
                client.ip = Ipv4Addr{0x0a010132u + static_cast<uint32_t>(s % 100)};  // 10.1.1.50+
            }
            client.port = static_cast<uint16_t>(50000 + s);
            client.seq = isn(rng);
            client.mac = {0x02, 0, 0, 0x01, static_cast<uint8_t>(s >> 8),
                          static_cast<uint8_t>(s & 0xff)};
            Endpoint server = victim;
            server.seq = isn(rng);
            fb.set_ts(cfg.start_ts_usec + stride * static_cast<uint64_t>(s));
            uint8_t ttl = s % 3 == 2 ? 58 : 64;
            ftp_session(fb, packets, client, server, cfg.background_commands, {}, 90000, rng,
                        ttl);
        }
    }

    // Assemble the trace in timestamp order (generation order breaks ties).
    std::stable_sort(packets.begin(), packets.end(), [](const Tagged& a, const Tagged& b) {
        uint64_t ta = static_cast<uint64_t>(a.rec.ts_sec) * 1000000ull + a.rec.ts_usec;
        uint64_t tb = static_cast<uint64_t>(b.rec.ts_sec) * 1000000ull + b.rec.ts_usec;
        return ta < tb;
    });

    SynthResult result;
    result.trace.link_type = 1;
    for (uint32_t i = 0; i < packets.size(); ++i) {
        packets[i].rec.index = i;
        if (packets[i].variant)
            result.true_positive_indices.push_back(i);
        const auto& bytes = packets[i].rec.bytes;
        // dst ip at 14+16, tcp dstport at 34 for our 20-byte IP headers
        if (bytes.size() >= 38) {
            uint32_t dst = (static_cast<uint32_t>(bytes[30]) << 24) |
                           (static_cast<uint32_t>(bytes[31]) << 16) |
                           (static_cast<uint32_t>(bytes[32]) << 8) | bytes[33];
            uint16_t dport = static_cast<uint16_t>((bytes[36] << 8) | bytes[37]);
            if (dst == cfg.victim.value && dport == cfg.ftp_port && bytes[23] == 6)
                ++result.packets_to_victim_ftp;
        }
        result.trace.records.push_back(std::move(packets[i].rec));
    }
    return result;
}

}  // namespace dendrite
