// Shared builders for unit and acceptance tests: hand-assembled antigens and
// random rule/antigen generators for the scoring property checks.
#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dendrite/packet.hpp"
#include "dendrite/rules.hpp"

namespace testutil {

using namespace dendrite;

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void set_int(Antigen& a, Feature f, uint64_t v) {
    a.values[static_cast<size_t>(f)] = FeatureValue::integer(v);
}

inline void set_bytes(Antigen& a, Feature f, const std::string& s) {
    a.values[static_cast<size_t>(f)] = FeatureValue::octets({s.begin(), s.end()});
}

inline Antigen tcp_antigen(uint32_t src, uint32_t dst, uint16_t sport, uint16_t dport,
                           uint8_t flags, const std::string& payload, uint32_t index = 0) {
    Antigen a;
    a.source = PacketRef{index, 0, 0};
    set_int(a, Feature::EthType, 0x0800);
    set_int(a, Feature::IpLen, 40 + payload.size());
    set_int(a, Feature::IpTtl, 64);
    set_int(a, Feature::IpProto, 6);
    set_int(a, Feature::IpSrc, src);
    set_int(a, Feature::IpDst, dst);
    set_int(a, Feature::TcpSrcPort, sport);
    set_int(a, Feature::TcpDstPort, dport);
    set_int(a, Feature::TcpSeq, 1);
    set_int(a, Feature::TcpFlags, flags);
    set_bytes(a, Feature::TcpPayload, payload);
    return a;
}

inline Antigen udp_antigen(uint32_t src, uint32_t dst, uint16_t sport, uint16_t dport,
                           const std::string& payload, uint32_t index = 0) {
    Antigen a;
    a.source = PacketRef{index, 0, 0};
    set_int(a, Feature::EthType, 0x0800);
    set_int(a, Feature::IpLen, 28 + payload.size());
    set_int(a, Feature::IpTtl, 64);
    set_int(a, Feature::IpProto, 17);
    set_int(a, Feature::IpSrc, src);
    set_int(a, Feature::IpDst, dst);
    set_int(a, Feature::UdpSrcPort, sport);
    set_int(a, Feature::UdpDstPort, dport);
    set_bytes(a, Feature::UdpPayload, payload);
    return a;
}

inline Antigen icmp_antigen(uint32_t src, uint32_t dst, uint8_t type, uint8_t code) {
    Antigen a;
    set_int(a, Feature::EthType, 0x0800);
    set_int(a, Feature::IpLen, 28);
    set_int(a, Feature::IpTtl, 64);
    set_int(a, Feature::IpProto, 1);
    set_int(a, Feature::IpSrc, src);
    set_int(a, Feature::IpDst, dst);
    set_int(a, Feature::IcmpType, type);
    set_int(a, Feature::IcmpCode, code);
    return a;
}

constexpr uint32_t kHomeHost = 0x0a010105;    // 10.1.1.5
constexpr uint32_t kHomePeer = 0x0a010120;    // 10.1.1.32
constexpr uint32_t kOutside = 0xac100909;     // 172.16.9.9
constexpr uint32_t kOutsideB = 0xc6120007;    // 198.18.0.7

// Random rule within the supported grammar, at most 9 criteria.
inline std::string random_rule(std::mt19937& rng, int sid) {
    auto pick = [&](std::initializer_list<const char*> opts) {
        std::uniform_int_distribution<size_t> d(0, opts.size() - 1);
        return *(opts.begin() + d(rng));
    };
    std::string proto = pick({"tcp", "tcp", "tcp", "udp", "icmp"});
    std::string src_net =
        pick({"any", "$HOME_NET", "$EXTERNAL_NET", "10.0.0.0/8", "!10.1.1.0/24",
              "[10.1.1.0/24,172.16.0.0/12]"});
    std::string dst_net = pick({"any", "$HOME_NET", "10.1.1.0/24", "!172.16.0.0/12"});
    std::string src_port = proto == "icmp" ? "any" : pick({"any", "any", "1024:", "3432"});
    std::string dst_port = proto == "icmp" ? "any" : pick({"any", "21", "21:25", ":1023", "80"});

    std::string rule = "alert " + proto + " " + src_net + " " + src_port + " -> " + dst_net +
                       " " + dst_port + " (msg:\"generated " + std::to_string(sid) + "\"; ";
    if (proto == "tcp" && rng() % 2)
        rule += std::string("flow:") + pick({"to_server,established", "established"}) + "; ";
    if (proto != "icmp" && rng() % 2) {
        std::string content = pick({"SITE EXEC ", "USER ", "rootkit", "PASS", "|0d 0a|", "QUIT"});
        rule += "content:\"" + content + "\"; ";
        if (rng() % 3 == 0)
            rule += "nocase; ";
        if (rng() % 3 == 0)
            rule += "offset:" + std::to_string(rng() % 4) + "; ";
        if (rng() % 3 == 0)
            rule += "depth:" + std::to_string(24 + rng() % 16) + "; ";
    }
    if (proto != "icmp" && rng() % 3 == 0) {
        switch (rng() % 4) {
        case 0: rule += "dsize:0; "; break;
        case 1: rule += "dsize:>10; "; break;
        case 2: rule += "dsize:<64; "; break;
        default: rule += "dsize:4<>128; "; break;
        }
    }
    if (proto == "tcp" && rng() % 3 == 0)
        rule += std::string("flags:") + pick({"S", "SF,12", "+A", "*SA", "!S"}) + "; ";
    rule += "sid:" + std::to_string(sid) + ";)";
    return rule;
}

inline Antigen random_antigen(std::mt19937& rng) {
    auto ip = [&]() -> uint32_t {
        switch (rng() % 4) {
        case 0: return kHomeHost;
        case 1: return kHomePeer;
        case 2: return kOutside;
        default: return kOutsideB;
        }
    };
    auto port = [&]() -> uint16_t {
        switch (rng() % 5) {
        case 0: return 21;
        case 1: return 23;
        case 2: return 80;
        case 3: return 3432;
        default: return static_cast<uint16_t>(1024 + rng() % 60000);
        }
    };
    auto payload = [&]() -> std::string {
        switch (rng() % 6) {
        case 0: return "";
        case 1: return "SITE EXEC %020d|%.f%.f|\n";
        case 2: return "SITE EXEC %p%p%p%p\n";
        case 3: return "USER operator\r\n";
        case 4: return "site exec test\r\n";
        default: {
            std::string s;
            size_t n = rng() % 48;
            for (size_t i = 0; i < n; ++i)
                s.push_back(static_cast<char>('a' + rng() % 26));
            return s;
        }
        }
    };
    switch (rng() % 8) {
    case 0:
        return udp_antigen(ip(), ip(), port(), port(), payload());
    case 1:
        return icmp_antigen(ip(), ip(), static_cast<uint8_t>(rng() % 16),
                            static_cast<uint8_t>(rng() % 4));
    case 2: {
        Antigen a;  // non-IP frame: everything above layer 2 wildcard
        set_int(a, Feature::EthType, 0x0806);
        return a;
    }
    default: {
        uint8_t flags;
        switch (rng() % 6) {
        case 0: flags = 0x02; break;
        case 1: flags = 0x12; break;
        case 2: flags = 0x18; break;
        case 3: flags = 0x10; break;
        case 4: flags = 0x03; break;
        default: flags = 0x43; break;
        }
        return tcp_antigen(ip(), ip(), port(), port(), flags, payload());
    }
    }
}

}  // namespace testutil
