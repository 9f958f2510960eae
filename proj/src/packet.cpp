#include "dendrite/packet.hpp"

#include <algorithm>

namespace dendrite {

const std::array<FeatureId, kFeatureCount>& feature_catalog() {
    // Layer order: Ethernet, IPv4, then the transport alternatives in the
    // order they are reached from the IP header. Within a layer, fields are
    // listed by their byte offset in the protocol header.
    static const std::array<FeatureId, kFeatureCount> catalog = {{
        {0, "eth.type"},      // Ethernet offset 12
        {1, "ip.len"},        // IPv4 offset 2 (total length)
        {2, "ip.ttl"},        // IPv4 offset 8
        {3, "ip.proto"},      // IPv4 offset 9
        {4, "ip.src"},        // IPv4 offset 12
        {5, "ip.dst"},        // IPv4 offset 16
        {6, "tcp.srcport"},   // TCP offset 0
        {7, "tcp.dstport"},   // TCP offset 2
        {8, "tcp.seq"},       // TCP offset 4
        {9, "tcp.flags"},     // TCP offset 13
        {10, "tcp.payload"},  // TCP after the header
        {11, "udp.srcport"},  // UDP offset 0
        {12, "udp.dstport"},  // UDP offset 2
        {13, "udp.payload"},  // UDP after the header
        {14, "icmp.type"},    // ICMP offset 0
        {15, "icmp.code"},    // ICMP offset 1
    }};
    return catalog;
}

Feature feature_by_name(std::string_view name) {
    for (const auto& f : feature_catalog())
        if (f.name == name)
            return static_cast<Feature>(f.id);
    throw std::out_of_range("unknown feature: " + std::string(name));
}

namespace {

uint16_t read_be16(const uint8_t* p) {
    return static_cast<uint16_t>((p[0] << 8) | p[1]);
}

uint32_t read_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

[[noreturn]] void truncated(const char* where) {
    throw DecodeError(DecodeError::Kind::TruncatedPacket,
                      std::string("truncated packet: ") + where);
}

void set(Antigen& a, Feature f, FeatureValue v) {
    a.values[static_cast<size_t>(f)] = std::move(v);
}

}  // namespace

Antigen decode_packet(const PacketRecord& rec) {
    if (rec.link_type != 1)
        throw DecodeError(DecodeError::Kind::UnsupportedLinkType,
                          "unsupported link type " + std::to_string(rec.link_type));

    Antigen a;
    a.source = PacketRef{rec.index, rec.ts_sec, rec.ts_usec};

    const uint8_t* p = rec.bytes.data();
    size_t n = rec.bytes.size();
    if (n < 14)
        truncated("ethernet header");
    uint16_t ethertype = read_be16(p + 12);
    set(a, Feature::EthType, FeatureValue::integer(ethertype));
    if (ethertype != 0x0800)
        return a;  // non-IPv4: everything above stays Wildcard

    const uint8_t* ip = p + 14;
    size_t ip_avail = n - 14;
    if (ip_avail < 20)
        truncated("ipv4 header");
    if ((ip[0] >> 4) != 4)
        return a;  // ethertype said IPv4 but the header disagrees; leave Wildcards
    size_t ihl = static_cast<size_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20 || ip_avail < ihl)
        truncated("ipv4 options");

    uint16_t total_len = read_be16(ip + 2);
    uint8_t ttl = ip[8];
    uint8_t proto = ip[9];
    set(a, Feature::IpLen, FeatureValue::integer(total_len));
    set(a, Feature::IpTtl, FeatureValue::integer(ttl));
    set(a, Feature::IpProto, FeatureValue::integer(proto));
    set(a, Feature::IpSrc, FeatureValue::integer(read_be32(ip + 12)));
    set(a, Feature::IpDst, FeatureValue::integer(read_be32(ip + 16)));

    // Fragments other than a lone first fragment carry no parseable
    // transport header; reassembly is out of scope, so leave L4 Wildcard.
    uint16_t frag = read_be16(ip + 6);
    bool more_fragments = (frag & 0x2000) != 0;
    uint16_t frag_offset = frag & 0x1fff;
    if (frag_offset != 0 || more_fragments)
        return a;

    // The IP datagram may be shorter than the captured frame (Ethernet
    // padding); payload extraction must not run past total_len.
    size_t ip_end = std::min<size_t>(ip_avail, total_len);
    if (ip_end < ihl)
        truncated("ipv4 total length");
    const uint8_t* l4 = ip + ihl;
    size_t l4_avail = ip_end - ihl;

    switch (proto) {
    case 6: {  // TCP
        if (l4_avail < 20)
            truncated("tcp header");
        size_t doff = static_cast<size_t>(l4[12] >> 4) * 4;
        if (doff < 20 || l4_avail < doff)
            truncated("tcp options");
        set(a, Feature::TcpSrcPort, FeatureValue::integer(read_be16(l4)));
        set(a, Feature::TcpDstPort, FeatureValue::integer(read_be16(l4 + 2)));
        set(a, Feature::TcpSeq, FeatureValue::integer(read_be32(l4 + 4)));
        set(a, Feature::TcpFlags, FeatureValue::integer(l4[13]));
        set(a, Feature::TcpPayload,
            FeatureValue::octets({l4 + doff, l4 + l4_avail}));
        break;
    }
    case 17: {  // UDP
        if (l4_avail < 8)
            truncated("udp header");
        set(a, Feature::UdpSrcPort, FeatureValue::integer(read_be16(l4)));
        set(a, Feature::UdpDstPort, FeatureValue::integer(read_be16(l4 + 2)));
        set(a, Feature::UdpPayload, FeatureValue::octets({l4 + 8, l4 + l4_avail}));
        break;
    }
    case 1: {  // ICMP
        if (l4_avail < 4)
            truncated("icmp header");
        set(a, Feature::IcmpType, FeatureValue::integer(l4[0]));
        set(a, Feature::IcmpCode, FeatureValue::integer(l4[1]));
        break;
    }
    default:
        break;  // other IP protocols: transport features stay Wildcard
    }
    return a;
}

}  // namespace dendrite
