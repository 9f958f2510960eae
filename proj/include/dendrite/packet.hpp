// Packet decoding into fixed-shape antigen: every packet is reduced to one
// value per catalog feature, with Wildcard standing in for features whose
// protocol layer is absent. The catalog is ordered by protocol layer and,
// within a layer, by the field's byte offset in the header.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dendrite {

enum class Feature : uint16_t {
    EthType = 0,
    IpLen,
    IpTtl,
    IpProto,
    IpSrc,
    IpDst,
    TcpSrcPort,
    TcpDstPort,
    TcpSeq,
    TcpFlags,
    TcpPayload,
    UdpSrcPort,
    UdpDstPort,
    UdpPayload,
    IcmpType,
    IcmpCode,
};

inline constexpr size_t kFeatureCount = 16;

struct FeatureId {
    uint16_t id;
    std::string_view name;
};

// Catalog in canonical order; index in this list == FeatureId.id.
const std::array<FeatureId, kFeatureCount>& feature_catalog();

// Looks up a feature by its catalog name ("tcp.dstport"); throws
// std::out_of_range for names outside the catalog.
Feature feature_by_name(std::string_view name);

// Value of one feature: an unsigned integer (ports, addresses, flags...),
// a byte string (payloads), or Wildcard when the layer is absent.
struct FeatureValue {
    enum class Kind { Wildcard, Int, Bytes };

    Kind kind = Kind::Wildcard;
    uint64_t num = 0;
    std::vector<uint8_t> bytes;

    static FeatureValue wildcard() { return {}; }
    static FeatureValue integer(uint64_t v) { return {Kind::Int, v, {}}; }
    static FeatureValue octets(std::vector<uint8_t> b) { return {Kind::Bytes, 0, std::move(b)}; }

    bool is_wildcard() const { return kind == Kind::Wildcard; }

    bool operator==(const FeatureValue&) const = default;
};

// Provenance of an antigen: position and timestamp of the packet it came from.
struct PacketRef {
    uint32_t index = 0;  // record index within the trace
    uint32_t ts_sec = 0;
    uint32_t ts_usec = 0;

    bool operator==(const PacketRef&) const = default;
};

// One decoded packet: exactly one value per catalog feature, ordered by
// feature id, plus a reference to the source packet.
struct Antigen {
    std::array<FeatureValue, kFeatureCount> values;
    PacketRef source;
};

inline const FeatureValue& antigen_get(const Antigen& a, Feature f) {
    return a.values[static_cast<size_t>(f)];
}

// Raw capture record as stored in a trace.
struct PacketRecord {
    uint32_t index = 0;
    uint32_t ts_sec = 0;
    uint32_t ts_usec = 0;
    uint32_t link_type = 1;  // 1 = Ethernet, the only supported link type
    std::vector<uint8_t> bytes;
};

class DecodeError : public std::runtime_error {
  public:
    enum class Kind { TruncatedPacket, UnsupportedLinkType };

    DecodeError(Kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    Kind kind() const { return kind_; }

  private:
    Kind kind_;
};

// Decodes an Ethernet frame into an antigen. Non-IPv4 ethertypes and
// non-TCP/UDP/ICMP protocols are not errors: the missing layers simply stay
// Wildcard. Throws DecodeError when a declared header does not fit in the
// captured bytes or the link type is not Ethernet.
Antigen decode_packet(const PacketRecord& rec);

}  // namespace dendrite
