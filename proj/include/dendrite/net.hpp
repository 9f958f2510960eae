// Small IPv4 address / CIDR helpers shared by the rule engine, the
// correlation graph and the trace synthesizer.
#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

namespace dendrite {

// IPv4 address held in host byte order so arithmetic and prefix masks are
// straightforward; converted to network order only at the wire.
struct Ipv4Addr {
    uint32_t value = 0;

    auto operator<=>(const Ipv4Addr&) const = default;
};

// Dotted-quad parse/format. parse returns nullopt on malformed input.
std::optional<Ipv4Addr> parse_ipv4(const std::string& text);
std::string format_ipv4(Ipv4Addr addr);

// A network block "a.b.c.d/len". A /32 (the default) is a single host.
struct CidrBlock {
    Ipv4Addr base;
    int prefix_len = 32;

    bool contains(Ipv4Addr addr) const;

    auto operator<=>(const CidrBlock&) const = default;
};

// Parses "10.1.1.0/24" or a bare address (treated as /32).
std::optional<CidrBlock> parse_cidr(const std::string& text);
std::string format_cidr(const CidrBlock& block);

}  // namespace dendrite
