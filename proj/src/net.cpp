#include "dendrite/net.hpp"

#include <cstdio>

namespace dendrite {

std::optional<Ipv4Addr> parse_ipv4(const std::string& text) {
    unsigned a = 0, b = 0, c = 0, d = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4)
        return std::nullopt;
    if (a > 255 || b > 255 || c > 255 || d > 255)
        return std::nullopt;
    return Ipv4Addr{(a << 24) | (b << 16) | (c << 8) | d};
}

std::string format_ipv4(Ipv4Addr addr) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (addr.value >> 24) & 0xff,
                  (addr.value >> 16) & 0xff, (addr.value >> 8) & 0xff, addr.value & 0xff);
    return buf;
}

static uint32_t prefix_mask(int len) {
    if (len <= 0)
        return 0;
    if (len >= 32)
        return 0xffffffffu;
    return 0xffffffffu << (32 - len);
}

bool CidrBlock::contains(Ipv4Addr addr) const {
    uint32_t mask = prefix_mask(prefix_len);
    return (addr.value & mask) == (base.value & mask);
}

std::optional<CidrBlock> parse_cidr(const std::string& text) {
    std::string addr_part = text;
    int len = 32;
    auto slash = text.find('/');
    if (slash != std::string::npos) {
        addr_part = text.substr(0, slash);
        std::string len_part = text.substr(slash + 1);
        if (len_part.empty() || len_part.size() > 2)
            return std::nullopt;
        for (char ch : len_part)
            if (ch < '0' || ch > '9')
                return std::nullopt;
        len = std::stoi(len_part);
        if (len < 0 || len > 32)
            return std::nullopt;
    }
    auto addr = parse_ipv4(addr_part);
    if (!addr)
        return std::nullopt;
    return CidrBlock{*addr, len};
}

std::string format_cidr(const CidrBlock& block) {
    if (block.prefix_len == 32)
        return format_ipv4(block.base);
    return format_ipv4(block.base) + "/" + std::to_string(block.prefix_len);
}

}  // namespace dendrite
