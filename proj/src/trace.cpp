#include "dendrite/trace.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace dendrite {

namespace {

constexpr uint32_t kMagicLe = 0xa1b2c3d4;  // host wrote our byte order
constexpr uint32_t kMagicBe = 0xd4c3b2a1;  // opposite byte order

uint32_t swap32(uint32_t v) {
    return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
}

uint16_t swap16(uint16_t v) {
    return static_cast<uint16_t>((v << 8) | (v >> 8));
}

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;
    bool swapped = false;

    bool need(size_t n) const { return pos + n <= bytes.size(); }

    uint32_t u32() {
        uint32_t v;
        std::memcpy(&v, bytes.data() + pos, 4);
        pos += 4;
        return swapped ? swap32(v) : v;
    }

    uint16_t u16() {
        uint16_t v;
        std::memcpy(&v, bytes.data() + pos, 2);
        pos += 2;
        return swapped ? swap16(v) : v;
    }
};

void put32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

void put16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

}  // namespace

Trace parse_pcap(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    if (!r.need(4))
        throw TruncatedFileError("file too short for pcap magic");
    uint32_t magic = r.u32();
    if (magic == kMagicBe) {
        r.swapped = true;
    } else if (magic != kMagicLe) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        throw BadMagicError(std::string("bad pcap magic ") + buf);
    }
    if (!r.need(20))
        throw TruncatedFileError("truncated pcap global header");
    r.u16();  // version major
    r.u16();  // version minor
    r.u32();  // thiszone
    r.u32();  // sigfigs
    r.u32();  // snaplen
    Trace trace;
    trace.link_type = r.u32();

    uint32_t index = 0;
    while (r.pos < bytes.size()) {
        if (!r.need(16))
            throw TruncatedFileError("truncated pcap record header");
        PacketRecord rec;
        rec.index = index++;
        rec.ts_sec = r.u32();
        rec.ts_usec = r.u32();
        uint32_t incl_len = r.u32();
        r.u32();  // orig_len
        if (!r.need(incl_len))
            throw TruncatedFileError("truncated pcap record body");
        rec.link_type = trace.link_type;
        rec.bytes.assign(bytes.begin() + static_cast<long>(r.pos),
                         bytes.begin() + static_cast<long>(r.pos + incl_len));
        r.pos += incl_len;
        trace.records.push_back(std::move(rec));
    }
    return trace;
}

std::vector<uint8_t> serialize_pcap(const Trace& trace) {
    std::vector<uint8_t> out;
    put32(out, kMagicLe);
    put16(out, 2);  // version 2.4
    put16(out, 4);
    put32(out, 0);      // thiszone
    put32(out, 0);      // sigfigs
    put32(out, 65535);  // snaplen
    put32(out, trace.link_type);
    for (const auto& rec : trace.records) {
        put32(out, rec.ts_sec);
        put32(out, rec.ts_usec);
        put32(out, static_cast<uint32_t>(rec.bytes.size()));
        put32(out, static_cast<uint32_t>(rec.bytes.size()));
        out.insert(out.end(), rec.bytes.begin(), rec.bytes.end());
    }
    return out;
}

Trace read_pcap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw TruncatedFileError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_pcap(bytes);
}

void write_pcap(const std::string& path, const Trace& trace) {
    std::vector<uint8_t> bytes = serialize_pcap(trace);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw TruncatedFileError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
}

namespace {

uint64_t ts_of(const PacketRecord& rec) {
    return static_cast<uint64_t>(rec.ts_sec) * 1000000ull + rec.ts_usec;
}

void set_ts(PacketRecord& rec, uint64_t usec) {
    rec.ts_sec = static_cast<uint32_t>(usec / 1000000ull);
    rec.ts_usec = static_cast<uint32_t>(usec % 1000000ull);
}

}  // namespace

MergeResult merge_traces(const Trace& base, const Trace& attack) {
    if (base.records.empty())
        throw EmptyTraceError("base trace is empty");
    if (attack.records.empty())
        throw EmptyTraceError("attack trace is empty");

    int64_t shift = static_cast<int64_t>(ts_of(base.records.front())) -
                    static_cast<int64_t>(ts_of(attack.records.front()));

    struct Item {
        uint64_t ts;
        int source;  // 0 = base, 1 = attack (base wins ties)
        uint32_t original;
        const PacketRecord* rec;
    };
    std::vector<Item> items;
    items.reserve(base.records.size() + attack.records.size());
    for (uint32_t i = 0; i < base.records.size(); ++i)
        items.push_back({ts_of(base.records[i]), 0, i, &base.records[i]});
    for (uint32_t i = 0; i < attack.records.size(); ++i) {
        uint64_t ts = static_cast<uint64_t>(static_cast<int64_t>(ts_of(attack.records[i])) + shift);
        items.push_back({ts, 1, i, &attack.records[i]});
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.ts != b.ts)
            return a.ts < b.ts;
        if (a.source != b.source)
            return a.source < b.source;
        return a.original < b.original;
    });

    MergeResult result;
    result.merged.link_type = base.link_type;
    result.attack_index_map.resize(attack.records.size());
    for (uint32_t i = 0; i < items.size(); ++i) {
        PacketRecord rec = *items[i].rec;
        rec.index = i;
        set_ts(rec, items[i].ts);
        if (items[i].source == 1)
            result.attack_index_map[items[i].original] = i;
        result.merged.records.push_back(std::move(rec));
    }
    return result;
}

}  // namespace dendrite
