// Classic pcap (microsecond, v2.4) reading and writing, trace merging, and
// the deterministic scenario synthesizer used for end-to-end exercises.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dendrite/net.hpp"
#include "dendrite/packet.hpp"

namespace dendrite {

// --- errors -----------------------------------------------------------------

class BadMagicError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class TruncatedFileError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class EmptyTraceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// --- traces -------------------------------------------------------------------

struct Trace {
    uint32_t link_type = 1;
    std::vector<PacketRecord> records;  // non-decreasing timestamps
};

// Reads a classic (non-ng) pcap file, either byte order, microsecond
// timestamps. BadMagicError for unknown magic, TruncatedFileError when the
// header or a record runs past end of file.
Trace read_pcap(const std::string& path);

// Writes canonical little-endian classic pcap. write(read(f)) is
// byte-identical for files this writer produced.
void write_pcap(const std::string& path, const Trace& trace);

// In-memory variants used by tests.
Trace parse_pcap(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> serialize_pcap(const Trace& trace);

// Overlays an attack trace onto a base trace: attack timestamps are shifted
// by (base start - attack start) so both begin together, then records are
// interleaved in timestamp order; ties keep base records first, preserving
// original order within each input. Both traces must be non-empty.
// Returns the merged trace plus, for each attack record, its index in the
// merged trace (so ground-truth labels can be carried over).
struct MergeResult {
    Trace merged;
    std::vector<uint32_t> attack_index_map;
};
MergeResult merge_traces(const Trace& base, const Trace& attack);

// --- scenario synthesis -----------------------------------------------------------

// Knobs for the synthetic scenario. The defaults produce the quiescent
// attack trace: a port scan, one FTP control session that ends in a
// format-string variant probe, and a rootkit upload to a backdoor port —
// roughly 3,000 packets of which the packets to victim:21 are about 30%.
struct ScenarioConfig {
    uint64_t seed = 1;
    uint64_t start_ts_usec = 1768435200ull * 1000000ull;  // 2026-01-15 00:00:00 UTC

    Ipv4Addr attacker{0xac100909};  // 172.16.9.9
    Ipv4Addr victim{0x0a010105};    // 10.1.1.5
    uint16_t ftp_port = 21;
    uint16_t backdoor_port = 3879;

    // Attack content (all suppressed when scan_probes and session_commands
    // are both zero).
    int scan_probes = 1150;       // SYN+FIN probes across ports 1..N
    int session_commands = 880;   // benign control commands before the variant
    int variant_probes = 1;       // trailing "SITE EXEC %p..." packets
    int rootkit_data_packets = 24;

    // Background FTP sessions to victim:21 (other clients, no attacks).
    int background_sessions = 0;
    int background_commands = 160;           // commands per background session
    uint64_t background_span_usec = 1400ull * 1000000ull;  // sessions spread over this window
};

struct SynthResult {
    Trace trace;
    std::vector<uint32_t> true_positive_indices;  // the variant packets
    uint32_t packets_to_victim_ftp = 0;           // dst == victim && dstport == 21
};

// Deterministic for a given config (same seed, byte-identical trace).
SynthResult synth_scenario(const ScenarioConfig& cfg);

}  // namespace dendrite
