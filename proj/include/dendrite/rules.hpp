// Signature grammar and matcher for a small, classic subset of the Snort
// rule language:
//
//   alert <proto> <srcnet> <srcport> -> <dstnet> <dstport> ( options )
//
// with options msg, sid, reference, flow, content (|..| hex escapes plus the
// depth/offset/nocase modifiers), dsize and flags. Every non-"any" header
// constraint and every body option group is one matching criterion; content
// modifiers fold into their content criterion. partial_score reports the
// fraction of criteria a packet satisfies, which is what the variant
// selection stage thresholds on.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dendrite/net.hpp"
#include "dendrite/packet.hpp"

namespace dendrite {

struct GraphDef;  // defined in graph.hpp

// --- errors ---------------------------------------------------------------

// column is the 1-based position of the offending token; errors concerning
// the rule as a whole point at column 1.
class RuleSyntaxError : public std::runtime_error {
  public:
    RuleSyntaxError(int line, int column, const std::string& what)
        : std::runtime_error("rule syntax error at " + std::to_string(line) + ":" +
                             std::to_string(column) + ": " + what),
          line_(line),
          column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

  private:
    int line_;
    int column_;
};

// Raised for an option keyword outside the supported subset. File-level
// parsing treats this as "reject the rule, keep going".
class UnknownOptionError : public std::runtime_error {
  public:
    explicit UnknownOptionError(const std::string& keyword)
        : std::runtime_error("unknown rule option: " + keyword), keyword_(keyword) {}

    const std::string& keyword() const { return keyword_; }

  private:
    std::string keyword_;
};

class AmbiguousMappingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// --- criterion model --------------------------------------------------------

// Network side of a rule header: "any", a $VAR reference resolved at match
// time, or a literal CIDR list; each optionally negated with '!'.
struct NetSpec {
    enum class Kind { Any, Var, Blocks };

    Kind kind = Kind::Any;
    bool negate = false;
    std::string var;                 // for Kind::Var, without the '$'
    std::vector<CidrBlock> blocks;   // for Kind::Blocks

    bool operator==(const NetSpec&) const = default;
};

struct PortSpec {
    enum class Kind { Any, Single, Range };

    Kind kind = Kind::Any;
    uint16_t lo = 0;
    uint16_t hi = 0;  // inclusive; Range with lo==0 / hi==65535 expresses ":n" / "n:"

    bool matches(uint16_t port) const;

    bool operator==(const PortSpec&) const = default;
};

struct FlowParams {
    bool to_server = false;
    bool established = false;
    // The rule's own destination port side, kept here so the direction
    // approximation (dstport matches and ACK set) is self-contained.
    PortSpec dst_port;

    bool operator==(const FlowParams&) const = default;
};

struct ContentParams {
    std::vector<uint8_t> pattern;
    std::optional<int> offset;  // search start within the payload
    std::optional<int> depth;   // search window length from offset
    bool nocase = false;

    bool operator==(const ContentParams&) const = default;
};

struct DsizeParams {
    enum class Op { Eq, Lt, Gt, Between };

    Op op = Op::Eq;
    int lo = 0;
    int hi = 0;  // for Between: lo < size < hi, matching the n<>m syntax

    bool operator==(const DsizeParams&) const = default;
};

struct FlagsParams {
    enum class Mode { Exact, AllSet, AnySet, NotExact };

    Mode mode = Mode::Exact;
    uint8_t bits = 0;
    uint8_t ignore_mask = 0;  // bits excluded from the Exact comparison (",12")

    bool operator==(const FlagsParams&) const = default;
};

struct Criterion {
    enum class Kind { Proto, SrcNet, DstNet, SrcPort, DstPort, Flow, Content, Dsize, Flags };

    Kind kind = Kind::Proto;
    uint8_t rule_proto = 6;   // protocol of the owning rule; selects the
                              // transport features port/payload criteria read
    uint8_t proto = 0;        // Proto: IP protocol number
    NetSpec net;              // SrcNet / DstNet
    PortSpec port;            // SrcPort / DstPort
    FlowParams flow;          // Flow
    ContentParams content;    // Content
    DsizeParams dsize;        // Dsize
    FlagsParams flags;        // Flags

    bool operator==(const Criterion&) const = default;
};

struct Signature {
    int sid = 0;
    std::string msg;
    std::vector<std::string> refs;  // normalized "scheme-id", lowercase
    std::vector<Criterion> criteria;

    // Header fields preserved for serialization (criteria drop "any" parts).
    uint8_t proto = 6;
    NetSpec src_net, dst_net;
    PortSpec src_port, dst_port;
};

// Named nets from "var NAME value" lines, resolved to concrete blocks.
struct ResolvedNet {
    bool negate = false;
    bool any = false;
    std::vector<CidrBlock> blocks;
};
using NetVarTable = std::map<std::string, ResolvedNet>;

struct RuleSet {
    std::vector<Signature> signatures;
    std::map<int, size_t> by_sid;  // sid -> index into signatures
    NetVarTable net_vars;
    int rejected = 0;  // rules skipped over unknown options
    std::vector<std::string> warnings;

    const Signature* find(int sid) const;
};

// --- parsing ----------------------------------------------------------------

// Parses one rule line. Throws RuleSyntaxError / UnknownOptionError.
Signature parse_rule(const std::string& line, int line_no = 1);

// Parses a whole rules file: '#' comments, blank lines, "var NAME value"
// definitions, one rule per line. Unknown options reject the offending rule
// and parsing continues; syntax errors abort.
RuleSet parse_rules(const std::string& text);

// Canonical text for a signature; parse(serialize(s)) yields identical
// criteria.
std::string serialize_rule(const Signature& sig);

// Normalizes a reference ("CVE,2000-0573" or "cve-2000-0573") to the
// canonical lowercase "scheme-id" form used for exploit mapping.
std::string normalize_reference(const std::string& ref);

// --- evaluation ---------------------------------------------------------------

// True when the packet satisfies the criterion. A criterion that reads a
// Wildcard feature is false, whatever its polarity.
bool eval_criterion(const Criterion& c, const Antigen& a, const NetVarTable& vars);

// Number of criteria of s that a satisfies.
int match_count(const Signature& s, const Antigen& a, const NetVarTable& vars);

// All criteria satisfied (a full, known-signature match).
bool match_full(const Signature& s, const Antigen& a, const NetVarTable& vars);

// match_count / criteria count, in [0,1]. A signature with no criteria
// scores 0 by convention.
double partial_score(const Signature& s, const Antigen& a, const NetVarTable& vars);

// --- signature <-> exploit mapping -------------------------------------------

// Many-to-one map from signature ids to attack-graph exploit ids, with the
// set-valued inverse used to pick candidate signatures for a presented
// exploit.
struct ExploitMap {
    std::map<int, std::string> sig_to_exploit;
    std::map<std::string, std::set<int>> exploit_to_sigs;
};

// Maps each sid whose references intersect exactly one exploit's references;
// explicit sigmap pins in the graph definition win over reference
// intersection. A sid whose references intersect two or more exploits is an
// error (AmbiguousMappingError); a sid intersecting none is simply absent.
ExploitMap build_exploit_map(const RuleSet& rs, const GraphDef& def);

}  // namespace dendrite
