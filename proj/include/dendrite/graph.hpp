// Attack-graph template and the runtime correlation graph built from alerts.
//
// The template is a bipartite DAG of exploit and condition vertices: "pre"
// edges lead from a condition to the exploits needing it, "post" edges from
// an exploit to the conditions it establishes. Alerts instantiate exploit
// vertices per (source-or-unknown, destination) host pair; condition
// instances live at the destination host they describe. Vertices hold one of
// three states — REAL (alerted), HYP (assumed to have happened so that an
// observed alert has its prerequisites), PRED (all prerequisites true, attack
// expected next) — and a PRED vertex can retire as REDUNDANT when everything
// it would establish has come true through other parents.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dendrite/net.hpp"

namespace dendrite {

struct ExploitMap;  // rules.hpp

// --- errors -----------------------------------------------------------------

class GraphParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DanglingEdgeError : public GraphParseError {
  public:
    using GraphParseError::GraphParseError;
};

class CycleError : public GraphParseError {
  public:
    using GraphParseError::GraphParseError;
};

class OutOfOrderAlertError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class UnknownVertexError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// --- template definition ------------------------------------------------------

struct ExploitDef {
    std::string id;
    std::string vuln;
    uint16_t port = 0;              // service port the exploit targets
    std::vector<std::string> refs;  // normalized scheme-id references

    std::vector<size_t> pre_conditions;   // indexes into GraphDef::conditions
    std::vector<size_t> post_conditions;
};

struct ConditionDef {
    std::string id;
    std::string label;
    bool initially_true = false;

    std::vector<size_t> consumers;  // exploits with a pre edge from this condition
    std::vector<size_t> suppliers;  // exploits with a post edge to this condition
};

struct GraphDef {
    std::vector<ExploitDef> exploits;
    std::vector<ConditionDef> conditions;
    std::map<int, std::string> sig_pins;  // sid -> exploit id ("sigmap" lines)

    const ExploitDef* find_exploit(const std::string& id) const;
    const ConditionDef* find_condition(const std::string& id) const;
    std::optional<size_t> exploit_index(const std::string& id) const;
    std::optional<size_t> condition_index(const std::string& id) const;
};

// Parses the line-oriented graph definition format:
//   exploit <id> vuln=<name> port=<int> [refs=<comma-list>]
//   condition <id> label="<text>" [initial=true]
//   pre <condition-id> -> <exploit-id>
//   post <exploit-id> -> <condition-id>
//   sigmap <sid> -> <exploit-id>
// Validates unique ids, edge endpoints (DanglingEdgeError) and acyclicity
// (CycleError).
GraphDef load_graph_def(const std::string& text);

// --- runtime graph -------------------------------------------------------------

enum class VertexState { Real, Hyp, Pred };

// What a vertex became in a state change; Redundant only ever appears here
// (the vertex retires in the same step).
enum class ChangeKind { Real, Hyp, Pred, Redundant };

const char* to_string(VertexState s);
const char* to_string(ChangeKind k);

struct Alert {
    uint64_t ts_usec = 0;  // microseconds since epoch
    int sid = 0;
    Ipv4Addr src;
    uint16_t srcport = 0;
    Ipv4Addr dst;
    uint16_t dstport = 0;
    std::optional<uint32_t> packet_index;  // set when generated inline from a trace
};

using VertexId = uint32_t;

struct ExploitVertex {
    VertexId id = 0;
    std::string def_id;
    std::optional<Ipv4Addr> src;      // unknown for predicted / hypothesised vertices
    Ipv4Addr dst;
    std::optional<uint16_t> srcport;
    uint16_t dstport = 0;
    VertexState state = VertexState::Pred;
    uint64_t created_ts = 0;
    bool retired = false;
};

struct ConditionInstance {
    std::string def_id;
    Ipv4Addr host;
    bool value = false;
};

struct StateChange {
    VertexId vertex = 0;
    ExploitVertex snapshot;                 // vertex as of just after the change
    std::optional<VertexState> old_state;   // nullopt for newly created vertices
    ChangeKind new_state = ChangeKind::Real;
    Alert cause;
};

// One connected component of the live instance graph: a threat scenario.
struct Scenario {
    int id = 0;
    std::vector<VertexId> vertices;                       // sorted
    std::vector<std::pair<std::string, Ipv4Addr>> conditions;  // (def id, host)
};

class CorrelationGraph {
  public:
    explicit CorrelationGraph(const GraphDef& def) : def_(&def) {}

    // Applies one alert. Alerts must arrive in non-decreasing timestamp
    // order (OutOfOrderAlertError otherwise). Alerts whose sid is not in the
    // map change nothing and return an empty list.
    std::vector<StateChange> ingest_alert(const Alert& a, const ExploitMap& m);

    // Current state of a live vertex; UnknownVertexError for ids never
    // issued or already retired.
    VertexState vertex_state(VertexId v) const;

    // Truth of a condition at a host. Falls back to the template's
    // initially_true when no instance exists. UnknownVertexError for
    // condition ids absent from the template.
    bool condition_val(const std::string& condition_id, Ipv4Addr host) const;

    // Weakly-connected components of the live instance graph, ids numbered
    // 1..k in creation order of their earliest vertex.
    std::vector<Scenario> scenarios() const;

    // Scenario id containing the given vertex (0 if retired/absent).
    int scenario_of(VertexId v) const;

    const std::vector<ExploitVertex>& vertices() const { return vertices_; }
    const std::vector<ConditionInstance>& conditions() const { return conditions_; }
    const GraphDef& def() const { return *def_; }

  private:
    ExploitVertex* find_vertex(const std::string& def_id, std::optional<Ipv4Addr> src,
                               Ipv4Addr dst);
    ExploitVertex* find_vertex_any_src(const std::string& def_id, Ipv4Addr dst);
    ConditionInstance* find_condition(const std::string& def_id, Ipv4Addr host);
    bool condition_true(size_t cond_index, Ipv4Addr host) const;
    void set_condition(size_t cond_index, Ipv4Addr host);
    ExploitVertex& create_vertex(const ExploitDef& def, std::optional<Ipv4Addr> src,
                                 std::optional<uint16_t> srcport, Ipv4Addr dst,
                                 uint16_t dstport, VertexState state, uint64_t ts);
    void emit(std::vector<StateChange>& out, const ExploitVertex& v,
              std::optional<VertexState> old_state, ChangeKind now, const Alert& cause);
    // Makes ed's prerequisites at h true, hypothesising missing predecessors
    // (recursively, so every assumed exploit is itself explained).
    void ensure_prereqs(const ExploitDef& ed, Ipv4Addr h, const Alert& cause,
                        std::vector<StateChange>& out);
    void set_consequences(ExploitVertex& v);
    // Retires PRED vertices at h that supply cond and whose every consequence
    // is now true.
    void check_redundancy(size_t cond_index, Ipv4Addr h, const Alert& cause,
                          std::vector<StateChange>& out);
    void predict(const Alert& cause, std::vector<StateChange>& out);

    const GraphDef* def_;
    std::vector<ExploitVertex> vertices_;
    std::vector<ConditionInstance> conditions_;
    // conditions flipped true by the alert being ingested; the redundancy
    // pass runs over these after prediction, mirroring the step order
    // create/upgrade -> hypothesise -> consequences -> predict -> retire
    std::vector<std::pair<size_t, Ipv4Addr>> flipped_;
    uint64_t last_ts_ = 0;
    bool saw_alert_ = false;
};

}  // namespace dendrite
