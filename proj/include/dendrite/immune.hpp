// Innate-layer glue between the correlation graph and the variant selector.
//
// Every predicted exploit vertex gets one dendritic cell that collects, as
// antigen, the packets aimed at the predicted destination and service port.
// The vertex's next state transition becomes the cell's maturation signal:
// prediction confirmed as a hypothesised stepping stone (PAMP), confirmed
// directly by an alert (DANGER), or made redundant (SAFE). Only a PAMP
// migration presents its antigen for T-cell selection, which keeps packets
// whose best partial match against the exploit's own signatures clears a
// threshold without being a full (already-known) match.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dendrite/graph.hpp"
#include "dendrite/packet.hpp"
#include "dendrite/rules.hpp"

namespace dendrite {

// --- errors -----------------------------------------------------------------

class NotPredictedError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class AlreadyMigratedError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NotDcRelevantError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// --- types ------------------------------------------------------------------

enum class Signal { Pamp, Danger, Safe };

const char* to_string(Signal s);

struct CaptureFilter {
    Ipv4Addr dst;
    uint16_t dstport = 0;

    bool matches(const Antigen& a) const;
};

struct DendriticCell {
    VertexId vertex = 0;
    std::string exploit_id;
    ExploitVertex vertex_snapshot;  // as of spawn time
    CaptureFilter filter;
    size_t capacity = 0;
    std::vector<Antigen> antigen;
    uint64_t overflow = 0;          // packets dropped once full
    bool migrated = false;
    std::optional<Signal> signal;   // set at migration
};

// Antigen and context handed to selection when a cell migrates on PAMP.
struct Presentation {
    std::string exploit_id;
    Signal signal = Signal::Pamp;
    ExploitVertex vertex;
    std::vector<Antigen> antigen;
    uint64_t overflow = 0;
};

struct Candidate {
    PacketRef packet;
    int best_sid = 0;
    double score = 0.0;  // in [tau, 1)
};

struct CandidateReport {
    std::string exploit_id;
    int cluster_id = 0;  // scenario id of the cell's vertex; pipeline fills it
    double tau = 0.0;
    bool no_candidate_signatures = false;  // exploit had no mapped signatures
    std::vector<Candidate> candidates;
};

// --- operations ---------------------------------------------------------------

// Binds a new immature cell to a predicted vertex. NotPredictedError unless
// the vertex is live and in PRED.
DendriticCell spawn_dc(const CorrelationGraph& g, VertexId vertex, size_t capacity);

// Offers one packet. Returns true when stored; false when the filter does not
// match or the cell is full (the latter also bumps overflow). Cells that have
// migrated no longer capture.
bool dc_capture(DendriticCell& dc, const Antigen& a);

// Maps a state change of the bound vertex to a maturation signal. Only the
// three PRED-origin transitions are signal-relevant; anything else raises
// NotDcRelevantError.
Signal dc_signal(const StateChange& sc);

// Marks the cell migrated under the given signal. PAMP yields a Presentation;
// DANGER and SAFE discard the antigen (nullopt). AlreadyMigratedError on a
// second call.
std::optional<Presentation> migrate(DendriticCell& dc, Signal s);

// Scores every presented antigen against the signatures mapped to the
// presented exploit and keeps the ones whose best score lies in [tau, 1):
// close to a known signature, but not equal to it. tau must be in (0,1).
// When the exploit has no mapped signatures the report is empty and flagged.
CandidateReport tcell_select(const Presentation& p, const RuleSet& rs, const ExploitMap& m,
                             double tau);

// --- population bookkeeping -----------------------------------------------------

// One cell per live PRED vertex, driven by the state changes coming out of
// ingest_alert.
class DcPopulation {
  public:
    explicit DcPopulation(size_t capacity) : capacity_(capacity) {}

    // Handles one state change: spawns on none->PRED, signals and migrates on
    // PRED->{REAL,HYP,REDUNDANT}. Returns a Presentation for PAMP migrations.
    std::optional<Presentation> on_state_change(const CorrelationGraph& g, const StateChange& sc);

    // Offers a packet to every live immature cell (in spawn order).
    void offer(const Antigen& a);

    // Cells that never migrated (still immature at end of trace).
    std::vector<const DendriticCell*> unresolved() const;

    const std::vector<DendriticCell>& cells() const { return cells_; }
    std::vector<DendriticCell>& cells() { return cells_; }

    uint64_t total_antigen() const;  // stored + overflow across all cells

  private:
    size_t capacity_;
    std::vector<DendriticCell> cells_;
    std::map<VertexId, size_t> by_vertex_;
};

}  // namespace dendrite
