#include "dendrite/immune.hpp"

#include <algorithm>

namespace dendrite {

const char* to_string(Signal s) {
    switch (s) {
    case Signal::Pamp:
        return "PAMP";
    case Signal::Danger:
        return "DANGER";
    case Signal::Safe:
        return "SAFE";
    }
    return "?";
}

bool CaptureFilter::matches(const Antigen& a) const {
    const FeatureValue& ip_dst = antigen_get(a, Feature::IpDst);
    const FeatureValue& port = antigen_get(a, Feature::TcpDstPort);
    if (ip_dst.kind != FeatureValue::Kind::Int || port.kind != FeatureValue::Kind::Int)
        return false;
    return ip_dst.num == dst.value && port.num == dstport;
}

DendriticCell spawn_dc(const CorrelationGraph& g, VertexId vertex, size_t capacity) {
    VertexState state;
    try {
        state = g.vertex_state(vertex);
    } catch (const UnknownVertexError&) {
        throw NotPredictedError("vertex " + std::to_string(vertex) + " is not live");
    }
    if (state != VertexState::Pred)
        throw NotPredictedError("vertex " + std::to_string(vertex) + " is " + to_string(state) +
                                ", not PRED");
    const ExploitVertex& v = g.vertices()[vertex - 1];
    DendriticCell dc;
    dc.vertex = vertex;
    dc.exploit_id = v.def_id;
    dc.vertex_snapshot = v;
    dc.filter = CaptureFilter{v.dst, v.dstport};
    dc.capacity = capacity;
    return dc;
}

bool dc_capture(DendriticCell& dc, const Antigen& a) {
    if (dc.migrated || !dc.filter.matches(a))
        return false;
    if (dc.antigen.size() >= dc.capacity) {
        ++dc.overflow;
        return false;
    }
    dc.antigen.push_back(a);
    return true;
}

Signal dc_signal(const StateChange& sc) {
    if (sc.old_state != VertexState::Pred)
        throw NotDcRelevantError("state change does not leave PRED");
    switch (sc.new_state) {
    case ChangeKind::Hyp:
        // The prediction turned out to be a stepping stone of a later,
        // observed attack: the strongest evidence of something unseen.
        return Signal::Pamp;
    case ChangeKind::Real:
        // The predicted attack arrived and was recognised by a signature.
        return Signal::Danger;
    case ChangeKind::Redundant:
        return Signal::Safe;
    case ChangeKind::Pred:
        break;
    }
    throw NotDcRelevantError("state change is not a DC maturation event");
}

std::optional<Presentation> migrate(DendriticCell& dc, Signal s) {
    if (dc.migrated)
        throw AlreadyMigratedError("cell for vertex " + std::to_string(dc.vertex) +
                                   " already migrated");
    dc.migrated = true;
    dc.signal = s;
    if (s != Signal::Pamp)
        return std::nullopt;  // DANGER/SAFE: antigen is discarded
    Presentation p;
    p.exploit_id = dc.exploit_id;
    p.signal = s;
    p.vertex = dc.vertex_snapshot;
    p.antigen = dc.antigen;
    p.overflow = dc.overflow;
    return p;
}

CandidateReport tcell_select(const Presentation& p, const RuleSet& rs, const ExploitMap& m,
                             double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("tau must be in (0,1)");
    CandidateReport report;
    report.exploit_id = p.exploit_id;
    report.tau = tau;

    auto sigs = m.exploit_to_sigs.find(p.exploit_id);
    if (sigs == m.exploit_to_sigs.end() || sigs->second.empty()) {
        report.no_candidate_signatures = true;
        return report;
    }

    for (const Antigen& a : p.antigen) {
        double best = -1.0;
        int best_sid = 0;
        for (int sid : sigs->second) {  // std::set: ascending, ties favour low sid
            const Signature* sig = rs.find(sid);
            if (!sig)
                continue;
            double score = partial_score(*sig, a, rs.net_vars);
            if (score > best) {
                best = score;
                best_sid = sid;
            }
        }
        if (best >= tau && best < 1.0)
            report.candidates.push_back({a.source, best_sid, best});
    }
    return report;
}

std::optional<Presentation> DcPopulation::on_state_change(const CorrelationGraph& g,
                                                          const StateChange& sc) {
    if (!sc.old_state && sc.new_state == ChangeKind::Pred) {
        DendriticCell dc;
        try {
            dc = spawn_dc(g, sc.vertex, capacity_);
        } catch (const NotPredictedError&) {
            // One ingest can predict a vertex and retire it again (its
            // consequences were already established); by the time the change
            // list is replayed the vertex is no longer live. Build the cell
            // from the snapshot — the SAFE change that follows in the same
            // list migrates it straight away.
            dc.vertex = sc.vertex;
            dc.exploit_id = sc.snapshot.def_id;
            dc.vertex_snapshot = sc.snapshot;
            dc.filter = CaptureFilter{sc.snapshot.dst, sc.snapshot.dstport};
            dc.capacity = capacity_;
        }
        by_vertex_[sc.vertex] = cells_.size();
        cells_.push_back(std::move(dc));
        return std::nullopt;
    }
    if (sc.old_state == VertexState::Pred) {
        auto it = by_vertex_.find(sc.vertex);
        if (it == by_vertex_.end())
            return std::nullopt;  // no cell was bound (shouldn't happen)
        Signal s = dc_signal(sc);
        return migrate(cells_[it->second], s);
    }
    return std::nullopt;  // none->REAL, none->HYP, HYP->REAL: not DC-relevant
}

void DcPopulation::offer(const Antigen& a) {
    for (auto& dc : cells_)
        if (!dc.migrated)
            dc_capture(dc, a);
}

std::vector<const DendriticCell*> DcPopulation::unresolved() const {
    std::vector<const DendriticCell*> out;
    for (const auto& dc : cells_)
        if (!dc.migrated)
            out.push_back(&dc);
    return out;
}

uint64_t DcPopulation::total_antigen() const {
    uint64_t n = 0;
    for (const auto& dc : cells_)
        n += dc.antigen.size() + dc.overflow;
    return n;
}

}  // namespace dendrite
