#include "dendrite/graph.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "dendrite/rules.hpp"

namespace dendrite {

const ExploitDef* GraphDef::find_exploit(const std::string& id) const {
    for (const auto& e : exploits)
        if (e.id == id)
            return &e;
    return nullptr;
}

const ConditionDef* GraphDef::find_condition(const std::string& id) const {
    for (const auto& c : conditions)
        if (c.id == id)
            return &c;
    return nullptr;
}

std::optional<size_t> GraphDef::exploit_index(const std::string& id) const {
    for (size_t i = 0; i < exploits.size(); ++i)
        if (exploits[i].id == id)
            return i;
    return std::nullopt;
}

std::optional<size_t> GraphDef::condition_index(const std::string& id) const {
    for (size_t i = 0; i < conditions.size(); ++i)
        if (conditions[i].id == id)
            return i;
    return std::nullopt;
}

const char* to_string(VertexState s) {
    switch (s) {
    case VertexState::Real:
        return "REAL";
    case VertexState::Hyp:
        return "HYP";
    case VertexState::Pred:
        return "PRED";
    }
    return "?";
}

const char* to_string(ChangeKind k) {
    switch (k) {
    case ChangeKind::Real:
        return "REAL";
    case ChangeKind::Hyp:
        return "HYP";
    case ChangeKind::Pred:
        return "PRED";
    case ChangeKind::Redundant:
        return "REDUNDANT";
    }
    return "?";
}

// --- template parsing -----------------------------------------------------------

namespace {

[[noreturn]] void bad_line(int line, const std::string& what) {
    throw GraphParseError("graph definition line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// key=value attributes; label values may be quoted with spaces inside.
std::map<std::string, std::string> parse_attrs(std::stringstream& ss, int line) {
    std::map<std::string, std::string> attrs;
    std::string tok;
    while (ss >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos)
            bad_line(line, "expected key=value, got: " + tok);
        std::string key = tok.substr(0, eq);
        std::string value = tok.substr(eq + 1);
        if (!value.empty() && value.front() == '"' &&
            (value.size() < 2 || value.back() != '"')) {
            std::string more;
            while (ss >> more) {
                value += " " + more;
                if (!more.empty() && more.back() == '"')
                    break;
            }
        }
        if (!value.empty() && value.front() == '"' && value.back() == '"' && value.size() >= 2)
            value = value.substr(1, value.size() - 2);
        if (attrs.count(key))
            bad_line(line, "duplicate attribute " + key);
        attrs[key] = value;
    }
    return attrs;
}

// Kahn's algorithm over the bipartite template; leftovers mean a cycle.
void check_acyclic(const GraphDef& def) {
    size_t ne = def.exploits.size(), nc = def.conditions.size();
    std::vector<int> indegree(ne + nc, 0);  // exploits first, then conditions
    for (size_t e = 0; e < ne; ++e) {
        indegree[e] += static_cast<int>(def.exploits[e].pre_conditions.size());
        for (size_t c : def.exploits[e].post_conditions)
            ++indegree[ne + c];  // edge exploit -> condition
    }
    std::vector<size_t> queue;
    for (size_t i = 0; i < ne + nc; ++i)
        if (indegree[i] == 0)
            queue.push_back(i);
    size_t seen = 0;
    while (!queue.empty()) {
        size_t v = queue.back();
        queue.pop_back();
        ++seen;
        if (v < ne) {
            for (size_t c : def.exploits[v].post_conditions)
                if (--indegree[ne + c] == 0)
                    queue.push_back(ne + c);
        } else {
            for (size_t e : def.conditions[v - ne].consumers)
                if (--indegree[e] == 0)
                    queue.push_back(e);
        }
    }
    if (seen != ne + nc)
        throw CycleError("graph definition contains a cycle");
}

}  // namespace

GraphDef load_graph_def(const std::string& text) {
    GraphDef def;
    std::stringstream ss(text);
    std::string raw;
    int line_no = 0;

    struct PendingEdge {
        bool pre;  // pre: condition -> exploit; post: exploit -> condition
        std::string from, to;
        int line;
    };
    std::vector<PendingEdge> edges;
    std::vector<std::pair<int, std::pair<int, std::string>>> pins;  // line, (sid, exploit)

    while (std::getline(ss, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#')
            continue;
        std::stringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "exploit") {
            ExploitDef e;
            if (!(ls >> e.id))
                bad_line(line_no, "exploit needs an id");
            if (def.find_exploit(e.id) || def.find_condition(e.id))
                bad_line(line_no, "duplicate id " + e.id);
            auto attrs = parse_attrs(ls, line_no);
            if (!attrs.count("vuln"))
                bad_line(line_no, "exploit needs vuln=");
            if (!attrs.count("port"))
                bad_line(line_no, "exploit needs port=");
            e.vuln = attrs["vuln"];
            try {
                int port = std::stoi(attrs["port"]);
                if (port < 0 || port > 65535)
                    throw std::out_of_range("port");
                e.port = static_cast<uint16_t>(port);
            } catch (const std::exception&) {
                bad_line(line_no, "bad port: " + attrs["port"]);
            }
            if (attrs.count("refs")) {
                std::stringstream rs(attrs["refs"]);
                std::string r;
                while (std::getline(rs, r, ','))
                    if (!trim(r).empty())
                        e.refs.push_back(normalize_reference(trim(r)));
            }
            def.exploits.push_back(std::move(e));
        } else if (kw == "condition") {
            ConditionDef c;
            if (!(ls >> c.id))
                bad_line(line_no, "condition needs an id");
            if (def.find_exploit(c.id) || def.find_condition(c.id))
                bad_line(line_no, "duplicate id " + c.id);
            auto attrs = parse_attrs(ls, line_no);
            if (!attrs.count("label"))
                bad_line(line_no, "condition needs label=");
            c.label = attrs["label"];
            if (attrs.count("initial"))
                c.initially_true = attrs["initial"] == "true";
            def.conditions.push_back(std::move(c));
        } else if (kw == "pre" || kw == "post" || kw == "sigmap") {
            std::string from, arrow, to;
            if (!(ls >> from >> arrow >> to) || arrow != "->")
                bad_line(line_no, kw + " needs '<from> -> <to>'");
            if (kw == "sigmap") {
                try {
                    pins.emplace_back(line_no, std::make_pair(std::stoi(from), to));
                } catch (const std::exception&) {
                    bad_line(line_no, "bad sid: " + from);
                }
            } else {
                edges.push_back({kw == "pre", from, to, line_no});
            }
        } else {
            bad_line(line_no, "unknown directive: " + kw);
        }
    }

    for (const auto& edge : edges) {
        if (edge.pre) {
            auto c = def.condition_index(edge.from);
            auto e = def.exploit_index(edge.to);
            if (!c)
                throw DanglingEdgeError("line " + std::to_string(edge.line) +
                                        ": pre edge from unknown condition " + edge.from);
            if (!e)
                throw DanglingEdgeError("line " + std::to_string(edge.line) +
                                        ": pre edge to unknown exploit " + edge.to);
            def.exploits[*e].pre_conditions.push_back(*c);
            def.conditions[*c].consumers.push_back(*e);
        } else {
            auto e = def.exploit_index(edge.from);
            auto c = def.condition_index(edge.to);
            if (!e)
                throw DanglingEdgeError("line " + std::to_string(edge.line) +
                                        ": post edge from unknown exploit " + edge.from);
            if (!c)
                throw DanglingEdgeError("line " + std::to_string(edge.line) +
                                        ": post edge to unknown condition " + edge.to);
            def.exploits[*e].post_conditions.push_back(*c);
            def.conditions[*c].suppliers.push_back(*e);
        }
    }
    for (const auto& [line, pin] : pins) {
        if (!def.find_exploit(pin.second))
            throw DanglingEdgeError("line " + std::to_string(line) +
                                    ": sigmap to unknown exploit " + pin.second);
        def.sig_pins[pin.first] = pin.second;
    }
    check_acyclic(def);
    return def;
}

// --- runtime graph ----------------------------------------------------------------

ExploitVertex* CorrelationGraph::find_vertex(const std::string& def_id,
                                             std::optional<Ipv4Addr> src, Ipv4Addr dst) {
    for (auto& v : vertices_)
        if (!v.retired && v.def_id == def_id && v.src == src && v.dst == dst)
            return &v;
    return nullptr;
}

ExploitVertex* CorrelationGraph::find_vertex_any_src(const std::string& def_id, Ipv4Addr dst) {
    for (auto& v : vertices_)
        if (!v.retired && v.def_id == def_id && v.dst == dst)
            return &v;
    return nullptr;
}

ConditionInstance* CorrelationGraph::find_condition(const std::string& def_id, Ipv4Addr host) {
    for (auto& c : conditions_)
        if (c.def_id == def_id && c.host == host)
            return &c;
    return nullptr;
}

bool CorrelationGraph::condition_true(size_t cond_index, Ipv4Addr host) const {
    const ConditionDef& cd = def_->conditions[cond_index];
    for (const auto& c : conditions_)
        if (c.def_id == cd.id && c.host == host)
            return c.value;
    return cd.initially_true;
}

void CorrelationGraph::set_condition(size_t cond_index, Ipv4Addr host) {
    flipped_.emplace_back(cond_index, host);
    const ConditionDef& cd = def_->conditions[cond_index];
    for (auto& c : conditions_) {
        if (c.def_id == cd.id && c.host == host) {
            c.value = true;
            return;
        }
    }
    conditions_.push_back({cd.id, host, true});
}

ExploitVertex& CorrelationGraph::create_vertex(const ExploitDef& def, std::optional<Ipv4Addr> src,
                                               std::optional<uint16_t> srcport, Ipv4Addr dst,
                                               uint16_t dstport, VertexState state, uint64_t ts) {
    ExploitVertex v;
    v.id = static_cast<VertexId>(vertices_.size() + 1);
    v.def_id = def.id;
    v.src = src;
    v.srcport = srcport;
    v.dst = dst;
    v.dstport = dstport;
    v.state = state;
    v.created_ts = ts;
    vertices_.push_back(std::move(v));
    return vertices_.back();
}

void CorrelationGraph::emit(std::vector<StateChange>& out, const ExploitVertex& v,
                            std::optional<VertexState> old_state, ChangeKind now,
                            const Alert& cause) {
    StateChange sc;
    sc.vertex = v.id;
    sc.snapshot = v;
    sc.old_state = old_state;
    sc.new_state = now;
    sc.cause = cause;
    out.push_back(std::move(sc));
}

void CorrelationGraph::check_redundancy(size_t cond_index, Ipv4Addr h, const Alert& cause,
                                        std::vector<StateChange>& out) {
    for (auto& v : vertices_) {
        if (v.retired || v.state != VertexState::Pred || v.dst != h)
            continue;
        const ExploitDef* ed = def_->find_exploit(v.def_id);
        bool supplies = std::find(ed->post_conditions.begin(), ed->post_conditions.end(),
                                  cond_index) != ed->post_conditions.end();
        if (!supplies)
            continue;
        bool all_true = std::all_of(ed->post_conditions.begin(), ed->post_conditions.end(),
                                    [&](size_t c) { return condition_true(c, h); });
        if (!all_true)
            continue;
        v.retired = true;
        emit(out, v, VertexState::Pred, ChangeKind::Redundant, cause);
    }
}

void CorrelationGraph::set_consequences(ExploitVertex& v) {
    const ExploitDef* ed = def_->find_exploit(v.def_id);
    for (size_t c : ed->post_conditions) {
        if (condition_true(c, v.dst))
            continue;
        set_condition(c, v.dst);
    }
}

void CorrelationGraph::ensure_prereqs(const ExploitDef& ed, Ipv4Addr h, const Alert& cause,
                                      std::vector<StateChange>& out) {
    for (size_t c : ed.pre_conditions) {
        if (condition_true(c, h))
            continue;
        set_condition(c, h);

        // Explain the now-assumed condition with a predecessor exploit: an
        // existing prediction is promoted, otherwise the first supplier in
        // declaration order is assumed outright.
        ExploitVertex* w = nullptr;
        for (size_t e : def_->conditions[c].suppliers) {
            ExploitVertex* cand = find_vertex_any_src(def_->exploits[e].id, h);
            if (cand && cand->state == VertexState::Pred) {
                w = cand;
                break;
            }
        }
        if (w) {
            w->state = VertexState::Hyp;
            emit(out, *w, VertexState::Pred, ChangeKind::Hyp, cause);
        } else if (!def_->conditions[c].suppliers.empty()) {
            const ExploitDef& pd = def_->exploits[def_->conditions[c].suppliers.front()];
            w = &create_vertex(pd, std::nullopt, std::nullopt, h, pd.port, VertexState::Hyp,
                               cause.ts_usec);
            emit(out, *w, std::nullopt, ChangeKind::Hyp, cause);
        }
        VertexId wid = w ? w->id : 0;
        if (wid) {
            const ExploitDef* wd = def_->find_exploit(vertices_[wid - 1].def_id);
            // Recurse so the assumed exploit is itself explained, then let it
            // establish everything it would have established. (vertices_ may
            // reallocate during recursion, so work through the id.)
            ensure_prereqs(*wd, h, cause, out);
            set_consequences(vertices_[wid - 1]);
        }
    }
}

void CorrelationGraph::predict(const Alert& cause, std::vector<StateChange>& out) {
    // Hosts known to the graph: anywhere a condition instance exists.
    std::vector<Ipv4Addr> hosts;
    for (const auto& c : conditions_)
        if (std::find(hosts.begin(), hosts.end(), c.host) == hosts.end())
            hosts.push_back(c.host);
    std::sort(hosts.begin(), hosts.end());

    for (const auto& ed : def_->exploits) {
        if (ed.pre_conditions.empty())
            continue;  // root exploits are never predicted
        for (Ipv4Addr h : hosts) {
            // An instance in any state covers the host. Retired instances count
            // too: otherwise retiring a redundant prediction would only last
            // until the next alert recreated it.
            bool covered = std::any_of(vertices_.begin(), vertices_.end(), [&](const auto& v) {
                return v.def_id == ed.id && v.dst == h;
            });
            if (covered)
                continue;
            bool enabled = std::all_of(ed.pre_conditions.begin(), ed.pre_conditions.end(),
                                       [&](size_t c) { return condition_true(c, h); });
            if (!enabled)
                continue;
            ExploitVertex& v = create_vertex(ed, std::nullopt, std::nullopt, h, ed.port,
                                             VertexState::Pred, cause.ts_usec);
            emit(out, v, std::nullopt, ChangeKind::Pred, cause);
        }
    }
}

std::vector<StateChange> CorrelationGraph::ingest_alert(const Alert& a, const ExploitMap& m) {
    if (saw_alert_ && a.ts_usec < last_ts_)
        throw OutOfOrderAlertError("alert timestamp went backwards (" +
                                   std::to_string(a.ts_usec) + " < " +
                                   std::to_string(last_ts_) + ")");
    last_ts_ = a.ts_usec;
    saw_alert_ = true;

    std::vector<StateChange> out;
    auto mapped = m.sig_to_exploit.find(a.sid);
    if (mapped == m.sig_to_exploit.end())
        return out;
    const ExploitDef* ed = def_->find_exploit(mapped->second);
    if (!ed)
        return out;

    // Locate or create the vertex this alert witnesses. An exact
    // (exploit, src, dst) instance wins; otherwise an unknown-source
    // prediction/hypothesis for the same destination is claimed.
    ExploitVertex* v = find_vertex(ed->id, a.src, a.dst);
    if (!v) {
        ExploitVertex* anon = find_vertex(ed->id, std::nullopt, a.dst);
        if (anon)
            v = anon;
    }
    if (v) {
        if (v->state == VertexState::Pred) {
            v->state = VertexState::Real;
            v->src = a.src;
            v->srcport = a.srcport;
            emit(out, *v, VertexState::Pred, ChangeKind::Real, a);
        } else if (v->state == VertexState::Hyp) {
            // Extension beyond the three core transitions: the assumed attack
            // is later witnessed directly.
            v->state = VertexState::Real;
            v->src = a.src;
            v->srcport = a.srcport;
            emit(out, *v, VertexState::Hyp, ChangeKind::Real, a);
        }
        // Already REAL: a repeated alert for the same instance changes nothing.
    } else {
        v = &create_vertex(*ed, a.src, a.srcport, a.dst, a.dstport, VertexState::Real, a.ts_usec);
        emit(out, *v, std::nullopt, ChangeKind::Real, a);
    }
    VertexId vid = v->id;

    flipped_.clear();
    ensure_prereqs(*ed, a.dst, a, out);
    set_consequences(vertices_[vid - 1]);
    predict(a, out);
    // Retire predictions made redundant by the conditions this alert flipped.
    // Running after predict keeps a retired prediction from being recreated
    // within the same ingest.
    for (const auto& [c, h] : flipped_)
        check_redundancy(c, h, a, out);
    return out;
}

VertexState CorrelationGraph::vertex_state(VertexId v) const {
    if (v == 0 || v > vertices_.size() || vertices_[v - 1].retired)
        throw UnknownVertexError("unknown vertex " + std::to_string(v));
    return vertices_[v - 1].state;
}

bool CorrelationGraph::condition_val(const std::string& condition_id, Ipv4Addr host) const {
    auto idx = def_->condition_index(condition_id);
    if (!idx)
        throw UnknownVertexError("unknown condition " + condition_id);
    return condition_true(*idx, host);
}

std::vector<Scenario> CorrelationGraph::scenarios() const {
    // Union-find over live exploit vertices and condition instances; an
    // instance edge exists where the template has an edge and both endpoints
    // live at the same host.
    size_t nv = vertices_.size(), nc = conditions_.size();
    std::vector<size_t> parent(nv + nc);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<size_t(size_t)> find = [&](size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    auto unite = [&](size_t a, size_t b) { parent[find(a)] = find(b); };

    for (size_t i = 0; i < nv; ++i) {
        if (vertices_[i].retired)
            continue;
        const ExploitDef* ed = def_->find_exploit(vertices_[i].def_id);
        for (size_t j = 0; j < nc; ++j) {
            if (conditions_[j].host != vertices_[i].dst)
                continue;
            auto ci = def_->condition_index(conditions_[j].def_id);
            bool linked =
                std::find(ed->pre_conditions.begin(), ed->pre_conditions.end(), *ci) !=
                    ed->pre_conditions.end() ||
                std::find(ed->post_conditions.begin(), ed->post_conditions.end(), *ci) !=
                    ed->post_conditions.end();
            if (linked)
                unite(i, nv + j);
        }
    }

    // Components keyed by their earliest live vertex (creation order).
    std::map<size_t, Scenario> comp;
    for (size_t i = 0; i < nv; ++i) {
        if (vertices_[i].retired)
            continue;
        comp[find(i)].vertices.push_back(vertices_[i].id);
    }
    for (size_t j = 0; j < nc; ++j) {
        size_t root = find(nv + j);
        // Conditions belong to whichever component their root marks, but a
        // component of conditions alone (possible after retirement) still
        // counts as a scenario.
        auto host = conditions_[j].host;
        comp[root].conditions.emplace_back(conditions_[j].def_id, host);
    }

    std::vector<Scenario> out;
    for (auto& [root, sc] : comp) {
        (void)root;
        std::sort(sc.vertices.begin(), sc.vertices.end());
        out.push_back(std::move(sc));
    }
    // Number scenarios by earliest vertex id; all-condition components last.
    std::sort(out.begin(), out.end(), [](const Scenario& a, const Scenario& b) {
        VertexId av = a.vertices.empty() ? UINT32_MAX : a.vertices.front();
        VertexId bv = b.vertices.empty() ? UINT32_MAX : b.vertices.front();
        if (av != bv)
            return av < bv;
        return a.conditions < b.conditions;
    });
    for (size_t i = 0; i < out.size(); ++i)
        out[i].id = static_cast<int>(i + 1);
    return out;
}

int CorrelationGraph::scenario_of(VertexId v) const {
    for (const auto& sc : scenarios())
        if (std::binary_search(sc.vertices.begin(), sc.vertices.end(), v))
            return sc.id;
    return 0;
}

}  // namespace dendrite
