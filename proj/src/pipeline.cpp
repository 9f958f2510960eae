#include "dendrite/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dendrite {

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string format_ts(uint64_t ts_usec) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%llu.%06llu",
                  static_cast<unsigned long long>(ts_usec / 1000000ull),
                  static_cast<unsigned long long>(ts_usec % 1000000ull));
    return buf;
}

// Rates are floored to two decimals so 29/30 prints as 0.96.
std::string format_rate(const Rational& r) {
    if (!r.defined())
        return "na";
    int64_t pct = r.num * 100 / r.den;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld", static_cast<long long>(pct / 100),
                  static_cast<long long>(pct % 100));
    return buf;
}

uint16_t port_of(const Antigen& a, uint8_t proto, bool src_side) {
    Feature f;
    if (proto == 17)
        f = src_side ? Feature::UdpSrcPort : Feature::UdpDstPort;
    else
        f = src_side ? Feature::TcpSrcPort : Feature::TcpDstPort;
    const FeatureValue& v = antigen_get(a, f);
    return v.kind == FeatureValue::Kind::Int ? static_cast<uint16_t>(v.num) : 0;
}

struct DcLogLine {
    std::string text;
};

}  // namespace

std::string format_alert(const Alert& a) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s %d %s:%u -> %s:%u", format_ts(a.ts_usec).c_str(), a.sid,
                  format_ipv4(a.src).c_str(), a.srcport, format_ipv4(a.dst).c_str(), a.dstport);
    return buf;
}

std::vector<Alert> load_alert_log(const std::string& path) {
    std::string text = read_text_file(path);
    std::vector<Alert> alerts;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string ts_tok, src_tok, arrow, dst_tok;
        int sid = 0;
        if (!(ls >> ts_tok >> sid >> src_tok >> arrow >> dst_tok) || arrow != "->")
            throw std::runtime_error("alert log line " + std::to_string(line_no) + ": bad format");
        auto split_host = [&](const std::string& tok, Ipv4Addr& ip, uint16_t& port) {
            size_t colon = tok.rfind(':');
            if (colon == std::string::npos)
                throw std::runtime_error("alert log line " + std::to_string(line_no) +
                                         ": expected host:port");
            auto parsed = parse_ipv4(tok.substr(0, colon));
            if (!parsed)
                throw std::runtime_error("alert log line " + std::to_string(line_no) +
                                         ": bad address");
            ip = *parsed;
            port = static_cast<uint16_t>(std::stoul(tok.substr(colon + 1)));
        };
        Alert a;
        size_t dot = ts_tok.find('.');
        std::string sec = dot == std::string::npos ? ts_tok : ts_tok.substr(0, dot);
        std::string usec = dot == std::string::npos ? "" : ts_tok.substr(dot + 1);
        while (usec.size() < 6)
            usec.push_back('0');
        if (usec.size() > 6 || sec.empty() ||
            sec.find_first_not_of("0123456789") != std::string::npos ||
            usec.find_first_not_of("0123456789") != std::string::npos)
            throw std::runtime_error("alert log line " + std::to_string(line_no) +
                                     ": bad timestamp");
        a.ts_usec = std::stoull(sec) * 1000000ull + std::stoull(usec);
        a.sid = sid;
        split_host(src_tok, a.src, a.srcport);
        split_host(dst_tok, a.dst, a.dstport);
        alerts.push_back(a);
    }
    return alerts;
}

std::vector<uint32_t> load_labels(const std::string& path) {
    std::string text = read_text_file(path);
    std::set<uint32_t> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        size_t a = line.find_first_not_of(" \t");
        if (a == std::string::npos)
            continue;
        size_t b = line.find_last_not_of(" \t");
        std::string tok = line.substr(a, b - a + 1);
        if (tok.find_first_not_of("0123456789") != std::string::npos)
            throw std::runtime_error("label file line " + std::to_string(line_no) +
                                     ": expected a packet index");
        seen.insert(static_cast<uint32_t>(std::stoul(tok)));
    }
    return {seen.begin(), seen.end()};
}

EvalResult evaluate(const std::vector<uint32_t>& output_indices,
                    const std::vector<uint32_t>& labels) {
    if (labels.empty())
        throw std::invalid_argument("labels must be nonempty");
    std::set<uint32_t> out(output_indices.begin(), output_indices.end());
    std::set<uint32_t> truth(labels.begin(), labels.end());
    int64_t found = 0;
    for (uint32_t t : truth)
        if (out.count(t))
            ++found;
    EvalResult r;
    r.fn_rate = {static_cast<int64_t>(truth.size()) - found, static_cast<int64_t>(truth.size())};
    if (!out.empty())
        r.fp_rate = {static_cast<int64_t>(out.size()) - found, static_cast<int64_t>(out.size())};
    return r;
}

std::string emit_report(const std::vector<Metrics>& runs) {
    std::string text = "run\ttotal_packets\tag_packets\toutput_packets\tfp_rate\tfn_rate\n";
    for (const auto& m : runs) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s\t%llu\t%llu\t%llu\t%s\t%s\n",
                      m.run_id.empty() ? "run" : m.run_id.c_str(),
                      static_cast<unsigned long long>(m.total_packets),
                      static_cast<unsigned long long>(m.ag_packets),
                      static_cast<unsigned long long>(m.output_packets),
                      format_rate(m.fp_rate).c_str(), format_rate(m.fn_rate).c_str());
        text += buf;
    }
    return text;
}

DetectResult run_detect(const DetectConfig& cfg) {
    if (!(cfg.tau > 0.0 && cfg.tau < 1.0))
        throw std::invalid_argument("tau must lie in (0, 1)");

    // Load and validate every input before producing any output file.
    RuleSet rs = parse_rules(read_text_file(cfg.rules_path));
    GraphDef def = load_graph_def(read_text_file(cfg.graph_path));
    ExploitMap emap = build_exploit_map(rs, def);
    Trace trace = read_pcap(cfg.pcap_path);
    std::vector<uint32_t> labels;
    if (!cfg.labels_path.empty())
        labels = load_labels(cfg.labels_path);
    std::vector<Alert> external;
    const bool use_external = !cfg.alerts_path.empty();
    if (use_external)
        external = load_alert_log(cfg.alerts_path);

    std::vector<const Signature*> by_sid;
    by_sid.reserve(rs.signatures.size());
    for (const auto& s : rs.signatures)
        by_sid.push_back(&s);
    std::sort(by_sid.begin(), by_sid.end(),
              [](const Signature* a, const Signature* b) { return a->sid < b->sid; });

    DetectResult res;
    res.metrics.run_id =
        cfg.run_id.empty() ? std::filesystem::path(cfg.pcap_path).stem().string() : cfg.run_id;

    CorrelationGraph graph(def);
    DcPopulation pop(cfg.dc_capacity);
    std::vector<DcLogLine> dc_log;

    auto handle_alert = [&](const Alert& a) {
        std::vector<StateChange> changes;
        try {
            changes = graph.ingest_alert(a, emap);
        } catch (const OutOfOrderAlertError&) {
            ++res.metrics.rejected_alerts;
            return;
        }
        res.alerts.push_back(a);
        for (const auto& sc : changes) {
            res.changes.push_back(sc);
            auto presented = pop.on_state_change(graph, sc);
            if (sc.old_state && *sc.old_state == VertexState::Pred) {
                for (const auto& cell : pop.cells()) {
                    if (cell.vertex == sc.vertex && cell.migrated && cell.signal) {
                        char buf[160];
                        std::snprintf(buf, sizeof(buf),
                                      "migrate vertex=%u exploit=%s signal=%s antigen=%zu "
                                      "overflow=%llu",
                                      cell.vertex, cell.exploit_id.c_str(),
                                      to_string(*cell.signal), cell.antigen.size(),
                                      static_cast<unsigned long long>(cell.overflow));
                        dc_log.push_back({buf});
                        break;
                    }
                }
            }
            if (presented) {
                CandidateReport rep = tcell_select(*presented, rs, emap, cfg.tau);
                int sc_id = graph.scenario_of(presented->vertex.id);
                rep.cluster_id = sc_id > 0 ? static_cast<uint32_t>(sc_id) : 0;
                res.reports.push_back(std::move(rep));
            }
        }
    };

    size_t ext_pos = 0;
    for (const auto& rec : trace.records) {
        ++res.metrics.total_packets;
        uint64_t pkt_ts = static_cast<uint64_t>(rec.ts_sec) * 1000000ull + rec.ts_usec;
        if (use_external) {
            while (ext_pos < external.size() && external[ext_pos].ts_usec <= pkt_ts)
                handle_alert(external[ext_pos++]);
        }
        Antigen antigen;
        try {
            antigen = decode_packet(rec);
        } catch (const DecodeError&) {
            ++res.metrics.decode_failures;
            continue;
        }
        if (!use_external) {
            for (const Signature* sig : by_sid) {
                if (!match_full(*sig, antigen, rs.net_vars))
                    continue;
                Alert a;
                a.ts_usec = pkt_ts;
                a.sid = sig->sid;
                const FeatureValue& src = antigen_get(antigen, Feature::IpSrc);
                const FeatureValue& dst = antigen_get(antigen, Feature::IpDst);
                a.src = Ipv4Addr{static_cast<uint32_t>(src.num)};
                a.dst = Ipv4Addr{static_cast<uint32_t>(dst.num)};
                a.srcport = port_of(antigen, sig->proto, true);
                a.dstport = port_of(antigen, sig->proto, false);
                a.packet_index = rec.index;
                handle_alert(a);
            }
        }
        pop.offer(antigen);
    }
    if (use_external) {
        while (ext_pos < external.size())
            handle_alert(external[ext_pos++]);
    }

    for (const auto& cell : pop.cells()) {
        if (!cell.migrated) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "unresolved vertex=%u exploit=%s antigen=%zu "
                          "overflow=%llu",
                          cell.vertex, cell.exploit_id.c_str(), cell.antigen.size(),
                          static_cast<unsigned long long>(cell.overflow));
            dc_log.push_back({buf});
        }
    }

    res.metrics.alert_count = res.alerts.size();
    res.metrics.ag_packets = pop.total_antigen();

    std::set<uint32_t> unique_out;
    std::map<uint32_t, uint64_t> per_scenario;
    for (const auto& rep : res.reports) {
        for (const auto& cand : rep.candidates) {
            unique_out.insert(cand.packet.index);
            ++per_scenario[rep.cluster_id];
        }
    }
    res.output_indices.assign(unique_out.begin(), unique_out.end());
    res.metrics.output_packets = res.output_indices.size();
    res.metrics.scenario_candidates.assign(per_scenario.begin(), per_scenario.end());

    if (!labels.empty()) {
        EvalResult ev = evaluate(res.output_indices, labels);
        res.metrics.fp_rate = ev.fp_rate;
        res.metrics.fn_rate = ev.fn_rate;
    }

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        auto out_path = [&](const char* name) {
            return (std::filesystem::path(cfg.out_dir) / name).string();
        };

        std::ofstream cand(out_path("candidates.tsv"), std::ios::binary);
        cand << "scenario\texploit\tpacket\ttimestamp\tsid\tscore\n";
        for (const auto& rep : res.reports) {
            for (const auto& c : rep.candidates) {
                char buf[192];
                std::snprintf(buf, sizeof(buf), "%u\t%s\t%u\t%u.%06u\t%d\t%.6f\n", rep.cluster_id,
                              rep.exploit_id.c_str(), c.packet.index, c.packet.ts_sec,
                              c.packet.ts_usec, c.best_sid, c.score);
                cand << buf;
            }
        }
        cand.close();

        Trace extraction;
        extraction.link_type = trace.link_type;
        for (uint32_t idx : res.output_indices)
            extraction.records.push_back(trace.records[idx]);
        write_pcap(out_path("extraction.pcap"), extraction);

        std::ofstream alog(out_path("alerts.log"), std::ios::binary);
        for (const auto& a : res.alerts)
            alog << format_alert(a) << "\n";
        alog.close();

        std::ofstream dlog(out_path("dc.log"), std::ios::binary);
        for (const auto& line : dc_log)
            dlog << line.text << "\n";
        dlog.close();

        std::ofstream mets(out_path("metrics.tsv"), std::ios::binary);
        mets << emit_report({res.metrics});
        mets.close();
    }
    return res;
}

}  // namespace dendrite
