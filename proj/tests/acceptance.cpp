// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails. Each check prints the measured numbers it judged.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dendrite/graph.hpp"
#include "dendrite/immune.hpp"
#include "dendrite/packet.hpp"
#include "dendrite/pipeline.hpp"
#include "dendrite/rules.hpp"
#include "dendrite/trace.hpp"
#include "graph_property.hpp"
#include "helpers.hpp"

using namespace dendrite;
namespace fs = std::filesystem;

namespace {

const std::string kRulesPath = std::string(DATA_DIR) + "/ftp.rules";
const std::string kGraphPath = std::string(DATA_DIR) + "/ftp.graph";
const fs::path kWorkDir = "/tmp/dendrite_acceptance";

int g_failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void report(int id, bool pass, const std::string& details) {
    std::printf("C%d %s - %s\n", id, pass ? "PASS" : "FAIL", details.c_str());
    std::fflush(stdout);
    if (!pass)
        ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string labels_text(const std::vector<uint32_t>& indices) {
    std::string text;
    for (uint32_t idx : indices)
        text += std::to_string(idx) + "\n";
    return text;
}

// --- C1: exact rate arithmetic and two-decimal display ------------------------

void check_rates() {
    Timer t;
    // 18 selected packets of which exactly one is the labeled attack.
    std::vector<uint32_t> labels = {500};
    std::vector<uint32_t> out18 = {500};
    for (uint32_t i = 0; i < 17; ++i)
        out18.push_back(i);
    EvalResult r18 = evaluate(out18, labels);

    std::vector<uint32_t> out30 = {500};
    for (uint32_t i = 0; i < 29; ++i)
        out30.push_back(i);
    EvalResult r30 = evaluate(out30, labels);

    Metrics m18, m30;
    m18.fp_rate = r18.fp_rate;
    m18.fn_rate = r18.fn_rate;
    m30.fp_rate = r30.fp_rate;
    m30.fn_rate = r30.fn_rate;
    std::string shown = emit_report({m18, m30});

    bool pass = r18.fp_rate.num == 17 && r18.fp_rate.den == 18 && r30.fp_rate.num == 29 &&
                r30.fp_rate.den == 30 && r18.fn_rate.num == 0 && r30.fn_rate.num == 0 &&
                shown.find("\t0.94\t") != std::string::npos &&
                shown.find("\t0.96\t") != std::string::npos && t.seconds() < 1.0;
    report(1, pass,
           fmt("fp rates %lld/%lld and %lld/%lld, displayed 0.94 / 0.96, %.2fs",
               static_cast<long long>(r18.fp_rate.num), static_cast<long long>(r18.fp_rate.den),
               static_cast<long long>(r30.fp_rate.num), static_cast<long long>(r30.fp_rate.den),
               t.seconds()));
}

// --- C2 + C3: quiescent replay, then the same attack under background load ----

struct ReplayResult {
    bool ok = false;
    uint64_t output = 0;
    uint64_t ag = 0;
};

ReplayResult check_quiescent() {
    Timer t;
    SynthResult synth = synth_scenario(ScenarioConfig{});
    write_pcap((kWorkDir / "quiescent.pcap").string(), synth.trace);
    write_text(kWorkDir / "quiescent.labels", labels_text(synth.true_positive_indices));

    DetectConfig cfg;
    cfg.rules_path = kRulesPath;
    cfg.graph_path = kGraphPath;
    cfg.pcap_path = (kWorkDir / "quiescent.pcap").string();
    cfg.labels_path = (kWorkDir / "quiescent.labels").string();
    cfg.tau = 0.5;
    DetectResult res = run_detect(cfg);

    double victim_share =
        static_cast<double>(synth.packets_to_victim_ftp) / synth.trace.records.size();
    double ratio = res.metrics.ag_packets
                       ? static_cast<double>(res.metrics.output_packets) / res.metrics.ag_packets
                       : 0.0;
    bool fn_zero = res.metrics.fn_rate.defined() && res.metrics.fn_rate.num == 0;
    bool pass = fn_zero && ratio <= 0.02 && t.seconds() < 10.0;
    report(2, pass,
           fmt("%llu packets (%.0f%% to victim:21), fn=%lld/%lld, output %llu of %llu antigen "
               "(%.1f%%, limit 2%%), %.2fs",
               static_cast<unsigned long long>(res.metrics.total_packets), victim_share * 100.0,
               static_cast<long long>(res.metrics.fn_rate.num),
               static_cast<long long>(res.metrics.fn_rate.den),
               static_cast<unsigned long long>(res.metrics.output_packets),
               static_cast<unsigned long long>(res.metrics.ag_packets), ratio * 100.0,
               t.seconds()));
    return {fn_zero, res.metrics.output_packets, res.metrics.ag_packets};
}

void check_background(const ReplayResult& quiescent) {
    Timer t;
    SynthResult attack = synth_scenario(ScenarioConfig{});

    // Background-only traffic, sized so the merged trace is about six times
    // the attack trace and spread over 70 minutes of capture.
    ScenarioConfig bg_probe;
    bg_probe.seed = 7;
    bg_probe.scan_probes = 0;
    bg_probe.session_commands = 0;
    bg_probe.rootkit_data_packets = 0;
    bg_probe.background_sessions = 1;
    bg_probe.background_span_usec = 4200ull * 1000000ull;
    size_t per_session = synth_scenario(bg_probe).trace.records.size();
    ScenarioConfig bg_cfg = bg_probe;
    bg_cfg.background_sessions =
        static_cast<int>(std::lround(5.0 * attack.trace.records.size() / per_session));
    SynthResult bg = synth_scenario(bg_cfg);

    MergeResult merged = merge_traces(bg.trace, attack.trace);
    std::vector<uint32_t> labels;
    for (uint32_t idx : attack.true_positive_indices)
        labels.push_back(merged.attack_index_map[idx]);
    write_pcap((kWorkDir / "background.pcap").string(), merged.merged);
    write_text(kWorkDir / "background.labels", labels_text(labels));

    DetectConfig cfg;
    cfg.rules_path = kRulesPath;
    cfg.graph_path = kGraphPath;
    cfg.pcap_path = (kWorkDir / "background.pcap").string();
    cfg.labels_path = (kWorkDir / "background.labels").string();
    cfg.tau = 0.5;
    DetectResult res = run_detect(cfg);

    double volume = static_cast<double>(merged.merged.records.size()) /
                    static_cast<double>(attack.trace.records.size());
    double growth = quiescent.output
                        ? static_cast<double>(res.metrics.output_packets) / quiescent.output
                        : 0.0;
    bool fn_zero = res.metrics.fn_rate.defined() && res.metrics.fn_rate.num == 0;
    bool pass = quiescent.output > 0 && fn_zero && growth < 2.0 && volume >= 5.0 &&
                volume <= 7.0 && t.seconds() < 30.0;
    report(3, pass,
           fmt("volume %.1fx (%zu packets), fn=%lld/%lld, output %llu vs %llu quiescent "
               "(%.2fx, limit 2x), %.2fs",
               volume, merged.merged.records.size(),
               static_cast<long long>(res.metrics.fn_rate.num),
               static_cast<long long>(res.metrics.fn_rate.den),
               static_cast<unsigned long long>(res.metrics.output_packets),
               static_cast<unsigned long long>(quiescent.output), growth, t.seconds()));
}

// --- C4: partial_score against an exhaustive per-criterion recount ------------

void check_score_oracle() {
    Timer t;
    std::mt19937 rng(20260825u);
    std::string text = "var HOME_NET 10.1.0.0/16\nvar EXTERNAL_NET !10.1.0.0/16\n";
    const int kPairs = 1000;
    for (int i = 0; i < kPairs; ++i)
        text += testutil::random_rule(rng, 1000 + i) + "\n";
    RuleSet rs = parse_rules(text);
    if (rs.signatures.size() != kPairs || rs.rejected != 0) {
        report(4, false, fmt("generator produced %zu parsed rules, %d rejected",
                             rs.signatures.size(), rs.rejected));
        return;
    }

    int checked = 0;
    for (int i = 0; i < kPairs; ++i) {
        const Signature& sig = rs.signatures[static_cast<size_t>(i)];
        Antigen a = testutil::random_antigen(rng);
        int count = 0;
        for (const Criterion& c : sig.criteria)
            if (eval_criterion(c, a, rs.net_vars))
                ++count;
        double expected = sig.criteria.empty()
                              ? 0.0
                              : static_cast<double>(count) /
                                    static_cast<double>(sig.criteria.size());
        double got = partial_score(sig, a, rs.net_vars);
        bool full = match_full(sig, a, rs.net_vars);
        if (got != expected || (got == 1.0) != full || sig.criteria.size() > 10) {
            report(4, false,
                   fmt("pair %d (sid %d): score %.6f, recount %.6f, full=%d", i, sig.sid, got,
                       expected, full ? 1 : 0));
            return;
        }
        ++checked;
    }
    report(4, true, fmt("%d random signature/antigen pairs, recount equal, 1.0 iff full match, "
                        "%.2fs",
                        checked, t.seconds()));
}

// --- C5: correlation graph invariants over random alert sequences -------------

void check_graph_invariants() {
    Timer t;
    std::mt19937 rng(424242u);
    const int kEpisodes = 500;
    for (int i = 0; i < kEpisodes; ++i) {
        std::string violation = testutil::run_random_graph_episode(rng);
        if (!violation.empty()) {
            report(5, false, fmt("episode %d: %s", i, violation.c_str()));
            return;
        }
    }
    report(5, true, fmt("%d random episodes, transitions/monotonicity/acyclicity/prerequisites "
                        "verified, %.2fs",
                        kEpisodes, t.seconds()));
}

// --- C6: maturation signal mapping, exhaustively over the transition space ----

void check_signal_mapping() {
    Timer t;
    ExploitVertex snapshot;
    snapshot.id = 1;
    snapshot.def_id = "ftp-fmt";
    snapshot.dst = Ipv4Addr{0x0a010105};
    snapshot.dstport = 21;

    const std::optional<VertexState> olds[] = {std::nullopt, VertexState::Pred, VertexState::Hyp,
                                               VertexState::Real};
    const ChangeKind news[] = {ChangeKind::Real, ChangeKind::Hyp, ChangeKind::Pred,
                               ChangeKind::Redundant};
    int mapped = 0, rejected = 0;
    for (const auto& old_state : olds) {
        for (ChangeKind new_state : news) {
            StateChange sc;
            sc.vertex = 1;
            sc.snapshot = snapshot;
            sc.old_state = old_state;
            sc.new_state = new_state;

            std::optional<Signal> expected;
            if (old_state == VertexState::Pred && new_state == ChangeKind::Hyp)
                expected = Signal::Pamp;
            else if (old_state == VertexState::Pred && new_state == ChangeKind::Real)
                expected = Signal::Danger;
            else if (old_state == VertexState::Pred && new_state == ChangeKind::Redundant)
                expected = Signal::Safe;

            try {
                Signal got = dc_signal(sc);
                if (!expected || got != *expected) {
                    report(6, false, fmt("transition %d->%d mapped unexpectedly",
                                         old_state ? static_cast<int>(*old_state) : -1,
                                         static_cast<int>(new_state)));
                    return;
                }
                ++mapped;
            } catch (const NotDcRelevantError&) {
                if (expected) {
                    report(6, false, fmt("transition %d->%d rejected but should map",
                                         static_cast<int>(*old_state),
                                         static_cast<int>(new_state)));
                    return;
                }
                ++rejected;
            }
        }
    }

    // Only a PAMP migration hands antigen onward for selection.
    int presented = 0;
    for (Signal s : {Signal::Pamp, Signal::Danger, Signal::Safe}) {
        DendriticCell cell;
        cell.vertex = 1;
        cell.exploit_id = "ftp-fmt";
        cell.vertex_snapshot = snapshot;
        cell.filter = CaptureFilter{snapshot.dst, snapshot.dstport};
        cell.capacity = 8;
        cell.antigen.push_back(testutil::tcp_antigen(0xac100909, 0x0a010105, 3432, 21, 0x18,
                                                     "SITE EXEC %p%p\n"));
        auto presentation = migrate(cell, s);
        if (presentation.has_value() != (s == Signal::Pamp)) {
            report(6, false, fmt("signal %s presentation mismatch", to_string(s)));
            return;
        }
        if (presentation)
            ++presented;
    }

    bool pass = mapped == 3 && rejected == 13 && presented == 1;
    report(6, pass, fmt("3 transitions mapped (pamp/danger/safe), %d rejected, only pamp "
                        "presents antigen, %.2fs",
                        rejected, t.seconds()));
}

// --- C7: byte-identical reruns -------------------------------------------------

void check_determinism() {
    Timer t;
    ScenarioConfig cfg;
    cfg.seed = 99;
    SynthResult a = synth_scenario(cfg);
    SynthResult b = synth_scenario(cfg);
    bool synth_same = serialize_pcap(a.trace) == serialize_pcap(b.trace) &&
                      a.true_positive_indices == b.true_positive_indices;

    write_pcap((kWorkDir / "det.pcap").string(), a.trace);
    write_text(kWorkDir / "det.labels", labels_text(a.true_positive_indices));
    DetectConfig dc;
    dc.rules_path = kRulesPath;
    dc.graph_path = kGraphPath;
    dc.pcap_path = (kWorkDir / "det.pcap").string();
    dc.labels_path = (kWorkDir / "det.labels").string();
    dc.out_dir = (kWorkDir / "det_out1").string();
    run_detect(dc);
    dc.out_dir = (kWorkDir / "det_out2").string();
    run_detect(dc);

    bool detect_same = true;
    std::string first_diff;
    for (const char* name :
         {"candidates.tsv", "extraction.pcap", "alerts.log", "dc.log", "metrics.tsv"}) {
        std::string one = testutil::read_file((kWorkDir / "det_out1" / name).string());
        std::string two = testutil::read_file((kWorkDir / "det_out2" / name).string());
        if (one != two) {
            detect_same = false;
            first_diff = name;
            break;
        }
    }

    bool pass = synth_same && detect_same;
    std::string details = pass ? fmt("two detect runs byte-identical across 5 artifacts, "
                                     "same-seed synthesis byte-identical, %.2fs",
                                     t.seconds())
                               : fmt("synth_same=%d detect_same=%d%s%s", synth_same ? 1 : 0,
                                     detect_same ? 1 : 0, first_diff.empty() ? "" : " first diff ",
                                     first_diff.c_str());
    report(7, pass, details);
}

// --- C8: the format-string rule fixture ----------------------------------------

void check_rule_fixture() {
    Timer t;
    std::string rules_text = testutil::read_file(kRulesPath);
    std::istringstream in(rules_text);
    std::string line, fixture_line;
    while (std::getline(in, line))
        if (line.find("sid:338") != std::string::npos)
            fixture_line = line;
    if (fixture_line.empty()) {
        report(8, false, "rule 338 not found in the ruleset");
        return;
    }

    Signature sig = parse_rule(fixture_line);
    const ContentParams* content = nullptr;
    for (const Criterion& c : sig.criteria)
        if (c.kind == Criterion::Kind::Content)
            content = &c.content;

    const std::vector<uint8_t> tail = {0x25, 0x30, 0x32, 0x30, 0x64, 0x7c, 0x25,
                                       0x2e, 0x66, 0x25, 0x2e, 0x66, 0x7c, 0x0a};
    bool pattern_ok = content && content->pattern.size() == 24 &&
                      std::equal(tail.begin(), tail.end(), content->pattern.end() - 14);

    RuleSet rs = parse_rules(rules_text);
    SynthResult synth = synth_scenario(ScenarioConfig{});
    bool variant_ok = synth.true_positive_indices.size() == 1;
    double score = -1.0;
    int full_matches = 0;
    if (variant_ok) {
        Antigen variant = decode_packet(synth.trace.records[synth.true_positive_indices[0]]);
        score = partial_score(sig, variant, rs.net_vars);
        for (const Signature& s : rs.signatures)
            if (match_full(s, variant, rs.net_vars))
                ++full_matches;
    }

    bool pass = sig.criteria.size() == 6 && pattern_ok && variant_ok && score == 5.0 / 6.0 &&
                full_matches == 0;
    report(8, pass,
           fmt("%zu criteria, 24-byte pattern with expected 14-byte tail=%d, variant scores "
               "%.6f (want 0.833333), full-matches %d rules, %.2fs",
               sig.criteria.size(), pattern_ok ? 1 : 0, score, full_matches, t.seconds()));
}

}  // namespace

int main() {
    fs::remove_all(kWorkDir);
    fs::create_directories(kWorkDir);

    check_rates();
    ReplayResult quiescent = check_quiescent();
    check_background(quiescent);
    check_score_oracle();
    check_graph_invariants();
    check_signal_mapping();
    check_determinism();
    check_rule_fixture();

    fs::remove_all(kWorkDir);
    if (g_failures) {
        std::printf("%d of 8 criteria failed\n", g_failures);
        return 1;
    }
    std::printf("all 8 criteria passed\n");
    return 0;
}
