#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "dendrite/packet.hpp"
#include "dendrite/pipeline.hpp"
#include "dendrite/rules.hpp"
#include "dendrite/trace.hpp"
#include "helpers.hpp"

using namespace dendrite;
namespace fs = std::filesystem;

namespace {

const std::string kRulesPath = std::string(DATA_DIR) + "/ftp.rules";
const std::string kGraphPath = std::string(DATA_DIR) + "/ftp.graph";

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / ("dendrite_pl_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

ScenarioConfig tiny_config() {
    ScenarioConfig cfg;
    cfg.scan_probes = 30;
    cfg.session_commands = 25;
    cfg.rootkit_data_packets = 4;
    cfg.background_sessions = 2;
    cfg.background_commands = 10;
    return cfg;
}

// Recomputes the candidate set from first principles: the single predicted
// exploit in the fixture graph is the format-string attack against
// victim:21, so its cell captures every packet to that socket between the
// scan alert that creates the prediction and the rootkit alert that reveals
// the skipped step. Selection keeps scores in [tau, 1).
std::vector<uint32_t> expected_candidates(const Trace& trace, const RuleSet& rules, double tau) {
    const Signature* scan = rules.find(1000001);
    const Signature* fmt = rules.find(338);
    const Signature* rootkit = rules.find(1000003);
    REQUIRE(scan != nullptr);
    REQUIRE(fmt != nullptr);
    REQUIRE(rootkit != nullptr);

    size_t first_scan = trace.records.size(), first_rootkit = trace.records.size();
    std::vector<Antigen> decoded;
    decoded.reserve(trace.records.size());
    for (size_t i = 0; i < trace.records.size(); ++i) {
        decoded.push_back(decode_packet(trace.records[i]));
        if (first_scan == trace.records.size() && match_full(*scan, decoded[i], rules.net_vars))
            first_scan = i;
        if (first_rootkit == trace.records.size() &&
            match_full(*rootkit, decoded[i], rules.net_vars))
            first_rootkit = i;
    }
    REQUIRE(first_scan < trace.records.size());
    REQUIRE(first_rootkit < trace.records.size());
    REQUIRE(first_scan < first_rootkit);

    const uint32_t victim = ScenarioConfig{}.victim.value;
    std::vector<uint32_t> out;
    for (size_t i = first_scan + 1; i < first_rootkit; ++i) {
        const FeatureValue& dst = antigen_get(decoded[i], Feature::IpDst);
        const FeatureValue& dport = antigen_get(decoded[i], Feature::TcpDstPort);
        if (dst.kind != FeatureValue::Kind::Int || dst.num != victim)
            continue;
        if (dport.kind != FeatureValue::Kind::Int || dport.num != 21)
            continue;
        double score = partial_score(*fmt, decoded[i], rules.net_vars);
        if (score >= tau && score < 1.0)
            out.push_back(static_cast<uint32_t>(i));
    }
    return out;
}

}  // namespace

TEST_CASE("evaluate computes exact rational rates") {
    SUBCASE("one extra output packet, one missed truth") {
        // 18 labeled packets, 17 found plus one stray selection.
        std::vector<uint32_t> labels, output;
        for (uint32_t i = 0; i < 18; ++i)
            labels.push_back(100 + i);
        for (uint32_t i = 0; i < 17; ++i)
            output.push_back(100 + i);
        output.push_back(9999);
        EvalResult r = evaluate(output, labels);
        CHECK(r.fp_rate.num == 1);
        CHECK(r.fp_rate.den == 18);
        CHECK(r.fn_rate.num == 1);
        CHECK(r.fn_rate.den == 18);
    }
    SUBCASE("perfect recall with noise") {
        EvalResult r = evaluate({1, 2, 3, 4, 5}, {2, 4});
        CHECK(r.fp_rate.num == 3);
        CHECK(r.fp_rate.den == 5);
        CHECK(r.fn_rate.num == 0);
        CHECK(r.fn_rate.den == 2);
    }
    SUBCASE("complete miss") {
        EvalResult r = evaluate({10, 11}, {1, 2, 3});
        CHECK(r.fp_rate.num == 2);
        CHECK(r.fp_rate.den == 2);
        CHECK(r.fn_rate.num == 3);
        CHECK(r.fn_rate.den == 3);
        CHECK(r.fn_rate.value() == 1.0);
    }
    SUBCASE("empty output leaves the false-positive rate undefined") {
        EvalResult r = evaluate({}, {1, 2});
        CHECK(!r.fp_rate.defined());
        CHECK(r.fn_rate.num == 2);
        CHECK(r.fn_rate.den == 2);
    }
    SUBCASE("duplicates count once") {
        EvalResult r = evaluate({7, 7, 7, 8}, {7, 7});
        CHECK(r.fp_rate.num == 1);
        CHECK(r.fp_rate.den == 2);
        CHECK(r.fn_rate.num == 0);
        CHECK(r.fn_rate.den == 1);
    }
    SUBCASE("empty ground truth is an error") {
        CHECK_THROWS_AS(evaluate({1}, {}), std::invalid_argument);
    }
}

TEST_CASE("emit_report floors rates to two decimals") {
    Metrics m;
    m.run_id = "mix23";
    m.total_packets = 3000;
    m.ag_packets = 975;
    m.output_packets = 18;
    m.fp_rate = {17, 18};  // 0.9444... -> 0.94
    m.fn_rate = {0, 1};

    Metrics zero;  // freshly constructed run: nothing processed, rates undefined

    Metrics close;
    close.run_id = "close";
    close.fp_rate = {29, 30};    // 0.9666... -> 0.96, never rounded up
    close.fn_rate = {999, 1000};  // 0.999 -> 0.99

    std::string text = emit_report({m, zero, close});
    CHECK(text ==
          "run\ttotal_packets\tag_packets\toutput_packets\tfp_rate\tfn_rate\n"
          "mix23\t3000\t975\t18\t0.94\t0.00\n"
          "run\t0\t0\t0\tna\tna\n"
          "close\t0\t0\t0\t0.96\t0.99\n");

    Metrics one;
    one.run_id = "one";
    one.fp_rate = {3, 3};
    one.fn_rate = {1, 2};
    CHECK(emit_report({one}).find("one\t0\t0\t0\t1.00\t0.50\n") != std::string::npos);
}

TEST_CASE("format_alert round-trips through load_alert_log") {
    Alert a;
    a.ts_usec = 12345678;  // 12.345678s
    a.sid = 338;
    a.src = Ipv4Addr{0xac100909};
    a.srcport = 3432;
    a.dst = Ipv4Addr{0x0a010105};
    a.dstport = 21;
    std::string line = format_alert(a);
    CHECK(line == "12.345678 338 172.16.9.9:3432 -> 10.1.1.5:21");

    TempDir dir("alerts");
    write_text(dir.file("a.log"), line + "\r\n\n" + "99.000001 7 10.0.0.1:0 -> 10.0.0.2:65535\n");
    std::vector<Alert> back = load_alert_log(dir.file("a.log"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].ts_usec == a.ts_usec);
    CHECK(back[0].sid == a.sid);
    CHECK(back[0].src.value == a.src.value);
    CHECK(back[0].srcport == a.srcport);
    CHECK(back[0].dst.value == a.dst.value);
    CHECK(back[0].dstport == a.dstport);
    CHECK(back[1].ts_usec == 99000001);
    CHECK(back[1].srcport == 0);
    CHECK(back[1].dstport == 65535);

    SUBCASE("whole seconds parse without a fraction") {
        write_text(dir.file("b.log"), "42 1 1.2.3.4:5 -> 6.7.8.9:10\n");
        CHECK(load_alert_log(dir.file("b.log"))[0].ts_usec == 42000000ull);
    }
    SUBCASE("bad lines are rejected") {
        for (const char* bad : {"nonsense",
                                "1.0 5 1.2.3.4:1 <- 5.6.7.8:2",
                                "1.0 5 1.2.3.4 -> 5.6.7.8:2",
                                "1.0 5 999.2.3.4:1 -> 5.6.7.8:2",
                                "1.2.3 5 1.2.3.4:1 -> 5.6.7.8:2",
                                "1.0000001 5 1.2.3.4:1 -> 5.6.7.8:2"}) {
            write_text(dir.file("bad.log"), std::string(bad) + "\n");
            CHECK_THROWS_AS(load_alert_log(dir.file("bad.log")), std::runtime_error);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_alert_log(dir.file("nope.log")), std::runtime_error);
    }
}

TEST_CASE("load_labels sorts, deduplicates, and validates") {
    TempDir dir("labels");
    write_text(dir.file("l.txt"), "12\n3\n\n  7 \n3\r\n");
    CHECK(load_labels(dir.file("l.txt")) == std::vector<uint32_t>{3, 7, 12});

    write_text(dir.file("bad.txt"), "12\nseven\n");
    CHECK_THROWS_AS(load_labels(dir.file("bad.txt")), std::runtime_error);
    CHECK_THROWS_AS(load_labels(dir.file("missing.txt")), std::runtime_error);
}

TEST_CASE("run_detect rejects bad thresholds") {
    DetectConfig cfg;
    cfg.rules_path = kRulesPath;
    cfg.graph_path = kGraphPath;
    cfg.pcap_path = "/tmp/unused.pcap";
    for (double tau : {0.0, 1.0, -0.25, 1.5}) {
        cfg.tau = tau;
        CHECK_THROWS_AS(run_detect(cfg), std::invalid_argument);
    }
}

TEST_CASE("run_detect validates inputs before writing anything") {
    TempDir dir("early");
    write_text(dir.file("bad.rules"), "alert tcp any any -> any any (sid:1;)\nhello world\n");

    DetectConfig cfg;
    cfg.rules_path = dir.file("bad.rules");
    cfg.graph_path = kGraphPath;
    cfg.pcap_path = dir.file("missing.pcap");
    cfg.out_dir = dir.file("out");
    CHECK_THROWS_AS(run_detect(cfg), RuleSyntaxError);
    CHECK(!fs::exists(cfg.out_dir));

    cfg.rules_path = kRulesPath;
    CHECK_THROWS_AS(run_detect(cfg), TruncatedFileError);  // pcap missing
    CHECK(!fs::exists(cfg.out_dir));

    SynthResult synth = synth_scenario(tiny_config());
    write_pcap(dir.file("t.pcap"), synth.trace);
    cfg.pcap_path = dir.file("t.pcap");
    cfg.labels_path = dir.file("missing.labels");
    CHECK_THROWS_AS(run_detect(cfg), std::runtime_error);
    CHECK(!fs::exists(cfg.out_dir));
}

TEST_CASE("run_detect on an empty capture reports zeroes") {
    TempDir dir("empty");
    write_pcap(dir.file("empty.pcap"), Trace{});

    DetectConfig cfg;
    cfg.rules_path = kRulesPath;
    cfg.graph_path = kGraphPath;
    cfg.pcap_path = dir.file("empty.pcap");
    cfg.out_dir = dir.file("out");

    DetectResult res = run_detect(cfg);
    CHECK(res.metrics.total_packets == 0);
    CHECK(res.metrics.alert_count == 0);
    CHECK(res.metrics.ag_packets == 0);
    CHECK(res.metrics.output_packets == 0);
    CHECK(!res.metrics.fp_rate.defined());
    CHECK(!res.metrics.fn_rate.defined());
    CHECK(res.alerts.empty());
    CHECK(res.reports.empty());
    CHECK(res.output_indices.empty());
    CHECK(res.metrics.run_id == "empty");  // pcap filename stem

    // Artifacts exist but are empty apart from headers.
    CHECK(parse_pcap(serialize_pcap(read_pcap(dir.file("out/extraction.pcap")))).records.empty());
    CHECK(testutil::read_file(dir.file("out/candidates.tsv")) ==
          "scenario\texploit\tpacket\ttimestamp\tsid\tscore\n");
    CHECK(testutil::read_file(dir.file("out/alerts.log")).empty());
}

TEST_CASE("run_detect matches an independent recount of the tiny scenario") {
    TempDir dir("tiny");
    SynthResult synth = synth_scenario(tiny_config());
    write_pcap(dir.file("tiny.pcap"), synth.trace);
    std::string labels_text;
    for (uint32_t idx : synth.true_positive_indices)
        labels_text += std::to_string(idx) + "\n";
    write_text(dir.file("tiny.labels"), labels_text);

    DetectConfig cfg;
    cfg.rules_path = kRulesPath;
    cfg.graph_path = kGraphPath;
    cfg.pcap_path = dir.file("tiny.pcap");
    cfg.labels_path = dir.file("tiny.labels");
    cfg.tau = 0.5;
    cfg.out_dir = dir.file("out");
    cfg.run_id = "tiny";

    DetectResult res = run_detect(cfg);
    CHECK(res.metrics.run_id == "tiny");
    CHECK(res.metrics.total_packets == synth.trace.records.size());
    CHECK(res.metrics.decode_failures == 0);
    CHECK(res.metrics.rejected_alerts == 0);
    CHECK(res.metrics.alert_count >= 2);  // the scan probes and the rootkit marker

    RuleSet rules = parse_rules(testutil::read_file(kRulesPath));
    std::vector<uint32_t> expected = expected_candidates(synth.trace, rules, cfg.tau);
    REQUIRE(!expected.empty());
    CHECK(res.output_indices == expected);
    CHECK(res.metrics.output_packets == expected.size());
    // One cell, no overflow at the default capacity: everything captured is
    // presented and selected, so the antigen pool equals the output.
    CHECK(res.metrics.ag_packets == expected.size());

    // The variant probe is part of the selection: no misses, all the benign
    // traffic around it counts as false positives.
    REQUIRE(synth.true_positive_indices.size() == 1);
    uint32_t variant = synth.true_positive_indices[0];
    CHECK(std::count(expected.begin(), expected.end(), variant) == 1);
    CHECK(res.metrics.fn_rate.num == 0);
    CHECK(res.metrics.fn_rate.den == 1);
    CHECK(res.metrics.fp_rate.num == static_cast<int64_t>(expected.size()) - 1);
    CHECK(res.metrics.fp_rate.den == static_cast<int64_t>(expected.size()));

    // Exactly one presentation: the format-string prediction turned stealthy.
    REQUIRE(res.reports.size() == 1);
    const CandidateReport& rep = res.reports[0];
    CHECK(rep.exploit_id == "ftp-fmt");
    CHECK(rep.tau == cfg.tau);
    CHECK(!rep.no_candidate_signatures);
    CHECK(rep.cluster_id > 0);
    CHECK(rep.candidates.size() == expected.size());
    for (const auto& cand : rep.candidates) {
        CHECK(cand.best_sid == 338);
        CHECK(cand.score >= cfg.tau);
        CHECK(cand.score < 1.0);
        if (cand.packet.index == variant)
            CHECK(cand.score == doctest::Approx(5.0 / 6.0));
    }

    uint64_t rows = 0;
    for (const auto& [scenario, count] : res.metrics.scenario_candidates) {
        CHECK(scenario > 0);
        rows += count;
    }
    CHECK(rows == rep.candidates.size());

    SUBCASE("written artifacts mirror the in-memory result") {
        Trace extraction = read_pcap(dir.file("out/extraction.pcap"));
        REQUIRE(extraction.records.size() == expected.size());
        for (size_t i = 0; i < expected.size(); ++i)
            CHECK(extraction.records[i].bytes == synth.trace.records[expected[i]].bytes);

        std::string cand_text = testutil::read_file(dir.file("out/candidates.tsv"));
        size_t lines = std::count(cand_text.begin(), cand_text.end(), '\n');
        CHECK(lines == 1 + rep.candidates.size());

        std::string alerts_text = testutil::read_file(dir.file("out/alerts.log"));
        CHECK(std::count(alerts_text.begin(), alerts_text.end(), '\n') ==
              static_cast<long>(res.metrics.alert_count));

        CHECK(testutil::read_file(dir.file("out/metrics.tsv")) == emit_report({res.metrics}));
        CHECK(testutil::read_file(dir.file("out/dc.log")).find("migrate vertex=") !=
              std::string::npos);
    }

    SUBCASE("a second run produces byte-identical artifacts") {
        DetectConfig again = cfg;
        again.out_dir = dir.file("out2");
        run_detect(again);
        for (const char* name :
             {"candidates.tsv", "extraction.pcap", "alerts.log", "dc.log", "metrics.tsv"}) {
            CHECK(testutil::read_file(dir.file(std::string("out/") + name)) ==
                  testutil::read_file(dir.file(std::string("out2/") + name)));
        }
    }

    SUBCASE("replaying the alert log externally gives the same selection") {
        std::string log;
        for (const Alert& a : res.alerts)
            log += format_alert(a) + "\n";
        write_text(dir.file("replay.log"), log);

        DetectConfig ext = cfg;
        ext.out_dir.clear();
        ext.alerts_path = dir.file("replay.log");
        DetectResult res2 = run_detect(ext);
        CHECK(res2.output_indices == res.output_indices);
        CHECK(res2.metrics.ag_packets == res.metrics.ag_packets);
        CHECK(res2.metrics.alert_count == res.metrics.alert_count);
        REQUIRE(res2.reports.size() == 1);
        CHECK(res2.reports[0].candidates.size() == rep.candidates.size());
    }

    SUBCASE("a stricter threshold can only shrink the selection") {
        DetectConfig strict = cfg;
        strict.out_dir.clear();
        strict.tau = 0.9;
        DetectResult res2 = run_detect(strict);
        CHECK(res2.output_indices.size() <= res.output_indices.size());
        std::set<uint32_t> wide(res.output_indices.begin(), res.output_indices.end());
        for (uint32_t idx : res2.output_indices)
            CHECK(wide.count(idx) == 1);
    }
}
