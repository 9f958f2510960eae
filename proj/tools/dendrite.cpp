// Command line front end: detect / synth / merge / eval / report.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dendrite/pipeline.hpp"

namespace {

using namespace dendrite;

std::vector<uint32_t> packet_column(const std::string& candidates_path) {
    std::ifstream in(candidates_path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + candidates_path);
    std::vector<uint32_t> packets;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {  // header row
            first = false;
            continue;
        }
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string scenario, exploit, packet;
        if (!std::getline(ls, scenario, '\t') || !std::getline(ls, exploit, '\t') ||
            !std::getline(ls, packet, '\t'))
            throw std::runtime_error("bad candidate row: " + line);
        packets.push_back(static_cast<uint32_t>(std::stoul(packet)));
    }
    return packets;
}

std::string rational_text(const Rational& r) {
    if (!r.defined())
        return "na";
    char buf[64];
    int64_t pct = r.num * 100 / r.den;
    std::snprintf(buf, sizeof(buf), "%lld/%lld (%lld.%02lld)", static_cast<long long>(r.num),
                  static_cast<long long>(r.den), static_cast<long long>(pct / 100),
                  static_cast<long long>(pct % 100));
    return buf;
}

void write_label_file(const std::string& path, const std::vector<uint32_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    for (uint32_t idx : labels)
        out << idx << "\n";
}

int cmd_detect(const DetectConfig& cfg) {
    DetectResult res = run_detect(cfg);
    std::cout << emit_report({res.metrics});
    if (!res.metrics.scenario_candidates.empty()) {
        std::cout << "\nscenario\tcandidate_rows\n";
        for (const auto& [scenario, rows] : res.metrics.scenario_candidates)
            std::cout << scenario << "\t" << rows << "\n";
    }
    std::cout << "\nalerts=" << res.metrics.alert_count
              << " rejected=" << res.metrics.rejected_alerts
              << " decode_failures=" << res.metrics.decode_failures << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"immune-inspired variant detector over pcap traces"};
    app.require_subcommand(1);

    DetectConfig dcfg;
    auto* detect = app.add_subcommand("detect", "run the full detection pipeline");
    detect->add_option("--rules", dcfg.rules_path, "signature rules file")->required();
    detect->add_option("--graph", dcfg.graph_path, "attack graph definition")->required();
    detect->add_option("--pcap", dcfg.pcap_path, "input trace (classic pcap)")->required();
    detect->add_option("--tau", dcfg.tau, "selection threshold in (0,1)");
    detect->add_option("--dc-capacity", dcfg.dc_capacity, "antigen capacity per cell");
    detect->add_option("--out", dcfg.out_dir, "output directory")->required();
    detect->add_option("--labels", dcfg.labels_path, "ground truth packet indices");
    detect->add_option("--alerts", dcfg.alerts_path, "pre-made alert log (skips inline matching)");
    detect->add_option("--run-id", dcfg.run_id, "row label for the metrics table");

    ScenarioConfig scfg;
    std::string synth_out, synth_labels, attacker_str, victim_str;
    uint64_t bg_span_seconds = scfg.background_span_usec / 1000000ull;
    auto* synth = app.add_subcommand("synth", "generate a deterministic scenario trace");
    synth->add_option("--out", synth_out, "output pcap path")->required();
    synth->add_option("--labels", synth_labels, "write ground truth indices here");
    synth->add_option("--seed", scfg.seed, "RNG seed");
    synth->add_option("--scan-probes", scfg.scan_probes, "reconnaissance probe count");
    synth->add_option("--session-commands", scfg.session_commands, "benign commands in session");
    synth->add_option("--variant-probes", scfg.variant_probes, "variant payload count");
    synth->add_option("--bg-sessions", scfg.background_sessions, "background session count");
    synth->add_option("--bg-commands", scfg.background_commands, "commands per background session");
    synth->add_option("--bg-span-seconds", bg_span_seconds, "background spread in seconds");
    synth->add_option("--attacker", attacker_str, "attacker address (default 172.16.9.9)");
    synth->add_option("--victim", victim_str, "victim address (default 10.1.1.5)");

    std::string base_path, attack_path, merge_out, merge_labels_in, merge_labels_out;
    auto* merge = app.add_subcommand("merge", "interleave two traces on one timeline");
    merge->add_option("--base", base_path, "base trace (keeps its clock)")->required();
    merge->add_option("--attack", attack_path, "trace shifted onto the base clock")->required();
    merge->add_option("--out", merge_out, "merged pcap path")->required();
    merge->add_option("--labels", merge_labels_in, "attack-trace ground truth to remap");
    merge->add_option("--labels-out", merge_labels_out, "remapped ground truth path");

    std::string eval_candidates, eval_labels;
    auto* eval = app.add_subcommand("eval", "score a candidate report against ground truth");
    eval->add_option("--candidates", eval_candidates, "candidates.tsv from detect")->required();
    eval->add_option("--labels", eval_labels, "ground truth packet indices")->required();

    std::vector<std::string> report_files;
    auto* report = app.add_subcommand("report", "concatenate metrics tables");
    report->add_option("files", report_files, "metrics.tsv files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*detect)
            return cmd_detect(dcfg);
        if (*synth) {
            if (!attacker_str.empty()) {
                auto ip = parse_ipv4(attacker_str);
                if (!ip)
                    throw std::runtime_error("bad --attacker address");
                scfg.attacker = *ip;
            }
            if (!victim_str.empty()) {
                auto ip = parse_ipv4(victim_str);
                if (!ip)
                    throw std::runtime_error("bad --victim address");
                scfg.victim = *ip;
            }
            scfg.background_span_usec = bg_span_seconds * 1000000ull;
            SynthResult result = synth_scenario(scfg);
            write_pcap(synth_out, result.trace);
            if (!synth_labels.empty())
                write_label_file(synth_labels, result.true_positive_indices);
            std::cout << "packets=" << result.trace.records.size()
                      << " to_victim_ftp=" << result.packets_to_victim_ftp
                      << " true_positives=" << result.true_positive_indices.size() << "\n";
            return 0;
        }
        if (*merge) {
            Trace base = read_pcap(base_path);
            Trace attack = read_pcap(attack_path);
            MergeResult merged = merge_traces(base, attack);
            write_pcap(merge_out, merged.merged);
            if (!merge_labels_in.empty()) {
                if (merge_labels_out.empty())
                    throw std::runtime_error("--labels requires --labels-out");
                std::vector<uint32_t> remapped;
                for (uint32_t idx : load_labels(merge_labels_in))
                    remapped.push_back(merged.attack_index_map.at(idx));
                write_label_file(merge_labels_out, remapped);
            }
            std::cout << "packets=" << merged.merged.records.size() << "\n";
            return 0;
        }
        if (*eval) {
            EvalResult ev = evaluate(packet_column(eval_candidates), load_labels(eval_labels));
            std::cout << "fp_rate\t" << rational_text(ev.fp_rate) << "\n"
                      << "fn_rate\t" << rational_text(ev.fn_rate) << "\n";
            return 0;
        }
        if (*report) {
            bool first = true;
            for (const auto& path : report_files) {
                std::ifstream in(path, std::ios::binary);
                if (!in)
                    throw std::runtime_error("cannot open " + path);
                std::string line;
                bool header = true;
                while (std::getline(in, line)) {
                    if (header) {
                        header = false;
                        if (first)
                            std::cout << line << "\n";
                        continue;
                    }
                    if (!line.empty())
                        std::cout << line << "\n";
                }
                first = false;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
