#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dendrite/graph.hpp"
#include "dendrite/immune.hpp"
#include "dendrite/rules.hpp"
#include "dendrite/trace.hpp"

namespace dendrite {

struct DetectConfig {
    std::string rules_path;
    std::string graph_path;
    std::string pcap_path;
    double tau = 0.5;
    size_t dc_capacity = 65536;
    std::string out_dir;      // empty: compute only, write nothing
    std::string labels_path;  // optional ground truth, one packet index per line
    std::string alerts_path;  // optional pre-made alert log; disables inline matching
    std::string run_id;       // defaults to the pcap filename stem
};

// Exact fraction; den == 0 means undefined (reported as "na").
struct Rational {
    int64_t num = 0;
    int64_t den = 0;
    bool defined() const { return den != 0; }
    double value() const { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }
};

struct Metrics {
    std::string run_id;
    uint64_t total_packets = 0;
    uint64_t decode_failures = 0;
    uint64_t alert_count = 0;
    uint64_t rejected_alerts = 0;
    uint64_t ag_packets = 0;
    uint64_t output_packets = 0;
    Rational fp_rate;  // (output - true positives found) / output
    Rational fn_rate;  // missed true positives / labeled true positives
    std::vector<std::pair<uint32_t, uint64_t>> scenario_candidates;  // scenario id -> rows
};

struct DetectResult {
    Metrics metrics;
    std::vector<Alert> alerts;
    std::vector<StateChange> changes;
    std::vector<CandidateReport> reports;
    std::vector<uint32_t> output_indices;  // sorted unique candidate packet indices
};

struct EvalResult {
    Rational fp_rate;
    Rational fn_rate;
};

// Full single-pass run; loads every input before writing any output file.
DetectResult run_detect(const DetectConfig& cfg);

// Table-1-style rates from the selected packet set and the ground truth.
EvalResult evaluate(const std::vector<uint32_t>& output_indices,
                    const std::vector<uint32_t>& labels);

// Header plus one row per run: run id, totals, rates (rates floored to 2 decimals).
std::string emit_report(const std::vector<Metrics>& runs);

std::vector<uint32_t> load_labels(const std::string& path);
std::vector<Alert> load_alert_log(const std::string& path);
std::string format_alert(const Alert& a);

}  // namespace dendrite
