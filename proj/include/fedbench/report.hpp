#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedbench/federation.hpp"

namespace fedbench {

// Write-temp-then-rename so concurrent runs never interleave partial files.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

// report_v1 CSV: round,global_acc,pers_acc,cum_params,cum_bytes,cum_flops
std::string render_report_csv(const RunReport& report);

struct ReportRow {
    uint32_t round = 0;
    double global_acc = 0.0;
    double pers_acc = 0.0;
    uint64_t cum_params = 0;
    uint64_t cum_bytes = 0;
    uint64_t cum_flops = 0;
};

std::vector<ReportRow> parse_report_csv(const std::filesystem::path& path);

// report.csv + manifest.json under `dir` (created if missing).
void write_run_outputs(const RunReport& report, const std::filesystem::path& dir);

nlohmann::ordered_json load_manifest(const std::filesystem::path& dir);

} // namespace fedbench
