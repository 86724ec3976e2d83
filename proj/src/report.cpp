#include "fedbench/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fedbench {

namespace {

std::string format_acc(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

double parse_acc(const std::string& s) {
    if (s == "nan") return std::nan("");
    return std::stod(s);
}

} // namespace

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string render_report_csv(const RunReport& report) {
    std::ostringstream out;
    out << "round,global_acc,pers_acc,cum_params,cum_bytes,cum_flops\n";
    for (const auto& r : report.rounds) {
        out << r.round << ',' << format_acc(r.global_acc) << ',' << format_acc(r.personalized_acc)
            << ',' << r.cum_transmitted << ',' << r.cum_bytes << ',' << r.cum_flops << '\n';
    }
    return out.str();
}

std::vector<ReportRow> parse_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "round,global_acc,pers_acc,cum_params,cum_bytes,cum_flops")
        throw IoError(path.string() + " is not a report_v1 CSV");
    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        ReportRow r;
        std::getline(ls, field, ','), r.round = static_cast<uint32_t>(std::stoul(field));
        std::getline(ls, field, ','), r.global_acc = parse_acc(field);
        std::getline(ls, field, ','), r.pers_acc = parse_acc(field);
        std::getline(ls, field, ','), r.cum_params = std::stoull(field);
        std::getline(ls, field, ','), r.cum_bytes = std::stoull(field);
        std::getline(ls, field, ','), r.cum_flops = std::stoull(field);
        rows.push_back(r);
    }
    return rows;
}

void write_run_outputs(const RunReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    atomic_write_text(dir / "report.csv", render_report_csv(report));
    atomic_write_text(dir / "manifest.json", report.manifest.dump(2) + "\n");
}

nlohmann::ordered_json load_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
    return nlohmann::ordered_json::parse(in);
}

} // namespace fedbench
