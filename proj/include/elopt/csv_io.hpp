#pragma once

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "elopt/grid_field.hpp"
#include "elopt/el_scheme.hpp"
#include "elopt/optimize.hpp"
#include "elopt/studies.hpp"

namespace elopt {

// fixed-width scientific with 6 significant digits; locale-independent
inline std::string format_sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.5e", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const {
        std::string out;
        for (size_t i = 0; i < header.size(); ++i) {
            if (i) out += ',';
            out += header[i];
        }
        out += '\n';
        for (const auto& row : rows) {
            for (size_t i = 0; i < row.size(); ++i) {
                if (i) out += ',';
                out += row[i];
            }
            out += '\n';
        }
        return out;
    }
};

// write-then-rename so readers never observe partial files
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline void write_csv_atomic(const std::filesystem::path& path, const CsvTable& table) {
    write_text_atomic(path, table.to_string());
}

inline CsvTable trajectory_csv(const Trajectory& traj) {
    CsvTable t;
    t.header = {"t", "x", "u"};
    for (size_t m = 0; m < traj.states.size(); ++m)
        for (int j = 0; j < traj.grid.n_cells; ++j)
            t.rows.push_back({format_sci(traj.times[m]), format_sci(traj.grid.midpoint(j)),
                              format_sci(traj.states[m][static_cast<size_t>(j)])});
    return t;
}

inline CsvTable field_csv(const CellField& f) {
    CsvTable t;
    t.header = {"x", "u"};
    for (int j = 0; j < f.grid.n_cells; ++j)
        t.rows.push_back(
            {format_sci(f.grid.midpoint(j)), format_sci(f.values[static_cast<size_t>(j)])});
    return t;
}

inline CsvTable history_csv(const OptimizationReport& rep) {
    CsvTable t;
    t.header = {"iteration", "value", "optimality", "step_norm"};
    for (const auto& h : rep.history)
        t.rows.push_back({std::to_string(h.iteration), format_sci(h.value),
                          format_sci(h.optimality), format_sci(h.step_norm)});
    return t;
}

inline CsvTable study_rows_csv(const StudyResult& res) {
    CsvTable t;
    t.header = {"dx", "H", "rel_error", "objective", "iterations", "evaluations",
                "optimality", "status"};
    for (const auto& r : res.rows)
        t.rows.push_back({format_sci(r.dx), format_sci(r.H), format_sci(r.rel_error),
                          format_sci(r.objective), std::to_string(r.iterations),
                          std::to_string(r.evaluations), format_sci(r.optimality), r.status});
    return t;
}

inline CsvTable curve_csv(const StudyResult& res, const std::string& x_name) {
    CsvTable t;
    t.header = {x_name, res.curve_label};
    for (const auto& [x, y] : res.curve) t.rows.push_back({format_sci(x), format_sci(y)});
    return t;
}

inline std::string timestamp_utc() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string compact_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
    return buf;
}

}  // namespace elopt
