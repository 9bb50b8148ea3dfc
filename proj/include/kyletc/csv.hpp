// CSV emission: '#'-prefixed comment header (tool version, resolved config),
// one column-name row, then numeric rows at 17 significant digits via
// std::to_chars, which is locale-independent and round-trips doubles.
#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kyletc/market.hpp"

namespace kyletc {

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                   std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

// shortest representation that still round-trips; for labels and config echo
inline std::string format_shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string csv_to_string(const std::vector<std::string>& header_comments,
                                 const CsvTable& table) {
    std::string out;
    for (const auto& line : header_comments) {
        out += "# ";
        out += line;
        out += '\n';
    }
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i) out += ',';
        out += table.columns[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header_comments,
                      const CsvTable& table) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot open output file: " + path.string());
    f << csv_to_string(header_comments, table);
    f.flush();
    if (!f) throw ValidationError("write failed: " + path.string());
}

}  // namespace kyletc
