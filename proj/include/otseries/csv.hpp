#pragma once

#include <string>
#include <vector>

namespace otseries::csv {

// Minimal CSV: comma separated, optional double-quoted fields, UTF-8,
// header row required by every caller in this project.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column, -1 when absent.
    int column(const std::string& name) const;
};

Table read_file(const std::string& path);
std::vector<std::string> split_line(const std::string& line);
std::string escape(const std::string& field);

void write_file(const std::string& path, const Table& t);

// Deterministic float formatting shared by every CSV writer.
std::string format_double(double v);

} // namespace otseries::csv
