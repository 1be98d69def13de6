#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slb::csv {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column; throws std::out_of_range when absent.
    std::size_t column(const std::string& name) const;
    double real(std::size_t row, const std::string& name) const;
};

/// Plain comma-separated reader: no quoting, first line is the header.
/// Throws std::runtime_error on ragged rows.
Table read(std::istream& is);
Table read_file(const std::string& path);

void write_row(std::ostream& os, const std::vector<std::string>& cells);

}  // namespace slb::csv
