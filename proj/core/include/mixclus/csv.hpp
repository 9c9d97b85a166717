#pragma once

#include <string>
#include <vector>

namespace mixclus::csv {

/// RFC-4180 table: header row plus data rows, all cells as strings.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

Table parse(const std::string& text);
Table read_file(const std::string& path);

/// Quote a cell iff it contains a delimiter, quote, or newline.
std::string escape(const std::string& cell);

}  // namespace mixclus::csv
