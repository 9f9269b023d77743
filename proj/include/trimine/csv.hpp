#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace trimine::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // 1-based line number in the source file for each row.
    std::vector<std::size_t> line_numbers;
};

// RFC 4180-style reader: comma separated, optional double quotes, "" escapes a quote.
Table read(const std::filesystem::path& path);
std::vector<std::string> split_line(std::string_view line);

// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

// Shortest representation that parses back to the same double.
std::string format(double value);

// Throws ParseError naming `what` and `line` when `text` is not a complete number.
double parse_double(std::string_view text, std::string_view what, std::size_t line);

} // namespace trimine::csv
