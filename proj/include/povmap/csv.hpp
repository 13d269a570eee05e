#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace povmap::csv {

/// In-memory delimited table: a header row plus string cells. Typing and
/// validation happen in the ingest layer, not here.
struct Table {
    std::string path; // provenance label for error messages
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column, Error("MissingColumn") when absent.
    std::size_t col(const std::string &name) const;
};

/// RFC-4180 style parse: quoted fields, doubled-quote escapes, embedded
/// separators and newlines, CRLF or LF endings, optional UTF-8 BOM. Blank
/// lines are skipped. Throws Error("CsvError") on structural problems.
Table parse_csv(std::string_view text, std::string path_label);

Table read_csv(const std::filesystem::path &file);

std::string to_csv_string(const Table &t);

void write_csv(const std::filesystem::path &file, const Table &t);

} // namespace povmap::csv
