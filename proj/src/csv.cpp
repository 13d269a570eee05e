#include "povmap/csv.hpp"

#include "povmap/common.hpp"

#include <fstream>
#include <sstream>

namespace povmap::csv {

std::size_t Table::col(const std::string &name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw Error("MissingColumn", path + ": no column '" + name + "'");
}

Table parse_csv(std::string_view text, std::string path_label) {
    if (text.starts_with("\xef\xbb\xbf")) {
        text.remove_prefix(3);
    }
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) {
            records.push_back(std::move(record));
        }
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
            break;
        case '\n':
            end_record();
            break;
        case '"':
            if (field.empty()) {
                in_quotes = true;
            } else {
                field.push_back(c); // lenient: quote inside unquoted field
            }
            break;
        default:
            field.push_back(c);
        }
    }
    if (in_quotes) {
        throw Error("CsvError", path_label + ": unterminated quoted field");
    }
    if (!field.empty() || !record.empty()) {
        end_record();
    }
    if (records.empty()) {
        throw Error("CsvError", path_label + ": no header row");
    }

    Table t;
    t.path = std::move(path_label);
    t.header = std::move(records.front());
    t.rows.assign(std::make_move_iterator(records.begin() + 1),
                  std::make_move_iterator(records.end()));
    return t;
}

Table read_csv(const std::filesystem::path &file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw Error("IoError", "cannot open " + file.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), file.string());
}

namespace {

void append_field(std::string &out, const std::string &f) {
    if (f.find_first_of(",\"\n\r") == std::string::npos) {
        out += f;
        return;
    }
    out.push_back('"');
    for (char c : f) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
}

void append_row(std::string &out, const std::vector<std::string> &row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out.push_back(',');
        append_field(out, row[i]);
    }
    out.push_back('\n');
}

} // namespace

std::string to_csv_string(const Table &t) {
    std::string out;
    append_row(out, t.header);
    for (const auto &row : t.rows) {
        append_row(out, row);
    }
    return out;
}

void write_csv(const std::filesystem::path &file, const Table &t) {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw Error("IoError", "cannot write " + file.string());
    }
    out << to_csv_string(t);
    if (!out) {
        throw Error("IoError", "short write to " + file.string());
    }
}

} // namespace povmap::csv
