#include "fire/csvio.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fire/numkernel.hpp"

namespace fire::csv {

std::string real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                   std::chars_format::general, 17);
    if (ec != std::errc()) throw NumericError("csv: failed to format real");
    return std::string(buf, ptr);
}

int Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("csv: cannot open " + path);
    Table table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
        } else {
            if (cells.size() != table.header.size())
                throw DataError("csv: ragged row in " + path);
            table.rows.push_back(std::move(cells));
        }
    }
    if (table.header.empty()) throw DataError("csv: empty file " + path);
    return table;
}

double parse_real(const std::string& cell) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    while (ptr != last && (*ptr == ' ' || *ptr == '\t')) ++ptr;
    if (ec != std::errc() || ptr != last)
        throw DataError("csv: non-numeric cell '" + cell + "'");
    return value;
}

}  // namespace fire::csv
