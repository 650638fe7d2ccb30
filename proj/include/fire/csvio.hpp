#pragma once

// CSV plumbing. Reals are always written with 17 significant digits so a
// written file reloads to the same 64-bit values and reruns diff clean.

#include <iosfwd>
#include <string>
#include <vector>

namespace fire::csv {

// 17-significant-digit decimal rendering, locale-independent.
std::string real(double v);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

// Reads a rectangular comma-separated file with a header row. Throws
// IoError when unreadable, DataError when ragged.
Table read_file(const std::string& path);

double parse_real(const std::string& cell);  // DataError on junk

}  // namespace fire::csv
