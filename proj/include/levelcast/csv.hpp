#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "levelcast/errors.hpp"

namespace levelcast {

// CSV dialect descriptor. Files in this project are plain comma-separated
// UTF-8 with a header row and no quoting.
struct CsvFormat {
    char delimiter = ',';
};

// Minimal line-oriented CSV reader that tracks line numbers for error
// reporting and resolves columns by header name.
class CsvReader {
public:
    CsvReader(const std::string& path, CsvFormat format = {});

    // Column index for `name`, or -1 if absent.
    int column(const std::string& name) const;
    // Column index for `name`; throws ParseError if the header lacks it.
    int require_column(const std::string& name) const;

    const std::vector<std::string>& header() const { return header_; }

    // Reads the next row into `fields`. Returns false at EOF.
    bool next(std::vector<std::string>& fields);

    long line_number() const { return line_; }
    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
    CsvFormat format_;
    std::vector<std::string> header_;
    std::map<std::string, int> columns_;
    long line_ = 0;
};

long parse_long_field(const std::string& field, const CsvReader& reader,
                      const std::string& column_name);
double parse_double_field(const std::string& field, const CsvReader& reader,
                          const std::string& column_name);

// Buffered CSV writer with fixed numeric formatting so that identical data
// always serializes to identical bytes.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();

    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void write_row(const std::vector<std::string>& fields);
    void close();

private:
    std::ofstream out_;
    std::string path_;
};

// Shortest-round-trip style formatting: %.17g guarantees the double is
// recoverable bit-exactly from the text.
std::string fmt_double_exact(double v);
// Compact formatting for plot-facing files.
std::string fmt_double(double v, int precision = 9);

} // namespace levelcast
