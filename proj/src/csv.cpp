#include "levelcast/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace levelcast {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, delim)) fields.push_back(field);
    if (!line.empty() && line.back() == delim) fields.emplace_back();
    return fields;
}

void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

} // namespace

CsvReader::CsvReader(const std::string& path, CsvFormat format)
    : in_(path), path_(path), format_(format) {
    if (!in_) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in_, line)) throw ParseError(path + ": empty file", 0);
    strip_cr(line);
    line_ = 1;
    header_ = split_line(line, format_.delimiter);
    for (std::size_t i = 0; i < header_.size(); ++i)
        columns_[header_[i]] = static_cast<int>(i);
}

int CsvReader::column(const std::string& name) const {
    auto it = columns_.find(name);
    return it == columns_.end() ? -1 : it->second;
}

int CsvReader::require_column(const std::string& name) const {
    int c = column(name);
    if (c < 0) throw ParseError(path_ + ": missing column '" + name + "'", 1);
    return c;
}

bool CsvReader::next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
        strip_cr(line);
        ++line_;
        if (line.empty()) continue;
        fields = split_line(line, format_.delimiter);
        if (fields.size() != header_.size())
            throw ParseError(path_ + ": expected " + std::to_string(header_.size()) +
                                 " fields, got " + std::to_string(fields.size()),
                             line_);
        return true;
    }
    return false;
}

long parse_long_field(const std::string& field, const CsvReader& reader,
                      const std::string& column_name) {
    errno = 0;
    char* end = nullptr;
    long v = std::strtol(field.c_str(), &end, 10);
    if (errno != 0 || end == field.c_str() || *end != '\0')
        throw ParseError(reader.path() + ": bad integer '" + field + "' in column " +
                             column_name,
                         reader.line_number());
    return v;
}

double parse_double_field(const std::string& field, const CsvReader& reader,
                          const std::string& column_name) {
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    if (errno != 0 || end == field.c_str() || *end != '\0' || !std::isfinite(v))
        throw ParseError(reader.path() + ": bad number '" + field + "' in column " +
                             column_name,
                         reader.line_number());
    return v;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path), path_(path) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
}

CsvWriter::~CsvWriter() {
    if (out_.is_open()) out_.close();
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << fields[i];
    }
    out_ << '\n';
    if (!out_) throw IoError("write failed on " + path_);
}

void CsvWriter::close() {
    out_.close();
    if (out_.fail()) throw IoError("close failed on " + path_);
}

std::string fmt_double_exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_double(double v, int precision) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

} // namespace levelcast
