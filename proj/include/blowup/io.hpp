#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blowup::io {

/// Shortest round-trippable rendering with 17 significant digits and '.' as
/// the decimal separator regardless of the global locale.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string out(buf);
    for (char& c : out)
        if (c == ',') c = '.';
    return out;
}

/// RFC-4180 style writer: header row, comma separators, CRLF-free lines.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string> header)
        : CsvWriter(path, std::vector<std::string>(header)) {}

    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
        columns_ = header.size();
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << quote(header[i]);
        }
        out_ << '\n';
    }

    void row(std::span<const double> values) {
        if (values.size() != columns_) throw std::invalid_argument("CSV row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_real(values[i]);
        }
        out_ << '\n';
    }

    void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    }

    std::ofstream out_;
    std::size_t columns_ = 0;
};

}  // namespace blowup::io
