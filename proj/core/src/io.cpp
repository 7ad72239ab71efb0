#include "ratefit/io.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace ratefit {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::int64_t parse_count(const std::string& text, const char* name, int lineno) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(text, &pos);
        if (pos != text.size() || v < 0) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError(std::string(name) + " must be a nonnegative integer, got '" + text + "'",
                         lineno);
    }
}

double parse_real(const std::string& text, const char* name, int lineno) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError(std::string(name) + " must be numeric, got '" + text + "'", lineno);
    }
}

}  // namespace

StratifiedDataset read_table_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty input, expected header", 1);
    }
    const std::vector<std::string> header = split_csv_line(line);
    const std::vector<std::string> fixed = {"stratum_id", "n11", "n12", "n21", "n22"};
    if (header.size() < fixed.size() + 1) {
        throw ParseError("header needs stratum_id,n11,n12,n21,n22 and at least one covariate", 1);
    }
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        if (header[i] != fixed[i]) {
            throw ParseError("header column " + std::to_string(i + 1) + " must be '" + fixed[i] +
                                 "', got '" + header[i] + "'",
                             1);
        }
    }
    const std::size_t p = header.size() - fixed.size();
    for (std::size_t i = 0; i < p; ++i) {
        const std::string expected = "x" + std::to_string(i + 1);
        if (header[fixed.size() + i] != expected) {
            throw ParseError("covariate column must be '" + expected + "', got '" +
                                 header[fixed.size() + i] + "'",
                             1);
        }
    }

    std::vector<Stratum> strata;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             lineno);
        }
        const std::int64_t n11 = parse_count(fields[1], "n11", lineno);
        const std::int64_t n12 = parse_count(fields[2], "n12", lineno);
        const std::int64_t n21 = parse_count(fields[3], "n21", lineno);
        const std::int64_t n22 = parse_count(fields[4], "n22", lineno);
        Vector x(static_cast<Eigen::Index>(p));
        for (std::size_t i = 0; i < p; ++i) {
            x(static_cast<Eigen::Index>(i)) = parse_real(fields[5 + i], "covariate", lineno);
        }
        try {
            strata.push_back({StratumTable(n11, n12, n21, n22), std::move(x)});
        } catch (const std::invalid_argument& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (strata.empty()) {
        throw ParseError("no data rows", lineno);
    }
    return StratifiedDataset(std::move(strata));
}

void write_table_csv(std::ostream& out, const StratifiedDataset& ds) {
    out << "stratum_id,n11,n12,n21,n22";
    for (Eigen::Index i = 0; i < ds.dim(); ++i) out << ",x" << (i + 1);
    out << "\n";
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto& s = ds[j];
        out << (j + 1) << ',' << s.table.n11() << ',' << s.table.n12() << ',' << s.table.n21()
            << ',' << s.table.n22();
        for (Eigen::Index i = 0; i < s.x.size(); ++i) out << ',' << format_double(s.x(i));
        out << "\n";
    }
}

std::vector<RawRecord> read_survival_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty input, expected header", 1);
    }
    const std::vector<std::string> header = split_csv_line(line);
    if (header != std::vector<std::string>{"time", "status", "group"}) {
        throw ParseError("header must be 'time,status,group'", 1);
    }
    std::vector<RawRecord> records;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 3) {
            throw ParseError("expected 3 fields, got " + std::to_string(fields.size()), lineno);
        }
        const double time = parse_real(fields[0], "time", lineno);
        const std::int64_t status = parse_count(fields[1], "status", lineno);
        const std::int64_t group = parse_count(fields[2], "group", lineno);
        if (time < 0.0) throw ParseError("time must be nonnegative", lineno);
        if (status != 0 && status != 1) throw ParseError("status must be 0 or 1", lineno);
        if (group != 1 && group != 2) throw ParseError("group must be 1 or 2", lineno);
        records.push_back({time, static_cast<int>(status), static_cast<int>(group)});
    }
    if (records.empty()) {
        throw ParseError("no data rows", lineno);
    }
    return records;
}

void write_survival_csv(std::ostream& out, const std::vector<RawRecord>& records) {
    out << "time,status,group\n";
    for (const RawRecord& r : records) {
        out << format_double(r.time) << ',' << r.event << ',' << r.group << "\n";
    }
}

}  // namespace ratefit
