#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmhmc/diagnostics.hpp"
#include "tmhmc/errors.hpp"

namespace tmhmc {

// All numeric output uses 17 significant digits so that values round-trip
// bit-exactly through the text files.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

inline double parse_double(const std::string& tok, std::size_t line_no) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ParseError("expected a number, got '" + tok + "'", line_no);
    return v;
}

inline long parse_integer(const std::string& tok, std::size_t line_no) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
        throw ParseError("expected an integer, got '" + tok + "'", line_no);
    return v;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

// ---- scalar observation series: header `t,y` -------------------------------

inline void write_scalar_series(const std::string& path, std::span<const double> y) {
    std::ofstream out = detail::open_output(path);
    out << "t,y\n";
    for (std::size_t t = 0; t < y.size(); ++t)
        out << (t + 1) << ',' << format_double(y[t]) << '\n';
}

inline std::vector<double> read_scalar_series(const std::string& path) {
    std::ifstream in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file '" + path + "'");
    ++line_no;
    if (detail::trim(line) != "t,y") throw ParseError("expected header 't,y'", line_no);
    std::vector<double> y;
    long expected = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const auto fields = detail::split_fields(stripped);
        if (fields.size() != 2) throw ParseError("expected two fields", line_no);
        if (detail::parse_integer(fields[0], line_no) != expected)
            throw ParseError("time index out of order", line_no);
        y.push_back(detail::parse_double(fields[1], line_no));
        ++expected;
    }
    if (y.empty()) throw ParseError("no observations in '" + path + "'");
    return y;
}

// ---- realized-covariance series: header `t,i,j,value`, 1-based upper
// triangle, completed to a symmetric matrix on load ---------------------------

inline void write_matrix_series(const std::string& path,
                                std::span<const Eigen::MatrixXd> y) {
    std::ofstream out = detail::open_output(path);
    out << "t,i,j,value\n";
    for (std::size_t t = 0; t < y.size(); ++t)
        for (Eigen::Index i = 0; i < y[t].rows(); ++i)
            for (Eigen::Index j = i; j < y[t].cols(); ++j)
                out << (t + 1) << ',' << (i + 1) << ',' << (j + 1) << ','
                    << format_double(y[t](i, j)) << '\n';
}

inline std::vector<Eigen::MatrixXd> read_matrix_series(const std::string& path) {
    std::ifstream in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file '" + path + "'");
    ++line_no;
    if (detail::trim(line) != "t,i,j,value")
        throw ParseError("expected header 't,i,j,value'", line_no);

    struct Entry {
        long i, j;
        double value;
    };
    std::map<long, std::vector<Entry>> by_time;
    long rank = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const auto fields = detail::split_fields(stripped);
        if (fields.size() != 4) throw ParseError("expected four fields", line_no);
        const long t = detail::parse_integer(fields[0], line_no);
        const long i = detail::parse_integer(fields[1], line_no);
        const long j = detail::parse_integer(fields[2], line_no);
        if (t < 1 || i < 1 || j < i)
            throw ParseError("indices must be 1-based with i <= j", line_no);
        by_time[t].push_back({i, j, detail::parse_double(fields[3], line_no)});
        rank = std::max(rank, j);
    }
    if (by_time.empty()) throw ParseError("no observations in '" + path + "'");

    std::vector<Eigen::MatrixXd> out;
    long expected = 1;
    for (const auto& [t, entries] : by_time) {
        if (t != expected) throw ParseError("missing time index " + std::to_string(expected));
        Eigen::MatrixXd m = Eigen::MatrixXd::Constant(rank, rank,
                                                      std::numeric_limits<double>::quiet_NaN());
        for (const Entry& e : entries) {
            m(e.i - 1, e.j - 1) = e.value;
            m(e.j - 1, e.i - 1) = e.value;
        }
        if (m.hasNaN())
            throw ParseError("incomplete upper triangle at time " + std::to_string(t));
        out.push_back(std::move(m));
        ++expected;
    }
    return out;
}

// ---- draws: header `iter,accept,delta_H,<constrained names>,x_1,u_1`,
// data rows, then a `# wall_time_s = <seconds>` trailer -----------------------

struct DrawsFile {
    std::vector<std::string> columns;       // names after the three fixed fields
    std::vector<std::vector<double>> rows;  // one entry per post-burn-in iteration
    double wall_time_s = 0.0;
};

inline void write_draws(const std::string& path, const DrawsFile& draws) {
    std::ofstream out = detail::open_output(path);
    out << "iter,accept,delta_H";
    for (const std::string& name : draws.columns) out << ',' << name;
    out << '\n';
    for (std::size_t r = 0; r < draws.rows.size(); ++r) {
        out << (r + 1) << ',' << static_cast<long>(draws.rows[r][0]) << ','
            << format_double(draws.rows[r][1]);
        for (std::size_t c = 2; c < draws.rows[r].size(); ++c)
            out << ',' << format_double(draws.rows[r][c]);
        out << '\n';
    }
    out << "# wall_time_s = " << format_double(draws.wall_time_s) << '\n';
}

inline DrawsFile read_draws(const std::string& path) {
    std::ifstream in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file '" + path + "'");
    ++line_no;
    auto header = detail::split_fields(detail::trim(line));
    if (header.size() < 4 || header[0] != "iter" || header[1] != "accept" ||
        header[2] != "delta_H")
        throw ParseError("expected draws header 'iter,accept,delta_H,...'", line_no);

    DrawsFile out;
    out.columns.assign(header.begin() + 3, header.end());
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '#') {
            const std::size_t eq = stripped.find('=');
            if (stripped.find("wall_time_s") != std::string::npos && eq != std::string::npos)
                out.wall_time_s =
                    detail::parse_double(detail::trim(stripped.substr(eq + 1)), line_no);
            continue;
        }
        const auto fields = detail::split_fields(stripped);
        if (fields.size() != header.size())
            throw ParseError("row width does not match header", line_no);
        std::vector<double> row;
        row.reserve(fields.size() - 1);
        for (std::size_t c = 1; c < fields.size(); ++c)
            row.push_back(detail::parse_double(fields[c], line_no));
        out.rows.push_back(std::move(row));
    }
    if (out.rows.empty()) throw ParseError("no draws in '" + path + "'");
    return out;
}

// ---- summaries: header `quantity,mean,std,ess,ess_per_s,replica` with
// per-replica rows followed by `min` and `mean` aggregate rows ----------------

inline void write_summary(std::ostream& out, std::span<const ChainSummary> replicas,
                          const ChainSummary& agg_min, const ChainSummary& agg_mean) {
    out << "quantity,mean,std,ess,ess_per_s,replica\n";
    const auto emit = [&](const ChainSummary& s, const std::string& label) {
        for (const SummaryRow& row : s.rows)
            out << row.quantity << ',' << format_double(row.mean) << ','
                << format_double(row.std) << ',' << format_double(row.ess) << ','
                << format_double(row.ess_per_s) << ',' << label << '\n';
    };
    for (std::size_t r = 0; r < replicas.size(); ++r) emit(replicas[r], std::to_string(r + 1));
    emit(agg_min, "min");
    emit(agg_mean, "mean");
}

inline void write_summary(const std::string& path, std::span<const ChainSummary> replicas,
                          const ChainSummary& agg_min, const ChainSummary& agg_mean) {
    std::ofstream out = detail::open_output(path);
    write_summary(out, replicas, agg_min, agg_mean);
}

struct SummaryFile {
    std::vector<std::pair<std::string, SummaryRow>> rows;  // (replica label, row)
};

inline SummaryFile read_summary(const std::string& path) {
    std::ifstream in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty file '" + path + "'");
    ++line_no;
    if (detail::trim(line) != "quantity,mean,std,ess,ess_per_s,replica")
        throw ParseError("unexpected summary header", line_no);
    SummaryFile out;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const auto fields = detail::split_fields(stripped);
        if (fields.size() != 6) throw ParseError("expected six fields", line_no);
        SummaryRow row;
        row.quantity = fields[0];
        row.mean = detail::parse_double(fields[1], line_no);
        row.std = detail::parse_double(fields[2], line_no);
        row.ess = detail::parse_double(fields[3], line_no);
        row.ess_per_s = detail::parse_double(fields[4], line_no);
        out.rows.emplace_back(fields[5], std::move(row));
    }
    if (out.rows.empty()) throw ParseError("no summary rows in '" + path + "'");
    return out;
}

// ---- configuration: flat `key = value` lines, `#` starts a comment ----------

struct ConfigEntry {
    std::string key, value;
    std::size_t line = 0;  // 1-based, for error reporting
};

inline std::vector<ConfigEntry> parse_config_text(std::istream& in, const std::string& origin) {
    std::vector<ConfigEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = detail::trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value' in " + origin, line_no);
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ParseError("expected 'key = value' in " + origin, line_no);
        out.push_back({key, value, line_no});
    }
    return out;
}

inline std::vector<ConfigEntry> parse_config_file(const std::string& path) {
    std::ifstream in = detail::open_input(path);
    return parse_config_text(in, "'" + path + "'");
}

}  // namespace tmhmc
