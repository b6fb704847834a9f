#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include <msplit/errors.hpp>
#include <msplit/matrix.hpp>

namespace msplit::io {

/// Shortest decimal text that round-trips the double exactly.
inline std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view field, std::size_t line_no)
{
    field = trim(field);
    double v = 0.0;
    // from_chars does not accept a leading '+'.
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw InvalidArgument("line " + std::to_string(line_no) + ": not a number: '"
                              + std::string(field) + "'");
    }
    return v;
}

} // namespace detail

/// Parses headerless numeric CSV. Blank lines are skipped; ragged rows are rejected.
inline Matrix parse_matrix_csv(std::istream& in)
{
    std::vector<double> data;
    std::size_t cols = 0, rows = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = detail::trim(line);
        if (body.empty()) continue;
        std::size_t n = 0;
        std::size_t start = 0;
        while (true) {
            const auto comma = body.find(',', start);
            const auto field = body.substr(start, comma == std::string_view::npos
                                                      ? std::string_view::npos
                                                      : comma - start);
            data.push_back(detail::parse_double(field, line_no));
            ++n;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (rows == 0) {
            cols = n;
        } else if (n != cols) {
            throw InvalidArgument("line " + std::to_string(line_no) + ": ragged row (" + std::to_string(n)
                                  + " fields, expected " + std::to_string(cols) + ")");
        }
        ++rows;
    }
    if (rows == 0) throw InvalidArgument("matrix CSV is empty");
    return Matrix(rows, cols, std::move(data));
}

inline Matrix read_matrix_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    try {
        return parse_matrix_csv(in);
    } catch (const std::invalid_argument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m)
{
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

inline nlohmann::json matrix_to_json(const Matrix& m)
{
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j)
{
    try {
        const auto rows = j.at("rows").get<std::size_t>();
        const auto cols = j.at("cols").get<std::size_t>();
        return Matrix(rows, cols, j.at("data").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("matrix JSON: ") + e.what());
    }
}

inline Matrix read_matrix_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    return matrix_from_json(j);
}

/// Dispatches on extension: ".json" reads the JSON form, anything else CSV.
inline Matrix read_matrix(const std::filesystem::path& path)
{
    if (path.extension() == ".json") return read_matrix_json(path);
    return read_matrix_csv(path);
}

/// One integer per line.
inline std::vector<int> read_labels(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open labels file " + path.string());
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = detail::trim(line);
        if (body.empty()) continue;
        int v = 0;
        auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
        if (ec != std::errc() || ptr != body.data() + body.size()) {
            throw InvalidArgument(path.string() + " line " + std::to_string(line_no)
                                  + ": not an integer label");
        }
        labels.push_back(v);
    }
    return labels;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << text;
}

} // namespace msplit::io
