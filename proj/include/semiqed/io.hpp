#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "semiqed/error.hpp"

namespace semiqed::io {

using json = nlohmann::json;

/// Decimal with 17 significant digits; round-trips every finite double.
inline std::string format_double(double v) {
    if (!std::isfinite(v)) {
        if (std::isnan(v)) return "NaN";
        return v > 0 ? "Infinity" : "-Infinity";
    }
    if (v == 0.0) return std::signbit(v) ? "-0.0" : "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

namespace detail {

inline void emit(const json& j, std::string& out, int indent, int depth) {
    const auto newline = [&](int d) {
        if (indent < 0) return;
        out += '\n';
        out.append(std::size_t(indent * d), ' ');
    };
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            out += "{}";
            return;
        }
        out += '{';
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) out += ',';
            first = false;
            newline(depth + 1);
            out += json(it.key()).dump();
            out += indent < 0 ? ":" : ": ";
            emit(it.value(), out, indent, depth + 1);
        }
        newline(depth);
        out += '}';
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            out += "[]";
            return;
        }
        // Arrays of scalars stay on one line.
        bool scalar = true;
        for (const auto& e : j)
            if (e.is_structured()) scalar = false;
        out += '[';
        bool first = true;
        for (const auto& e : j) {
            if (!first) out += scalar ? ", " : ",";
            first = false;
            if (!scalar) newline(depth + 1);
            emit(e, out, indent, depth + 1);
        }
        if (!scalar) newline(depth);
        out += ']';
        return;
    }
    case json::value_t::number_float:
        out += format_double(j.get<double>());
        return;
    default:
        out += j.dump();
        return;
    }
}

} // namespace detail

/// Deterministic JSON text: object keys in sorted order, floats via format_double.
inline std::string dump(const json& j, int indent = 2) {
    std::string out;
    detail::emit(j, out, indent, 0);
    out += '\n';
    return out;
}

/// Write through a temporary file and rename, so readers never see partial output.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open " + tmp.string() + " for writing");
        f << content;
        if (!f) throw Error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline json parse(const std::string& text, const std::string& origin = "input") {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

/// Minimal CSV table: header plus numeric or string cells.
class Csv {
public:
    explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}

    Csv& row() {
        rows_.emplace_back();
        return *this;
    }
    Csv& operator<<(double v) {
        rows_.back().push_back(format_double(v));
        return *this;
    }
    Csv& operator<<(long long v) {
        rows_.back().push_back(std::to_string(v));
        return *this;
    }
    Csv& operator<<(int v) { return *this << static_cast<long long>(v); }
    Csv& operator<<(std::size_t v) { return *this << static_cast<long long>(v); }
    Csv& operator<<(const std::string& s) {
        rows_.back().push_back(s);
        return *this;
    }

    std::size_t rows() const { return rows_.size(); }
    std::size_t columns() const { return header_.size(); }

    std::string str() const {
        std::string out;
        const auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace semiqed::io
