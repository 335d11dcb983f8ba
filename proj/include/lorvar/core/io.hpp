#ifndef LORVAR_CORE_IO_HPP
#define LORVAR_CORE_IO_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <unistd.h>
#include <utility>
#include <variant>
#include <vector>

#include "lorvar/core/error.hpp"

namespace lorvar::io {

/// 17 significant digits, so every double round-trips.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Cell = std::variant<double, std::int64_t, std::uint64_t, std::string>;

inline std::string format_cell(const Cell& c) {
  struct Visitor {
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(std::uint64_t v) const { return std::to_string(v); }
    std::string operator()(const std::string& v) const { return v; }
  };
  return std::visit(Visitor{}, c);
}

/// A table with a fixed header; rendered as CSV or as a JSON object
/// {"columns": [...], "rows": [[...], ...]}.
class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns_.size()) throw DomainError("Table: row width mismatch");
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const noexcept { return rows_.size(); }

  std::string to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (i) out += ',';
      out += columns_[i];
    }
    out += '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += format_cell(row[i]);
      }
      out += '\n';
    }
    return out;
  }

  std::string to_json() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

inline std::string json_quote(std::string_view s) {
  std::string out = "\"";
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += ch;
    }
  }
  out += '"';
  return out;
}

/// Non-finite doubles have no JSON literal; they are written as null.
inline std::string json_number(double v) { return std::isfinite(v) ? format_double(v) : "null"; }

inline std::string json_cell(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return json_number(*d);
  if (const auto* s = std::get_if<std::string>(&c)) return json_quote(*s);
  return format_cell(c);
}

inline std::string Table::to_json() const {
  std::string out = "{\"columns\":[";
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i) out += ',';
    out += json_quote(columns_[i]);
  }
  out += "],\"rows\":[";
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    if (r) out += ',';
    out += '[';
    for (std::size_t i = 0; i < rows_[r].size(); ++i) {
      if (i) out += ',';
      out += json_cell(rows_[r][i]);
    }
    out += ']';
  }
  out += "]}\n";
  return out;
}

/// JSON object whose keys keep insertion order (the documented field order).
class JsonObject {
 public:
  JsonObject& add(std::string key, double v) { return raw(std::move(key), json_number(v)); }
  JsonObject& add(std::string key, int v) { return raw(std::move(key), std::to_string(v)); }
  JsonObject& add(std::string key, std::int64_t v) { return raw(std::move(key), std::to_string(v)); }
  JsonObject& add(std::string key, std::uint64_t v) { return raw(std::move(key), std::to_string(v)); }
  JsonObject& add(std::string key, bool v) { return raw(std::move(key), v ? "true" : "false"); }
  JsonObject& add(std::string key, const char* v) { return raw(std::move(key), json_quote(v)); }
  JsonObject& add(std::string key, const std::string& v) { return raw(std::move(key), json_quote(v)); }
  JsonObject& add(std::string key, const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += json_number(v[i]);
    }
    return raw(std::move(key), s + "]");
  }
  JsonObject& add(std::string key, const JsonObject& v) { return raw(std::move(key), v.str(false)); }
  JsonObject& add(std::string key, const std::vector<JsonObject>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += v[i].str(false);
    }
    return raw(std::move(key), s + "]");
  }

  std::string str(bool trailing_newline = true) const {
    std::string out = "{";
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      if (i) out += ',';
      out += json_quote(fields_[i].first);
      out += ':';
      out += fields_[i].second;
    }
    out += '}';
    if (trailing_newline) out += '\n';
    return out;
  }

 private:
  JsonObject& raw(std::string key, std::string value) {
    fields_.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  std::vector<std::pair<std::string, std::string>> fields_;
};

/// Writes content to a sibling temp file and renames it over path, so a
/// reader never observes a partially written file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lorvar::io

#endif  // LORVAR_CORE_IO_HPP
