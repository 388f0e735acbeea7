#pragma once

// Format-neutral report: typed cells plus a summary block. Table output is
// for people and may round; csv and json carry the underlying values.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace tinydet::cli {

enum class ReportFormat { Table, Csv, Json };

std::optional<ReportFormat> parse_format(std::string_view text);

struct Cell {
  std::variant<std::monostate, std::string, std::int64_t, double, bool> value;
  std::string text;  // table rendering; derived from value when empty

  Cell() = default;
  Cell(std::string s) : value(std::move(s)) {}
  Cell(const char* s) : value(std::string(s)) {}
  Cell(std::int64_t v, std::string display = {}) : value(v), text(std::move(display)) {}
  Cell(int v, std::string display = {}) : value(std::int64_t{v}), text(std::move(display)) {}
  Cell(std::uint64_t v, std::string display = {}) : value(static_cast<std::int64_t>(v)), text(std::move(display)) {}
  Cell(double v, std::string display = {}) : value(v), text(std::move(display)) {}
  Cell(bool v) : value(v) {}

  std::string display() const;
};

struct Column {
  std::string name;
  bool in_table = true;
  bool in_data = true;  // csv and json
};

struct Report {
  std::string kind;
  std::string title;
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::pair<std::string, Cell>> summary;
  std::vector<std::string> footer;  // table only
  bool rows_in_table = true;
};

/// Shortest decimal that reads back as the same double, with at least one
/// fractional digit ("31.5", "0.0", "0.1").
std::string format_double(double v);

void render(std::ostream& out, const Report& report, ReportFormat format);

}  // namespace tinydet::cli
