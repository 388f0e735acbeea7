#include "tinydet/report.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>

#include <nlohmann/json.hpp>

namespace tinydet::cli {

std::optional<ReportFormat> parse_format(std::string_view text) {
  if (text == "table") return ReportFormat::Table;
  if (text == "csv") return ReportFormat::Csv;
  if (text == "json") return ReportFormat::Json;
  return std::nullopt;
}

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

namespace {

std::string raw(const Cell& c) {
  struct Visitor {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(bool v) const { return v ? "true" : "false"; }
  };
  return std::visit(Visitor{}, c.value);
}

bool numeric(const Cell& c) {
  return std::holds_alternative<std::int64_t>(c.value) || std::holds_alternative<double>(c.value);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

nlohmann::ordered_json to_json(const Cell& c) {
  struct Visitor {
    nlohmann::ordered_json operator()(std::monostate) const { return nullptr; }
    nlohmann::ordered_json operator()(const std::string& s) const { return s; }
    nlohmann::ordered_json operator()(std::int64_t v) const { return v; }
    nlohmann::ordered_json operator()(double v) const { return v; }
    nlohmann::ordered_json operator()(bool v) const { return v; }
  };
  return std::visit(Visitor{}, c.value);
}

void render_table(std::ostream& out, const Report& r) {
  if (!r.title.empty()) out << r.title << '\n';
  if (r.rows_in_table && !r.columns.empty()) {
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < r.columns.size(); ++i)
      if (r.columns[i].in_table) cols.push_back(i);
    std::vector<std::size_t> width(cols.size());
    std::vector<bool> right(cols.size(), false);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      width[k] = r.columns[cols[k]].name.size();
      for (const auto& row : r.rows) {
        width[k] = std::max(width[k], row[cols[k]].display().size());
        if (numeric(row[cols[k]])) right[k] = true;
      }
    }
    auto line = [&](auto cell_text) {
      std::string s;
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const std::string t = cell_text(k);
        const std::string pad(width[k] - t.size(), ' ');
        if (k) s += "  ";
        s += right[k] ? pad + t : t + pad;
      }
      while (!s.empty() && s.back() == ' ') s.pop_back();
      out << s << '\n';
    };
    line([&](std::size_t k) { return r.columns[cols[k]].name; });
    line([&](std::size_t k) { return std::string(width[k], '-'); });
    for (const auto& row : r.rows) line([&](std::size_t k) { return row[cols[k]].display(); });
  }
  if (!r.footer.empty()) {
    if (r.rows_in_table && !r.rows.empty()) out << '\n';
    for (const auto& f : r.footer) out << f << '\n';
  }
}

void render_csv(std::ostream& out, const Report& r) {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < r.columns.size(); ++i)
    if (r.columns[i].in_data) cols.push_back(i);
  if (!cols.empty()) {
    for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << csv_escape(r.columns[cols[k]].name);
    out << '\n';
    for (const auto& row : r.rows) {
      for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << csv_escape(raw(row[cols[k]]));
      out << '\n';
    }
  }
  if (!r.summary.empty()) {
    if (!cols.empty()) out << '\n';
    out << "key,value\n";
    for (const auto& [k, v] : r.summary) out << csv_escape(k) << ',' << csv_escape(raw(v)) << '\n';
  }
}

void render_json(std::ostream& out, const Report& r) {
  nlohmann::ordered_json doc;
  doc["report"] = r.kind;
  auto summary = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.summary) summary[k] = to_json(v);
  doc["summary"] = summary;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < r.columns.size(); ++i)
      if (r.columns[i].in_data) obj[r.columns[i].name] = to_json(row[i]);
    rows.push_back(std::move(obj));
  }
  doc["rows"] = rows;
  out << doc.dump(2) << '\n';
}

}  // namespace

std::string Cell::display() const {
  if (!text.empty()) return text;
  if (std::holds_alternative<std::monostate>(value)) return "-";
  if (const bool* b = std::get_if<bool>(&value)) return *b ? "yes" : "no";
  return raw(*this);
}

void render(std::ostream& out, const Report& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Table: render_table(out, report); break;
    case ReportFormat::Csv: render_csv(out, report); break;
    case ReportFormat::Json: render_json(out, report); break;
  }
}

}  // namespace tinydet::cli
