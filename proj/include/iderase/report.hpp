#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "iderase/common.hpp"

namespace iderase {

// One evaluation protocol's tabular output. Cells are pre-formatted strings
// so CSV and JSON serializations are byte-deterministic.
struct EvalReport {
  std::string protocol;
  std::uint64_t fingerprint = 0;  // canonical config hash
  std::uint64_t seed = 0;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells) {
    check(cells.size() == columns.size(),
          "report row width does not match columns");
    rows.push_back(std::move(cells));
  }
};

inline std::string fmt_cell(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string report_header_line(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "# protocol=%s fingerprint=%016llx seed=%llu",
                r.protocol.c_str(),
                static_cast<unsigned long long>(r.fingerprint),
                static_cast<unsigned long long>(r.seed));
  return buf;
}

inline void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  check(out.good(), "cannot write report: " + path.string());
  out << report_header_line(r) << "\n";
  for (std::size_t i = 0; i < r.columns.size(); ++i)
    out << (i ? "," : "") << r.columns[i];
  out << "\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  check(out.good(), "failed writing report: " + path.string());
}

inline void write_report_json(const EvalReport& r, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  nlohmann::ordered_json j;
  j["protocol"] = r.protocol;
  char fp[24];
  std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(r.fingerprint));
  j["fingerprint"] = fp;
  j["seed"] = r.seed;
  j["columns"] = r.columns;
  j["rows"] = r.rows;
  std::ofstream out(path, std::ios::trunc);
  check(out.good(), "cannot write report: " + path.string());
  out << j.dump(2) << "\n";
  check(out.good(), "failed writing report: " + path.string());
}

inline EvalReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  check(in.good(), "cannot read report: " + path.string());
  EvalReport r;
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "empty report: " + path.string());
  check(line.rfind("# protocol=", 0) == 0, "missing report header: " + path.string());
  {
    std::string rest = line.substr(2);
    std::vector<std::pair<std::string, std::string>> kv;
    std::size_t pos = 0;
    while (pos < rest.size()) {
      auto sp = rest.find(' ', pos);
      std::string tok = rest.substr(pos, sp == std::string::npos ? sp : sp - pos);
      auto eq = tok.find('=');
      check(eq != std::string::npos, "malformed report header: " + path.string());
      kv.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
      if (sp == std::string::npos) break;
      pos = sp + 1;
    }
    for (const auto& [k, v] : kv) {
      if (k == "protocol") r.protocol = v;
      if (k == "fingerprint") r.fingerprint = std::stoull(v, nullptr, 16);
      if (k == "seed") r.seed = std::stoull(v);
    }
  }
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  };
  check(static_cast<bool>(std::getline(in, line)), "report missing column row");
  r.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    r.add_row(split(line));
  }
  return r;
}

}  // namespace iderase
