#include "gridloop/report.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gridloop/error.hpp"
#include "gridloop/outputs.hpp"

namespace gridloop {

namespace {

struct Table {
  std::vector<std::string> header;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> rows;

  bool has(const std::string& col) const { return index.count(col) != 0; }
  double at(std::size_t row, const std::string& col) const { return rows[row][index.at(col)]; }
};

double parse_cell(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  if (cell.empty()) return std::nan("");
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(line) + ": bad number '" + cell + "'");
}

Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "missing " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw Error(ErrorCode::parse, path.string() + " is empty");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) {
    t.index[cell] = t.header.size();
    t.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      row.push_back(parse_cell(line.substr(start, comma - start), path, lineno));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() != t.header.size())
      throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                        std::to_string(t.header.size()) + " columns, got " +
                                        std::to_string(row.size()));
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw Error(ErrorCode::parse, path.string() + " has no data rows");
  return t;
}

int node_count(const Table& t) {
  int n = 0;
  while (t.has("v_true_" + std::to_string(n + 1))) ++n;
  return n;
}

}  // namespace

std::vector<std::string> generate_report(const std::filesystem::path& trace_dir, const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(trace_dir))
    throw Error(ErrorCode::io, "trace directory not found: " + trace_dir.string());
  if (std::filesystem::is_empty(trace_dir)) throw Error(ErrorCode::io, "trace directory is empty: " + trace_dir.string());
  const Table trace = read_table(trace_dir / "trace.csv");
  for (const char* col : {"iter", "cost_local", "cost_substation", "se_err_mean", "se_err_max"})
    if (!trace.has(col)) throw Error(ErrorCode::parse, "trace.csv lacks column " + std::string(col));
  nlohmann::json summary;
  if (std::filesystem::exists(trace_dir / "summary.json")) summary = read_json(trace_dir / "summary.json");

  ensure_output_dir(out_dir);
  std::vector<std::string> written;
  const std::size_t K = trace.rows.size();
  const int n = node_count(trace);

  std::vector<double> final_v;
  if (summary.contains("trials") && !summary["trials"].empty())
    final_v = summary["trials"][0].value("final_voltages", std::vector<double>{});

  {
    std::ofstream out(out_dir / "voltage_profile.csv");
    out << "node,v_true_initial,v_true_last_iter,v_hat_last_iter,v_true_final\n";
    const int nodes = n > 0 ? n : static_cast<int>(final_v.size());
    for (int id = 1; id <= nodes; ++id) {
      const std::string c = std::to_string(id);
      out << id;
      if (n > 0)
        out << ',' << format_double(trace.at(0, "v_true_" + c)) << ',' << format_double(trace.at(K - 1, "v_true_" + c))
            << ',' << format_double(trace.at(K - 1, "v_hat_" + c));
      else
        out << ",,,";
      out << ',' << (id <= static_cast<int>(final_v.size()) ? format_double(final_v[id - 1]) : "") << '\n';
    }
    written.push_back("voltage_profile.csv");
  }
  {
    std::ofstream out(out_dir / "se_error_running.csv");
    out << "iter,se_err_mean,se_err_max,running_mean,running_max\n";
    double sm = 0.0, sx = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      sm += trace.at(k, "se_err_mean");
      sx += trace.at(k, "se_err_max");
      out << static_cast<long long>(trace.at(k, "iter")) << ',' << format_double(trace.at(k, "se_err_mean")) << ','
          << format_double(trace.at(k, "se_err_max")) << ',' << format_double(sm / (k + 1)) << ','
          << format_double(sx / (k + 1)) << '\n';
    }
    written.push_back("se_error_running.csv");
  }
  {
    std::vector<double> hw;
    if (summary.contains("voltage_ci_halfwidth")) hw = summary["voltage_ci_halfwidth"].get<std::vector<double>>();
    std::ofstream out(out_dir / "ci_band.csv");
    out << "node,v_hat,lo,hi,v_true\n";
    for (int id = 1; id <= n; ++id) {
      const std::string c = std::to_string(id);
      const double v_hat = trace.at(K - 1, "v_hat_" + c);
      const double h = id <= static_cast<int>(hw.size()) ? hw[id - 1] : 0.0;
      out << id << ',' << format_double(v_hat) << ',' << format_double(v_hat - h) << ',' << format_double(v_hat + h)
          << ',' << format_double(trace.at(K - 1, "v_true_" + c)) << '\n';
    }
    written.push_back("ci_band.csv");
  }
  {
    std::ofstream out(out_dir / "cost.csv");
    out << "iter,cost_local,cost_substation,cost_total\n";
    for (std::size_t k = 0; k < K; ++k) {
      const double a = trace.at(k, "cost_local"), b = trace.at(k, "cost_substation");
      out << static_cast<long long>(trace.at(k, "iter")) << ',' << format_double(a) << ',' << format_double(b) << ','
          << format_double(a + b) << '\n';
    }
    written.push_back("cost.csv");
  }
  if (std::filesystem::exists(trace_dir / "compare.csv")) {
    const Table cmp = read_table(trace_dir / "compare.csv");
    std::ofstream out(out_dir / "se_error_by_mode.csv");
    for (std::size_t i = 0; i < cmp.header.size(); ++i) out << (i ? "," : "") << cmp.header[i];
    out << '\n';
    for (const auto& row : cmp.rows) {
      for (std::size_t i = 0; i < row.size(); ++i)
        out << (i ? "," : "") << (i == 0 ? std::to_string(static_cast<long long>(row[i])) : format_double(row[i]));
      out << '\n';
    }
    written.push_back("se_error_by_mode.csv");
  }
  return written;
}

}  // namespace gridloop
