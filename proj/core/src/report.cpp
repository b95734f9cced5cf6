#include "artuda/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "artuda/errors.hpp"
#include "artuda/svg.hpp"

namespace artuda::evalkit {

namespace {

std::string fmt4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

struct Group {
  std::string method;
  double lambda;
  std::vector<const MetricsRecord*> records;

  std::vector<double> collect(const std::string& attack) const {
    std::vector<double> out;
    for (const auto* r : records) {
      auto it = r->robust_acc.find(attack);
      if (it != r->robust_acc.end()) out.push_back(it->second);
    }
    return out;
  }
};

void render_sweep_svgs(const std::filesystem::path& csv_path,
                       const std::filesystem::path& out_dir) {
  std::ifstream f(csv_path);
  if (!f) return;
  std::string line;
  if (!std::getline(f, line)) return;
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "eps") return;

  std::vector<svg::Series> series(header.size() - 1);
  for (std::size_t j = 1; j < header.size(); ++j) {
    std::string label = header[j];
    std::replace(label.begin(), label.end(), '_', '=');
    series[j - 1].label = label;
  }
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size()) continue;
    for (std::size_t j = 1; j < row.size(); ++j) {
      series[j - 1].x.push_back(row[0]);
      series[j - 1].y.push_back(row[j]);
    }
  }
  if (series.front().x.empty()) return;
  svg::write_line_plot(out_dir / "report_accuracy_vs_eps.svg",
                       "Robust accuracy", "epsilon", "accuracy", series);
}

}  // namespace

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& dir) {
  std::filesystem::path file = dir / "metrics.jsonl";
  std::ifstream f(file);
  if (!f) {
    throw DataError("report: no metrics.jsonl in " + dir.string());
  }
  std::vector<MetricsRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(metrics_from_json(line));
    } catch (const DataError& e) {
      throw DataError("report: " + file.string() + ":" +
                      std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records.empty()) {
    throw DataError("report: no records in " + file.string());
  }
  return records;
}

void emit_report(const std::filesystem::path& dir) {
  std::vector<MetricsRecord> records = read_metrics(dir);

  std::vector<Group> groups;
  for (const auto& rec : records) {
    Group* g = nullptr;
    for (auto& existing : groups) {
      if (existing.method == rec.method && existing.lambda == rec.lambda_weight)
        g = &existing;
    }
    if (!g) {
      groups.push_back(Group{rec.method, rec.lambda_weight, {}});
      g = &groups.back();
    }
    g->records.push_back(&rec);
  }

  std::vector<std::string> attack_names;
  for (const auto& rec : records) {
    for (const auto& [name, unused] : rec.robust_acc) {
      if (std::find(attack_names.begin(), attack_names.end(), name) ==
          attack_names.end()) {
        attack_names.push_back(name);
      }
    }
  }

  std::ofstream md(dir / "report.md", std::ios::trunc);
  std::ofstream csv(dir / "report_summary.csv", std::ios::trunc);
  md << "# Results (" << records.front().experiment_id
     << ", median over seeds)\n\n";
  md << "| method | lambda | seeds | clean |";
  for (const auto& name : attack_names) md << ' ' << name << " |";
  md << " feature distance |\n";
  md << "|---|---|---|---|";
  for (std::size_t i = 0; i < attack_names.size(); ++i) md << "---|";
  md << "---|\n";

  csv << "method,lambda,seeds,clean_median";
  for (const auto& name : attack_names) csv << ',' << name << "_median";
  csv << ",feature_distance_median\n";

  for (const auto& g : groups) {
    std::vector<double> clean, dist;
    for (const auto* r : g.records) {
      clean.push_back(r->clean_acc);
      dist.push_back(r->feature_distance);
    }
    md << "| " << g.method << " | " << g.lambda << " | " << g.records.size()
       << " | " << fmt4(median(clean)) << " |";
    csv << g.method << ',' << g.lambda << ',' << g.records.size() << ','
        << fmt4(median(clean));
    for (const auto& name : attack_names) {
      auto accs = g.collect(name);
      if (accs.empty()) {
        md << " - |";
        csv << ',';
      } else {
        md << ' ' << fmt4(median(accs)) << " |";
        csv << ',' << fmt4(median(accs));
      }
    }
    md << ' ' << fmt4(median(dist)) << " |\n";
    csv << ',' << fmt4(median(dist)) << '\n';
  }

  for (const auto& candidate :
       {dir / "budget_sweep.csv", dir / "sweeps" / "budget_sweep.csv"}) {
    if (std::filesystem::exists(candidate)) {
      render_sweep_svgs(candidate, dir);
      break;
    }
  }
}

}  // namespace artuda::evalkit
