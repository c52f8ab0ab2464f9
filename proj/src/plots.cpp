#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "robinit/harness.hpp"

namespace robinit {

namespace {

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t index(const std::string& name) const {
    return static_cast<std::size_t>(std::find(columns.begin(), columns.end(), name) - columns.begin());
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_table(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  Table t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw std::runtime_error(file.string() + ": empty CSV");
  t.columns = split_csv_line(line);
  static const char* required[] = {"schema_version", "cell",         "sweep_value",  "epoch",  "attack",
                                   "budget",         "status",       "clean_acc",    "attacked_acc",
                                   "success_rate"};
  std::string missing;
  for (const char* c : required)
    if (t.index(c) == t.columns.size()) missing += missing.empty() ? c : std::string(", ") + c;
  if (!missing.empty()) throw std::runtime_error(file.string() + ": missing columns: " + missing);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != t.columns.size())
      throw std::runtime_error(file.string() + ": row has " + std::to_string(row.size()) + " fields, header has " +
                               std::to_string(t.columns.size()));
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw std::runtime_error(file.string() + ": no records");
  return t;
}

struct Band {
  double mean = 0.0, lo = 0.0, hi = 0.0;
};

// Series name -> x -> values over repeats.
using Groups = std::map<std::string, std::map<double, std::vector<double>>>;

std::map<std::string, std::map<double, Band>> summarize(const Groups& groups) {
  std::map<std::string, std::map<double, Band>> out;
  for (const auto& [name, points] : groups) {
    for (const auto& [x, ys] : points) {
      Band b{0.0, ys.front(), ys.front()};
      for (double y : ys) {
        b.mean += y;
        b.lo = std::min(b.lo, y);
        b.hi = std::max(b.hi, y);
      }
      b.mean /= static_cast<double>(ys.size());
      out[name][x] = b;
    }
  }
  return out;
}

std::string comment_safe(std::string s) {
  for (std::size_t p; (p = s.find("--")) != std::string::npos;) s.replace(p, 2, "- -");
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

// Line chart of mean values with a min–max band per series.
void write_chart(const std::filesystem::path& file, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel, const std::map<std::string, std::map<double, Band>>& series) {
  const double width = 640, height = 400, left = 70, right = 180, top = 40, bottom = 50;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& [name, pts] : series) {
    for (const auto& [x, b] : pts) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, b.lo);
      ymax = std::max(ymax, b.hi);
    }
  }
  if (series.empty()) {
    xmin = ymin = 0.0;
    xmax = ymax = 1.0;
  }
  if (xmax - xmin <= 0) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin <= 0) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<!--\nseries,x,mean,min,max\n";
  for (const auto& [name, pts] : series) {
    for (const auto& [x, b] : pts) {
      os << comment_safe(name) << ',';
      write_number(os, x);
      os << ',';
      write_number(os, b.mean);
      os << ',';
      write_number(os, b.lo);
      os << ',';
      write_number(os, b.hi);
      os << '\n';
    }
  }
  os << "-->\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
       << format_number(std::round(xv * 1000) / 1000) << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">"
       << format_number(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
     << xml_escape(xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(ylabel) << "</text>\n";

  std::size_t k = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
    if (pts.size() > 1) {
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (const auto& [x, b] : pts) os << sx(x) << ',' << sy(b.hi) << ' ';
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) os << sx(it->first) << ',' << sy(it->second.lo) << ' ';
      os << "\"/>\n";
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, b] : pts) os << sx(x) << ',' << sy(b.mean) << ' ';
      os << "\"/>\n";
    }
    for (const auto& [x, b] : pts)
      os << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(b.mean) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(k);
    os << "<rect x=\"" << left + pw + 12 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\"" << color
       << "\"/>\n";
    os << "<text x=\"" << left + pw + 26 << "\" y=\"" << ly + 9 << "\">" << xml_escape(name) << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& records_csv,
                                              const std::filesystem::path& out_dir) {
  const Table t = read_table(records_csv);
  const std::size_t c_status = t.index("status"), c_epoch = t.index("epoch"), c_attack = t.index("attack"),
                    c_budget = t.index("budget"), c_value = t.index("sweep_value"), c_clean = t.index("clean_acc"),
                    c_attacked = t.index("attacked_acc"), c_success = t.index("success_rate");

  std::vector<const std::vector<std::string>*> ok;
  std::set<std::string> epochs, values;
  for (const auto& row : t.rows) {
    if (row[c_status] != "ok") continue;
    ok.push_back(&row);
    epochs.insert(row[c_epoch]);
    values.insert(row[c_value]);
  }
  if (ok.empty()) throw std::runtime_error(records_csv.string() + ": no successful records to plot");
  std::filesystem::create_directories(out_dir);

  auto series_name = [&](const std::vector<std::string>& row) {
    std::string name = row[c_attack];
    if (row[c_attack] != "none") name += " " + row[c_budget];
    if (values.size() > 1) name = row[c_value] + " " + name;
    return name;
  };

  std::vector<std::filesystem::path> files;
  if (epochs.size() > 1) {
    Groups acc, success;
    for (const auto* row : ok) {
      const double epoch = std::stod((*row)[c_epoch]);
      const std::string clean_name = (values.size() > 1 ? (*row)[c_value] + " " : std::string()) + "clean";
      acc[clean_name][epoch].push_back(std::stod((*row)[c_clean]));
      if ((*row)[c_attack] == "none") continue;
      acc[series_name(*row)][epoch].push_back(std::stod((*row)[c_attacked]));
      success[series_name(*row)][epoch].push_back(std::stod((*row)[c_success]));
    }
    files.push_back(out_dir / "accuracy_vs_epoch.svg");
    write_chart(files.back(), "Clean and attacked accuracy", "epoch", "accuracy", summarize(acc));
    files.push_back(out_dir / "success_vs_epoch.svg");
    write_chart(files.back(), "Attack success rate", "epoch", "success rate", summarize(success));
  } else {
    Groups success;
    for (const auto* row : ok) {
      std::string name = (*row)[c_attack];
      if (values.size() > 1) name = (*row)[c_value] + " " + name;
      success[name][std::stod((*row)[c_budget])].push_back(std::stod((*row)[c_success]));
    }
    files.push_back(out_dir / "success_vs_budget.svg");
    write_chart(files.back(), "Attack success rate", "budget", "success rate", summarize(success));
  }
  return files;
}

}  // namespace robinit
