#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nbr/bench.hpp"

namespace nbr {
namespace plots {

inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ':') c = '-';
    else if (c == '@' || c == '/' || c == ' ') c = '_';
  return s;
}

inline const char* color_for(const std::string& smr) {
  if (smr == "nbr") return "#1f77b4";
  if (smr == "nbrplus") return "#d62728";
  if (smr == "ebr") return "#2ca02c";
  if (smr == "hp") return "#9467bd";
  if (smr == "leaky") return "#7f7f7f";
  return "#ff7f0e";
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// One line chart: x = threads, y = a metric, one polyline per scheme.
/// `log_y` plots log10(max(y, 1)).
inline void write_chart(const std::string& path, const std::string& title,
                        const std::string& y_label,
                        const std::map<std::string, std::map<unsigned, double>>& series,
                        bool log_y) {
  const double W = 640, H = 420, L = 70, R = 150, T = 45, B = 50;
  const double plot_w = W - L - R, plot_h = H - T - B;

  std::set<unsigned> xs;
  double y_max = 0;
  for (const auto& [smr, pts] : series)
    for (const auto& [x, y] : pts) {
      xs.insert(x);
      y_max = std::max(y_max, log_y ? std::log10(std::max(y, 1.0)) : y);
    }
  if (xs.empty()) return;
  if (y_max <= 0) y_max = 1;
  y_max *= 1.05;
  const double x_max = static_cast<double>(*xs.rbegin());
  const double x_min = static_cast<double>(*xs.begin());
  const double x_span = std::max(x_max - x_min, 1.0);

  auto px = [&](double x) { return L + (x - x_min) / x_span * plot_w; };
  auto py = [&](double y) {
    const double v = log_y ? std::log10(std::max(y, 1.0)) : y;
    return T + plot_h - v / y_max * plot_h;
  };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "' font-family='sans-serif' font-size='12'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15'>"
      << title << "</text>\n"
      << "<line x1='" << L << "' y1='" << T + plot_h << "' x2='" << L + plot_w
      << "' y2='" << T + plot_h << "' stroke='black'/>\n"
      << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << T + plot_h
      << "' stroke='black'/>\n";
  // x ticks at the sampled thread counts
  for (unsigned x : xs) {
    svg << "<line x1='" << px(x) << "' y1='" << T + plot_h << "' x2='" << px(x)
        << "' y2='" << T + plot_h + 5 << "' stroke='black'/>\n"
        << "<text x='" << px(x) << "' y='" << T + plot_h + 18
        << "' text-anchor='middle'>" << x << "</text>\n";
  }
  svg << "<text x='" << L + plot_w / 2 << "' y='" << H - 12
      << "' text-anchor='middle'>threads</text>\n";
  // y ticks: 5 divisions
  for (int i = 0; i <= 5; ++i) {
    const double val = y_max * i / 5.0;
    const double y = T + plot_h - val / y_max * plot_h;
    std::ostringstream lab;
    if (log_y)
      lab << "1e" << std::fixed << std::setprecision(1) << val;
    else if (val >= 1e6)
      lab << std::fixed << std::setprecision(1) << val / 1e6 << "M";
    else if (val >= 1e3)
      lab << std::fixed << std::setprecision(0) << val / 1e3 << "k";
    else
      lab << std::fixed << std::setprecision(0) << val;
    svg << "<line x1='" << L - 5 << "' y1='" << y << "' x2='" << L << "' y2='" << y
        << "' stroke='black'/>\n"
        << "<text x='" << L - 8 << "' y='" << y + 4 << "' text-anchor='end'>"
        << lab.str() << "</text>\n";
  }
  svg << "<text x='16' y='" << T + plot_h / 2
      << "' text-anchor='middle' transform='rotate(-90 16 " << T + plot_h / 2 << ")'>"
      << y_label << (log_y ? " (log)" : "") << "</text>\n";

  int legend_row = 0;
  for (const auto& [smr, pts] : series) {
    std::ostringstream poly;
    for (const auto& [x, y] : pts)
      poly << px(static_cast<double>(x)) << ',' << py(y) << ' ';
    const char* color = color_for(smr);
    svg << "<polyline points='" << poly.str() << "' fill='none' stroke='" << color
        << "' stroke-width='2'/>\n";
    for (const auto& [x, y] : pts)
      svg << "<circle cx='" << px(static_cast<double>(x)) << "' cy='" << py(y)
          << "' r='3' fill='" << color << "'/>\n";
    const double ly = T + 10 + 18 * legend_row++;
    svg << "<line x1='" << L + plot_w + 12 << "' y1='" << ly << "' x2='"
        << L + plot_w + 34 << "' y2='" << ly << "' stroke='" << color
        << "' stroke-width='2'/>\n"
        << "<text x='" << L + plot_w + 40 << "' y='" << ly + 4 << "'>" << smr
        << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw io_failure("cannot open " + path + " for writing");
  out << svg.str();
}

}  // namespace plots

/// Emits one throughput chart and one peak-unreclaimed chart per
/// (structure, workload) pair found in the results, taking the median
/// over trials. Returns the list of files written.
inline std::vector<std::string> emit_plots(const std::vector<TrialMetrics>& rows,
                                           const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;

  std::set<std::pair<std::string, std::string>> groups;
  for (const auto& m : rows) groups.insert({m.ds, m.workload});

  for (const auto& [ds, workload] : groups) {
    // smr -> threads -> trial values
    std::map<std::string, std::map<unsigned, std::vector<double>>> tp, garbage;
    for (const auto& m : rows) {
      if (m.ds != ds || m.workload != workload) continue;
      tp[m.smr][m.threads].push_back(m.throughput);
      garbage[m.smr][m.threads].push_back(static_cast<double>(m.peak_unreclaimed));
    }
    auto reduce = [](const auto& in) {
      std::map<std::string, std::map<unsigned, double>> out;
      for (const auto& [smr, pts] : in)
        for (const auto& [x, vals] : pts) out[smr][x] = plots::median(vals);
      return out;
    };
    const std::string suffix = plots::sanitize(ds + "_" + workload) + ".svg";
    std::string path = dir + "/throughput_" + suffix;
    plots::write_chart(path, ds + "  " + workload + "  throughput", "ops/s",
                       reduce(tp), false);
    written.push_back(path);
    path = dir + "/peak_unreclaimed_" + suffix;
    plots::write_chart(path, ds + "  " + workload + "  peak unreclaimed records",
                       "records", reduce(garbage), true);
    written.push_back(path);
  }
  return written;
}

}  // namespace nbr
