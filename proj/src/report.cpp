#include "mra/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mra {

namespace {

constexpr const char* kFields[] = {"f", "subopt", "rp", "rc", "relinf", "domfeas"};
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s[0] == '+') ++first;
  const auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc() || r.ptr != last) {
    throw std::runtime_error("log line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string header_row() {
  std::string h = "k,g_lambda";
  for (TrackedPoint p : kTrackedPoints) {
    for (const char* f : kFields) {
      h += ',';
      h += to_string(p);
      h += '_';
      h += f;
    }
  }
  return h;
}

}  // namespace

void write_csv_header(std::ostream& out, double feasibility_threshold) {
  out << "# mra_log_version=" << kLogVersion
      << " feasibility_threshold=" << format_double(feasibility_threshold) << '\n'
      << header_row() << '\n';
}

void write_csv_row(std::ostream& out, const IterationRecord& rec) {
  out << rec.k << ',' << format_double(rec.g_lambda);
  for (const PointMetrics& pm : rec.points) {
    if (!pm.present) {
      out << ",,,,,,";
      continue;
    }
    for (double v : {pm.f, pm.subopt, pm.rp, pm.rc, pm.relinf}) out << ',' << format_double(v);
    out << ',' << (pm.domfeas ? 1 : 0);
  }
  out << '\n';
}

void write_csv(std::ostream& out, const std::vector<IterationRecord>& records,
               double feasibility_threshold) {
  write_csv_header(out, feasibility_threshold);
  for (const IterationRecord& r : records) write_csv_row(out, r);
}

Log read_csv(std::istream& in) {
  Log log;
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line)) throw std::runtime_error("log is empty");
  int version = 0;
  double threshold = 0.0;
  if (std::sscanf(line.c_str(), "# mra_log_version=%d feasibility_threshold=%lf", &version,
                  &threshold) != 2) {
    throw std::runtime_error("log line 1: missing version line");
  }
  if (version != kLogVersion) {
    throw std::runtime_error("log version " + std::to_string(version) + " is not supported");
  }
  log.feasibility_threshold = threshold;
  ++lineno;
  if (!std::getline(in, line) || line != header_row()) {
    throw std::runtime_error("log line 2: unexpected header");
  }
  const std::size_t width = 2 + kNumTrackedPoints * std::size(kFields);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != width) {
      throw std::runtime_error("log line " + std::to_string(lineno) + ": expected " +
                               std::to_string(width) + " fields");
    }
    IterationRecord rec;
    rec.k = static_cast<int>(parse_double(cells[0], lineno));
    rec.g_lambda = parse_double(cells[1], lineno);
    for (int p = 0; p < kNumTrackedPoints; ++p) {
      const std::size_t base = 2 + p * std::size(kFields);
      PointMetrics& pm = rec.points[p];
      if (cells[base].empty()) continue;
      pm.present = true;
      pm.f = parse_double(cells[base], lineno);
      pm.subopt = parse_double(cells[base + 1], lineno);
      pm.rp = parse_double(cells[base + 2], lineno);
      pm.rc = parse_double(cells[base + 3], lineno);
      pm.relinf = parse_double(cells[base + 4], lineno);
      pm.domfeas = parse_double(cells[base + 5], lineno) != 0.0;
    }
    log.records.push_back(rec);
  }
  return log;
}

Log read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log " + path.string());
  return read_csv(in);
}

Summary summarize(const std::vector<IterationRecord>& records, double feasibility_threshold) {
  Summary s;
  s.iterations = static_cast<int>(records.size());
  s.feasibility_threshold = feasibility_threshold;
  for (int p = 0; p < kNumTrackedPoints; ++p) {
    PointSummary& ps = s.points[p];
    double best = kNaN;
    for (const IterationRecord& rec : records) {
      const PointMetrics& pm = rec.points[p];
      if (pm.present) {
        ps.present = true;
        ps.final_subopt = pm.subopt;
        ps.final_relinf = pm.relinf;
        if (pm.feasible(feasibility_threshold)) {
          if (ps.first_feasible < 0) {
            ps.first_feasible = rec.k;
            ps.subopt_at_first = pm.subopt;
          }
          if (std::isnan(best) || pm.subopt < best) best = pm.subopt;
        }
      }
      ps.best_to_date.push_back(best);
    }
  }
  return s;
}

std::string summary_text(const Summary& summary) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "iterations: %d, feasibility threshold %g\n", summary.iterations,
                summary.feasibility_threshold);
  out << buf;
  for (int p = 0; p < kNumTrackedPoints; ++p) {
    const PointSummary& ps = summary.points[p];
    const char* name = to_string(kTrackedPoints[p]);
    if (!ps.present) {
      std::snprintf(buf, sizeof(buf), "%s: not tracked\n", name);
    } else if (ps.first_feasible < 0) {
      std::snprintf(buf, sizeof(buf),
                    "%s: never feasible (final relative infeasibility %.3g, suboptimality %.2f%%)\n",
                    name, ps.final_relinf, 100.0 * ps.final_subopt);
    } else {
      std::snprintf(buf, sizeof(buf),
                    "%s: first feasible at iteration %d with %.2f%% suboptimality; best feasible "
                    "%.2f%%\n",
                    name, ps.first_feasible, 100.0 * ps.subopt_at_first,
                    100.0 * ps.best_to_date.back());
    }
    out << buf;
  }
  return out.str();
}

// -- plot -------------------------------------------------------------------

namespace {

constexpr const char* kColors[kNumTrackedPoints] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                    "#ff7f0e"};

struct Series {
  int point;
  std::vector<std::pair<double, double>> xy;  // (k, value)
};

void panel(std::ostringstream& svg, double x0, double y0, double w, double h,
           const std::string& title, const std::vector<Series>& series) {
  svg << "<g>\n<text x='" << x0 + w / 2 << "' y='" << y0 - 8
      << "' text-anchor='middle' font-size='13'>" << title << "</text>\n";
  svg << "<rect x='" << x0 << "' y='" << y0 << "' width='" << w << "' height='" << h
      << "' fill='none' stroke='#444'/>\n";
  double kmin = 1e300, kmax = -1e300, lmin = 1e300, lmax = -1e300;
  for (const Series& s : series) {
    for (const auto& [k, v] : s.xy) {
      const double l = std::log10(v);
      kmin = std::min(kmin, k);
      kmax = std::max(kmax, k);
      lmin = std::min(lmin, l);
      lmax = std::max(lmax, l);
    }
  }
  if (kmin > kmax) {
    svg << "<text x='" << x0 + w / 2 << "' y='" << y0 + h / 2
        << "' text-anchor='middle' font-size='12' fill='#888'>no data for this panel</text>\n</g>\n";
    return;
  }
  lmin = std::floor(lmin);
  lmax = std::ceil(lmax);
  if (lmax <= lmin) lmax = lmin + 1;
  if (kmax <= kmin) kmax = kmin + 1;
  auto px = [&](double k) { return x0 + (k - kmin) / (kmax - kmin) * w; };
  auto py = [&](double l) { return y0 + h - (l - lmin) / (lmax - lmin) * h; };
  const int step = std::max(1, static_cast<int>((lmax - lmin) / 6));
  for (int e = static_cast<int>(lmin); e <= static_cast<int>(lmax); e += step) {
    svg << "<line x1='" << x0 << "' x2='" << x0 + w << "' y1='" << py(e) << "' y2='" << py(e)
        << "' stroke='#ddd'/>\n<text x='" << x0 - 4 << "' y='" << py(e) + 4
        << "' text-anchor='end' font-size='10'>1e" << e << "</text>\n";
  }
  svg << "<text x='" << x0 << "' y='" << y0 + h + 14 << "' font-size='10'>" << kmin
      << "</text>\n<text x='" << x0 + w << "' y='" << y0 + h + 14
      << "' text-anchor='end' font-size='10'>" << kmax << "</text>\n";
  for (const Series& s : series) {
    if (s.xy.empty()) continue;
    svg << "<polyline fill='none' stroke-width='1.5' stroke='" << kColors[s.point] << "' points='";
    for (const auto& [k, v] : s.xy) svg << px(k) << ',' << py(std::log10(v)) << ' ';
    svg << "'/>\n";
  }
  svg << "</g>\n";
}

}  // namespace

std::string render_svg(const std::vector<IterationRecord>& records, const Summary& summary) {
  auto positive = [](double v) { return std::isfinite(v) ? std::max(std::abs(v), 1e-12) : kNaN; };
  std::vector<Series> subopt, viol, relinf, best;
  for (int p = 0; p < kNumTrackedPoints; ++p) {
    Series a{p, {}}, b{p, {}}, c{p, {}}, d{p, {}};
    for (std::size_t r = 0; r < records.size(); ++r) {
      const PointMetrics& pm = records[r].points[p];
      const double k = records[r].k;
      if (pm.present) {
        if (std::isfinite(pm.subopt)) a.xy.emplace_back(k, positive(pm.subopt));
        if (std::isfinite(pm.rp)) b.xy.emplace_back(k, positive(pm.rp));
        if (std::isfinite(pm.relinf)) c.xy.emplace_back(k, positive(pm.relinf));
      }
      const double bt = summary.points[p].best_to_date[r];
      if (std::isfinite(bt)) d.xy.emplace_back(k, positive(bt));
    }
    subopt.push_back(std::move(a));
    viol.push_back(std::move(b));
    relinf.push_back(std::move(c));
    best.push_back(std::move(d));
  }
  const double W = 900, H = 700, pw = 340, ph = 230;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n";
  panel(svg, 80, 40, pw, ph, "|suboptimality|", subopt);
  panel(svg, 520, 40, pw, ph, "primal violation r_p", viol);
  panel(svg, 80, 360, pw, ph, "relative infeasibility", relinf);
  panel(svg, 520, 360, pw, ph, "best-to-date feasible |suboptimality|", best);
  double lx = 80;
  for (int p = 0; p < kNumTrackedPoints; ++p) {
    if (!summary.points[p].present) continue;
    svg << "<rect x='" << lx << "' y='" << H - 40 << "' width='14' height='4' fill='"
        << kColors[p] << "'/><text x='" << lx + 18 << "' y='" << H - 34 << "' font-size='12'>"
        << to_string(kTrackedPoints[p]) << "</text>\n";
    lx += 90;
  }
  svg << "<text x='" << W - 20 << "' y='" << H - 34
      << "' text-anchor='end' font-size='11'>iteration</text>\n</svg>\n";
  return svg.str();
}

void write_report(const Log& log, const std::filesystem::path& dir) {
  if (log.records.empty()) throw std::runtime_error("log has no iterations to report");
  std::filesystem::create_directories(dir);
  const Summary s = summarize(log.records, log.feasibility_threshold);
  std::ofstream svg(dir / "plot.svg");
  std::ofstream txt(dir / "summary.txt");
  if (!svg || !txt) throw std::runtime_error("cannot write report into " + dir.string());
  svg << render_svg(log.records, s);
  txt << summary_text(s);
}

}  // namespace mra
