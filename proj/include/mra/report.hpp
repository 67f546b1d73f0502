#pragma once

// Iteration logs: CSV writing and parsing, per-point summaries and a
// four-panel SVG plot.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mra/experiment.hpp"

namespace mra {

inline constexpr int kLogVersion = 1;

// "# mra_log_version=1 feasibility_threshold=<t>" followed by the header row.
void write_csv_header(std::ostream& out, double feasibility_threshold);
void write_csv_row(std::ostream& out, const IterationRecord& record);
void write_csv(std::ostream& out, const std::vector<IterationRecord>& records,
               double feasibility_threshold);

struct Log {
  std::vector<IterationRecord> records;
  double feasibility_threshold = 1e-6;
};

// Throws std::runtime_error on a malformed log or a version mismatch.
Log read_csv(std::istream& in);
Log read_csv(const std::filesystem::path& path);

struct PointSummary {
  bool present = false;     // any iteration tracked this point
  int first_feasible = -1;  // k, or -1
  double subopt_at_first = 0.0;
  double final_subopt = 0.0;
  double final_relinf = 0.0;
  // min subopt over feasible iterations so far; NaN before the first one
  std::vector<double> best_to_date;
};

struct Summary {
  int iterations = 0;
  double feasibility_threshold = 1e-6;
  std::array<PointSummary, kNumTrackedPoints> points;
};

Summary summarize(const std::vector<IterationRecord>& records, double feasibility_threshold);
// One line per tracked point, e.g. "mra: first feasible at iteration 7 with
// 1.23% suboptimality".
std::string summary_text(const Summary& summary);
std::string render_svg(const std::vector<IterationRecord>& records, const Summary& summary);

// Writes plot.svg and summary.txt into `dir`.
void write_report(const Log& log, const std::filesystem::path& dir);

}  // namespace mra
