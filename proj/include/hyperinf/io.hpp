#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperinf/estimators.hpp"
#include "hyperinf/harness.hpp"

namespace hyperinf::io {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

// Manifest (JSON):
//   {"format_version": 1, "n_examples": n, "dtype": "f64le", "layout": "row-major",
//    "blocks": [{"name", "d", "r", "train_file", "val_file"}, ...],
//    "example_ids": [...]}            (optional; defaults to "0".."n-1")
// Paths are relative to the manifest's directory. Example i of a block
// occupies bytes [8 d r i, 8 d r (i + 1)) of its train file.
GradientDump read_dump(const fs::path& manifest);

// Writes <dir>/manifest.json plus one train and one val file per block.
// Returns the manifest path.
fs::path write_dump(const GradientDump& dump, const fs::path& dir);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const fs::path& path, const std::string& contents);

// %.17g, which round-trips every finite double.
std::string format_double(double x);

// example_id,score,rank with rank the 1-based position in ascending order.
std::string scores_csv(const InfluenceReport& report);
nlohmann::ordered_json report_json(const InfluenceReport& report);
// scores.csv and run.json in dir.
void write_report(const InfluenceReport& report, const fs::path& dir);

std::string convergence_csv(const std::vector<ConvergenceCell>& cells);
std::string convergence_summary_csv(const std::vector<ConvergenceCell>& cells);
std::string bench_csv(const BenchReport& report);
std::string bench_runs_csv(const BenchReport& report);
std::string detection_csv(const DetectionReport& report);
std::string detection_runs_csv(const DetectionReport& report);
std::string selection_csv(const SelectionReport& report);

// Minimal CSV reader for the files above: header plus rows, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const fs::path& path);

std::string read_text(const fs::path& path);

}  // namespace hyperinf::io
