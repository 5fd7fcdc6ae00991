#include "hyperinf/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hyperinf::io {

static_assert(std::endian::native == std::endian::little, "f64le payloads assume a little-endian host");

namespace {

using json = nlohmann::ordered_json;

template <class T>
T required(const nlohmann::json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw DataError(where.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(where.string() + ": field '" + key + "' has the wrong type");
  }
}

std::vector<double> read_payload(const fs::path& path, std::size_t expected_doubles) {
  std::error_code ec;
  const auto actual = fs::file_size(path, ec);
  if (ec) throw DataError(path.string() + ": cannot stat (" + ec.message() + ")");
  const std::size_t expected = expected_doubles * sizeof(double);
  if (actual != expected)
    throw DataError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " + std::to_string(actual));
  std::vector<double> out(expected_doubles);
  std::ifstream in(path, std::ios::binary);
  if (!in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(expected)))
    throw DataError(path.string() + ": short read");
  return out;
}

void check_finite(const std::vector<double>& values, std::size_t per_example, const std::string& block,
                  const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw DataError("block '" + block + "' " + what + " example " + std::to_string(i / per_example) + " index " +
                      std::to_string(i % per_example) + ": non-finite value");
}

GradientBlock block_from(const std::string& name, std::size_t d, std::size_t r, const double* src) {
  GradientBlock g;
  g.name = name;
  g.values = DenseMatrix::from_unchecked(d, r, std::vector<double>(src, src + d * r));
  return g;
}

std::string raw_bytes(std::span<const double> values) {
  std::string s(values.size() * sizeof(double), '\0');
  if (!values.empty()) std::memcpy(s.data(), values.data(), s.size());
  return s;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GradientDump read_dump(const fs::path& manifest) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text(manifest));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  const int version = required<int>(m, "format_version", manifest);
  if (version != kManifestVersion)
    throw DataError(manifest.string() + ": unsupported format_version " + std::to_string(version));
  if (m.contains("dtype") && m["dtype"] != "f64le") throw DataError(manifest.string() + ": dtype must be f64le");
  if (m.contains("layout") && m["layout"] != "row-major") throw DataError(manifest.string() + ": layout must be row-major");
  const auto n = required<std::size_t>(m, "n_examples", manifest);
  if (!m.contains("blocks") || !m["blocks"].is_array()) throw DataError(manifest.string() + ": 'blocks' must be an array");

  const fs::path base = manifest.parent_path();
  GradientDump dump;
  for (const auto& b : m["blocks"]) {
    BlockSpec spec{required<std::string>(b, "name", manifest), required<std::size_t>(b, "d", manifest),
                   required<std::size_t>(b, "r", manifest)};
    if (spec.d == 0 || spec.r == 0) throw DataError(manifest.string() + ": block '" + spec.name + "' has a zero dimension");
    for (const auto& prev : dump.blocks)
      if (prev.name == spec.name) throw DataError(manifest.string() + ": duplicate block name '" + spec.name + "'");
    const std::size_t per = spec.d * spec.r;

    const auto train = read_payload(base / required<std::string>(b, "train_file", manifest), per * n);
    check_finite(train, per, spec.name, "train");
    const auto val = read_payload(base / required<std::string>(b, "val_file", manifest), per);
    check_finite(val, per, spec.name, "validation");

    std::vector<GradientBlock> grads;
    grads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) grads.push_back(block_from(spec.name, spec.d, spec.r, train.data() + i * per));
    dump.train_grads.push_back(std::move(grads));
    dump.val_grads.push_back(block_from(spec.name, spec.d, spec.r, val.data()));
    dump.blocks.push_back(spec);
  }

  if (m.contains("example_ids")) {
    for (const auto& id : m["example_ids"]) dump.example_ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
    if (dump.example_ids.size() != n)
      throw DataError(manifest.string() + ": example_ids has " + std::to_string(dump.example_ids.size()) +
                      " entries, n_examples is " + std::to_string(n));
    for (const auto& id : dump.example_ids)
      if (id.find_first_of(",\r\n") != std::string::npos)
        throw DataError(manifest.string() + ": example id '" + id + "' contains a comma or newline");
  } else {
    for (std::size_t i = 0; i < n; ++i) dump.example_ids.push_back(std::to_string(i));
  }
  dump.validate();
  return dump;
}

fs::path write_dump(const GradientDump& dump, const fs::path& dir) {
  dump.validate();
  fs::create_directories(dir);
  json m;
  m["format_version"] = kManifestVersion;
  m["n_examples"] = dump.n_examples();
  m["dtype"] = "f64le";
  m["layout"] = "row-major";
  m["blocks"] = json::array();
  for (std::size_t l = 0; l < dump.n_blocks(); ++l) {
    const auto& spec = dump.blocks[l];
    const std::string stem = "block" + std::to_string(l);
    std::string train;
    train.reserve(dump.n_examples() * spec.d * spec.r * sizeof(double));
    for (const auto& g : dump.train_grads[l]) train += raw_bytes(g.values.data());
    write_file_atomic(dir / (stem + ".train.f64"), train);
    write_file_atomic(dir / (stem + ".val.f64"), raw_bytes(dump.val_grads[l].values.data()));
    m["blocks"].push_back({{"name", spec.name},
                           {"d", spec.d},
                           {"r", spec.r},
                           {"train_file", stem + ".train.f64"},
                           {"val_file", stem + ".val.f64"}});
  }
  m["example_ids"] = dump.example_ids;
  const fs::path path = dir / "manifest.json";
  write_file_atomic(path, m.dump(2) + "\n");
  return path;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(path.string() + ": cannot create directory (" + ec.message() + ")");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(tmp.string() + ": cannot open for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(tmp.string() + ": write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(path.string() + ": rename failed (" + ec.message() + ")");
  }
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string scores_csv(const InfluenceReport& report) {
  std::vector<std::size_t> rank(report.size());
  for (std::size_t pos = 0; pos < report.ranking_ascending.size(); ++pos) rank[report.ranking_ascending[pos]] = pos + 1;
  std::string out = "example_id,score,rank\n";
  for (std::size_t k = 0; k < report.size(); ++k)
    out += report.example_ids[k] + "," + format_double(report.scores[k]) + "," + std::to_string(rank[k]) + "\n";
  return out;
}

nlohmann::ordered_json report_json(const InfluenceReport& report) {
  json j;
  j["estimator"] = report.estimator;
  j["n_examples"] = report.size();
  j["config"] = report.config;
  j["block_damping"] = report.block_damping;
  j["diverged"] = report.diverged;
  j["peak_curvature_elements"] = report.peak_curvature_elements;
  j["warnings"] = report.warnings;
  return j;
}

void write_report(const InfluenceReport& report, const fs::path& dir) {
  write_file_atomic(dir / "scores.csv", scores_csv(report));
  write_file_atomic(dir / "run.json", report_json(report).dump(2) + "\n");
}

std::string convergence_csv(const std::vector<ConvergenceCell>& cells) {
  std::string out = "d,n,method,iteration,error,relative_error,residual,diverged\n";
  for (const auto& c : cells) {
    auto emit = [&](const ConvergenceTrace& t) {
      for (std::size_t i = 0; i < t.per_iteration_error.size(); ++i) {
        const double e = t.per_iteration_error[i];
        const std::string resid = i < t.residuals.size() ? format_double(t.residuals[i]) : "";
        out += std::to_string(c.d) + "," + std::to_string(c.n) + "," + t.method + "," + std::to_string(i + 1) + "," +
               format_double(e) + "," + format_double(e / t.reference_norm) + "," + resid + "," +
               (t.diverged ? "1" : "0") + "\n";
      }
    };
    emit(c.schulz);
    out += std::to_string(c.d) + "," + std::to_string(c.n) + ",datainf,1," + format_double(c.datainf_error) + "," +
           format_double(c.datainf_error / c.oracle_norm) + ",,0\n";
    emit(c.lissa);
  }
  return out;
}

std::string convergence_summary_csv(const std::vector<ConvergenceCell>& cells) {
  std::string out =
      "d,n,lambda_max,oracle_norm,schulz_final_error,schulz_final_relative,schulz_converged,datainf_error,"
      "lissa_error_iter1,lissa_error_iter10,lissa_diverged\n";
  for (const auto& c : cells) {
    const auto& le = c.lissa.per_iteration_error;
    out += std::to_string(c.d) + "," + std::to_string(c.n) + "," + format_double(c.lambda_max) + "," +
           format_double(c.oracle_norm) + "," + format_double(c.schulz_final_error()) + "," +
           format_double(c.schulz_final_relative()) + "," + (c.schulz.converged ? "1" : "0") + "," +
           format_double(c.datainf_error) + "," + (le.empty() ? "" : format_double(le[0])) + "," +
           (le.size() >= 10 ? format_double(le[9]) : "") + "," + (c.lissa.diverged ? "1" : "0") + "\n";
  }
  return out;
}

std::string bench_csv(const BenchReport& report) {
  std::string out = "method,d,runs,error_mean,error_std,relative_error_mean,seconds_mean,seconds_std\n";
  for (const auto& r : report.rows)
    out += r.method + "," + std::to_string(r.d) + "," + std::to_string(r.runs) + "," + format_double(r.error_mean) + "," +
           format_double(r.error_std) + "," + format_double(r.relative_error_mean) + "," +
           format_double(r.seconds_mean) + "," + format_double(r.seconds_std) + "\n";
  return out;
}

std::string bench_runs_csv(const BenchReport& report) {
  std::string out = "method,d,run,error,relative_error,seconds\n";
  for (const auto& s : report.samples)
    out += s.method + "," + std::to_string(s.d) + "," + std::to_string(s.run) + "," + format_double(s.error) + "," +
           format_double(s.relative_error) + "," + format_double(s.seconds) + "\n";
  return out;
}

std::string detection_csv(const DetectionReport& report) {
  std::string out = "estimator,p,mean,ci_low,ci_high,seeds\n";
  const std::string nseeds = std::to_string(report.seeds.size());
  for (const auto& c : report.curves)
    for (std::size_t i = 0; i < report.p_grid.size(); ++i)
      out += c.estimator + "," + format_double(report.p_grid[i]) + "," + format_double(c.mean[i]) + "," +
             format_double(c.ci_low[i]) + "," + format_double(c.ci_high[i]) + "," + nseeds + "\n";
  for (std::size_t i = 0; i < report.p_grid.size(); ++i) {
    const std::string p = format_double(report.p_grid[i]);
    out += "oracle," + p + "," + format_double(report.oracle[i]) + "," + format_double(report.oracle[i]) + "," +
           format_double(report.oracle[i]) + "," + nseeds + "\n";
    out += "random," + p + "," + format_double(report.random[i]) + "," + format_double(report.random[i]) + "," +
           format_double(report.random[i]) + "," + nseeds + "\n";
  }
  return out;
}

std::string detection_runs_csv(const DetectionReport& report) {
  std::string out = "estimator,seed,p,recall\n";
  for (const auto& c : report.curves)
    for (std::size_t s = 0; s < c.recall.size(); ++s)
      for (std::size_t i = 0; i < report.p_grid.size(); ++i)
        out += c.estimator + "," + std::to_string(report.seeds[s]) + "," + format_double(report.p_grid[i]) + "," +
               format_double(c.recall[s][i]) + "\n";
  return out;
}

std::string selection_csv(const SelectionReport& report) {
  std::string out = "estimator,k,seed,accuracy,skipped\n";
  for (const auto& c : report.cells)
    for (std::size_t s = 0; s < c.accuracy.size(); ++s)
      out += c.estimator + "," + format_double(c.k_percent) + "," + std::to_string(report.seeds[s]) + "," +
             format_double(c.accuracy[s]) + "," + c.skipped + "\n";
  return out;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("csv: no column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size()) throw DataError("csv: row has " + std::to_string(fields.size()) + " fields");
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_text(path)); }

}  // namespace hyperinf::io
