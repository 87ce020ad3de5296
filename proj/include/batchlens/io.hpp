#ifndef BATCHLENS_IO_HPP
#define BATCHLENS_IO_HPP

// CSV trajectories and the JSON run manifest.

#include <batchlens/dynamics.hpp>
#include <batchlens/errors.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace batchlens {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

class IoError : public Error {
 public:
  using Error::Error;
};

/// Shortest decimal that parses back to the same double; inf, -inf and nan
/// are written literally.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kCsvHeader = "t,phi,psi,r,norm_sq,loss,i_star,batch_hit,delta_r";

/// Writes the trajectory table. With n_coords > 0, columns c_1..c_n are added
/// and every record must carry that many coordinates. i_star is 1-based and
/// written as 0 when R is undefined.
inline void write_csv(std::ostream& out, std::span<const TrajectoryRecord> records, std::size_t n_coords = 0) {
  out << kCsvHeader;
  for (std::size_t j = 1; j <= n_coords; ++j) out << ",c_" << j;
  out << '\n';
  for (const TrajectoryRecord& rec : records) {
    out << rec.t << ',' << format_double(rec.phi) << ',' << format_double(rec.psi) << ',' << format_double(rec.r)
        << ',' << format_double(rec.norm_sq) << ',' << format_double(rec.loss) << ','
        << (std::isnan(rec.r) ? 0 : rec.i_star + 1) << ',' << (rec.batch_hit ? 1 : 0) << ','
        << format_double(rec.delta_r);
    if (n_coords > 0) {
      require_same_size(rec.coords.size(), n_coords, "write_csv coordinates");
      for (double c : rec.coords) out << ',' << format_double(c);
    }
    out << '\n';
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

inline void emit_csv(std::span<const TrajectoryRecord> records, const std::filesystem::path& path,
                     std::size_t n_coords = 0) {
  std::ostringstream buf;
  write_csv(buf, records, n_coords);
  write_text_file(path, buf.str());
}

/// Non-finite doubles have no JSON number form; they become strings.
inline ordered_json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

inline double read_number(const ordered_json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw InvalidInput("not a number: " + s);
}

struct RunEntry {
  std::string label;
  std::uint64_t seed = 0;
  std::string limit = "not_converged";
  std::size_t steps = 0;
  bool converged = false;
  double phi = 0.0;
  double psi = 0.0;
  double r = 0.0;
  double loss = 0.0;
  double norm_sq = 0.0;
  std::string error;  // empty unless the run failed
};

inline bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

inline bool operator==(const RunEntry& a, const RunEntry& b) {
  return a.label == b.label && a.seed == b.seed && a.limit == b.limit && a.steps == b.steps &&
         a.converged == b.converged && same_double(a.phi, b.phi) && same_double(a.psi, b.psi) &&
         same_double(a.r, b.r) && same_double(a.loss, b.loss) && same_double(a.norm_sq, b.norm_sq) &&
         a.error == b.error;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;

  bool operator==(const CheckResult&) const = default;
};

struct RunManifest {
  int schema_version = kSchemaVersion;
  std::string preset;
  ordered_json config = ordered_json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<RunEntry> runs;
  std::vector<CheckResult> checks;
  ordered_json results = ordered_json::object();

  bool all_passed() const {
    for (const CheckResult& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }

  bool operator==(const RunManifest&) const = default;
};

inline ordered_json to_json(const RunEntry& e) {
  ordered_json j;
  j["label"] = e.label;
  j["seed"] = e.seed;
  j["limit"] = e.limit;
  j["steps"] = e.steps;
  j["converged"] = e.converged;
  j["final"] = {{"phi", json_number(e.phi)},
                {"psi", json_number(e.psi)},
                {"r", json_number(e.r)},
                {"loss", json_number(e.loss)},
                {"norm_sq", json_number(e.norm_sq)}};
  j["error"] = e.error;
  return j;
}

inline ordered_json to_json(const RunManifest& m) {
  ordered_json j;
  j["schema_version"] = m.schema_version;
  j["preset"] = m.preset;
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  ordered_json runs = ordered_json::array();
  for (const RunEntry& e : m.runs) runs.push_back(to_json(e));
  j["runs"] = std::move(runs);
  ordered_json checks = ordered_json::array();
  for (const CheckResult& c : m.checks) {
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  j["checks"] = std::move(checks);
  j["all_passed"] = m.all_passed();
  j["results"] = m.results;
  return j;
}

inline RunManifest manifest_from_json(const ordered_json& j) {
  RunManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kSchemaVersion) {
    throw InvalidInput("unsupported schema_version " + std::to_string(m.schema_version));
  }
  m.preset = j.at("preset").get<std::string>();
  m.config = j.at("config");
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& r : j.at("runs")) {
    RunEntry e;
    e.label = r.at("label").get<std::string>();
    e.seed = r.at("seed").get<std::uint64_t>();
    e.limit = r.at("limit").get<std::string>();
    e.steps = r.at("steps").get<std::size_t>();
    e.converged = r.at("converged").get<bool>();
    const auto& f = r.at("final");
    e.phi = read_number(f.at("phi"));
    e.psi = read_number(f.at("psi"));
    e.r = read_number(f.at("r"));
    e.loss = read_number(f.at("loss"));
    e.norm_sq = read_number(f.at("norm_sq"));
    e.error = r.at("error").get<std::string>();
    m.runs.push_back(std::move(e));
  }
  for (const auto& c : j.at("checks")) {
    m.checks.push_back({c.at("name").get<std::string>(), c.at("passed").get<bool>(), c.at("detail").get<std::string>()});
  }
  m.results = j.at("results");
  return m;
}

inline std::string dump_manifest(const RunManifest& m) { return to_json(m).dump(2) + "\n"; }

inline RunManifest parse_manifest(const std::string& text) {
  try {
    return manifest_from_json(ordered_json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed manifest: ") + e.what());
  }
}

inline void emit_json(const RunManifest& m, const std::filesystem::path& path) { write_text_file(path, dump_manifest(m)); }

inline std::string dump_checks(const RunManifest& m) {
  ordered_json j;
  j["schema_version"] = m.schema_version;
  j["preset"] = m.preset;
  ordered_json checks = ordered_json::object();
  for (const CheckResult& c : m.checks) checks[c.name] = c.passed;
  j["checks"] = std::move(checks);
  j["all_passed"] = m.all_passed();
  return j.dump(2) + "\n";
}

}  // namespace batchlens

#endif  // BATCHLENS_IO_HPP
