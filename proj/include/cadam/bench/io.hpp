#pragma once

// File formats: returns matrices, trace CSVs, run manifests and network
// checkpoints.

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cadam/meta/mlp.hpp"
#include "cadam/problems/portfolio.hpp"
#include "cadam/run.hpp"

namespace cadam::bench {

namespace fs = std::filesystem;

/// Input data could not be read or parsed.
class DataError : public Error {
 public:
  using Error::Error;
};

class MalformedRow : public DataError {
 public:
  using DataError::DataError;
};

class NonNumericCell : public DataError {
 public:
  using DataError::DataError;
};

class EmptyFile : public DataError {
 public:
  using DataError::DataError;
};

/// Shortest round-trip form: 17 significant digits.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Strict decimal parse of a whole cell; nullopt if anything is left over.
inline std::optional<double> parse_double(const std::string& cell) {
  const std::string s = trim(cell);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Returns CSV: header "r_1,...,r_n", then one row of n decimals per time point.

inline PortfolioData load_returns_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open returns file " + path.string());
  std::string header;
  while (std::getline(in, header) && trim(header).empty()) {
  }
  if (trim(header).empty()) throw EmptyFile(path.string() + ": no header");
  const std::size_t n = split(trim(header), ',').size();

  std::vector<double> values;
  std::size_t rows = 0, lineno = 1;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != n) {
      throw MalformedRow(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(n) +
                         " cells, got " + std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < n; ++k) {
      const auto v = parse_double(cells[k]);
      if (!v) {
        throw NonNumericCell(path.string() + ":" + std::to_string(lineno) + ": cell " + std::to_string(k + 1) +
                             " is not a number: '" + trim(cells[k]) + "'");
      }
      if (!std::isfinite(*v)) {
        throw NonNumericCell(path.string() + ":" + std::to_string(lineno) + ": non-finite cell " +
                             std::to_string(k + 1));
      }
      values.push_back(*v);
    }
    ++rows;
  }
  if (rows == 0) throw EmptyFile(path.string() + ": header only, no data rows");

  PortfolioData data{Matrix(static_cast<Index>(rows), static_cast<Index>(n))};
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < n; ++k) data.R(static_cast<Index>(i), static_cast<Index>(k)) = values[i * n + k];
  return data;
}

inline void write_returns_csv(const fs::path& path, const PortfolioData& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (Index k = 0; k < data.n(); ++k) out << (k ? "," : "") << "r_" << (k + 1);
  out << '\n';
  for (Index i = 0; i < data.m(); ++i) {
    for (Index k = 0; k < data.n(); ++k) out << (k ? "," : "") << format_double(data.R(i, k));
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Trace CSV.

inline constexpr const char* kTraceHeader =
    "t,cumulative_samples,J_exact,grad_norm_sq,tracking_err,alpha_t,beta_t,wallclock_ns";

inline std::string trace_csv(const RunTrace& trace) {
  std::string s = kTraceHeader;
  s += '\n';
  for (const auto& r : trace.rows) {
    s += std::to_string(r.t) + ',' + std::to_string(r.cumulative_samples) + ',' + format_double(r.J_exact) + ',' +
         format_double(r.grad_norm_sq) + ',' + format_double(r.tracking_err) + ',' + format_double(r.alpha_t) +
         ',' + format_double(r.beta_t) + ',' + std::to_string(r.wallclock_ns) + '\n';
  }
  return s;
}

inline RunTrace read_trace_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw EmptyFile(path.string() + ": empty trace");
  if (trim(line) != kTraceHeader) throw MalformedRow(path.string() + ": unexpected trace header");
  RunTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto c = split(trim(line), ',');
    if (c.size() != 8) throw MalformedRow(path.string() + ":" + std::to_string(lineno) + ": expected 8 cells");
    auto num = [&](std::size_t k) {
      const std::string cell = trim(c[k]);
      if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
      const auto v = parse_double(cell);
      if (!v) throw NonNumericCell(path.string() + ":" + std::to_string(lineno) + ": bad cell " + cell);
      return *v;
    };
    TraceRow r;
    r.t = static_cast<std::size_t>(num(0));
    r.cumulative_samples = static_cast<std::size_t>(num(1));
    r.J_exact = num(2);
    r.grad_norm_sq = num(3);
    r.tracking_err = num(4);
    r.alpha_t = num(5);
    r.beta_t = num(6);
    r.wallclock_ns = static_cast<std::int64_t>(num(7));
    trace.rows.push_back(r);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Output bookkeeping.

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::uint64_t hash_string(const std::string& s) { return fnv1a(s.data(), s.size()); }

/// Writes files into one directory, remembers their hashes and can undo
/// everything it wrote.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  const fs::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    written_.push_back(path);
    out << content;
    if (!out) throw DataError("write failed for " + path.string());
    entries_.push_back({name, hash_string(content), content.size()});
  }

  /// manifest.txt: one "name fnv1a64 bytes" line per file plus free-form
  /// "# key value" header lines.
  void write_manifest(const std::vector<std::pair<std::string, std::string>>& header) {
    std::string s;
    for (const auto& [k, v] : header) s += "# " + k + " " + v + "\n";
    for (const auto& e : entries_) s += e.name + " " + hex64(e.hash) + " " + std::to_string(e.bytes) + "\n";
    const fs::path path = dir_ / "manifest.txt";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    written_.push_back(path);
    out << s;
  }

  void remove_all() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    written_.clear();
    entries_.clear();
  }

  std::vector<fs::path> files() const {
    std::vector<fs::path> out;
    for (const auto& e : entries_) out.push_back(dir_ / e.name);
    return out;
  }

 private:
  struct Entry {
    std::string name;
    std::uint64_t hash;
    std::size_t bytes;
  };
  fs::path dir_;
  std::vector<fs::path> written_;
  std::vector<Entry> entries_;
};

struct ManifestEntry {
  std::string name;
  std::string hash;
  std::size_t bytes = 0;
};

inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.name >> e.hash >> e.bytes)) throw MalformedRow("bad manifest line: " + line);
    out.push_back(e);
  }
  return out;
}

inline std::string file_contents(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Checkpoint: u64 number of layer sizes, the sizes (u64 each), u64 parameter
// count, then the parameters as float64. Everything little-endian.

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  pos += 8;
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const meta::MlpArchitecture& arch, const Vector& params) {
  expect_dim(params.size(), arch.parameter_count(), "checkpoint");
  std::string out;
  detail::put_u64(out, arch.sizes.size());
  for (Index s : arch.sizes) detail::put_u64(out, static_cast<std::uint64_t>(s));
  detail::put_u64(out, static_cast<std::uint64_t>(params.size()));
  for (Index i = 0; i < params.size(); ++i) detail::put_u64(out, std::bit_cast<std::uint64_t>(params[i]));
  return out;
}

inline meta::Mlp decode_checkpoint(const std::string& bytes, meta::Activation hidden = meta::Activation::kRelu) {
  std::size_t pos = 0;
  const std::uint64_t L = detail::get_u64(bytes, pos);
  if (L < 2 || L > 1024) throw DataError("checkpoint: implausible layer count");
  meta::Mlp net;
  net.arch.sizes.clear();
  net.arch.hidden = hidden;
  for (std::uint64_t k = 0; k < L; ++k) {
    const std::uint64_t s = detail::get_u64(bytes, pos);
    if (s < 1 || s > (1u << 24)) throw DataError("checkpoint: implausible layer size");
    net.arch.sizes.push_back(static_cast<Index>(s));
  }
  const std::uint64_t P = detail::get_u64(bytes, pos);
  if (P != static_cast<std::uint64_t>(net.arch.parameter_count())) {
    throw DataError("checkpoint: parameter count does not match layer sizes");
  }
  if (bytes.size() != pos + 8 * P) throw DataError("checkpoint: wrong file size");
  net.params.resize(static_cast<Index>(P));
  for (std::uint64_t i = 0; i < P; ++i) net.params[static_cast<Index>(i)] = std::bit_cast<double>(detail::get_u64(bytes, pos));
  return net;
}

inline meta::Mlp read_checkpoint(const fs::path& path, meta::Activation hidden = meta::Activation::kRelu) {
  return decode_checkpoint(file_contents(path), hidden);
}

}  // namespace cadam::bench
