#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "symalign/core.hpp"

namespace symalign {

enum class FormatErrorCode { Io, Header, ShapeMismatch, UnknownDtype, NanPayload, InvariantViolation };

inline std::string_view to_string(FormatErrorCode c) {
  switch (c) {
    case FormatErrorCode::Io: return "io";
    case FormatErrorCode::Header: return "header";
    case FormatErrorCode::ShapeMismatch: return "shape-mismatch";
    case FormatErrorCode::UnknownDtype: return "unknown-dtype";
    case FormatErrorCode::NanPayload: return "nan-payload";
    case FormatErrorCode::InvariantViolation: return "invariant-violation";
  }
  return "unknown";
}

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  FormatErrorCode code() const { return code_; }

 private:
  FormatErrorCode code_;
};

inline constexpr int format_version = 1;

/// Splits `key: value` lines. Blank lines and lines starting with '#' are
/// skipped; keys are case-sensitive and must be unique.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto colon = t.find(':');
    if (colon == std::string::npos) {
      throw FormatError(FormatErrorCode::Header, "line " + std::to_string(lineno) + ": expected 'key: value'");
    }
    std::string key = trim(t.substr(0, colon));
    std::string value = trim(t.substr(colon + 1));
    if (key.empty()) throw FormatError(FormatErrorCode::Header, "line " + std::to_string(lineno) + ": empty key");
    for (const auto& kv : out) {
      if (kv.first == key) throw FormatError(FormatErrorCode::Header, "duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

/// Either kind of acquisition plus optional physical pixel size (mm on the
/// effective detector).
struct DataSet {
  std::variant<Sinogram, ProjectionStack> data;
  std::optional<double> pixel_size_mm;

  bool is_fan() const { return std::holds_alternative<Sinogram>(data); }
  const Sinogram& fan() const { return std::get<Sinogram>(data); }
  const ProjectionStack& cone() const { return std::get<ProjectionStack>(data); }
};

struct WriteOptions {
  bool sidecar = false;  // payload in "<path>.raw" instead of after the header
  std::optional<double> pixel_size_mm;
};

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::uint32_t to_little(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::little) return x;
  return ((x & 0xffu) << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) | (x >> 24);
}

inline std::string encode_payload(std::span<const double> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto f = static_cast<float>(values[i]);
    const std::uint32_t word = to_little(std::bit_cast<std::uint32_t>(f));
    std::memcpy(bytes.data() + 4 * i, &word, 4);
  }
  return bytes;
}

inline std::vector<double> decode_payload(const std::string& bytes, std::size_t count) {
  if (bytes.size() != count * 4) {
    throw FormatError(FormatErrorCode::ShapeMismatch, "payload holds " + std::to_string(bytes.size()) +
                                                          " bytes, header declares " + std::to_string(count * 4));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t word;
    std::memcpy(&word, bytes.data() + 4 * i, 4);
    const float f = std::bit_cast<float>(to_little(word));
    if (!std::isfinite(f)) {
      throw FormatError(FormatErrorCode::NanPayload, "non-finite value at index " + std::to_string(i));
    }
    values[i] = f;
  }
  return values;
}

inline std::string sidecar_path(const std::filesystem::path& path) { return path.filename().string() + ".raw"; }

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw FormatError(FormatErrorCode::Io, "write failed for " + path.string());
}

inline void write_dataset(const std::filesystem::path& path, const std::string& header_body,
                          std::span<const double> values, const WriteOptions& opts) {
  std::string header = "format_version: " + std::to_string(format_version) + "\n" + header_body;
  if (opts.pixel_size_mm) header += "pixel_size_mm: " + format_double(*opts.pixel_size_mm) + "\n";
  header += "value_dtype: float32\nbyte_order: little-endian\nlayout: row-major view-outermost\n";
  const std::string payload = encode_payload(values);
  if (opts.sidecar) {
    const std::string name = sidecar_path(path);
    write_file(path.parent_path() / name, payload);
    write_file(path, header + "data_file: " + name + "\n");
  } else {
    write_file(path, header + "\n" + payload);
  }
}

class Header {
 public:
  explicit Header(std::vector<std::pair<std::string, std::string>> kv) {
    for (auto& [k, v] : kv) values_.emplace(std::move(k), std::move(v));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& text(const std::string& key) {
    used_.emplace(key);
    const auto it = values_.find(key);
    if (it == values_.end()) throw FormatError(FormatErrorCode::Header, "missing key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) {
    const std::string& s = text(key);
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw FormatError(FormatErrorCode::Header, "key '" + key + "' is not a number: " + s);
    }
    return x;
  }

  std::size_t count(const std::string& key) {
    const std::string& s = text(key);
    long long x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw FormatError(FormatErrorCode::Header, "key '" + key + "' is not an integer: " + s);
    }
    if (x < 0) throw FormatError(FormatErrorCode::InvariantViolation, "key '" + key + "' is negative");
    return static_cast<std::size_t>(x);
  }

  void reject_unused() const {
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) throw FormatError(FormatErrorCode::Header, "unknown key '" + k + "'");
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

inline std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw FormatError(FormatErrorCode::Io, "read failed for " + path.string());
  return ss.str();
}

template <class Geometry>
void check_geometry(const Geometry& g) {
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatErrorCode::InvariantViolation, e.what());
  }
}

}  // namespace detail

inline void write_sinogram(const std::filesystem::path& path, const Sinogram& sino, const WriteOptions& opts = {}) {
  const FanGeometry& g = sino.geometry();
  const std::string body = "kind: fan\nn_s: " + std::to_string(g.n_s) + "\nn_beta: " + std::to_string(g.n_beta) +
                           "\ns_max: " + detail::format_double(g.s_max) +
                           "\nsource_radius: " + detail::format_double(g.source_radius) + "\n";
  detail::write_dataset(path, body, sino.values(), opts);
}

inline void write_stack(const std::filesystem::path& path, const ProjectionStack& stack, const WriteOptions& opts = {}) {
  const ConeGeometry& g = stack.geometry();
  const std::string body = "kind: cone\nn_u: " + std::to_string(g.n_u) + "\nn_v: " + std::to_string(g.n_v) +
                           "\nn_beta: " + std::to_string(g.n_beta) + "\nu_max: " + detail::format_double(g.u_max) +
                           "\nv_max: " + detail::format_double(g.v_max) +
                           "\nsource_radius: " + detail::format_double(g.source_radius) + "\n";
  detail::write_dataset(path, body, stack.values(), opts);
}

/// Reads a fan sinogram or cone stack written by write_sinogram /
/// write_stack (single-file or sidecar mode).
inline DataSet read_dataset(const std::filesystem::path& path) {
  const std::string file = detail::read_all(path);

  // Single-file mode: header, blank line, payload. Sidecar mode: header only.
  std::string header_text;
  std::optional<std::string> inline_payload;
  if (const auto sep = file.find("\n\n"); sep != std::string::npos) {
    header_text = file.substr(0, sep + 1);
    inline_payload = file.substr(sep + 2);
  } else {
    header_text = file;
  }
  std::istringstream hs(header_text);
  detail::Header h(parse_key_values(hs));

  if (h.text("format_version") != std::to_string(format_version)) {
    throw FormatError(FormatErrorCode::Header, "unsupported format_version " + h.text("format_version"));
  }
  if (h.text("value_dtype") != "float32") {
    throw FormatError(FormatErrorCode::UnknownDtype, "value_dtype '" + h.text("value_dtype") + "'");
  }
  if (h.text("byte_order") != "little-endian") {
    throw FormatError(FormatErrorCode::Header, "byte_order '" + h.text("byte_order") + "'");
  }
  if (h.text("layout") != "row-major view-outermost") {
    throw FormatError(FormatErrorCode::Header, "layout '" + h.text("layout") + "'");
  }
  std::optional<double> pixel_size;
  if (h.has("pixel_size_mm")) {
    pixel_size = h.number("pixel_size_mm");
    if (!(*pixel_size > 0.0) || !std::isfinite(*pixel_size)) {
      throw FormatError(FormatErrorCode::InvariantViolation, "pixel_size_mm must be positive");
    }
  }

  std::string payload;
  if (h.has("data_file")) {
    if (inline_payload) throw FormatError(FormatErrorCode::Header, "data_file given but payload is inline");
    payload = detail::read_all(path.parent_path() / h.text("data_file"));
  } else {
    if (!inline_payload) throw FormatError(FormatErrorCode::Header, "no payload: missing blank-line separator");
    payload = std::move(*inline_payload);
  }

  const std::string kind = h.text("kind");
  if (kind == "fan") {
    FanGeometry g;
    g.n_s = h.count("n_s");
    g.n_beta = h.count("n_beta");
    g.s_max = h.number("s_max");
    g.source_radius = h.number("source_radius");
    h.reject_unused();
    detail::check_geometry(g);
    return DataSet{Sinogram(g, detail::decode_payload(payload, g.n_s * g.n_beta)), pixel_size};
  }
  if (kind == "cone") {
    ConeGeometry g;
    g.n_u = h.count("n_u");
    g.n_v = h.count("n_v");
    g.n_beta = h.count("n_beta");
    g.u_max = h.number("u_max");
    g.v_max = h.number("v_max");
    g.source_radius = h.number("source_radius");
    h.reject_unused();
    detail::check_geometry(g);
    return DataSet{ProjectionStack(g, detail::decode_payload(payload, g.n_u * g.n_v * g.n_beta)), pixel_size};
  }
  throw FormatError(FormatErrorCode::Header, "kind must be fan or cone, got '" + kind + "'");
}

}  // namespace symalign
