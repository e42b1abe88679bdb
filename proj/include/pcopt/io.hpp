#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "grid.hpp"

namespace pcopt {

/// File-format errors carry a kind so callers can tell a bad magic from a
/// truncated payload or inconsistent dimensions.
struct IoError : std::runtime_error {
  enum class Kind { bad_magic, truncated_payload, dimension_mismatch, missing_file, malformed };
  Kind kind;
  IoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

/// Field container format: a plain-text header sidecar `<path>.hdr` next to
/// a raw payload `<path>` of little-endian float64 values, x-fastest, one
/// component after another.
inline constexpr const char* field_magic = "PFIELD1";

namespace detail {

inline void write_file_atomic(const std::string& path, const char* data, std::size_t size) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoError::Kind::missing_file, "cannot open for writing: " + tmp);
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw IoError(IoError::Kind::malformed, "short write: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(IoError::Kind::malformed, "rename failed: " + path);
}

inline void write_field_files(const std::string& path, const Grid& g, int components,
                              const std::vector<const std::vector<double>*>& parts) {
  std::ostringstream hdr;
  hdr << field_magic << "\n";
  hdr << "dims";
  for (int c = 0; c < g.d; ++c) hdr << " " << g.n[c];
  hdr << "\nspacing";
  char buf[64];
  for (int c = 0; c < g.d; ++c) {
    std::snprintf(buf, sizeof(buf), " %.17g", g.spacing(c));
    hdr << buf;
  }
  hdr << "\ncomponents " << components << "\ntype float64\n";

  std::string payload;
  payload.reserve(parts.size() * g.points() * sizeof(double));
  for (const auto* part : parts) {
    const char* bytes = reinterpret_cast<const char*>(part->data());
    payload.append(bytes, part->size() * sizeof(double));
  }
  // payload first: a reader that sees the header can rely on the payload
  write_file_atomic(path, payload.data(), payload.size());
  const std::string h = hdr.str();
  write_file_atomic(path + ".hdr", h.data(), h.size());
}

}  // namespace detail

inline void write_field(const std::string& path, const ScalarField& f) {
  detail::write_field_files(path, f.grid, 1, {&f.v});
}

inline void write_field(const std::string& path, const VectorField& f) {
  std::vector<const std::vector<double>*> parts;
  for (const auto& c : f.c) parts.push_back(&c.v);
  detail::write_field_files(path, f.grid, f.dims(), parts);
}

struct FieldFileInfo {
  Grid grid;
  int components = 1;
};

inline FieldFileInfo read_field_header(const std::string& path) {
  std::ifstream in(path + ".hdr");
  if (!in) throw IoError(IoError::Kind::missing_file, "missing header: " + path + ".hdr");
  std::string magic;
  std::getline(in, magic);
  if (magic != field_magic)
    throw IoError(IoError::Kind::bad_magic, "bad magic in " + path + ".hdr");

  std::vector<int> dims;
  int components = -1;
  std::string type;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "dims") {
      int v;
      while (ss >> v) dims.push_back(v);
    } else if (key == "components") {
      ss >> components;
    } else if (key == "type") {
      ss >> type;
    } else if (key == "spacing" || key.empty()) {
      // spacing is informational: it is fixed by dims on the periodic domain
    } else {
      throw IoError(IoError::Kind::malformed, "unknown header key '" + key + "' in " + path);
    }
  }
  if (dims.size() != 2 && dims.size() != 3)
    throw IoError(IoError::Kind::dimension_mismatch, "header needs 2 or 3 dims: " + path);
  if (components < 1) throw IoError(IoError::Kind::malformed, "bad component count: " + path);
  if (type != "float64") throw IoError(IoError::Kind::malformed, "unsupported type: " + path);

  FieldFileInfo info;
  try {
    info.grid = (dims.size() == 2) ? Grid(dims[0], dims[1]) : Grid(dims[0], dims[1], dims[2]);
  } catch (const std::invalid_argument& e) {
    throw IoError(IoError::Kind::dimension_mismatch, std::string(e.what()) + ": " + path);
  }
  info.components = components;
  return info;
}

using AnyField = std::variant<ScalarField, VectorField>;

inline AnyField read_field(const std::string& path) {
  FieldFileInfo info = read_field_header(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::missing_file, "missing payload: " + path);
  in.seekg(0, std::ios::end);
  const std::size_t bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  const std::size_t expected = info.grid.points() * info.components * sizeof(double);
  if (bytes != expected)
    throw IoError(IoError::Kind::truncated_payload,
                  "payload of " + path + " has " + std::to_string(bytes) + " bytes, expected " +
                      std::to_string(expected));

  std::vector<double> data(info.grid.points() * info.components);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError(IoError::Kind::truncated_payload, "short read: " + path);

  if (info.components == 1) {
    ScalarField f(info.grid);
    std::copy(data.begin(), data.end(), f.v.begin());
    return f;
  }
  if (info.components != info.grid.d)
    throw IoError(IoError::Kind::dimension_mismatch,
                  "vector field component count does not match dimension: " + path);
  VectorField f(info.grid);
  for (int c = 0; c < info.components; ++c)
    std::copy(data.begin() + c * info.grid.points(),
              data.begin() + (c + 1) * info.grid.points(), f.c[c].v.begin());
  return f;
}

inline ScalarField read_scalar_field(const std::string& path) {
  AnyField f = read_field(path);
  if (!std::holds_alternative<ScalarField>(f))
    throw IoError(IoError::Kind::dimension_mismatch, "expected a scalar field: " + path);
  return std::get<ScalarField>(std::move(f));
}

inline VectorField read_vector_field(const std::string& path) {
  AnyField f = read_field(path);
  if (!std::holds_alternative<VectorField>(f))
    throw IoError(IoError::Kind::dimension_mismatch, "expected a vector field: " + path);
  return std::get<VectorField>(std::move(f));
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
  detail::write_file_atomic(path, text.data(), text.size());
}

// ---- PGM slice export ------------------------------------------------------

namespace detail {

/// 8-bit min-max scaled P5 image; the scale is recorded in a header comment
/// so exports are pure views of the field.
inline std::string encode_pgm(const std::vector<double>& vals, int w, int h) {
  double lo = vals.empty() ? 0.0 : vals[0], hi = lo;
  for (double v : vals) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  char head[160];
  std::snprintf(head, sizeof(head), "P5\n# min=%.17g max=%.17g\n%d %d\n255\n", lo, hi, w, h);
  std::string out(head);
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  for (double v : vals) {
    int g = static_cast<int>((v - lo) * scale + 0.5);
    out.push_back(static_cast<char>(g < 0 ? 0 : (g > 255 ? 255 : g)));
  }
  return out;
}

}  // namespace detail

/// Center-slice PGM export: axial/coronal/sagittal planes for 3D fields,
/// a single image for 2D fields. Returns the written paths.
inline std::vector<std::string> write_pgm_slices(const std::string& base,
                                                 const ScalarField& f) {
  const Grid& g = f.grid;
  std::vector<std::string> written;
  if (g.d == 2) {
    std::vector<double> img(f.v.begin(), f.v.end());
    std::string path = base + ".pgm";
    std::string data = detail::encode_pgm(img, g.n[0], g.n[1]);
    detail::write_file_atomic(path, data.data(), data.size());
    written.push_back(path);
    return written;
  }
  struct Plane {
    const char* name;
    int fixed_axis;
  };
  const Plane planes[3] = {{"axial", 2}, {"coronal", 1}, {"sagittal", 0}};
  for (const auto& pl : planes) {
    int a = -1, b = -1;
    for (int c = 0; c < 3; ++c)
      if (c != pl.fixed_axis) (a < 0 ? a : b) = c;
    const int fixed = g.n[pl.fixed_axis] / 2;
    std::vector<double> img;
    img.reserve(static_cast<std::size_t>(g.n[a]) * g.n[b]);
    for (int jb = 0; jb < g.n[b]; ++jb)
      for (int ja = 0; ja < g.n[a]; ++ja) {
        int idx3[3];
        idx3[pl.fixed_axis] = fixed;
        idx3[a] = ja;
        idx3[b] = jb;
        img.push_back(f.v[g.index(idx3[0], idx3[1], idx3[2])]);
      }
    std::string path = base + "_" + pl.name + ".pgm";
    std::string data = detail::encode_pgm(img, g.n[a], g.n[b]);
    detail::write_file_atomic(path, data.data(), data.size());
    written.push_back(path);
  }
  return written;
}

}  // namespace pcopt
