#pragma once

// On-disk formats: P6/P5 images, `.pts` annotations, the DMAP1 raw density
// format, dataset manifests. All writes go through a temp file + rename so
// readers never observe partial output.

#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tutornet/density.hpp"

namespace tutornet {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
  ParseError(const std::filesystem::path& path, int line, const std::string& msg)
      : std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + msg) {}
};

inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& writer) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ParseError("cannot open " + tmp.string() + " for writing");
    writer(os);
    if (!os) throw ParseError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace detail {

// PNM token reader: whitespace-separated, '#' starts a comment to EOL.
inline std::string pnm_token(std::istream& is, const std::filesystem::path& path) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw ParseError(path.string() + ": truncated header");
  return tok;
}

inline int pnm_int(std::istream& is, const std::filesystem::path& path) {
  std::string tok = pnm_token(is, path);
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": bad header field '" + tok + "'");
  }
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path.string() + ": truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t get_u64(std::istream& is, const std::filesystem::path& path) {
  std::uint64_t lo = get_u32(is, path);
  std::uint64_t hi = get_u32(is, path);
  return lo | (hi << 32);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(os, bits);
}

inline double get_f64(std::istream& is, const std::filesystem::path& path) {
  std::uint64_t bits = get_u64(is, path);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

// ---- PPM P6 (scene images, 8-bit) ------------------------------------------

inline void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 3)
    throw ParseError("write_ppm expects a 1x3xHxW tensor, got " + shape_str(s));
  int H = s[2], W = s[3];
  atomic_write(path, [&](std::ostream& os) {
    os << "P6\n" << W << " " << H << "\n255\n";
    const auto& v = image.values();
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<unsigned char> row(static_cast<std::size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c) {
          double val = v[c * plane + static_cast<std::size_t>(y) * W + x];
          double q = std::round(std::clamp(val, 0.0, 1.0) * 255.0);
          row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(q);
        }
      os.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
  });
}

inline Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  if (detail::pnm_token(is, path) != "P6")
    throw ParseError(path.string() + ": not a binary PPM (P6)");
  int W = detail::pnm_int(is, path);
  int H = detail::pnm_int(is, path);
  int maxval = detail::pnm_int(is, path);
  if (W <= 0 || H <= 0 || maxval != 255)
    throw ParseError(path.string() + ": unsupported PPM dimensions or maxval");
  std::vector<unsigned char> raw(static_cast<std::size_t>(W) * H * 3);
  if (!is.read(reinterpret_cast<char*>(raw.data()), raw.size()))
    throw ParseError(path.string() + ": truncated pixel data");
  std::vector<double> v(raw.size());
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        v[c * plane + static_cast<std::size_t>(y) * W + x] =
            raw[(static_cast<std::size_t>(y) * W + x) * 3 + c] / 255.0;
  return Tensor::from({1, 3, H, W}, std::move(v));
}

// ---- PGM P5 (density visualization, 16-bit max-normalized) -----------------

inline void write_density_pgm(const std::filesystem::path& path, const DensityMap& map) {
  int H = map.height(), W = map.width();
  const auto& v = map.grid.values();
  double mx = 0.0;
  for (double x : v) mx = std::max(mx, x);
  atomic_write(path, [&](std::ostream& os) {
    os << "P5\n# scale_factor=" << std::setprecision(17) << map.scale_factor
       << " sigma=" << map.sigma << " max=" << mx << "\n"
       << W << " " << H << "\n65535\n";
    for (double x : v) {
      unsigned q = mx > 0.0 ? static_cast<unsigned>(std::lround(x / mx * 65535.0)) : 0u;
      unsigned char b[2] = {static_cast<unsigned char>(q >> 8),
                            static_cast<unsigned char>(q & 0xff)};
      os.write(reinterpret_cast<const char*>(b), 2);
    }
  });
}

inline Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  if (detail::pnm_token(is, path) != "P5")
    throw ParseError(path.string() + ": not a binary PGM (P5)");
  int W = detail::pnm_int(is, path);
  int H = detail::pnm_int(is, path);
  int maxval = detail::pnm_int(is, path);
  if (W <= 0 || H <= 0 || maxval <= 0 || maxval > 65535)
    throw ParseError(path.string() + ": unsupported PGM dimensions or maxval");
  std::size_t n = static_cast<std::size_t>(W) * H;
  int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bytes);
  if (!is.read(reinterpret_cast<char*>(raw.data()), raw.size()))
    throw ParseError(path.string() + ": truncated pixel data");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned q = bytes == 2
        ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1]
        : raw[i];
    v[i] = static_cast<double>(q) / maxval;
  }
  return Tensor::from({1, 1, H, W}, std::move(v));
}

// ---- DMAP1 raw density -----------------------------------------------------

inline void write_dmap(const std::filesystem::path& path, const DensityMap& map) {
  atomic_write(path, [&](std::ostream& os) {
    os.write("DMAP1", 5);
    detail::put_u32(os, static_cast<std::uint32_t>(map.height()));
    detail::put_u32(os, static_cast<std::uint32_t>(map.width()));
    detail::put_f64(os, map.scale_factor);
    detail::put_f64(os, map.sigma);
    for (double v : map.grid.values()) detail::put_f64(os, v);
  });
}

// The format does not record the downsample rate; callers that need it
// track it alongside the file. Loaded maps report downsample 1.
inline DensityMap read_dmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  char magic[5];
  if (!is.read(magic, 5) || std::string(magic, 5) != "DMAP1")
    throw ParseError(path.string() + ": bad magic, not a DMAP1 file");
  int h = static_cast<int>(detail::get_u32(is, path));
  int w = static_cast<int>(detail::get_u32(is, path));
  if (h <= 0 || w <= 0) throw ParseError(path.string() + ": bad dimensions");
  double s = detail::get_f64(is, path);
  double sigma = detail::get_f64(is, path);
  std::vector<double> v(static_cast<std::size_t>(h) * w);
  for (double& x : v) x = detail::get_f64(is, path);
  return DensityMap{Tensor::from({1, 1, h, w}, std::move(v)), s, sigma, 1};
}

// ---- .pts annotations ------------------------------------------------------

inline void write_pts(const std::filesystem::path& path, const AnnotatedScene& scene) {
  atomic_write(path, [&](std::ostream& os) {
    os << std::setprecision(17);
    os << scene.width() << " " << scene.height() << " " << scene.points.size() << "\n";
    for (const Point& p : scene.points) os << p.x << " " << p.y << "\n";
  });
}

struct PtsFile {
  int width = 0;
  int height = 0;
  std::vector<Point> points;
};

inline PtsFile read_pts(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path, 1, "missing header line");
  PtsFile out;
  std::size_t count = 0;
  {
    std::istringstream ls(line);
    long long c = -1;
    if (!(ls >> out.width >> out.height >> c) || out.width <= 0 || out.height <= 0 || c < 0)
      throw ParseError(path, 1, "header must be 'W H C' with positive dims");
    std::string extra;
    if (ls >> extra) throw ParseError(path, 1, "trailing characters after header");
    count = static_cast<std::size_t>(c);
  }
  out.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    int lineno = static_cast<int>(i) + 2;
    if (!std::getline(is, line))
      throw ParseError(path, lineno, "expected " + std::to_string(count) +
                                         " points, file ends after " + std::to_string(i));
    std::istringstream ls(line);
    Point p;
    if (!(ls >> p.x >> p.y)) throw ParseError(path, lineno, "expected 'x y'");
    std::string extra;
    if (ls >> extra) throw ParseError(path, lineno, "trailing characters after point");
    if (!(p.x >= 0.0 && p.x < out.width && p.y >= 0.0 && p.y < out.height))
      throw ParseError(path, lineno, "point outside [0," + std::to_string(out.width) +
                                         ")x[0," + std::to_string(out.height) + ")");
    out.points.push_back(p);
  }
  return out;
}

// ---- scene pairs and manifests ---------------------------------------------

inline void write_scene(const std::filesystem::path& dir, const AnnotatedScene& scene) {
  validate_scene(scene);
  write_ppm(dir / (scene.id + ".ppm"), scene.image);
  write_pts(dir / (scene.id + ".pts"), scene);
}

inline AnnotatedScene read_scene(const std::filesystem::path& dir, const std::string& id) {
  Tensor image = read_ppm(dir / (id + ".ppm"));
  PtsFile pts = read_pts(dir / (id + ".pts"));
  if (pts.width != image.shape()[3] || pts.height != image.shape()[2])
    throw ParseError(dir.string() + "/" + id + ": annotation dims " +
                     std::to_string(pts.width) + "x" + std::to_string(pts.height) +
                     " disagree with image " + std::to_string(image.shape()[3]) + "x" +
                     std::to_string(image.shape()[2]));
  AnnotatedScene scene{std::move(image), std::move(pts.points), id};
  validate_scene(scene);
  return scene;
}

inline void write_manifest(const std::filesystem::path& dir,
                           const std::vector<std::string>& ids) {
  atomic_write(dir / "manifest.txt", [&](std::ostream& os) {
    for (const std::string& id : ids) os << id << "\n";
  });
}

inline std::vector<std::string> read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw ParseError("cannot open " + (dir / "manifest.txt").string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

inline std::vector<AnnotatedScene> load_dataset(const std::filesystem::path& dir) {
  std::vector<AnnotatedScene> scenes;
  for (const std::string& id : read_manifest(dir)) scenes.push_back(read_scene(dir, id));
  return scenes;
}

}  // namespace tutornet
