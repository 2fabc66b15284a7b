#include "sunroof/grid_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <png.h>

namespace sunroof {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::optional<double> to_double(std::string_view tok) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open grid file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing file '" + path.string() + "'");
}

}  // namespace

HeightGrid parse_grid(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::map<std::string, std::string> header;
  std::string tok;
  std::streampos data_start = 0;
  // Header: "key value" pairs until the first numeric token.
  while (true) {
    data_start = in.tellg();
    if (!(in >> tok)) break;
    if (!tok.empty() && (std::isalpha(static_cast<unsigned char>(tok[0])) != 0) &&
        lower(tok) != "nan" && lower(tok) != "inf") {
      std::string value;
      if (!(in >> value)) throw ParseError(source + ": header key '" + tok + "' has no value");
      header[lower(tok)] = value;
    } else {
      break;
    }
  }

  auto need = [&](const std::string& key) -> double {
    const auto it = header.find(key);
    if (it == header.end()) throw ParseError(source + ": missing header key '" + key + "'");
    const auto v = to_double(it->second);
    if (!v) throw ParseError(source + ": header '" + key + "' is not numeric: '" + it->second + "'");
    return *v;
  };
  const double ncols = need("ncols");
  const double nrows = need("nrows");
  if (ncols < 1 || nrows < 1 || ncols != std::floor(ncols) || nrows != std::floor(nrows)) {
    throw ParseError(source + ": ncols/nrows must be positive integers");
  }
  GridGeometry geom;
  geom.width = static_cast<int>(ncols);
  geom.height = static_cast<int>(nrows);
  geom.cell_size = need("cellsize");
  if (!(geom.cell_size > 0)) throw ParseError(source + ": cellsize must be positive");
  if (header.count("xllcorner") != 0U) {
    geom.x_ll = need("xllcorner");
  } else if (header.count("xllcenter") != 0U) {
    geom.x_ll = need("xllcenter") - 0.5 * geom.cell_size;
  } else {
    throw ParseError(source + ": missing header key 'xllcorner'");
  }
  if (header.count("yllcorner") != 0U) {
    geom.y_ll = need("yllcorner");
  } else if (header.count("yllcenter") != 0U) {
    geom.y_ll = need("yllcenter") - 0.5 * geom.cell_size;
  } else {
    throw ParseError(source + ": missing header key 'yllcorner'");
  }
  const double nodata = header.count("nodata_value") != 0U ? need("nodata_value") : kDefaultNodata;

  HeightGrid grid(geom);
  in.clear();
  in.seekg(data_start);
  const std::size_t expected = geom.cell_count();
  std::size_t n = 0;
  while (in >> tok) {
    if (n == expected) {
      throw ParseError(source + ": dimension mismatch, more than " + std::to_string(expected) +
                       " values for " + std::to_string(geom.width) + " cols x " +
                       std::to_string(geom.height) + " rows");
    }
    const auto v = to_double(tok);
    const std::size_t row = n / static_cast<std::size_t>(geom.width);
    const std::size_t col = n % static_cast<std::size_t>(geom.width);
    if (!v || std::isnan(*v) || std::isinf(*v)) {
      throw ParseError(source + ": non-numeric cell at row " + std::to_string(row) + ", col " +
                       std::to_string(col) + ": '" + tok + "'");
    }
    if (*v == nodata) {
      grid.set_nodata(n);
      grid[n] = 0.0;
    } else {
      grid[n] = *v;
    }
    ++n;
  }
  if (n < expected) {
    throw ParseError(source + ": expected " + std::to_string(expected) + " values (" +
                     std::to_string(geom.width) + " cols x " + std::to_string(geom.height) +
                     " rows), found " + std::to_string(n) + "; shortfall of " +
                     std::to_string(expected - n) + " ending at row " +
                     std::to_string(n / static_cast<std::size_t>(geom.width)) + ", col " +
                     std::to_string(n % static_cast<std::size_t>(geom.width)));
  }
  return grid;
}

std::string format_grid(const HeightGrid& grid) {
  grid.validate();
  const auto& g = grid.geometry();
  std::string out;
  out += "ncols         " + std::to_string(g.width) + "\n";
  out += "nrows         " + std::to_string(g.height) + "\n";
  out += "xllcorner     " + format_double(g.x_ll) + "\n";
  out += "yllcorner     " + format_double(g.y_ll) + "\n";
  out += "cellsize      " + format_double(g.cell_size) + "\n";
  out += "NODATA_value  " + format_double(kDefaultNodata) + "\n";
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      if (c > 0) out += ' ';
      const std::size_t i = g.index(r, c);
      if (grid.is_nodata(i)) {
        out += format_double(kDefaultNodata);
      } else {
        if (grid[i] == kDefaultNodata) {
          throw Error("cell value collides with the nodata sentinel at row " + std::to_string(r) +
                      ", col " + std::to_string(c));
        }
        out += format_double(grid[i]);
      }
    }
    out += '\n';
  }
  return out;
}

HeightGrid read_grid(const std::filesystem::path& path) {
  return parse_grid(slurp(path), path.string());
}

void write_grid(const HeightGrid& grid, const std::filesystem::path& path) {
  dump(format_grid(grid), path);
}

LabelGrid read_labels(const std::filesystem::path& path) {
  const HeightGrid g = read_grid(path);
  LabelGrid labels(g.geometry(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.is_nodata(i)) continue;
    if (g[i] != std::floor(g[i]) || g[i] < 0) {
      throw ParseError(path.string() + ": label grid holds a non-integer or negative value");
    }
    labels[i] = static_cast<std::int32_t>(g[i]);
  }
  return labels;
}

void write_labels(const LabelGrid& labels, const std::filesystem::path& path) {
  HeightGrid g(labels.geometry());
  for (std::size_t i = 0; i < labels.size(); ++i) g[i] = labels[i];
  write_grid(g, path);
}

ProbabilityGrid read_probabilities(const std::filesystem::path& path) {
  return ProbabilityGrid::from_heights(read_grid(path));
}

void write_probabilities(const ProbabilityGrid& probs, const std::filesystem::path& path) {
  write_grid(probs.to_heights(), path);
}

namespace {

void write_png_raw(const std::filesystem::path& path, int width, int height, bool rgb,
                   const void* data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("cannot write PNG '" + path.string() + "': " + msg);
  }
}

}  // namespace

void write_png(const GrayImage& image, const std::filesystem::path& path) {
  write_png_raw(path, image.width(), image.height(), false, image.values().data());
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  static_assert(sizeof(Rgb) == 3);
  write_png_raw(path, image.width(), image.height(), true, image.values().data());
}

RgbImage colormap(const HeightGrid& grid, double lo, double hi) {
  RgbImage out(grid.geometry());
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.is_nodata(i)) continue;
    const double t = std::clamp((grid[i] - lo) / span, 0.0, 1.0);
    // Piecewise ramp: navy -> purple -> orange -> yellow.
    const double r = std::clamp(1.6 * t, 0.0, 1.0);
    const double g = std::clamp(1.5 * t - 0.5, 0.0, 1.0);
    const double b = std::clamp(0.45 + 0.9 * t, 0.0, 1.0) * (1.0 - std::clamp(2.0 * t - 1.0, 0.0, 1.0));
    out[i] = Rgb{static_cast<std::uint8_t>(std::lround(255 * r)),
                 static_cast<std::uint8_t>(std::lround(255 * g)),
                 static_cast<std::uint8_t>(std::lround(255 * b))};
  }
  return out;
}

}  // namespace sunroof
