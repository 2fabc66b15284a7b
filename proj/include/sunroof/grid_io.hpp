#pragma once

// ESRI ASCII grid files and PNG rendering.
//
// Header keys (case-insensitive): ncols, nrows, xllcorner, yllcorner,
// cellsize, NODATA_value (optional, default -9999). Values follow row-major,
// row 0 first (northernmost). Values are written in shortest round-trip form,
// so write -> read reproduces every finite double exactly.

#include <filesystem>
#include <string>

#include "sunroof/raster.hpp"

namespace sunroof {

class ParseError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kDefaultNodata = -9999.0;

HeightGrid read_grid(const std::filesystem::path& path);
void write_grid(const HeightGrid& grid, const std::filesystem::path& path);

/// In-memory variants used by the file functions.
HeightGrid parse_grid(const std::string& text, const std::string& source = "<memory>");
std::string format_grid(const HeightGrid& grid);

LabelGrid read_labels(const std::filesystem::path& path);
void write_labels(const LabelGrid& labels, const std::filesystem::path& path);

ProbabilityGrid read_probabilities(const std::filesystem::path& path);
void write_probabilities(const ProbabilityGrid& probs, const std::filesystem::path& path);

void write_png(const GrayImage& image, const std::filesystem::path& path);
void write_png(const RgbImage& image, const std::filesystem::path& path);

/// Maps [lo, hi] onto a dark-blue -> yellow ramp; nodata renders black.
RgbImage colormap(const HeightGrid& grid, double lo, double hi);

}  // namespace sunroof
