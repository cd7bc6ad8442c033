#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "sbridge/grid.hpp"

namespace sbridge {

/// Binary field dump format "SBFD", version 1 (documented in docs/formats.md).
/// Little-endian header: magic, format version, field kind, dim, per-cell
/// component shape, per-axis cell counts and bounds, then a time stamp,
/// followed by the payload as row-major 64-bit floats.
inline constexpr char kFieldMagic[4] = {'S', 'B', 'F', 'D'};
inline constexpr std::uint32_t kFieldFormatVersion = 1;

void write_field(const std::filesystem::path& path, const ScalarField& f, double timestamp);
void write_field(const std::filesystem::path& path, const VectorField& f, double timestamp);
void write_field(const std::filesystem::path& path, const MatrixField& f, double timestamp);

struct LoadedField {
  int kind = 0;  // 0 scalar, 1 vector, 2 matrix
  int rows = 1, cols = 1;
  double timestamp = 0.0;
  std::shared_ptr<const Grid> grid;  // spatial layout only; t0/t1/num_steps take defaults
  std::vector<double> values;
};

LoadedField read_field(const std::filesystem::path& path);

ScalarField read_scalar_field(const std::filesystem::path& path,
                              std::shared_ptr<const Grid> expect_grid);

/// CSV export: one row per cell, coordinate columns then value column(s).
void export_csv(std::ostream& os, const ScalarField& f);
void export_csv(std::ostream& os, const VectorField& f);

}  // namespace sbridge
