#include "sbridge/field_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>

static_assert(std::endian::native == std::endian::little,
              "field dumps are little-endian; big-endian hosts are unsupported");

namespace sbridge {

namespace {

template <typename T>
void put(std::ofstream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

void write_header(std::ofstream& os, const Grid& g, std::uint32_t kind, std::uint32_t rows,
                  std::uint32_t cols, double timestamp) {
  os.write(kFieldMagic, 4);
  put<std::uint32_t>(os, kFieldFormatVersion);
  put<std::uint32_t>(os, kind);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim));
  put<std::uint32_t>(os, rows);
  put<std::uint32_t>(os, cols);
  for (int a = 0; a < g.dim; ++a) put<std::uint64_t>(os, static_cast<std::uint64_t>(g.cells[a]));
  for (int a = 0; a < g.dim; ++a) {
    put<double>(os, g.lower[a]);
    put<double>(os, g.upper[a]);
  }
  put<double>(os, timestamp);
}

void write_payload(std::ofstream& os, const std::vector<double>& values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

}  // namespace

void write_field(const std::filesystem::path& path, const ScalarField& f, double timestamp) {
  auto os = open_out(path);
  write_header(os, *f.grid, 0, 1, 1, timestamp);
  write_payload(os, f.v);
  if (!os) throw IoError("short write to " + path.string());
}

void write_field(const std::filesystem::path& path, const VectorField& f, double timestamp) {
  auto os = open_out(path);
  write_header(os, *f.grid, 1, static_cast<std::uint32_t>(f.comps), 1, timestamp);
  write_payload(os, f.v);
  if (!os) throw IoError("short write to " + path.string());
}

void write_field(const std::filesystem::path& path, const MatrixField& f, double timestamp) {
  auto os = open_out(path);
  write_header(os, *f.grid, 2, static_cast<std::uint32_t>(f.rows),
               static_cast<std::uint32_t>(f.cols), timestamp);
  write_payload(os, f.v);
  if (!os) throw IoError("short write to " + path.string());
}

LoadedField read_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kFieldMagic, 4) != 0)
    throw IoError(path.string() + ": not a field dump (bad magic)");
  const auto version = get<std::uint32_t>(is);
  if (version != kFieldFormatVersion)
    throw IoError(path.string() + ": unsupported dump version " + std::to_string(version));
  LoadedField out;
  out.kind = static_cast<int>(get<std::uint32_t>(is));
  Grid g;
  g.dim = static_cast<int>(get<std::uint32_t>(is));
  out.rows = static_cast<int>(get<std::uint32_t>(is));
  out.cols = static_cast<int>(get<std::uint32_t>(is));
  if (g.dim < 1 || g.dim > kMaxDim) throw IoError(path.string() + ": bad dim in header");
  for (int a = 0; a < g.dim; ++a) g.cells[a] = static_cast<int>(get<std::uint64_t>(is));
  for (int a = 0; a < g.dim; ++a) {
    g.lower[a] = get<double>(is);
    g.upper[a] = get<double>(is);
  }
  out.timestamp = get<double>(is);
  if (!is) throw IoError(path.string() + ": truncated header");
  out.grid = make_grid(g);
  const std::size_t count = out.grid->size() * out.rows * out.cols;
  out.values.resize(count);
  is.read(reinterpret_cast<char*>(out.values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw IoError(path.string() + ": truncated payload");
  return out;
}

ScalarField read_scalar_field(const std::filesystem::path& path,
                              std::shared_ptr<const Grid> expect_grid) {
  LoadedField lf = read_field(path);
  if (lf.kind != 0) throw IoError(path.string() + ": expected a scalar field dump");
  const Grid& g = *lf.grid;
  for (int a = 0; a < g.dim; ++a) {
    if (g.dim != expect_grid->dim || g.cells[a] != expect_grid->cells[a] ||
        g.lower[a] != expect_grid->lower[a] || g.upper[a] != expect_grid->upper[a])
      throw IoError(path.string() + ": dump grid does not match the problem grid");
  }
  ScalarField out(std::move(expect_grid));
  out.v = std::move(lf.values);
  return out;
}

namespace {

void write_coords(std::ostream& os, const Grid& g, std::size_t cell) {
  auto x = g.center(cell);
  for (int a = 0; a < g.dim; ++a) os << x[a] << ",";
}

}  // namespace

void export_csv(std::ostream& os, const ScalarField& f) {
  const Grid& g = *f.grid;
  os << (g.dim == 1 ? "x0," : "x0,x1,") << "value\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    write_coords(os, g, i);
    os << f[i] << "\n";
  }
}

void export_csv(std::ostream& os, const VectorField& f) {
  const Grid& g = *f.grid;
  os << (g.dim == 1 ? "x0" : "x0,x1");
  for (int c = 0; c < f.comps; ++c) os << ",v" << c;
  os << "\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto x = g.center(i);
    for (int a = 0; a < g.dim; ++a) os << (a ? "," : "") << x[a];
    for (int c = 0; c < f.comps; ++c) os << "," << f.at(i, c);
    os << "\n";
  }
}

}  // namespace sbridge
