#include "wcdiff/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace wcdiff {

namespace {

static_assert(std::endian::native == std::endian::little,
              "volume files assume a little-endian host");

constexpr char kMagic[4] = {'V', 'X', 'V', '1'};

std::uint32_t read_u32(std::istream& in, const std::string& path, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw FormatError(path + ": truncated while reading " + std::string(what));
  return v;
}

}  // namespace

Volume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open volume file: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": not a VXV1 volume file");

  Dims3 dims;
  dims.d = read_u32(in, path, "depth");
  dims.h = read_u32(in, path, "height");
  dims.w = read_u32(in, path, "width");
  if (!dims.positive()) throw FormatError(path + ": zero dimension in header");

  char unit_byte = 0;
  in.read(&unit_byte, 1);
  if (!in) throw FormatError(path + ": truncated before unit byte");
  if (unit_byte < 0 || unit_byte > 2)
    throw FormatError(path + ": unknown unit tag " + std::to_string(int(unit_byte)));

  const std::int64_t n = dims.count();
  std::vector<float> raw(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(raw.data()), n * 4);
  if (!in) throw FormatError(path + ": truncated voxel payload");
  char extra;
  if (in.read(&extra, 1)) throw FormatError(path + ": trailing bytes after voxel payload");

  Volume::Array data(n);
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(raw[static_cast<std::size_t>(i)]))
      throw FormatError(path + ": non-finite voxel at index " + std::to_string(i));
    data[i] = double(raw[static_cast<std::size_t>(i)]);
  }
  return Volume(dims, std::move(data), static_cast<Unit>(unit_byte));
}

void write_volume(const std::string& path, const Volume& vol) {
  const Dims3 dims = vol.dims();
  if (dims.d > std::numeric_limits<std::uint32_t>::max() ||
      dims.h > std::numeric_limits<std::uint32_t>::max() ||
      dims.w > std::numeric_limits<std::uint32_t>::max())
    throw UsageError("volume dims too large for file header");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create volume file: " + path);

  out.write(kMagic, 4);
  const std::uint32_t d = std::uint32_t(dims.d), h = std::uint32_t(dims.h),
                      w = std::uint32_t(dims.w);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  const char unit_byte = static_cast<char>(vol.unit());
  out.write(&unit_byte, 1);

  const std::int64_t n = vol.size();
  std::vector<float> raw(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) raw[static_cast<std::size_t>(i)] = float(vol.data()[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), n * 4);
  if (!out) throw IoError("write failed: " + path);
  out.close();
  if (!out) throw IoError("close failed: " + path);
}

}  // namespace wcdiff
