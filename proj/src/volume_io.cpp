#include "cellseg/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace cellseg {
namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '3'};

template <class U>
void put_le(std::string& out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
  }
}

template <class U>
U get_le(const unsigned char* p) {
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(p[b]) << (8 * b);
  return value;
}

std::string encode_header(Dtype dtype, const Dims& dims, const Spacing& spacing) {
  std::string header(kMagic, 4);
  put_le<std::uint32_t>(header, kVol3Version);
  header.push_back(static_cast<char>(dtype));
  for (std::uint64_t d : {dims.z, dims.y, dims.x}) put_le<std::uint64_t>(header, d);
  for (double s : {spacing.z, spacing.y, spacing.x}) {
    put_le<std::uint64_t>(header, std::bit_cast<std::uint64_t>(s));
  }
  return header;
}

std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::F32:
    case Dtype::U32:
      return 4;
    case Dtype::U8:
      return 1;
    case Dtype::U16:
      return 2;
  }
  return 0;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VolumeFormatError(VolumeErrc::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw VolumeFormatError(VolumeErrc::Io, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::string& header,
                const std::string& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw VolumeFormatError(VolumeErrc::Io, "cannot create " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw VolumeFormatError(VolumeErrc::Io, "write failed: " + path.string());
}

// Voxel count with overflow detection against the addressable payload size.
std::size_t checked_count(std::uint64_t z, std::uint64_t y, std::uint64_t x, std::size_t elem) {
  const std::uint64_t limit = std::numeric_limits<std::size_t>::max() / elem;
  if (z == 0 || y == 0 || x == 0) throw VolumeFormatError(VolumeErrc::Overflow, "zero dimension");
  if (y > limit / z || x > limit / (z * y)) {
    throw VolumeFormatError(VolumeErrc::Overflow, "dims overflow addressable size");
  }
  return static_cast<std::size_t>(z * y * x);
}

}  // namespace

AnyVolume read_volume(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw VolumeFormatError(VolumeErrc::BadMagic, "bad magic in " + path.string());
  }
  if (bytes.size() < kVol3HeaderBytes) {
    throw VolumeFormatError(VolumeErrc::Truncated, "truncated header in " + path.string());
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (get_le<std::uint32_t>(p + 4) != kVol3Version) {
    throw VolumeFormatError(VolumeErrc::UnsupportedVersion, "unsupported VOL3 version");
  }
  const std::uint8_t code = p[8];
  if (code < 1 || code > 4) throw VolumeFormatError(VolumeErrc::BadDtype, "unknown dtype code");
  const auto dtype = static_cast<Dtype>(code);

  const std::uint64_t dz = get_le<std::uint64_t>(p + 9);
  const std::uint64_t dy = get_le<std::uint64_t>(p + 17);
  const std::uint64_t dx = get_le<std::uint64_t>(p + 25);
  Spacing spacing{std::bit_cast<double>(get_le<std::uint64_t>(p + 33)),
                  std::bit_cast<double>(get_le<std::uint64_t>(p + 41)),
                  std::bit_cast<double>(get_le<std::uint64_t>(p + 49))};

  const std::size_t elem = dtype_size(dtype);
  const std::size_t n = checked_count(dz, dy, dx, elem);
  const std::size_t payload = bytes.size() - kVol3HeaderBytes;
  if (payload < n * elem) {
    throw VolumeFormatError(VolumeErrc::Truncated, "truncated payload in " + path.string());
  }
  if (payload > n * elem) {
    throw VolumeFormatError(VolumeErrc::LengthMismatch, "trailing bytes in " + path.string());
  }
  const Dims dims{static_cast<std::size_t>(dz), static_cast<std::size_t>(dy),
                  static_cast<std::size_t>(dx)};
  const unsigned char* data = p + kVol3HeaderBytes;

  switch (dtype) {
    case Dtype::F32: {
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        values[i] = std::bit_cast<float>(get_le<std::uint32_t>(data + 4 * i));
        if (std::isnan(values[i])) {
          throw VolumeFormatError(VolumeErrc::NotANumber, "NaN voxel in " + path.string());
        }
      }
      return ScalarVolume(dims, spacing, std::move(values));
    }
    case Dtype::U32: {
      std::vector<std::uint32_t> values(n);
      for (std::size_t i = 0; i < n; ++i) values[i] = get_le<std::uint32_t>(data + 4 * i);
      return LabelVolume(dims, spacing, std::move(values));
    }
    case Dtype::U8: {
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<float>(data[i] / 255.0);
      return ScalarVolume(dims, spacing, std::move(values));
    }
    case Dtype::U16: {
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        values[i] = static_cast<float>(get_le<std::uint16_t>(data + 2 * i) / 65535.0);
      }
      return ScalarVolume(dims, spacing, std::move(values));
    }
  }
  throw VolumeFormatError(VolumeErrc::BadDtype, "unknown dtype code");
}

ScalarVolume read_scalar_volume(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* s = std::get_if<ScalarVolume>(&v)) return std::move(*s);
  throw DataError(path.string() + ": expected a scalar volume, found labels");
}

LabelVolume read_label_volume(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* l = std::get_if<LabelVolume>(&v)) return std::move(*l);
  throw DataError(path.string() + ": expected a label volume, found scalars");
}

void write_volume(const ScalarVolume& v, const std::filesystem::path& path) {
  std::string payload;
  payload.reserve(v.size() * 4);
  for (float f : v.data()) put_le<std::uint32_t>(payload, std::bit_cast<std::uint32_t>(f));
  write_file(path, encode_header(Dtype::F32, v.dims(), v.spacing()), payload);
}

void write_volume(const LabelVolume& v, const std::filesystem::path& path) {
  std::string payload;
  payload.reserve(v.size() * 4);
  for (std::uint32_t l : v.data()) put_le<std::uint32_t>(payload, l);
  write_file(path, encode_header(Dtype::U32, v.dims(), v.spacing()), payload);
}

ScalarVolume import_raw(const std::filesystem::path& path, Dims dims, RawDtype dtype,
                        Spacing spacing) {
  validate_geometry(dims, spacing);
  const std::size_t elem = dtype == RawDtype::U8 ? 1 : 2;
  const std::size_t n = checked_count(dims.z, dims.y, dims.x, elem);
  const std::string bytes = read_file(path);
  if (bytes.size() != n * elem) {
    throw VolumeFormatError(VolumeErrc::LengthMismatch,
                            "raw file length " + std::to_string(bytes.size()) +
                                " does not match dims (" + std::to_string(n * elem) + " bytes)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::vector<float> values(n);
  if (dtype == RawDtype::U8) {
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<float>(p[i] / 255.0);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = static_cast<float>(get_le<std::uint16_t>(p + 2 * i) / 65535.0);
    }
  }
  return ScalarVolume(dims, spacing, std::move(values));
}

}  // namespace cellseg
