#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "cellseg/volume.hpp"

namespace cellseg {

/// VOL3 payload type codes.
enum class Dtype : std::uint8_t { F32 = 1, U32 = 2, U8 = 3, U16 = 4 };

enum class VolumeErrc {
  BadMagic,
  UnsupportedVersion,
  BadDtype,
  Truncated,
  Overflow,
  NotANumber,
  LengthMismatch,
  Io,
};

class VolumeFormatError : public DataError {
 public:
  VolumeFormatError(VolumeErrc code, const std::string& what) : DataError(what), code_(code) {}
  VolumeErrc code() const noexcept { return code_; }

 private:
  VolumeErrc code_;
};

/// Fixed VOL3 header: magic(4) version(4) dtype(1) dims(3*8) spacing(3*8).
inline constexpr std::size_t kVol3HeaderBytes = 57;
inline constexpr std::uint32_t kVol3Version = 1;

using AnyVolume = std::variant<ScalarVolume, LabelVolume>;

/// Reads a VOL3 file. f32 yields a ScalarVolume as stored; u8/u16 yield a
/// ScalarVolume rescaled by the dtype maximum; u32 yields a LabelVolume.
AnyVolume read_volume(const std::filesystem::path& path);

ScalarVolume read_scalar_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);

/// Writes f32 (scalar) or u32 (label) VOL3; bit-exact round trip with read_volume.
void write_volume(const ScalarVolume& v, const std::filesystem::path& path);
void write_volume(const LabelVolume& v, const std::filesystem::path& path);

enum class RawDtype { U8, U16 };

/// Headerless little-endian microscope export; values divided by the dtype max.
ScalarVolume import_raw(const std::filesystem::path& path, Dims dims, RawDtype dtype,
                        Spacing spacing);

}  // namespace cellseg
