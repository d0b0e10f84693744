#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cellseg/error.hpp"

namespace cellseg {

/// Voxel counts along (z, y, x). x is the fastest-varying axis in memory.
struct Dims {
  std::size_t z = 1;
  std::size_t y = 1;
  std::size_t x = 1;

  std::size_t count() const noexcept { return z * y * x; }
  bool operator==(const Dims&) const = default;
};

/// Physical voxel size in micrometers along (z, y, x).
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;

  double min() const noexcept { return std::min(z, std::min(y, x)); }
  bool operator==(const Spacing&) const = default;
};

struct VoxelCoord {
  std::size_t z = 0;
  std::size_t y = 0;
  std::size_t x = 0;

  bool operator==(const VoxelCoord&) const = default;
};

void validate_geometry(const Dims& dims, const Spacing& spacing);

/// Dense 3D grid with anisotropic spacing. Row-major, linear index (z*Y + y)*X + x.
template <class T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;

  Volume(Dims dims, Spacing spacing, T fill = T{}) : dims_(dims), spacing_(spacing) {
    validate_geometry(dims_, spacing_);
    data_.assign(dims_.count(), fill);
  }

  Volume(Dims dims, Spacing spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate_geometry(dims_, spacing_);
    if (data_.size() != dims_.count()) throw DataError("volume data length does not match dims");
  }

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return (z * dims_.y + y) * dims_.x + x;
  }
  std::size_t index(const VoxelCoord& c) const noexcept { return index(c.z, c.y, c.x); }

  VoxelCoord coord(std::size_t i) const noexcept {
    const std::size_t x = i % dims_.x;
    const std::size_t rest = i / dims_.x;
    return {rest / dims_.y, rest % dims_.y, x};
  }

  /// Physical position (µm) of a voxel center.
  std::array<double, 3> physical(const VoxelCoord& c) const noexcept {
    return {static_cast<double>(c.z) * spacing_.z, static_cast<double>(c.y) * spacing_.y,
            static_cast<double>(c.x) * spacing_.x};
  }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& at(std::size_t z, std::size_t y, std::size_t x) noexcept { return data_[index(z, y, x)]; }
  const T& at(std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return data_[index(z, y, x)];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  template <class U>
  bool same_geometry(const Volume<U>& other) const noexcept {
    return dims_ == other.dims() && spacing_ == other.spacing();
  }

  bool operator==(const Volume&) const = default;

 private:
  Dims dims_{};
  Spacing spacing_{};
  std::vector<T> data_;
};

using ScalarVolume = Volume<float>;
using LabelVolume = Volume<std::uint32_t>;
using MaskVolume = Volume<std::uint8_t>;

/// Largest label present; the label count L for a compact labeling.
std::uint32_t num_labels(const LabelVolume& labels);

/// Throws DataError if any value lies outside [0, 1] or is not finite.
void require_probability_map(const ScalarVolume& v, const char* what);

template <class A, class B>
void require_same_dims(const Volume<A>& a, const Volume<B>& b, const char* what) {
  if (a.dims() != b.dims()) throw DataError(std::string(what) + ": volume dims mismatch");
}

}  // namespace cellseg
