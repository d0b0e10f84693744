#include "cellseg/volume.hpp"

#include <algorithm>
#include <string>

namespace cellseg {

void validate_geometry(const Dims& dims, const Spacing& spacing) {
  if (dims.z < 1 || dims.y < 1 || dims.x < 1) throw DataError("dims must be >= 1 on every axis");
  for (double s : {spacing.z, spacing.y, spacing.x}) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DataError("spacing must be positive and finite");
  }
}

std::uint32_t num_labels(const LabelVolume& labels) {
  const auto data = labels.data();
  return data.empty() ? 0u : *std::max_element(data.begin(), data.end());
}

void require_probability_map(const ScalarVolume& v, const char* what) {
  for (float f : v.data()) {
    if (!(f >= 0.0f && f <= 1.0f)) {
      throw DataError(std::string(what) + ": values must lie in [0, 1]");
    }
  }
}

}  // namespace cellseg
