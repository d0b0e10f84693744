#include "cellseg/watershed.hpp"

#include <algorithm>
#include <queue>
#include <unordered_map>

namespace cellseg {
namespace {

struct Entry {
  float key;
  std::uint64_t seq;
  std::size_t voxel;

  // std::priority_queue is a max-heap; invert for (key, seq) ascending.
  bool operator<(const Entry& o) const {
    if (key != o.key) return key > o.key;
    return seq > o.seq;
  }
};

}  // namespace

LabelVolume seeded_watershed(const ScalarVolume& q, const SeedSet& seeds, FloodTrace* trace) {
  if (seeds.empty()) throw DataError("watershed: empty seed set");
  const Dims& d = q.dims();
  LabelVolume labels(d, q.spacing(), 0u);

  std::vector<Entry> storage;
  storage.reserve(q.size() / 8 + 16);
  std::priority_queue<Entry> heap(std::less<Entry>{}, std::move(storage));
  std::uint64_t seq = 0;
  for (const auto& s : seeds.seeds) {
    for (std::size_t v : s.voxels) {
      if (v >= q.size()) throw DataError("watershed: seed voxel out of bounds");
      if (labels[v] != 0) throw DataError("watershed: seed regions overlap");
      labels[v] = s.label;
      heap.push({q[v], seq++, v});
    }
  }

  const std::size_t X = d.x, Y = d.y, Z = d.z, XY = X * Y;
  while (!heap.empty()) {
    const Entry e = heap.top();
    heap.pop();
    if (trace) trace->popped_keys.push_back(e.key);
    const std::uint32_t label = labels[e.voxel];
    const std::size_t x = e.voxel % X, y = (e.voxel / X) % Y, z = e.voxel / XY;
    auto visit = [&](std::size_t n) {
      if (labels[n] != 0) return;
      labels[n] = label;
      heap.push({std::max(q[n], e.key), seq++, n});
    };
    if (x > 0) visit(e.voxel - 1);
    if (x + 1 < X) visit(e.voxel + 1);
    if (y > 0) visit(e.voxel - X);
    if (y + 1 < Y) visit(e.voxel + X);
    if (z > 0) visit(e.voxel - XY);
    if (z + 1 < Z) visit(e.voxel + XY);
  }
  return labels;
}

LabelVolume compact_labels(const LabelVolume& x) {
  const std::uint32_t top = num_labels(x);
  LabelVolume out(x.dims(), x.spacing(), 0u);
  if (top == 0) return out;
  if (top <= 64u * x.size() + 1024u) {
    std::vector<std::uint32_t> remap(static_cast<std::size_t>(top) + 1, 0);
    for (std::uint32_t v : x.data()) remap[v] = 1;
    std::uint32_t next = 0;
    for (std::uint32_t l = 1; l <= top; ++l) remap[l] = remap[l] ? ++next : 0;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = remap[x[i]];
    return out;
  }
  std::vector<std::uint32_t> present(x.data().begin(), x.data().end());
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  std::unordered_map<std::uint32_t, std::uint32_t> remap;
  std::uint32_t next = 0;
  for (std::uint32_t l : present) remap[l] = l == 0 ? 0 : ++next;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = remap[x[i]];
  return out;
}

}  // namespace cellseg
