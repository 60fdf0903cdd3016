#pragma once

#include <string>
#include <vector>

#include "domst/tensor.hpp"

namespace domst {

// One cell of the gridded precipitation raster.
struct PixelMeta {
  int pixel_id = 0;
  int row = 0;
  int col = 0;
  double distance_km = 0.0;  // distance to the nearest water source
};

// ---------------------------------------------------------------------------
// Pixel-contribution block: a learnable weight per pixel, kept in (0,1)
// through a sigmoid over unconstrained logits and applied multiplicatively
// to the pixel's whole time series. Initialized from distance-to-water so
// nearer pixels start with higher contribution.
// ---------------------------------------------------------------------------

struct PixConParams {
  Array logits;  // [P]

  Eigen::Index size() const { return logits.size(); }
  Array weights() const { return 1.0 / (1.0 + (-logits).exp()); }
};

// logit(clamp(exp(-d/tau), 1e-4, 1-1e-4)) per pixel
PixConParams init_pixcon(const Array& distances_km, double tau_km);

struct PixConCache {
  Matrix input;
  Array weights;
};

// X' = diag(w) * X for X of shape [P x L]
Matrix pixcon_apply(const Matrix& x, const PixConParams& params,
                    PixConCache* cache = nullptr);

Matrix pixcon_backward(const PixConParams& params, const PixConCache& cache,
                       const Matrix& grad_output, PixConParams& grads);

PixConParams zeros_like(const PixConParams& p);

// ---------------------------------------------------------------------------
// Partitioning of pixels onto convolution heads (one head per device).
// ---------------------------------------------------------------------------

enum class PartitionStrategy { DistanceQuantile, RoundRobin, ContiguousBlock };

std::string to_string(PartitionStrategy s);
PartitionStrategy partition_strategy_from_string(const std::string& s);

struct PixelPartition {
  // heads[h] lists the pixel ids owned by head h, in the strategy's order;
  // that order is also the channel order of the head's conv input.
  std::vector<std::vector<int>> heads;

  int head_count() const { return static_cast<int>(heads.size()); }
  int pixel_count() const;
  int head_of(int pixel_id) const;  // -1 when absent
  void validate(int expected_pixels) const;  // exact cover over 0..P-1
};

PixelPartition partition_pixels(const std::vector<PixelMeta>& meta,
                                int head_count, PartitionStrategy strategy);

// Epoch-boundary load rebalancing: moves one boundary pixel from the slowest
// head toward the fastest when their time ratio exceeds `ratio_threshold`.
// Never empties a head; otherwise returns the input unchanged.
PixelPartition rebalance_partition(const PixelPartition& partition,
                                   const std::vector<double>& head_step_seconds,
                                   double ratio_threshold = 1.25);

// pixel_id -> head map, serialized for the --dump-partition flag
std::string partition_to_json(const PixelPartition& partition);

}  // namespace domst
