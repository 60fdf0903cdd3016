#include "domst/pixcon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace domst {

PixConParams init_pixcon(const Array& distances_km, double tau_km) {
  require(tau_km > 0.0, cat("init_pixcon: tau must be > 0, got ", tau_km));
  check_finite(distances_km, "init_pixcon distances");
  for (Eigen::Index i = 0; i < distances_km.size(); ++i)
    require(distances_km(i) >= 0.0,
            cat("init_pixcon: negative distance ", distances_km(i),
                " at pixel ", i));
  PixConParams p;
  p.logits = Array(distances_km.size());
  for (Eigen::Index i = 0; i < distances_km.size(); ++i) {
    const double w =
        std::clamp(std::exp(-distances_km(i) / tau_km), 1e-4, 1.0 - 1e-4);
    p.logits(i) = std::log(w / (1.0 - w));
  }
  return p;
}

Matrix pixcon_apply(const Matrix& x, const PixConParams& params,
                    PixConCache* cache) {
  check_shape(x.rows() == params.size(),
              cat("pixcon: expected ", params.size(), " pixel rows, got ",
                  x.rows()));
  check_finite(x, "pixcon input");
  check_finite(params.logits, "pixcon logits");
  const Array w = params.weights();
  Matrix out = w.matrix().asDiagonal() * x;
  if (cache) {
    cache->input = x;
    cache->weights = w;
  }
  return out;
}

Matrix pixcon_backward(const PixConParams& params, const PixConCache& cache,
                       const Matrix& grad_output, PixConParams& grads) {
  check_shape(grad_output.rows() == cache.input.rows() &&
                  grad_output.cols() == cache.input.cols(),
              cat("pixcon backward: grad [", grad_output.rows(), "x",
                  grad_output.cols(), "] does not match cached input [",
                  cache.input.rows(), "x", cache.input.cols(), "]"));
  check_shape(cache.weights.size() == params.size(),
              "pixcon backward: stale cache");
  const Array& w = cache.weights;
  Matrix grad_input = w.matrix().asDiagonal() * grad_output;
  // d w / d logit = w (1 - w); weight multiplies the pixel's whole row
  for (Eigen::Index p = 0; p < params.size(); ++p) {
    const double row_dot = cache.input.row(p).dot(grad_output.row(p));
    grads.logits(p) += w(p) * (1.0 - w(p)) * row_dot;
  }
  return grad_input;
}

PixConParams zeros_like(const PixConParams& p) {
  return {Array::Zero(p.logits.size())};
}

// ------------------------------------------------------------- partition ---

std::string to_string(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::DistanceQuantile: return "distance-quantile";
    case PartitionStrategy::RoundRobin: return "round-robin";
    case PartitionStrategy::ContiguousBlock: return "contiguous-block";
  }
  return "?";
}

PartitionStrategy partition_strategy_from_string(const std::string& s) {
  if (s == "distance-quantile") return PartitionStrategy::DistanceQuantile;
  if (s == "round-robin") return PartitionStrategy::RoundRobin;
  if (s == "contiguous-block") return PartitionStrategy::ContiguousBlock;
  throw ValueError(cat("unknown partition strategy: ", s));
}

int PixelPartition::pixel_count() const {
  int n = 0;
  for (const auto& h : heads) n += static_cast<int>(h.size());
  return n;
}

int PixelPartition::head_of(int pixel_id) const {
  for (int h = 0; h < head_count(); ++h)
    for (int p : heads[h])
      if (p == pixel_id) return h;
  return -1;
}

void PixelPartition::validate(int expected_pixels) const {
  std::vector<int> seen(expected_pixels, 0);
  for (const auto& head : heads) {
    require(!head.empty(), "partition: empty head");
    for (int p : head) {
      require(p >= 0 && p < expected_pixels,
              cat("partition: pixel id ", p, " out of range [0,",
                  expected_pixels, ")"));
      require(seen[p] == 0, cat("partition: pixel ", p, " assigned twice"));
      seen[p] = 1;
    }
  }
  require(pixel_count() == expected_pixels,
          cat("partition: covers ", pixel_count(), " of ", expected_pixels,
              " pixels"));
}

PixelPartition partition_pixels(const std::vector<PixelMeta>& meta,
                                int head_count, PartitionStrategy strategy) {
  const int p = static_cast<int>(meta.size());
  require(head_count >= 1, cat("partition: head count must be >= 1, got ",
                               head_count));
  require(head_count <= p,
          cat("partition: ", head_count, " heads for ", p, " pixels"));

  // order by (key, pixel_id) so the result is independent of input order
  std::vector<const PixelMeta*> sorted(meta.size());
  for (std::size_t i = 0; i < meta.size(); ++i) sorted[i] = &meta[i];
  switch (strategy) {
    case PartitionStrategy::DistanceQuantile:
      std::sort(sorted.begin(), sorted.end(),
                [](const PixelMeta* a, const PixelMeta* b) {
                  if (a->distance_km != b->distance_km)
                    return a->distance_km < b->distance_km;
                  return a->pixel_id < b->pixel_id;
                });
      break;
    case PartitionStrategy::RoundRobin:
    case PartitionStrategy::ContiguousBlock:
      std::sort(sorted.begin(), sorted.end(),
                [](const PixelMeta* a, const PixelMeta* b) {
                  return a->pixel_id < b->pixel_id;
                });
      break;
  }

  PixelPartition part;
  part.heads.assign(head_count, {});
  if (strategy == PartitionStrategy::RoundRobin) {
    for (int i = 0; i < p; ++i)
      part.heads[i % head_count].push_back(sorted[i]->pixel_id);
  } else {
    // chunk into nearly equal groups; the first (p % H) heads get one extra
    const int base = p / head_count;
    const int extra = p % head_count;
    int pos = 0;
    for (int h = 0; h < head_count; ++h) {
      const int take = base + (h < extra ? 1 : 0);
      for (int i = 0; i < take; ++i)
        part.heads[h].push_back(sorted[pos++]->pixel_id);
    }
  }
  return part;
}

PixelPartition rebalance_partition(const PixelPartition& partition,
                                   const std::vector<double>& head_step_seconds,
                                   double ratio_threshold) {
  const int h = partition.head_count();
  check_shape(static_cast<int>(head_step_seconds.size()) == h,
              cat("rebalance: ", head_step_seconds.size(), " timings for ", h,
                  " heads"));
  for (double t : head_step_seconds)
    require(std::isfinite(t) && t > 0.0,
            "rebalance: timings must be finite and positive");
  if (h < 2) return partition;

  int slowest = 0, fastest = 0;
  for (int i = 1; i < h; ++i) {
    if (head_step_seconds[i] > head_step_seconds[slowest]) slowest = i;
    if (head_step_seconds[i] < head_step_seconds[fastest]) fastest = i;
  }
  if (head_step_seconds[slowest] <= ratio_threshold * head_step_seconds[fastest])
    return partition;
  if (partition.heads[slowest].size() <= 1) return partition;  // would empty it

  PixelPartition out = partition;
  auto& from = out.heads[slowest];
  auto& to = out.heads[fastest];
  if (fastest < slowest) {
    // donate the boundary pixel facing the faster head
    to.push_back(from.front());
    from.erase(from.begin());
  } else {
    to.insert(to.begin(), from.back());
    from.pop_back();
  }
  return out;
}

std::string partition_to_json(const PixelPartition& partition) {
  nlohmann::json assignment = nlohmann::json::object();
  std::vector<std::pair<int, int>> pairs;
  for (int h = 0; h < partition.head_count(); ++h)
    for (int p : partition.heads[h]) pairs.emplace_back(p, h);
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [pixel, head] : pairs)
    assignment[std::to_string(pixel)] = head;
  nlohmann::json j;
  j["head_count"] = partition.head_count();
  j["pixel_to_head"] = assignment;
  return j.dump(2);
}

}  // namespace domst
