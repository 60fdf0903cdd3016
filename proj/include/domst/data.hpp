#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "domst/model.hpp"
#include "domst/pixcon.hpp"
#include "domst/tensor.hpp"

namespace domst {

// Units throughout: precipitation mm/day, distance km, discharge m^3/s.
struct WatershedDataset {
  std::string watershed_id;
  std::vector<PixelMeta> pixels;  // P entries, pixel ids 0..P-1
  std::vector<std::string> dates; // ISO-8601, strictly increasing, one per day
  Matrix precipitation;           // [T x P], row per day
  Vector discharge;               // [T]

  // populated by the synthetic generator only
  bool has_truth = false;
  Array true_contribution;  // c_p, [P]
  Vector unit_hydrograph;   // h, [K_h]
  double base_flow = 0.0;

  int pixel_count() const { return static_cast<int>(pixels.size()); }
  int day_count() const { return static_cast<int>(discharge.size()); }
  void validate() const;
};

struct GenConfig {
  std::string watershed_id = "ws00";
  int grid_rows = 4;
  int grid_cols = 4;                       // P = grid_rows * grid_cols
  int total_days = 400;
  std::string start_date = "2000-01-01";
  double tau_km = 5.0;                     // contribution decay scale
  double max_distance_km = 15.0;           // pixel distances ~ U(0, max)
  std::vector<double> unit_hydrograph = {0.5, 0.3, 0.2};
  double base_flow_cms = 10.0;
  double wet_probability = 0.3;            // baseline storm occurrence
  double seasonal_amplitude = 0.5;         // sinusoidal modulation of wet days
  double gamma_shape = 2.0;                // storm depth ~ Gamma(shape, scale)
  double gamma_scale_mm = 5.0;
  double noise_fraction = 0.0;             // sigma_rel in [0, 1)
  std::uint64_t seed = 0;

  void validate() const;
};

// Distance-weighted linear unit-hydrograph response with optional relative
// Gaussian noise:
//   y_t = b + sum_p c_p sum_k h_k x[p, t-k] + eps_t,  c_p = exp(-d_p / tau)
WatershedDataset generate_synthetic(const GenConfig& config);

// The noiseless response alone; precipitation shaped [T x P].
Vector synthesize_discharge(const Matrix& precipitation,
                            const Array& contribution,
                            const Vector& unit_hydrograph, double base_flow);

// CSV schemas (headers are exact):
//   precipitation: date,pixel_0,...,pixel_{P-1}
//   pixels:        pixel_id,row,col,distance_km
//   discharge:     date,discharge_cms
WatershedDataset load_watershed_csv(const std::string& precip_path,
                                    const std::string& meta_path,
                                    const std::string& discharge_path,
                                    const std::string& watershed_id = "");

// Writes the three files into `dir` as precipitation.csv / pixels.csv /
// discharge.csv. Values round-trip bit-exactly through load_watershed_csv.
void write_watershed_csv(const WatershedDataset& dataset,
                         const std::string& dir);

// One sample per target day t in [L, T): L lookback columns, the target
// day's precipitation, and the target day's discharge.
std::vector<Sample> window_samples(const WatershedDataset& dataset,
                                   int lookback);

// Chronological split; first ceil(N * train_fraction) samples train.
std::pair<std::vector<Sample>, std::vector<Sample>> chrono_split(
    const std::vector<Sample>& samples, double train_fraction);

// Train-time standardization. Precipitation uses one global mean/std over
// the training samples; discharge its own. NSE is invariant under the
// affine map, so models can be fit and scored in scaled space.
struct Scaler {
  double precip_mean = 0.0;
  double precip_std = 1.0;
  double discharge_mean = 0.0;
  double discharge_std = 1.0;

  Sample transform(const Sample& s) const;
  double restore_discharge(double scaled) const;
};

Scaler fit_scaler(const std::vector<Sample>& train);
std::vector<Sample> transform_all(const Scaler& scaler,
                                  const std::vector<Sample>& samples);

// ISO-8601 calendar helpers for the CSV schemas.
long days_from_civil(int year, int month, int day);
std::string civil_from_days(long days);
long parse_iso_date(const std::string& s);  // days since 1970-01-01
std::string add_days(const std::string& iso, long delta);

}  // namespace domst
