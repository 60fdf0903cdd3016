#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "domst/data.hpp"
#include "domst/rng.hpp"

using namespace domst;

namespace {

GenConfig tiny_gen(std::uint64_t seed = 0) {
  GenConfig g;
  g.watershed_id = "ws_test";
  g.grid_rows = 2;
  g.grid_cols = 2;
  g.total_days = 30;
  g.seed = seed;
  return g;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

// ----------------------------------------------------------------- dates ---

TEST_CASE("civil date arithmetic round-trips") {
  CHECK(civil_from_days(parse_iso_date("2000-01-01")) == "2000-01-01");
  CHECK(add_days("2000-02-28", 1) == "2000-02-29");  // leap year
  CHECK(add_days("1999-12-31", 1) == "2000-01-01");
  CHECK(parse_iso_date("1970-01-01") == 0);
  CHECK_THROWS_AS(parse_iso_date("2000-13-01"), ValueError);
  CHECK_THROWS_AS(parse_iso_date("not-a-date"), ValueError);
}

// ------------------------------------------------------------- generator ---

TEST_CASE("zero precipitation and zero noise give constant base flow") {
  GenConfig g = tiny_gen();
  g.wet_probability = 0.0;  // no storms at all
  g.noise_fraction = 0.0;
  const WatershedDataset ds = generate_synthetic(g);
  CHECK(ds.precipitation.cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < ds.day_count(); ++t)
    CHECK(ds.discharge(t) == g.base_flow_cms);
}

TEST_CASE("generator discharge equals the hand convolution of the rain") {
  const GenConfig g = tiny_gen(3);
  const WatershedDataset ds = generate_synthetic(g);
  REQUIRE(ds.has_truth);
  const int kh = static_cast<int>(ds.unit_hydrograph.size());
  for (int t = 0; t < ds.day_count(); ++t) {
    double acc = ds.base_flow;
    for (int k = 0; k < kh && k <= t; ++k)
      for (int p = 0; p < ds.pixel_count(); ++p)
        acc += ds.true_contribution(p) * ds.unit_hydrograph(k) *
               ds.precipitation(t - k, p);
    CHECK(ds.discharge(t) == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("a single impulse produces the scaled unit hydrograph") {
  const int pixels = 4, days = 8, pixel = 2;
  Matrix rain = Matrix::Zero(days, pixels);
  rain(0, pixel) = 1.0;
  Array c(pixels);
  c << 0.9, 0.5, 0.7, 0.3;
  Vector h(3);
  h << 0.5, 0.3, 0.2;
  const double b = 10.0;
  const Vector y = synthesize_discharge(rain, c, h, b);
  for (int t = 0; t < days; ++t) {
    const double expect = t < 3 ? b + c(pixel) * h(t) : b;
    CHECK(y(t) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("same seed generates identical datasets") {
  const WatershedDataset a = generate_synthetic(tiny_gen(7));
  const WatershedDataset b = generate_synthetic(tiny_gen(7));
  CHECK((a.precipitation - b.precipitation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.discharge - b.discharge).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < a.pixel_count(); ++i)
    CHECK(a.pixels[i].distance_km == b.pixels[i].distance_km);
  const WatershedDataset c = generate_synthetic(tiny_gen(8));
  CHECK((a.precipitation - c.precipitation).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("doubling the rain doubles the discharge above base flow") {
  GenConfig g = tiny_gen(11);
  g.noise_fraction = 0.0;
  const WatershedDataset ds = generate_synthetic(g);
  const Vector doubled =
      synthesize_discharge(2.0 * ds.precipitation, ds.true_contribution,
                           ds.unit_hydrograph, ds.base_flow);
  for (int t = 0; t < ds.day_count(); ++t)
    CHECK(doubled(t) - ds.base_flow ==
          doctest::Approx(2.0 * (ds.discharge(t) - ds.base_flow))
              .epsilon(1e-12));
}

TEST_CASE("noise scales with the configured fraction of the signal spread") {
  GenConfig g = tiny_gen(5);
  g.total_days = 400;
  g.noise_fraction = 0.0;
  const WatershedDataset clean = generate_synthetic(g);
  g.noise_fraction = 0.2;
  const WatershedDataset noisy = generate_synthetic(g);
  CHECK((clean.precipitation - noisy.precipitation).cwiseAbs().maxCoeff() ==
        0.0);
  const Vector diff = noisy.discharge - clean.discharge;
  CHECK(diff.cwiseAbs().maxCoeff() > 0.0);
  const Vector signal =
      clean.discharge - Vector::Constant(clean.day_count(), clean.base_flow);
  const double sd =
      std::sqrt((signal.array() - signal.mean()).square().sum() / signal.size());
  const double noise_sd =
      std::sqrt((diff.array() - diff.mean()).square().sum() / diff.size());
  CHECK(noise_sd < 0.4 * sd);  // 0.2 nominal, generous bound
  CHECK(noise_sd > 0.05 * sd);
}

TEST_CASE("generator rejects invalid configs") {
  GenConfig g = tiny_gen();
  g.noise_fraction = 1.0;
  CHECK_THROWS_AS(generate_synthetic(g), Error);
  g = tiny_gen();
  g.unit_hydrograph = {0.0, 0.0};
  CHECK_THROWS_AS(generate_synthetic(g), Error);
  g = tiny_gen();
  g.tau_km = 0.0;
  CHECK_THROWS_AS(generate_synthetic(g), Error);
}

// --------------------------------------------------------------- CSV I/O ---

TEST_CASE("a generated dataset round-trips through the CSV schema") {
  const auto dir = fresh_dir("domst_csv_roundtrip");
  GenConfig g = tiny_gen(21);
  g.noise_fraction = 0.1;
  const WatershedDataset ds = generate_synthetic(g);
  write_watershed_csv(ds, dir.string());
  const WatershedDataset back = load_watershed_csv(
      (dir / "precipitation.csv").string(), (dir / "pixels.csv").string(),
      (dir / "discharge.csv").string(), ds.watershed_id);
  CHECK(back.watershed_id == ds.watershed_id);
  CHECK(back.dates == ds.dates);
  REQUIRE(back.pixel_count() == ds.pixel_count());
  REQUIRE(back.day_count() == ds.day_count());
  CHECK((back.precipitation - ds.precipitation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.discharge - ds.discharge).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < ds.pixel_count(); ++i) {
    CHECK(back.pixels[i].pixel_id == ds.pixels[i].pixel_id);
    CHECK(back.pixels[i].distance_km == ds.pixels[i].distance_km);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("a small well-formed fixture loads with expected shape") {
  const auto dir = fresh_dir("domst_csv_fixture");
  std::ofstream(dir / "pixels.csv")
      << "pixel_id,row,col,distance_km\n0,0,0,1.5\n1,0,1,4\n";
  std::ofstream(dir / "precipitation.csv")
      << "date,pixel_0,pixel_1\n2001-01-01,0,2.5\n2001-01-02,1,0\n2001-01-03,0,0\n";
  std::ofstream(dir / "discharge.csv")
      << "date,discharge_cms\n2001-01-01,10\n2001-01-02,11\n2001-01-03,10.5\n";
  const WatershedDataset ds = load_watershed_csv(
      (dir / "precipitation.csv").string(), (dir / "pixels.csv").string(),
      (dir / "discharge.csv").string(), "fixture");
  CHECK(ds.day_count() == 3);
  CHECK(ds.pixel_count() == 2);
  CHECK(ds.precipitation(0, 1) == doctest::Approx(2.5));
  CHECK(ds.discharge(2) == doctest::Approx(10.5));
  std::filesystem::remove_all(dir);
}

TEST_CASE("a missing discharge date is reported by name") {
  const auto dir = fresh_dir("domst_csv_missing");
  std::ofstream(dir / "pixels.csv")
      << "pixel_id,row,col,distance_km\n0,0,0,1\n";
  std::ofstream(dir / "precipitation.csv")
      << "date,pixel_0\n2001-01-01,0\n2001-01-02,1\n2001-01-03,2\n";
  std::ofstream(dir / "discharge.csv")
      << "date,discharge_cms\n2001-01-01,10\n2001-01-03,11\n";
  CHECK_THROWS_WITH_AS(
      load_watershed_csv((dir / "precipitation.csv").string(),
                         (dir / "pixels.csv").string(),
                         (dir / "discharge.csv").string(), "x"),
      doctest::Contains("2001-01-0"), ValueError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("negative precipitation is rejected naming file and line") {
  const auto dir = fresh_dir("domst_csv_negative");
  std::ofstream(dir / "pixels.csv")
      << "pixel_id,row,col,distance_km\n0,0,0,1\n";
  std::ofstream(dir / "precipitation.csv")
      << "date,pixel_0\n2001-01-01,0\n2001-01-02,-3\n2001-01-03,2\n";
  std::ofstream(dir / "discharge.csv")
      << "date,discharge_cms\n2001-01-01,1\n2001-01-02,1\n2001-01-03,1\n";
  try {
    load_watershed_csv((dir / "precipitation.csv").string(),
                       (dir / "pixels.csv").string(),
                       (dir / "discharge.csv").string(), "x");
    FAIL("expected rejection");
  } catch (const ValueError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("precipitation.csv:3") != std::string::npos);
    CHECK(msg.find("negative precipitation") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("unparseable numbers are rejected naming file, line, and column") {
  const auto dir = fresh_dir("domst_csv_parse");
  std::ofstream(dir / "pixels.csv")
      << "pixel_id,row,col,distance_km\n0,0,0,1\n";
  std::ofstream(dir / "precipitation.csv")
      << "date,pixel_0\n2001-01-01,0\n2001-01-02,abc\n2001-01-03,2\n";
  std::ofstream(dir / "discharge.csv")
      << "date,discharge_cms\n2001-01-01,1\n2001-01-02,1\n2001-01-03,1\n";
  try {
    load_watershed_csv((dir / "precipitation.csv").string(),
                       (dir / "pixels.csv").string(),
                       (dir / "discharge.csv").string(), "x");
    FAIL("expected rejection");
  } catch (const ValueError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("precipitation.csv:3") != std::string::npos);
    CHECK(msg.find("pixel_0") != std::string::npos);
    CHECK(msg.find("abc") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("a wrong header is rejected") {
  const auto dir = fresh_dir("domst_csv_header");
  std::ofstream(dir / "pixels.csv") << "id,row,col,distance\n0,0,0,1\n";
  std::ofstream(dir / "precipitation.csv") << "date,pixel_0\n2001-01-01,0\n";
  std::ofstream(dir / "discharge.csv") << "date,discharge_cms\n2001-01-01,1\n";
  CHECK_THROWS_WITH_AS(
      load_watershed_csv((dir / "precipitation.csv").string(),
                         (dir / "pixels.csv").string(),
                         (dir / "discharge.csv").string(), "x"),
      doctest::Contains("expected header"), ValueError);
  std::filesystem::remove_all(dir);
}

// ------------------------------------------------------------- windowing ---

TEST_CASE("windowing yields one sample per target day") {
  GenConfig g = tiny_gen(2);
  g.total_days = 10;
  const WatershedDataset ds = generate_synthetic(g);
  const auto samples = window_samples(ds, 3);
  CHECK(samples.size() == 7);
  CHECK(samples.front().date_index == 3);
  CHECK(samples.back().date_index == 9);
}

TEST_CASE("the maximal lookback leaves exactly one sample") {
  GenConfig g = tiny_gen(2);
  g.total_days = 10;
  const WatershedDataset ds = generate_synthetic(g);
  const auto samples = window_samples(ds, 9);
  CHECK(samples.size() == 1);
  CHECK_THROWS_AS(window_samples(ds, 10), Error);
}

TEST_CASE("samples never see precipitation at or after the target day") {
  GenConfig g = tiny_gen(13);
  g.total_days = 40;
  const WatershedDataset ds = generate_synthetic(g);
  const int lookback = 5;
  for (const auto& s : window_samples(ds, lookback)) {
    const long t = s.date_index;
    for (int col = 0; col < lookback; ++col) {
      const long day = t - lookback + col;
      CHECK(day < t);
      for (int pix = 0; pix < ds.pixel_count(); ++pix)
        CHECK(s.x(pix, col) == ds.precipitation(day, pix));
    }
    for (int pix = 0; pix < ds.pixel_count(); ++pix)
      CHECK(s.p_target(pix) == ds.precipitation(t, pix));
    CHECK(s.discharge == ds.discharge(t));
  }
}

TEST_CASE("windowing count law holds over random shapes") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    GenConfig g = tiny_gen(trial);
    g.total_days = 2 + rng.uniform_int(60);
    const WatershedDataset ds = generate_synthetic(g);
    const int lookback = 1 + rng.uniform_int(g.total_days - 1);
    CHECK(window_samples(ds, lookback).size() ==
          static_cast<std::size_t>(g.total_days - lookback));
  }
}

// ----------------------------------------------------------------- split ---

TEST_CASE("chronological split keeps the boundary in order") {
  GenConfig g = tiny_gen(2);
  g.total_days = 13;
  const auto samples = window_samples(generate_synthetic(g), 3);
  REQUIRE(samples.size() == 10);
  const auto [train, test] = chrono_split(samples, 0.8);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  CHECK(train.back().date_index < test.front().date_index);
}

TEST_CASE("a two-sample split at one half goes one and one") {
  GenConfig g = tiny_gen(2);
  g.total_days = 5;
  const auto samples = window_samples(generate_synthetic(g), 3);
  REQUIRE(samples.size() == 2);
  const auto [train, test] = chrono_split(samples, 0.5);
  CHECK(train.size() == 1);
  CHECK(test.size() == 1);
}

TEST_CASE("splits that would empty a side are rejected") {
  GenConfig g = tiny_gen(2);
  g.total_days = 5;
  const auto samples = window_samples(generate_synthetic(g), 4);  // 1 sample
  CHECK_THROWS_AS(chrono_split(samples, 0.5), Error);
  const auto more = window_samples(generate_synthetic(g), 3);
  CHECK_THROWS_AS(chrono_split(more, 0.0), Error);
  CHECK_THROWS_AS(chrono_split(more, 1.0), Error);
}

// ---------------------------------------------------------------- scaler ---

TEST_CASE("scaler standardizes and restores discharge") {
  GenConfig g = tiny_gen(19);
  g.total_days = 60;
  g.noise_fraction = 0.05;
  const auto samples = window_samples(generate_synthetic(g), 5);
  const Scaler sc = fit_scaler(samples);
  const auto scaled = transform_all(sc, samples);
  double mean = 0.0;
  for (const auto& s : scaled) mean += s.discharge;
  mean /= static_cast<double>(scaled.size());
  CHECK(std::abs(mean) < 1e-9);
  for (std::size_t i = 0; i < samples.size(); ++i)
    CHECK(sc.restore_discharge(scaled[i].discharge) ==
          doctest::Approx(samples[i].discharge).epsilon(1e-12));
}
