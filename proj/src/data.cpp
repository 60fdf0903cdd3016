#include "domst/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "domst/rng.hpp"

namespace domst {

// ----------------------------------------------------------------- dates ---

// Howard Hinnant's civil-calendar algorithms.
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

std::string civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04ld-%02u-%02u", y + (m <= 2), m, d);
  return buf;
}

long parse_iso_date(const std::string& s) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3 || s.size() != 10 ||
      m < 1 || m > 12 || d < 1 || d > 31)
    throw ValueError(cat("invalid ISO-8601 date: '", s, "'"));
  return days_from_civil(y, m, d);
}

std::string add_days(const std::string& iso, long delta) {
  return civil_from_days(parse_iso_date(iso) + delta);
}

// ----------------------------------------------------------- validation ----

void WatershedDataset::validate() const {
  const int p = pixel_count();
  const int t = day_count();
  require(p >= 1, cat("dataset ", watershed_id, ": no pixels"));
  require(t >= 2, cat("dataset ", watershed_id, ": needs at least 2 days"));
  require(precipitation.rows() == t && precipitation.cols() == p,
          cat("dataset ", watershed_id, ": precipitation is ",
              precipitation.rows(), "x", precipitation.cols(), ", expected ",
              t, "x", p));
  require(static_cast<int>(dates.size()) == t,
          cat("dataset ", watershed_id, ": ", dates.size(), " dates for ", t,
              " days"));
  check_finite(precipitation, cat("dataset ", watershed_id, " precipitation"));
  check_finite(discharge, cat("dataset ", watershed_id, " discharge"));
  require(precipitation.minCoeff() >= 0.0,
          cat("dataset ", watershed_id, ": negative precipitation"));
  require(discharge.minCoeff() >= 0.0,
          cat("dataset ", watershed_id, ": negative discharge"));
  std::vector<int> seen(p, 0);
  for (const auto& m : pixels) {
    require(m.pixel_id >= 0 && m.pixel_id < p && !seen[m.pixel_id]++,
            cat("dataset ", watershed_id, ": pixel ids must cover 0..", p - 1,
                " exactly once"));
    require(std::isfinite(m.distance_km) && m.distance_km >= 0.0,
            cat("dataset ", watershed_id, ": bad distance for pixel ",
                m.pixel_id));
  }
  long prev = parse_iso_date(dates[0]);
  for (int i = 1; i < t; ++i) {
    const long cur = parse_iso_date(dates[i]);
    require(cur == prev + 1,
            cat("dataset ", watershed_id, ": dates must be consecutive, got ",
                dates[i - 1], " then ", dates[i]));
    prev = cur;
  }
}

// -------------------------------------------------------------- generator --

void GenConfig::validate() const {
  require(grid_rows >= 1 && grid_cols >= 1, "gen: grid dims must be >= 1");
  require(total_days >= 2, "gen: total_days must be >= 2");
  require(tau_km > 0.0, "gen: tau must be > 0");
  require(max_distance_km >= 0.0, "gen: max distance must be >= 0");
  require(!unit_hydrograph.empty(), "gen: unit hydrograph must be non-empty");
  double sum = 0.0;
  for (double h : unit_hydrograph) {
    require(h >= 0.0, "gen: unit hydrograph ordinates must be >= 0");
    sum += h;
  }
  require(sum > 0.0, "gen: unit hydrograph must have positive mass");
  require(base_flow_cms >= 0.0, "gen: base flow must be >= 0");
  require(wet_probability >= 0.0 && wet_probability < 1.0,
          "gen: wet probability must be in [0,1)");
  require(seasonal_amplitude >= 0.0 && seasonal_amplitude <= 1.0,
          "gen: seasonal amplitude must be in [0,1]");
  require(gamma_shape > 0.0 && gamma_scale_mm > 0.0,
          "gen: gamma parameters must be > 0");
  require(noise_fraction >= 0.0 && noise_fraction < 1.0,
          "gen: noise fraction must be in [0,1)");
  parse_iso_date(start_date);
}

WatershedDataset generate_synthetic(const GenConfig& config) {
  config.validate();
  const int p = config.grid_rows * config.grid_cols;
  const int t_total = config.total_days;

  WatershedDataset ds;
  ds.watershed_id = config.watershed_id;

  Rng root = Rng(config.seed).split("watershed").split(config.watershed_id);
  Rng dist_rng = root.split("distances");
  ds.pixels.resize(p);
  for (int i = 0; i < p; ++i) {
    ds.pixels[i].pixel_id = i;
    ds.pixels[i].row = i / config.grid_cols;
    ds.pixels[i].col = i % config.grid_cols;
    ds.pixels[i].distance_km = dist_rng.uniform(0.0, config.max_distance_km);
  }

  ds.dates.resize(t_total);
  const long day0 = parse_iso_date(config.start_date);
  for (int t = 0; t < t_total; ++t) ds.dates[t] = civil_from_days(day0 + t);

  // seasonal Bernoulli occurrence, gamma depths, independent per pixel
  Rng rain_rng = root.split("rain");
  ds.precipitation = Matrix::Zero(t_total, p);
  for (int t = 0; t < t_total; ++t) {
    const double season =
        1.0 + config.seasonal_amplitude * std::sin(2.0 * M_PI * t / 365.25);
    const double wet = std::clamp(config.wet_probability * season, 0.0, 0.99);
    for (int i = 0; i < p; ++i) {
      if (rain_rng.uniform() < wet)
        ds.precipitation(t, i) =
            rain_rng.gamma(config.gamma_shape, config.gamma_scale_mm);
    }
  }

  ds.true_contribution = Array(p);
  for (int i = 0; i < p; ++i)
    ds.true_contribution(i) =
        std::exp(-ds.pixels[i].distance_km / config.tau_km);
  ds.unit_hydrograph =
      Eigen::Map<const Vector>(config.unit_hydrograph.data(),
                               static_cast<Eigen::Index>(
                                   config.unit_hydrograph.size()));
  ds.base_flow = config.base_flow_cms;
  ds.has_truth = true;

  ds.discharge = synthesize_discharge(ds.precipitation, ds.true_contribution,
                                      ds.unit_hydrograph, ds.base_flow);
  const Vector signal =
      ds.discharge - Vector::Constant(t_total, config.base_flow_cms);
  if (config.noise_fraction > 0.0) {
    const double mean = signal.mean();
    const double sd =
        std::sqrt((signal.array() - mean).square().sum() / t_total);
    Rng noise_rng = root.split("noise");
    for (int t = 0; t < t_total; ++t) {
      ds.discharge(t) += config.noise_fraction * sd * noise_rng.normal();
      if (ds.discharge(t) < 0.0) ds.discharge(t) = 0.0;
    }
  }
  ds.validate();
  return ds;
}

Vector synthesize_discharge(const Matrix& precipitation,
                            const Array& contribution,
                            const Vector& unit_hydrograph, double base_flow) {
  check_shape(precipitation.cols() == contribution.size(),
              cat("synthesize: ", precipitation.cols(), " pixels vs ",
                  contribution.size(), " contributions"));
  const int t_total = static_cast<int>(precipitation.rows());
  const int p = static_cast<int>(precipitation.cols());
  const int kh = static_cast<int>(unit_hydrograph.size());
  Vector discharge(t_total);
  for (int t = 0; t < t_total; ++t) {
    double acc = base_flow;
    for (int k = 0; k < kh && k <= t; ++k) {
      const double h = unit_hydrograph(k);
      for (int i = 0; i < p; ++i)
        acc += contribution(i) * h * precipitation(t - k, i);
    }
    discharge(t) = acc;
  }
  return discharge;
}

// --------------------------------------------------------------- CSV I/O ---

namespace {

std::string format_double(double v) {
  // shortest representation that round-trips exactly
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& field, const std::string& file,
                    int line, const std::string& column) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ValueError(cat(file, ":", line, ": column '", column,
                         "': cannot parse '", field, "' as a number"));
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvFile {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // data rows
  std::vector<int> line_numbers;               // 1-based, per data row
};

CsvFile read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), cat("cannot open ", path));
  CsvFile f;
  f.path = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (f.header.empty()) {
      f.header = split_csv_line(line);
    } else {
      f.rows.push_back(split_csv_line(line));
      f.line_numbers.push_back(lineno);
    }
  }
  require(!f.header.empty(), cat(path, ": empty file"));
  return f;
}

void expect_header(const CsvFile& f, const std::vector<std::string>& expected) {
  if (f.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    std::string got;
    for (const auto& h : f.header) got += (got.empty() ? "" : ",") + h;
    throw ValueError(cat(f.path, ":1: expected header '", want, "', got '",
                         got, "'"));
  }
}

}  // namespace

WatershedDataset load_watershed_csv(const std::string& precip_path,
                                    const std::string& meta_path,
                                    const std::string& discharge_path,
                                    const std::string& watershed_id) {
  const CsvFile meta = read_csv(meta_path);
  expect_header(meta, {"pixel_id", "row", "col", "distance_km"});
  WatershedDataset ds;
  ds.watershed_id = watershed_id.empty()
                        ? std::filesystem::path(precip_path)
                              .parent_path()
                              .filename()
                              .string()
                        : watershed_id;
  const int p = static_cast<int>(meta.rows.size());
  require(p >= 1, cat(meta_path, ": no pixels"));
  ds.pixels.resize(p);
  for (int i = 0; i < p; ++i) {
    const auto& row = meta.rows[i];
    const int line = meta.line_numbers[i];
    if (row.size() != 4)
      throw ValueError(cat(meta_path, ":", line, ": expected 4 fields, got ",
                           row.size()));
    PixelMeta& m = ds.pixels[i];
    m.pixel_id = static_cast<int>(
        parse_double(row[0], meta_path, line, "pixel_id"));
    m.row = static_cast<int>(parse_double(row[1], meta_path, line, "row"));
    m.col = static_cast<int>(parse_double(row[2], meta_path, line, "col"));
    m.distance_km = parse_double(row[3], meta_path, line, "distance_km");
    if (m.distance_km < 0.0)
      throw ValueError(cat(meta_path, ":", line,
                           ": negative distance_km for pixel ", m.pixel_id));
  }

  const CsvFile precip = read_csv(precip_path);
  std::vector<std::string> want_header = {"date"};
  for (int i = 0; i < p; ++i) want_header.push_back(cat("pixel_", i));
  expect_header(precip, want_header);

  const CsvFile discharge = read_csv(discharge_path);
  expect_header(discharge, {"date", "discharge_cms"});

  const int t_total = static_cast<int>(precip.rows.size());
  require(t_total >= 2, cat(precip_path, ": needs at least 2 data rows"));
  {
    // align dates row by row so a missing date is reported by name
    const std::size_t common =
        std::min(precip.rows.size(), discharge.rows.size());
    for (std::size_t t = 0; t < common; ++t) {
      if (!precip.rows[t].empty() && !discharge.rows[t].empty() &&
          precip.rows[t][0] != discharge.rows[t][0])
        throw ValueError(cat(discharge_path, ":", discharge.line_numbers[t],
                             ": date ", discharge.rows[t][0],
                             " does not align with ", precip.rows[t][0],
                             " in ", precip_path, " (missing or extra date)"));
    }
    if (discharge.rows.size() < precip.rows.size())
      throw ValueError(cat(discharge_path, ": missing date ",
                           precip.rows[common][0], " present in ",
                           precip_path));
    if (discharge.rows.size() > precip.rows.size())
      throw ValueError(cat(precip_path, ": missing date ",
                           discharge.rows[common][0], " present in ",
                           discharge_path));
  }

  ds.dates.resize(t_total);
  ds.precipitation = Matrix(t_total, p);
  ds.discharge = Vector(t_total);
  for (int t = 0; t < t_total; ++t) {
    const auto& prow = precip.rows[t];
    const int pline = precip.line_numbers[t];
    if (static_cast<int>(prow.size()) != p + 1)
      throw ValueError(cat(precip_path, ":", pline, ": expected ", p + 1,
                           " fields, got ", prow.size()));
    const auto& drow = discharge.rows[t];
    const int dline = discharge.line_numbers[t];
    if (drow.size() != 2)
      throw ValueError(cat(discharge_path, ":", dline,
                           ": expected 2 fields, got ", drow.size()));
    if (prow[0] != drow[0])
      throw ValueError(cat(discharge_path, ":", dline, ": date ", drow[0],
                           " does not match ", prow[0], " in ", precip_path,
                           ":", pline));
    ds.dates[t] = prow[0];
    for (int i = 0; i < p; ++i) {
      const double v =
          parse_double(prow[i + 1], precip_path, pline, cat("pixel_", i));
      if (v < 0.0)
        throw ValueError(cat(precip_path, ":", pline, ": column 'pixel_", i,
                             "': negative precipitation ", v));
      ds.precipitation(t, i) = v;
    }
    const double q =
        parse_double(drow[1], discharge_path, dline, "discharge_cms");
    if (q < 0.0)
      throw ValueError(cat(discharge_path, ":", dline,
                           ": negative discharge ", q));
    ds.discharge(t) = q;
  }
  ds.validate();
  return ds;
}

void write_watershed_csv(const WatershedDataset& dataset,
                         const std::string& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(dir) / name).string();
  };

  {
    std::ofstream out(path("pixels.csv"));
    require(out.good(), cat("cannot write ", path("pixels.csv")));
    out << "pixel_id,row,col,distance_km\n";
    // pixel rows in id order so files are canonical
    std::vector<const PixelMeta*> sorted;
    for (const auto& m : dataset.pixels) sorted.push_back(&m);
    std::sort(sorted.begin(), sorted.end(),
              [](auto* a, auto* b) { return a->pixel_id < b->pixel_id; });
    for (const auto* m : sorted)
      out << m->pixel_id << ',' << m->row << ',' << m->col << ','
          << format_double(m->distance_km) << '\n';
  }
  {
    std::ofstream out(path("precipitation.csv"));
    require(out.good(), cat("cannot write ", path("precipitation.csv")));
    out << "date";
    for (int i = 0; i < dataset.pixel_count(); ++i) out << ",pixel_" << i;
    out << '\n';
    for (int t = 0; t < dataset.day_count(); ++t) {
      out << dataset.dates[t];
      for (int i = 0; i < dataset.pixel_count(); ++i)
        out << ',' << format_double(dataset.precipitation(t, i));
      out << '\n';
    }
  }
  {
    std::ofstream out(path("discharge.csv"));
    require(out.good(), cat("cannot write ", path("discharge.csv")));
    out << "date,discharge_cms\n";
    for (int t = 0; t < dataset.day_count(); ++t)
      out << dataset.dates[t] << ',' << format_double(dataset.discharge(t))
          << '\n';
  }
}

// ------------------------------------------------------------- windowing ---

std::vector<Sample> window_samples(const WatershedDataset& dataset,
                                   int lookback) {
  require(lookback >= 1, cat("window: lookback must be >= 1, got ", lookback));
  const int t_total = dataset.day_count();
  require(t_total >= lookback + 1,
          cat("window: dataset has ", t_total, " days, lookback ", lookback,
              " needs at least ", lookback + 1));
  const int p = dataset.pixel_count();
  std::vector<Sample> samples;
  samples.reserve(t_total - lookback);
  for (int t = lookback; t < t_total; ++t) {
    Sample s;
    // columns are the L days strictly before the target day
    s.x = dataset.precipitation.middleRows(t - lookback, lookback).transpose();
    s.p_target = dataset.precipitation.row(t).transpose();
    s.discharge = dataset.discharge(t);
    s.date_index = t;
    samples.push_back(std::move(s));
  }
  return samples;
}

std::pair<std::vector<Sample>, std::vector<Sample>> chrono_split(
    const std::vector<Sample>& samples, double train_fraction) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          cat("split: train fraction must be in (0,1), got ", train_fraction));
  const long n = static_cast<long>(samples.size());
  const long n_train = static_cast<long>(
      std::ceil(static_cast<double>(n) * train_fraction));
  require(n_train >= 1 && n_train < n,
          cat("split: ", n, " samples at fraction ", train_fraction,
              " leaves an empty side"));
  std::vector<Sample> train(samples.begin(), samples.begin() + n_train);
  std::vector<Sample> test(samples.begin() + n_train, samples.end());
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------- scaler ---

Sample Scaler::transform(const Sample& s) const {
  Sample out = s;
  out.x = (s.x.array() - precip_mean) / precip_std;
  out.p_target = ((s.p_target.array() - precip_mean) / precip_std).matrix();
  out.discharge = (s.discharge - discharge_mean) / discharge_std;
  return out;
}

double Scaler::restore_discharge(double scaled) const {
  return scaled * discharge_std + discharge_mean;
}

Scaler fit_scaler(const std::vector<Sample>& train) {
  require(!train.empty(), "scaler: no training samples");
  double psum = 0.0, psq = 0.0;
  long pn = 0;
  double dsum = 0.0, dsq = 0.0;
  for (const auto& s : train) {
    psum += s.x.sum() + s.p_target.sum();
    psq += s.x.array().square().sum() + s.p_target.array().square().sum();
    pn += s.x.size() + s.p_target.size();
    dsum += s.discharge;
    dsq += s.discharge * s.discharge;
  }
  const double n = static_cast<double>(train.size());
  Scaler sc;
  sc.precip_mean = psum / static_cast<double>(pn);
  sc.precip_std = std::sqrt(
      std::max(psq / static_cast<double>(pn) - sc.precip_mean * sc.precip_mean,
               0.0));
  sc.discharge_mean = dsum / n;
  sc.discharge_std =
      std::sqrt(std::max(dsq / n - sc.discharge_mean * sc.discharge_mean, 0.0));
  if (sc.precip_std < 1e-12) sc.precip_std = 1.0;
  if (sc.discharge_std < 1e-12) sc.discharge_std = 1.0;
  return sc;
}

std::vector<Sample> transform_all(const Scaler& scaler,
                                  const std::vector<Sample>& samples) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(scaler.transform(s));
  return out;
}

}  // namespace domst
