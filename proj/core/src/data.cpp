#include "promptimpute/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "promptimpute/errors.hpp"
#include "promptimpute/hash.hpp"
#include "promptimpute/rng.hpp"

namespace prompt_impute {

namespace {

// Generator shape constants. The label weighs per-feature means and mean
// magnitudes of the pre-mask values; the magnitude term is what makes
// informative missingness (which hides large-|x| entries) carry label signal.
constexpr int kLatentDim = 3;
constexpr double kAr1Coeff = 0.85;
constexpr double kObsNoise = 0.05;
constexpr double kInformativeSharpness = 1.5;
constexpr double kMagnitudeWeightScale = 2.0;
constexpr double kPositiveQuantile = 0.8;  // ~20% positives

double placeholder_value() {
  return debug_poison_enabled() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
}

void write_placeholders(TimeSeriesRecord& rec) {
  const double p = placeholder_value();
  for (std::size_t i = 0; i < rec.values.size(); ++i)
    if (rec.mask[i] == 0) rec.values[i] = p;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Linear-interpolation quantile of a sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty vector");
  if (sorted.size() == 1) return sorted[0];
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Stratum index per record: the class for classification, the label quartile
// for regression.
std::vector<int> stratum_assignments(const Dataset& ds) {
  std::vector<int> strata(ds.records.size(), 0);
  if (ds.task == Task::classification) {
    for (std::size_t i = 0; i < ds.records.size(); ++i)
      strata[i] = ds.records[i].label == 1.0 ? 1 : 0;
    return strata;
  }
  std::vector<double> labels;
  labels.reserve(ds.records.size());
  for (const auto& r : ds.records) labels.push_back(r.label);
  std::sort(labels.begin(), labels.end());
  const double q1 = quantile_sorted(labels, 0.25);
  const double q2 = quantile_sorted(labels, 0.50);
  const double q3 = quantile_sorted(labels, 0.75);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const double y = ds.records[i].label;
    strata[i] = y <= q1 ? 0 : y <= q2 ? 1 : y <= q3 ? 2 : 3;
  }
  return strata;
}

std::vector<std::vector<std::size_t>> group_by_stratum(const std::vector<int>& strata) {
  int max_stratum = -1;
  for (int s : strata) max_stratum = std::max(max_stratum, s);
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(max_stratum + 1));
  for (std::size_t i = 0; i < strata.size(); ++i)
    groups[static_cast<std::size_t>(strata[i])].push_back(i);
  return groups;
}

Dataset dataset_from_indices(const Dataset& ds, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());  // keep original record order
  Dataset out;
  out.feature_count = ds.feature_count;
  out.task = ds.task;
  out.provenance = ds.provenance;
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(ds.records[i]);
  return out;
}

void validate_gen_config(const GenConfig& c) {
  if (c.record_count < 0) throw std::invalid_argument("synthesize: record_count must be >= 0");
  if (c.feature_count < 1) throw std::invalid_argument("synthesize: feature_count must be >= 1");
  if (c.length_min < 1) throw std::invalid_argument("synthesize: length_min must be >= 1");
  if (c.length_max < c.length_min)
    throw std::invalid_argument("synthesize: length_max must be >= length_min");
  if (!(c.missing_rate >= 0.0 && c.missing_rate < 1.0))
    throw std::invalid_argument("synthesize: missing_rate must lie in [0,1)");
  if (c.label_noise < 0.0) throw std::invalid_argument("synthesize: label_noise must be >= 0");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double_field(const std::string& field, long line_number) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + field.size() || field.empty())
    throw ParseError("not a number: '" + field + "'", line_number);
  return v;
}

long parse_int_field(const std::string& field, long line_number) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end != begin + field.size() || field.empty())
    throw ParseError("not an integer: '" + field + "'", line_number);
  return v;
}

void validate_record_contract(const TimeSeriesRecord& rec, int feature_count, Task task,
                              const std::string& context) {
  const std::size_t expect = static_cast<std::size_t>(rec.length) * feature_count;
  if (rec.length < 1) throw InvalidInput(context + ": record '" + rec.id + "' has length < 1");
  if (rec.values.size() != expect || rec.mask.size() != expect)
    throw InvalidInput(context + ": record '" + rec.id + "' has inconsistent value/mask sizes");
  for (std::size_t i = 0; i < rec.mask.size(); ++i) {
    if (rec.mask[i] != 0 && rec.mask[i] != 1)
      throw InvalidInput(context + ": record '" + rec.id + "' mask entries must be 0 or 1");
    if (rec.mask[i] == 1 && !std::isfinite(rec.values[i]))
      throw InvalidInput(context + ": record '" + rec.id + "' has a non-finite observed value");
  }
  if (task == Task::classification && rec.label != 0.0 && rec.label != 1.0)
    throw InvalidInput(context + ": record '" + rec.id + "' classification label must be 0 or 1");
  if (task == Task::regression && !(rec.label >= 0.0))
    throw InvalidInput(context + ": record '" + rec.id + "' regression label must be >= 0");
}

}  // namespace

const char* task_name(Task t) {
  return t == Task::classification ? "classification" : "regression";
}

Task parse_task(const std::string& name) {
  if (name == "classification") return Task::classification;
  if (name == "regression") return Task::regression;
  throw InvalidInput("unknown task '" + name + "'");
}

const char* missing_mode_name(MissingMode m) {
  return m == MissingMode::random ? "random" : "informative";
}

MissingMode parse_missing_mode(const std::string& name) {
  if (name == "random") return MissingMode::random;
  if (name == "informative") return MissingMode::informative;
  throw InvalidInput("unknown missingness mode '" + name + "'");
}

bool debug_poison_enabled() {
  static const bool enabled = [] {
    const char* v = std::getenv("PROMPT_IMPUTE_DEBUG");
    return v != nullptr && std::strcmp(v, "1") == 0;
  }();
  return enabled;
}

Dataset synthesize(const GenConfig& config) { return synthesize(config, config.seed); }

Dataset synthesize(const GenConfig& config, std::uint64_t seed) {
  validate_gen_config(config);
  const int n = config.feature_count;

  // Dataset-wide structure: loading matrix and label weights.
  Rng shared(derive_seed(seed, 0));
  std::vector<double> loading(static_cast<std::size_t>(kLatentDim) * n);
  for (auto& a : loading) a = shared.normal() / std::sqrt(static_cast<double>(kLatentDim));
  std::vector<double> w_mean(static_cast<std::size_t>(n)), w_abs(static_cast<std::size_t>(n));
  for (auto& w : w_mean) w = shared.normal();
  // Magnitude raises risk for every feature (extreme values are bad news), so
  // overall record magnitude — the quantity informative missingness tracks —
  // moves the label coherently instead of averaging out across features.
  for (auto& w : w_abs) w = kMagnitudeWeightScale * std::abs(shared.normal());

  struct Draft {
    TimeSeriesRecord rec;
    double raw_score;
    double label_draw;  // uniform for classification, normal for regression
  };
  std::vector<Draft> drafts;
  drafts.reserve(static_cast<std::size_t>(config.record_count));

  int id_width = 4;
  for (int c = config.record_count - 1; c >= 10000; c /= 10) ++id_width;
  id_width = std::min(id_width, 10);  // int record counts never need more digits

  for (int i = 0; i < config.record_count; ++i) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    Draft d;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "r%0*d", id_width, i);
    d.rec.id = idbuf;
    const int len = config.length_min +
                    static_cast<int>(rng.uniform_int(
                        static_cast<std::uint64_t>(config.length_max - config.length_min + 1)));
    d.rec.length = len;
    const std::size_t cells = static_cast<std::size_t>(len) * n;
    d.rec.values.assign(cells, 0.0);
    d.rec.mask.assign(cells, 1);

    // Stationary AR(1) latents mapped through the loading matrix.
    double z[kLatentDim];
    for (int j = 0; j < kLatentDim; ++j) z[j] = rng.normal();
    const double innovation = std::sqrt(1.0 - kAr1Coeff * kAr1Coeff);
    for (int t = 0; t < len; ++t) {
      if (t > 0)
        for (int j = 0; j < kLatentDim; ++j)
          z[j] = kAr1Coeff * z[j] + innovation * rng.normal();
      for (int f = 0; f < n; ++f) {
        double x = kObsNoise * rng.normal();
        for (int j = 0; j < kLatentDim; ++j)
          x += loading[static_cast<std::size_t>(j) * n + f] * z[j];
        d.rec.values[static_cast<std::size_t>(t) * n + f] = x;
      }
    }

    // Label signal from the complete (pre-mask) matrix.
    d.raw_score = 0.0;
    for (int f = 0; f < n; ++f) {
      double mean = 0.0, mean_abs = 0.0;
      for (int t = 0; t < len; ++t) {
        const double x = d.rec.values[static_cast<std::size_t>(t) * n + f];
        mean += x;
        mean_abs += std::abs(x);
      }
      mean /= len;
      mean_abs /= len;
      d.raw_score += w_mean[static_cast<std::size_t>(f)] * mean +
                     w_abs[static_cast<std::size_t>(f)] * mean_abs;
    }

    d.label_draw = config.task == Task::classification ? rng.uniform() : rng.normal();
    drafts.push_back(std::move(d));
  }

  // Masks are drawn after all records exist because informative mode couples
  // each record's missing COUNT to where its overall magnitude ranks in the
  // dataset: a per-cell drop probability that grows with |value| makes
  // high-magnitude records lose more cells, so the amount of missingness
  // itself carries outcome signal (the fixed-pattern story), not just the
  // choice of cells. Random mode keeps the flat floor(p*cells) count.
  if (config.missing_rate > 0.0 && !drafts.empty()) {
    const double p = config.missing_rate;
    // Rate modulation plus the flooring step must stay inside the documented
    // p +- 0.1 window; the extremes land exactly on the window edge and the
    // per-record clamp below enforces it outright.
    const double swing = std::min(0.2 * p, 0.1);

    std::vector<double> mean_abs(drafts.size(), 0.0);
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      double sum = 0.0;
      for (double v : drafts[i].rec.values) sum += std::abs(v);
      mean_abs[i] = sum / static_cast<double>(drafts[i].rec.values.size());
    }
    std::vector<std::size_t> order(drafts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (mean_abs[a] != mean_abs[b]) return mean_abs[a] < mean_abs[b];
      return a < b;
    });
    std::vector<double> signed_rank(drafts.size(), 0.0);
    if (drafts.size() > 1)
      for (std::size_t k = 0; k < order.size(); ++k)
        signed_rank[order[k]] =
            2.0 * static_cast<double>(k) / static_cast<double>(order.size() - 1) - 1.0;

    std::size_t total_cells = 0;
    for (const auto& d : drafts) total_cells += d.rec.values.size();
    std::vector<std::size_t> miss_count(drafts.size()), floor_count(drafts.size());
    std::size_t planned = 0;
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      const std::size_t cells = drafts[i].rec.values.size();
      const double rate = config.missing_mode == MissingMode::informative
                              ? p + swing * signed_rank[i]
                              : p;
      std::size_t miss = static_cast<std::size_t>(rate * static_cast<double>(cells));
      // Hard window: the realized per-record rate stays within p +- 0.1 (and
      // at least one cell stays observed). Unsatisfiable only for very small
      // records, which fall back to the flat count.
      const std::size_t lo =
          p > 0.1 ? static_cast<std::size_t>(std::ceil((p - 0.1) * static_cast<double>(cells)))
                  : 0;
      const std::size_t hi = std::min(
          cells - 1, static_cast<std::size_t>((p + 0.1) * static_cast<double>(cells)));
      if (lo <= hi)
        miss = std::clamp(miss, lo, hi);
      else
        miss = std::min(static_cast<std::size_t>(p * static_cast<double>(cells)), cells - 1);
      miss_count[i] = miss;
      floor_count[i] = std::min(miss, lo <= hi ? lo : miss);
      planned += miss;
    }
    // Keep the global rate at or below p so later rate injections stay valid.
    const std::size_t budget = static_cast<std::size_t>(p * static_cast<double>(total_cells));
    while (planned > budget) {
      std::size_t largest = drafts.size();
      for (std::size_t i = 0; i < drafts.size(); ++i)
        if (miss_count[i] > floor_count[i] &&
            (largest == drafts.size() || miss_count[i] > miss_count[largest]))
          largest = i;
      if (largest == drafts.size()) break;  // every record is at its window floor
      --miss_count[largest];
      --planned;
    }

    for (std::size_t i = 0; i < drafts.size(); ++i) {
      const std::size_t miss = miss_count[i];
      if (miss == 0) continue;
      auto& rec = drafts[i].rec;
      const std::size_t cells = rec.values.size();
      Rng rng(derive_seed(seed, 5000 + static_cast<std::uint64_t>(i)));
      std::vector<std::size_t> idx(cells);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      if (config.missing_mode == MissingMode::random) {
        for (std::size_t k = 0; k < miss; ++k) {
          const std::size_t j = k + static_cast<std::size_t>(rng.uniform_int(cells - k));
          std::swap(idx[k], idx[j]);
        }
      } else {
        // Weighted sampling without replacement (exponential-key scheme):
        // larger |value| => larger weight => more likely to go missing.
        std::vector<double> key(cells);
        for (std::size_t c = 0; c < cells; ++c) {
          double u = rng.uniform();
          while (u <= 0.0) u = rng.uniform();
          key[c] = std::log(u) * std::exp(-kInformativeSharpness * std::abs(rec.values[c]));
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
          if (key[a] != key[b]) return key[a] > key[b];
          return a < b;
        });
      }
      for (std::size_t k = 0; k < miss; ++k) rec.mask[idx[k]] = 0;
    }
  }

  // Standardize scores across the dataset, then assign labels.
  double s_mean = 0.0, s_var = 0.0;
  for (const auto& d : drafts) s_mean += d.raw_score;
  if (!drafts.empty()) s_mean /= static_cast<double>(drafts.size());
  for (const auto& d : drafts) s_var += (d.raw_score - s_mean) * (d.raw_score - s_mean);
  if (!drafts.empty()) s_var /= static_cast<double>(drafts.size());
  const double s_std = s_var > 0.0 ? std::sqrt(s_var) : 1.0;

  Dataset ds;
  ds.feature_count = n;
  ds.task = config.task;
  {
    std::ostringstream prov;
    prov << "synthetic(records=" << config.record_count << ",features=" << n << ",len=["
         << config.length_min << "," << config.length_max << "],missing=" << config.missing_rate
         << "," << missing_mode_name(config.missing_mode) << ",task=" << task_name(config.task)
         << ",noise=" << config.label_noise << ",seed=" << seed << ")";
    ds.provenance = prov.str();
  }

  if (config.task == Task::classification && !drafts.empty()) {
    std::vector<double> standardized;
    standardized.reserve(drafts.size());
    for (const auto& d : drafts) standardized.push_back((d.raw_score - s_mean) / s_std);
    std::vector<double> sorted = standardized;
    std::sort(sorted.begin(), sorted.end());
    const double threshold = quantile_sorted(sorted, kPositiveQuantile);
    for (std::size_t i = 0; i < drafts.size(); ++i) {
      const double margin = standardized[i] - threshold;
      double y;
      if (config.label_noise == 0.0) {
        y = margin > 0.0 ? 1.0 : 0.0;
      } else {
        const double p = 1.0 / (1.0 + std::exp(-margin / config.label_noise));
        y = drafts[i].label_draw < p ? 1.0 : 0.0;
      }
      drafts[i].rec.label = y;
    }
  } else {
    for (auto& d : drafts) {
      const double standardized = (d.raw_score - s_mean) / s_std;
      d.rec.label = std::max(0.0, 1.0 + standardized + config.label_noise * d.label_draw);
    }
  }

  for (auto& d : drafts) {
    write_placeholders(d.rec);
    ds.records.push_back(std::move(d.rec));
  }
  return ds;
}

Dataset load_dataset(const std::string& data_path, const std::string& labels_path) {
  std::ifstream data(data_path);
  if (!data) throw IoError("cannot open data file '" + data_path + "'");
  std::ifstream labels(labels_path);
  if (!labels) throw IoError("cannot open labels file '" + labels_path + "'");

  Dataset ds;
  std::string line;
  long line_number = 0;
  int n = 0;

  struct Row {
    long t;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> rows_by_id;

  if (std::getline(data, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "record_id" || header[1] != "time_index")
      throw ParseError("data header must be 'record_id,time_index,f1,...,fN'", line_number);
    n = static_cast<int>(header.size()) - 2;
    while (std::getline(data, line)) {
      ++line_number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (static_cast<int>(fields.size()) != n + 2)
        throw ParseError("expected " + std::to_string(n + 2) + " fields, got " +
                             std::to_string(fields.size()),
                         line_number);
      Row row;
      row.t = parse_int_field(fields[1], line_number);
      if (row.t < 0) throw ParseError("time_index must be >= 0", line_number);
      row.values.resize(static_cast<std::size_t>(n));
      row.mask.resize(static_cast<std::size_t>(n));
      for (int f = 0; f < n; ++f) {
        const std::string& cell = fields[static_cast<std::size_t>(f) + 2];
        if (cell.empty()) {
          row.values[static_cast<std::size_t>(f)] = 0.0;
          row.mask[static_cast<std::size_t>(f)] = 0;
        } else {
          row.values[static_cast<std::size_t>(f)] = parse_double_field(cell, line_number);
          row.mask[static_cast<std::size_t>(f)] = 1;
        }
      }
      auto it = rows_by_id.find(fields[0]);
      if (it == rows_by_id.end()) {
        order.push_back(fields[0]);
        it = rows_by_id.emplace(fields[0], std::vector<Row>{}).first;
      }
      for (const auto& existing : it->second)
        if (existing.t == row.t)
          throw InvalidInput("duplicate (record_id,time_index) = ('" + fields[0] + "'," +
                             std::to_string(row.t) + ")");
      it->second.push_back(std::move(row));
    }
  }
  ds.feature_count = n;

  // Labels file: record_id,label
  std::map<std::string, double> label_by_id;
  line_number = 0;
  if (std::getline(labels, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "record_id" || header[1] != "label")
      throw ParseError("labels header must be 'record_id,label'", line_number);
    while (std::getline(labels, line)) {
      ++line_number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.size() != 2) throw ParseError("expected 2 fields in labels file", line_number);
      if (rows_by_id.find(fields[0]) == rows_by_id.end())
        throw InvalidInput("labels file references unknown record '" + fields[0] + "'");
      if (!label_by_id.emplace(fields[0], parse_double_field(fields[1], line_number)).second)
        throw InvalidInput("duplicate label for record '" + fields[0] + "'");
    }
  }

  for (const auto& id : order) {
    auto& rows = rows_by_id[id];
    auto label_it = label_by_id.find(id);
    if (label_it == label_by_id.end())
      throw InvalidInput("record '" + id + "' has no label");
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    const long len = rows.back().t + 1;
    if (static_cast<long>(rows.size()) != len)
      throw InvalidInput("record '" + id + "' time indices are not contiguous from 0");
    for (long t = 0; t < len; ++t)
      if (rows[static_cast<std::size_t>(t)].t != t)
        throw InvalidInput("record '" + id + "' time indices are not contiguous from 0");
    TimeSeriesRecord rec;
    rec.id = id;
    rec.length = static_cast<int>(len);
    rec.label = label_it->second;
    rec.values.reserve(static_cast<std::size_t>(len) * n);
    rec.mask.reserve(static_cast<std::size_t>(len) * n);
    for (const auto& row : rows) {
      rec.values.insert(rec.values.end(), row.values.begin(), row.values.end());
      rec.mask.insert(rec.mask.end(), row.mask.begin(), row.mask.end());
    }
    ds.records.push_back(std::move(rec));
  }

  // Task inference: all labels in {0,1} means classification.
  bool binary = true;
  for (const auto& r : ds.records)
    if (r.label != 0.0 && r.label != 1.0) binary = false;
  ds.task = binary ? Task::classification : Task::regression;
  ds.provenance = "file(" + data_path + ")";

  for (auto& rec : ds.records) {
    validate_record_contract(rec, ds.feature_count, ds.task, "load_dataset");
    write_placeholders(rec);
  }
  return ds;
}

void save_dataset_csv(const Dataset& ds, const std::string& data_path,
                      const std::string& labels_path) {
  std::ofstream data(data_path);
  if (!data) throw IoError("cannot write data file '" + data_path + "'");
  data << "record_id,time_index";
  for (int f = 1; f <= ds.feature_count; ++f) data << ",f" << f;
  data << "\n";
  for (const auto& rec : ds.records) {
    for (int t = 0; t < rec.length; ++t) {
      data << rec.id << "," << t;
      for (int f = 0; f < ds.feature_count; ++f) {
        const std::size_t idx = static_cast<std::size_t>(t) * ds.feature_count + f;
        data << ",";
        if (rec.mask[idx] == 1) data << format_double(rec.values[idx]);
      }
      data << "\n";
    }
  }
  if (!data.good()) throw IoError("failed while writing '" + data_path + "'");

  std::ofstream labels(labels_path);
  if (!labels) throw IoError("cannot write labels file '" + labels_path + "'");
  labels << "record_id,label\n";
  for (const auto& rec : ds.records) labels << rec.id << "," << format_double(rec.label) << "\n";
  if (!labels.good()) throw IoError("failed while writing '" + labels_path + "'");
}

void save_dataset_json(const Dataset& ds, const std::string& path) {
  nlohmann::json j;
  j["feature_count"] = ds.feature_count;
  j["task"] = task_name(ds.task);
  j["provenance"] = ds.provenance;
  auto& records = j["records"] = nlohmann::json::array();
  for (const auto& rec : ds.records) {
    nlohmann::json r;
    r["id"] = rec.id;
    r["length"] = rec.length;
    r["label"] = rec.label;
    auto& values = r["values"] = nlohmann::json::array();
    auto& mask = r["mask"] = nlohmann::json::array();
    for (std::size_t i = 0; i < rec.values.size(); ++i) {
      // canonical 0 placeholder on disk, whatever the in-memory poison state
      values.push_back(rec.mask[i] == 1 ? rec.values[i] : 0.0);
      mask.push_back(static_cast<int>(rec.mask[i]));
    }
    records.push_back(std::move(r));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out.good()) throw IoError("failed while writing '" + path + "'");
}

Dataset load_dataset_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid dataset JSON: ") + e.what());
  }
  Dataset ds;
  try {
    ds.feature_count = j.at("feature_count").get<int>();
    ds.task = parse_task(j.at("task").get<std::string>());
    ds.provenance = j.value("provenance", std::string{});
    for (const auto& r : j.at("records")) {
      TimeSeriesRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.length = r.at("length").get<int>();
      rec.label = r.at("label").get<double>();
      rec.values = r.at("values").get<std::vector<double>>();
      const auto mask_ints = r.at("mask").get<std::vector<int>>();
      rec.mask.assign(mask_ints.begin(), mask_ints.end());
      ds.records.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("dataset JSON violates the schema: ") + e.what());
  }
  for (auto& rec : ds.records) {
    validate_record_contract(rec, ds.feature_count, ds.task, "load_dataset_json");
    write_placeholders(rec);
  }
  return ds;
}

NormStats compute_norm_stats(const Dataset& train) {
  const int n = train.feature_count;
  NormStats stats;
  stats.mean.assign(static_cast<std::size_t>(n), 0.0);
  stats.stddev.assign(static_cast<std::size_t>(n), 1.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(n), 0);

  for (const auto& rec : train.records)
    for (int t = 0; t < rec.length; ++t)
      for (int f = 0; f < n; ++f) {
        const std::size_t idx = static_cast<std::size_t>(t) * n + f;
        if (rec.mask[idx] == 1) {
          stats.mean[static_cast<std::size_t>(f)] += rec.values[idx];
          ++count[static_cast<std::size_t>(f)];
        }
      }
  for (int f = 0; f < n; ++f)
    if (count[static_cast<std::size_t>(f)] > 0)
      stats.mean[static_cast<std::size_t>(f)] /=
          static_cast<double>(count[static_cast<std::size_t>(f)]);

  std::vector<double> sq(static_cast<std::size_t>(n), 0.0);
  for (const auto& rec : train.records)
    for (int t = 0; t < rec.length; ++t)
      for (int f = 0; f < n; ++f) {
        const std::size_t idx = static_cast<std::size_t>(t) * n + f;
        if (rec.mask[idx] == 1) {
          const double d = rec.values[idx] - stats.mean[static_cast<std::size_t>(f)];
          sq[static_cast<std::size_t>(f)] += d * d;
        }
      }
  for (int f = 0; f < n; ++f) {
    const std::size_t c = count[static_cast<std::size_t>(f)];
    if (c == 0) {
      stats.mean[static_cast<std::size_t>(f)] = 0.0;
      stats.stddev[static_cast<std::size_t>(f)] = 1.0;
      stats.warnings.push_back("feature " + std::to_string(f + 1) +
                               " has no observed training entries; using mean 0, std 1");
      continue;
    }
    // population standard deviation: deterministic and safe at one observation
    const double var = sq[static_cast<std::size_t>(f)] / static_cast<double>(c);
    if (var > 0.0) {
      stats.stddev[static_cast<std::size_t>(f)] = std::sqrt(var);
    } else {
      stats.stddev[static_cast<std::size_t>(f)] = 1.0;
      stats.warnings.push_back("feature " + std::to_string(f + 1) +
                               " is constant in training; using std 1");
    }
  }
  return stats;
}

Dataset apply_normalization(const Dataset& ds, const NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != ds.feature_count ||
      static_cast<int>(stats.stddev.size()) != ds.feature_count)
    throw std::invalid_argument("apply_normalization: stats dimensionality mismatch");
  Dataset out = ds;
  for (auto& rec : out.records)
    for (int t = 0; t < rec.length; ++t)
      for (int f = 0; f < ds.feature_count; ++f) {
        const std::size_t idx = static_cast<std::size_t>(t) * ds.feature_count + f;
        if (rec.mask[idx] == 1)
          rec.values[idx] = (rec.values[idx] - stats.mean[static_cast<std::size_t>(f)]) /
                            stats.stddev[static_cast<std::size_t>(f)];
      }
  return out;
}

Splits split_stratified(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0) ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_stratified: ratios must be positive and sum to 1");
  if (ds.task == Task::classification) {
    bool has0 = false, has1 = false;
    for (const auto& r : ds.records) (r.label == 1.0 ? has1 : has0) = true;
    if (!has0 || !has1)
      throw StratificationError("split_stratified: classification needs both classes present");
  }
  const auto groups = group_by_stratum(stratum_assignments(ds));
  std::vector<std::size_t> picked[3];
  for (std::size_t s = 0; s < groups.size(); ++s) {
    auto group = groups[s];
    if (group.empty()) continue;
    if (group.size() < 3)
      throw StratificationError("split_stratified: stratum " + std::to_string(s) +
                                " has fewer than 3 records");
    Rng rng(derive_seed(seed, 1000 + s));
    rng.shuffle(group);
    // largest-remainder allocation of the stratum across train/val/test
    const double r[3] = {ratios.train, ratios.val, ratios.test};
    std::size_t counts[3];
    double frac[3];
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double want = r[k] * static_cast<double>(group.size());
      counts[k] = static_cast<std::size_t>(want);
      frac[k] = want - static_cast<double>(counts[k]);
      assigned += counts[k];
    }
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int a, int b) {
      if (frac[a] != frac[b]) return frac[a] > frac[b];
      return a < b;
    });
    for (std::size_t left = group.size() - assigned, k = 0; k < left; ++k) ++counts[order[k]];
    std::size_t at = 0;
    for (int k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < counts[k]; ++c) picked[k].push_back(group[at++]);
  }
  return Splits{dataset_from_indices(ds, picked[0]), dataset_from_indices(ds, picked[1]),
                dataset_from_indices(ds, picked[2])};
}

Dataset inject_missing(const Dataset& ds, double target_rate, std::uint64_t seed) {
  if (!(target_rate >= 0.0 && target_rate < 1.0))
    throw std::invalid_argument("inject_missing: target rate must lie in [0,1)");
  std::size_t total = 0, missing = 0;
  for (const auto& rec : ds.records) {
    total += rec.mask.size();
    for (auto m : rec.mask) missing += (m == 0);
  }
  if (total == 0) return ds;
  const double current = static_cast<double>(missing) / static_cast<double>(total);
  if (target_rate < current - 1e-12)
    throw std::invalid_argument("inject_missing: target rate " + std::to_string(target_rate) +
                                " is below the current rate " + std::to_string(current));
  const double want = target_rate * static_cast<double>(total) - static_cast<double>(missing);
  const std::size_t flips =
      want <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(want - 1e-9));
  if (flips == 0) return ds;

  // Deterministic enumeration of observed positions, then a partial shuffle.
  std::vector<std::pair<std::size_t, std::size_t>> observed;
  observed.reserve(total - missing);
  for (std::size_t r = 0; r < ds.records.size(); ++r)
    for (std::size_t c = 0; c < ds.records[r].mask.size(); ++c)
      if (ds.records[r].mask[c] == 1) observed.emplace_back(r, c);
  Rng rng(seed);
  for (std::size_t k = 0; k < flips; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.uniform_int(observed.size() - k));
    std::swap(observed[k], observed[j]);
  }
  Dataset out = ds;
  const double p = placeholder_value();
  for (std::size_t k = 0; k < flips; ++k) {
    auto [r, c] = observed[k];
    out.records[r].mask[c] = 0;
    out.records[r].values[c] = p;
  }
  return out;
}

Dataset subsample(const Dataset& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("subsample: fraction must lie in (0,1]");
  const auto groups = group_by_stratum(stratum_assignments(train));
  std::vector<std::size_t> picked;
  for (std::size_t s = 0; s < groups.size(); ++s) {
    auto group = groups[s];
    if (group.empty()) continue;
    const std::size_t keep = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(group.size())));
    if (keep == 0)
      throw SubsampleError("subsample: fraction " + std::to_string(fraction) +
                           " empties stratum " + std::to_string(s));
    Rng rng(derive_seed(seed, 2000 + s));
    rng.shuffle(group);
    picked.insert(picked.end(), group.begin(), group.begin() + static_cast<long>(keep));
  }
  return dataset_from_indices(train, std::move(picked));
}

double observed_missing_rate(const Dataset& ds) {
  std::size_t total = 0, missing = 0;
  for (const auto& rec : ds.records) {
    total += rec.mask.size();
    for (auto m : rec.mask) missing += (m == 0);
  }
  return total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
}

std::string dataset_hash(const Dataset& ds) {
  Fnv1a h;
  h.update_u64(static_cast<std::uint64_t>(ds.feature_count));
  h.update_u64(ds.task == Task::classification ? 0 : 1);
  h.update_u64(ds.records.size());
  for (const auto& rec : ds.records) {
    h.update(rec.id.data(), rec.id.size());
    h.update_u64(static_cast<std::uint64_t>(rec.length));
    h.update_f64(rec.label);
    for (std::size_t i = 0; i < rec.values.size(); ++i) {
      h.update(&rec.mask[i], 1);
      h.update_f64(rec.mask[i] == 1 ? rec.values[i] : 0.0);
    }
  }
  return h.hex();
}

}  // namespace prompt_impute
