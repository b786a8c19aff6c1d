#include "promptimpute/imputation.hpp"

#include <stdexcept>

#include "promptimpute/errors.hpp"

namespace prompt_impute {

namespace {

int infer_feature_count(const TimeSeriesRecord& rec) {
  if (rec.length < 1) throw InvalidInput("impute: record '" + rec.id + "' has length < 1");
  return static_cast<int>(rec.values.size()) / rec.length;
}

ImputedRecord shell(const TimeSeriesRecord& rec) {
  ImputedRecord out;
  out.id = rec.id;
  out.length = rec.length;
  out.values.assign(rec.values.size(), 0.0);
  out.original_mask = rec.mask;
  out.label = rec.label;
  return out;
}

}  // namespace

const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::pai: return "pai";
    case Protocol::locf: return "locf";
    case Protocol::zero: return "zero";
    case Protocol::mean: return "mean";
  }
  return "?";
}

Protocol parse_protocol(const std::string& name) {
  if (name == "pai") return Protocol::pai;
  if (name == "locf") return Protocol::locf;
  if (name == "zero") return Protocol::zero;
  if (name == "mean") return Protocol::mean;
  throw InvalidInput("unknown protocol '" + name + "'");
}

ImputedRecord impute_locf(const TimeSeriesRecord& rec) {
  const int n = infer_feature_count(rec);
  ImputedRecord out = shell(rec);
  for (int f = 0; f < n; ++f) {
    double carried = 0.0;  // leading-missing rule: the post-normalization mean
    for (int t = 0; t < rec.length; ++t) {
      const std::size_t idx = static_cast<std::size_t>(t) * n + f;
      if (rec.mask[idx] == 1) carried = rec.values[idx];
      out.values[idx] = carried;
    }
  }
  return out;
}

ImputedRecord impute_constant(const TimeSeriesRecord& rec, const std::vector<double>& fill) {
  const int n = infer_feature_count(rec);
  if (static_cast<int>(fill.size()) != n)
    throw std::invalid_argument("impute_constant: fill has " + std::to_string(fill.size()) +
                                " entries for " + std::to_string(n) + " features");
  ImputedRecord out = shell(rec);
  for (int t = 0; t < rec.length; ++t)
    for (int f = 0; f < n; ++f) {
      const std::size_t idx = static_cast<std::size_t>(t) * n + f;
      out.values[idx] = rec.mask[idx] == 1 ? rec.values[idx] : fill[static_cast<std::size_t>(f)];
    }
  return out;
}

Dataset impute_dataset(const Dataset& ds, Protocol protocol, const std::vector<double>& mean_fill) {
  if (protocol == Protocol::pai) return ds;
  Dataset out;
  out.feature_count = ds.feature_count;
  out.task = ds.task;
  out.provenance = ds.provenance + "+" + protocol_name(protocol);
  out.records.reserve(ds.records.size());
  const std::vector<double> zeros(static_cast<std::size_t>(ds.feature_count), 0.0);
  const std::vector<double>* fill = &zeros;
  if (protocol == Protocol::mean) {
    if (static_cast<int>(mean_fill.size()) != ds.feature_count)
      throw std::invalid_argument("impute_dataset: mean protocol needs a fill vector of length " +
                                  std::to_string(ds.feature_count));
    fill = &mean_fill;
  }
  for (const auto& rec : ds.records) {
    ImputedRecord imp =
        protocol == Protocol::locf ? impute_locf(rec) : impute_constant(rec, *fill);
    TimeSeriesRecord dense;
    dense.id = imp.id;
    dense.length = imp.length;
    dense.values = std::move(imp.values);
    dense.mask.assign(dense.values.size(), 1);
    dense.label = imp.label;
    out.records.push_back(std::move(dense));
  }
  return out;
}

}  // namespace prompt_impute
