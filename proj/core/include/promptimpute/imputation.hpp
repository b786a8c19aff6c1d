#pragma once

#include <string>
#include <vector>

#include "promptimpute/data.hpp"

namespace prompt_impute {

// Training/inference protocols. The three imputation protocols complete the
// matrix in preprocessing; pai leaves the mask in place and fills at forward
// time with the learnable prompt.
enum class Protocol { pai, locf, zero, mean };

const char* protocol_name(Protocol p);
Protocol parse_protocol(const std::string& name);

// A completed record: dense values plus the original mask for audit.
struct ImputedRecord {
  std::string id;
  int length = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> original_mask;
  double label = 0.0;
};

// Each missing entry takes the feature's most recent earlier observed value;
// entries before the first observation take 0 (the feature mean under
// z-scoring). Expects a normalized record.
ImputedRecord impute_locf(const TimeSeriesRecord& rec);

// Missing entries take fill[feature]; all zeros gives the Zero baseline,
// per-feature training means gives the mean baseline.
ImputedRecord impute_constant(const TimeSeriesRecord& rec, const std::vector<double>& fill);

// Applies the protocol's imputation to every record, returning a dataset of
// dense records (mask all ones). pai passes the dataset through untouched;
// mean requires the fill vector (identically zero after normalization).
Dataset impute_dataset(const Dataset& ds, Protocol protocol,
                       const std::vector<double>& mean_fill = {});

}  // namespace prompt_impute
