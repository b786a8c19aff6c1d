#pragma once

#include <stdexcept>
#include <string>

namespace prompt_impute {

// Shape mismatch between tensor operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation called in a state that cannot serve it (backward before forward,
// optimizer step without gradients, ...).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, long line_number = -1)
      : std::runtime_error(line_number >= 0 ? msg + " (line " + std::to_string(line_number) + ")"
                                            : msg),
        line(line_number) {}
  long line;
};

// Structurally valid file whose content violates the data contract
// (duplicate keys, unknown ids, feature-count mismatch, ...).
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StratificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SubsampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Metric is undefined for the given inputs (single-class AUROC, ...).
struct UndefinedMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss. Carries the location of the failure.
struct DivergedRun : std::runtime_error {
  DivergedRun(const std::string& msg, int epoch_index, int batch_index)
      : std::runtime_error(msg + " (epoch " + std::to_string(epoch_index) + ", batch " +
                           std::to_string(batch_index) + ")"),
        epoch(epoch_index),
        batch(batch_index) {}
  int epoch;
  int batch;
};

}  // namespace prompt_impute
