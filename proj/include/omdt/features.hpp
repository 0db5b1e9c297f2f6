#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace omdt {

/// Per-state observation vectors used by the split predicates of a tree.
/// Stored row-major: one row per state, one column per feature.
struct FeatureMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> values;
  std::vector<std::string> names;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::vector<std::string> feature_names)
      : n_rows(rows),
        n_cols(feature_names.size()),
        values(rows * feature_names.size(), 0.0),
        names(std::move(feature_names)) {}

  double& operator()(std::size_t row, std::size_t col) { return values[row * n_cols + col]; }
  double operator()(std::size_t row, std::size_t col) const { return values[row * n_cols + col]; }

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * n_cols, n_cols};
  }

  bool operator==(const FeatureMatrix&) const = default;
};

}  // namespace omdt
