#pragma once

#include <cstddef>
#include <vector>

#include "mvcs/types.hpp"

namespace mvcs {

/// Paired covariates (n x d) and responses (n x k), one sample per row.
struct Dataset {
  Matrix x;
  Matrix y;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  int x_dim() const { return static_cast<int>(x.cols()); }
  int y_dim() const { return static_cast<int>(y.cols()); }
  bool empty() const { return x.rows() == 0; }

  /// Throws std::invalid_argument on mismatched row counts or non-finite entries.
  void validate() const;
  Dataset rows(const std::vector<std::size_t>& idx) const;
};

}  // namespace mvcs
