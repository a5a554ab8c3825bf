#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "forge/tensor.hpp"

namespace forge {

/// Images [m, d] with values in [0, 1] and one-hot labels [m, n].
struct LabeledBatch {
  Tensor images;
  Tensor labels;

  std::size_t size() const { return images.rows(); }
  std::size_t dim() const { return images.cols(); }
  std::size_t classes() const { return labels.cols(); }

  /// Rows `indices` of this batch, in that order.
  LabeledBatch gather(std::span<const std::size_t> indices) const {
    const std::size_t d = dim(), n = classes();
    LabeledBatch out{Tensor({indices.size(), d}), Tensor({indices.size(), n})};
    for (std::size_t k = 0; k < indices.size(); ++k) {
      auto src_x = images.row(indices[k]);
      auto src_y = labels.row(indices[k]);
      std::copy(src_x.begin(), src_x.end(), out.images.values.begin() + k * d);
      std::copy(src_y.begin(), src_y.end(), out.labels.values.begin() + k * n);
    }
    return out;
  }

  /// Index of the 1 in each label row.
  std::size_t label_of(std::size_t row) const {
    auto y = labels.row(row);
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[j] == 1.0) return j;
    return y.size();
  }

  friend bool operator==(const LabeledBatch&, const LabeledBatch&) = default;
};

/// Empty string when the batch satisfies its invariants, else the first
/// violation found.
inline std::string check_batch(const LabeledBatch& b) {
  if (b.images.rank() != 2 || b.labels.rank() != 2) return "images and labels must be matrices";
  if (b.images.rows() < 1) return "batch is empty";
  if (b.images.rows() != b.labels.rows())
    return "image rows (" + std::to_string(b.images.rows()) + ") and label rows (" +
           std::to_string(b.labels.rows()) + ") differ";
  for (double v : b.images.values)
    if (!(v >= 0.0 && v <= 1.0)) return "image value outside [0, 1]";
  for (std::size_t i = 0; i < b.labels.rows(); ++i) {
    std::size_t ones = 0;
    for (double v : b.labels.row(i)) {
      if (v == 1.0) ++ones;
      else if (v != 0.0) return "label row " + std::to_string(i) + " is not one-hot";
    }
    if (ones != 1) return "label row " + std::to_string(i) + " is not one-hot";
  }
  return {};
}

}  // namespace forge
