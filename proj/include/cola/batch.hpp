#pragma once

#include <vector>

#include "cola/numerics.hpp"

namespace cola {

/// A minibatch: one sample per row of `inputs`, integer class labels.
struct Batch {
  Matrix inputs;
  std::vector<int> labels;

  Eigen::Index size() const { return inputs.rows(); }
};

}  // namespace cola
