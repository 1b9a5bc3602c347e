#pragma once

#include <cstddef>
#include <vector>

#include "masolab/linalg.hpp"

namespace masolab {

/// Labelled examples. `targets` is only populated for regression data; for
/// classification the one-hot encoding of `labels` is implied.
struct Dataset {
    std::vector<DenseVector> inputs;
    std::vector<std::size_t> labels;
    std::vector<DenseVector> targets;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return inputs.size(); }
    bool empty() const noexcept { return inputs.empty(); }
    std::size_t dim() const noexcept { return inputs.empty() ? 0 : inputs.front().size(); }
    bool is_regression() const noexcept { return !targets.empty(); }
};

/// Throws FormatError on ragged inputs, non-finite features or labels >= classes.
void validate(const Dataset& data);

/// Number of distinct labels present.
std::size_t distinct_labels(const Dataset& data);

}  // namespace masolab
