#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "feedcap/simplex.hpp"

namespace feedcap {

// Conditional probability table: one SimplexVector row per conditioning
// tuple. Tuples are flattened row-major with the first declared dimension
// most significant.
class ConditionalKernel {
  public:
    ConditionalKernel() = default;
    ConditionalKernel(std::vector<std::size_t> cond_sizes, std::size_t target_size,
                      std::vector<SimplexVector> rows);

    std::size_t row_count() const { return rows_.size(); }
    std::size_t target_size() const { return target_size_; }
    const std::vector<std::size_t>& cond_sizes() const { return cond_sizes_; }

    std::size_t flat_index(const std::vector<std::size_t>& coords) const;
    std::vector<std::size_t> unflatten(std::size_t flat) const;

    const SimplexVector& row(std::size_t flat) const { return rows_[flat]; }
    const SimplexVector& row_at(const std::vector<std::size_t>& coords) const {
        return rows_[flat_index(coords)];
    }
    double p(std::size_t flat, std::size_t y) const { return rows_[flat][y]; }

  private:
    std::vector<std::size_t> cond_sizes_;
    std::size_t target_size_ = 0;
    std::vector<SimplexVector> rows_;
};

struct KernelDefect {
    std::size_t row = 0;
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    std::vector<KernelDefect> defects;
};

// Checks raw rows before construction: shape, nonnegativity, row sums within
// kRowSumTol. Row coordinates in messages use cond_sizes when provided.
ValidationReport validate_kernel(const std::vector<std::vector<double>>& rows,
                                 std::size_t target_size,
                                 const std::vector<std::size_t>& cond_sizes = {},
                                 const std::vector<std::string>& cond_labels = {});

// Joint kernel V -> X x Y stored with the product target flattened as
// x * y_size + y.
struct JointDecomposition {
    ConditionalKernel marginal_y;    // V -> Y
    ConditionalKernel conditional_x; // (V, Y) -> X
    // rows of conditional_x that had zero mass and were replaced by uniform
    std::vector<std::size_t> uniform_filled;
};

// Splits a joint kernel over X x Y given V into the Y-marginal and the
// conditional of X given (V, Y). Zero-mass (v, y) cells yield uniform
// conditional rows and are reported.
JointDecomposition bayes_decompose(const ConditionalKernel& joint, std::size_t x_size,
                                   std::size_t y_size);

// Composes k1: V -> X with k2: (V, X) -> Y into the joint V -> X x Y.
ConditionalKernel compose(const ConditionalKernel& k1, const ConditionalKernel& k2);

} // namespace feedcap
