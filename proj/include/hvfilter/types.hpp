#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace hvf {

/// Row/column index into a pattern or state vector.
using index_t = std::uint32_t;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Symmetric matrix accessed entry by entry; only the entries a kernel needs are ever requested.
template <typename F>
concept EntryOracle = requires(const F& f, index_t i, index_t j) {
    { f(i, j) } -> std::convertible_to<double>;
};

/// Type-erased entry oracle, for storing covariances inside model descriptions.
using EntryFn = std::function<double(index_t, index_t)>;

/// A factorization pivot failed. `row` is the offending index in pattern order.
class FactorizationError : public std::runtime_error {
public:
    FactorizationError(const std::string& what, index_t row, std::string stage = {}) :
        std::runtime_error((stage.empty() ? "" : stage + ": ") + what + " (row " + std::to_string(row) + ")"),
        detail_(what), stage_(std::move(stage)), row_(row) { }

    index_t row() const noexcept { return row_; }
    const std::string& stage() const noexcept { return stage_; }
    const std::string& detail() const noexcept { return detail_; }

    /// Same failure, labelled with the pipeline stage that raised it.
    FactorizationError labelled(const std::string& stage) const { return {detail_, row_, stage}; }

private:
    std::string detail_;
    std::string stage_;
    index_t row_;
};

/// A kernel produced (or would need) an entry outside the fixed sparsity pattern.
class PatternViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hvf
