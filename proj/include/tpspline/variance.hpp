#pragma once

// Estimates of the residual budget S_n: from replicated responses, or from
// the spread of single responses within cells of a regular partition.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "tpspline/basis.hpp"
#include "tpspline/model.hpp"

namespace tps {

/// Y(i, j) is the j-th replicate at design point X_i.
template <typename Scalar>
struct ReplicatedDataset {
  Points<Scalar> x;
  Matrix<Scalar> y;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index replicates() const { return y.cols(); }
};

template <typename Scalar>
struct ReplicateEstimate {
  Scalar s_n;
  Dataset<Scalar> collapsed;  // (X_i, mean_j Y_ij)
};

/// S_n = (1/(n r)) sum_i S_i with S_i the unbiased sample variance of row i.
template <typename Scalar>
ReplicateEstimate<Scalar> replicate_s_n(const ReplicatedDataset<Scalar>& data) {
  const Eigen::Index n = data.size(), r = data.replicates();
  if (data.y.rows() != n) throw std::invalid_argument("replicate_s_n: X and Y row counts differ");
  if (r < 2) throw std::invalid_argument("replicate_s_n: need at least 2 replicates, got " + std::to_string(r));
  if (n < 1) throw std::invalid_argument("replicate_s_n: empty dataset");
  const Vector<Scalar> mean = data.y.rowwise().mean();
  const Vector<Scalar> s_i = (data.y.colwise() - mean).rowwise().squaredNorm() / Scalar(r - 1);
  return {s_i.sum() / Scalar(n * r), Dataset<Scalar>{data.x, mean}};
}

template <typename Scalar>
struct PartitionEstimate {
  Scalar s_n;
  std::vector<Eigen::Index> used_cells;      // linear cell indices, axis 0 fastest
  std::vector<Eigen::Index> excluded_cells;  // nonempty cells with a single point
  std::vector<Scalar> cell_variances;        // aligned with used_cells
};

/// Linear index of the cell holding x among k^d cells of `box`. Cells are
/// half-open [lo, hi) except the last along each axis, which is closed.
template <typename Scalar, typename Derived>
Eigen::Index partition_cell(const Eigen::MatrixBase<Derived>& x, int k, const Box<Scalar>& box) {
  Eigen::Index cell = 0, stride = 1;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const Scalar v = x(j);
    if (v < box.lo || v > box.hi) throw std::invalid_argument("partition: point outside the domain box");
    auto c = static_cast<Eigen::Index>(std::floor((v - box.lo) / box.width() * Scalar(k)));
    if (c >= k) c = k - 1;
    cell += c * stride;
    stride *= k;
  }
  return cell;
}

/// Average of within-cell unbiased sample variances over cells with at least
/// two points. `weights` (one per cell, e.g. the design density) switches the
/// plain average to a weighted one.
template <typename Scalar>
PartitionEstimate<Scalar> partition_s_n(const Dataset<Scalar>& data, int k, const Box<Scalar>& box,
                                        const std::optional<std::vector<std::type_identity_t<Scalar>>>& weights = std::nullopt) {
  if (k < 1) throw std::invalid_argument("partition_s_n: need at least one cell per axis");
  const int d = data.dim();
  Eigen::Index cells = 1;
  for (int j = 0; j < d; ++j) cells *= k;
  if (weights && static_cast<Eigen::Index>(weights->size()) != cells)
    throw std::invalid_argument("partition_s_n: expected " + std::to_string(cells) + " weights");

  std::vector<Eigen::Index> count(cells, 0);
  std::vector<Scalar> sum(cells, Scalar(0));
  std::vector<Scalar> sum_sq(cells, Scalar(0));
  std::vector<Eigen::Index> cell_of(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::Index c = partition_cell(data.x.row(i), k, box);
    cell_of[i] = c;
    ++count[c];
    sum[c] += data.y(i);
  }
  // Two-pass variance around the cell mean.
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::Index c = cell_of[i];
    const Scalar dev = data.y(i) - sum[c] / Scalar(count[c]);
    sum_sq[c] += dev * dev;
  }

  PartitionEstimate<Scalar> out{Scalar(0), {}, {}, {}};
  Scalar total(0), total_weight(0);
  for (Eigen::Index c = 0; c < cells; ++c) {
    if (count[c] == 0) continue;
    if (count[c] < 2) {
      out.excluded_cells.push_back(c);
      continue;
    }
    const Scalar var = sum_sq[c] / Scalar(count[c] - 1);
    const Scalar w = weights ? (*weights)[c] : Scalar(1);
    out.used_cells.push_back(c);
    out.cell_variances.push_back(var);
    total += w * var;
    total_weight += w;
  }
  if (out.used_cells.empty()) throw std::invalid_argument("partition_s_n: no cell holds two or more points");
  if (!(total_weight > Scalar(0))) throw std::invalid_argument("partition_s_n: weights of usable cells sum to zero");
  out.s_n = total / total_weight;
  return out;
}

}  // namespace tps
