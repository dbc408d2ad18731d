#pragma once

// Differentiable histogram aggregation. Each bin [a_n, a_{n+1}) is
// approximated by the product of two logistic steps,
//   phi(f - a_n) * phi(-(f - a_{n+1})),  phi(x) = 1 / (1 + exp(-c x)),
// summed over the rows of a feature matrix.

#include <cstddef>
#include <vector>

#include "setgan/autodiff.hpp"

namespace setgan {

class HistogramSpec {
 public:
  static constexpr std::size_t kDefaultBins = 16;
  static constexpr double kDefaultSteepness = 100.0;

  HistogramSpec() : HistogramSpec(uniform(kDefaultBins, kDefaultSteepness)) {}
  // Edges must be strictly increasing and lie in [0, 1]; steepness > 0.
  HistogramSpec(std::vector<double> edges, double steepness);

  static HistogramSpec uniform(std::size_t bins, double steepness);

  std::size_t bins() const { return edges_.size() - 1; }
  double steepness() const { return steepness_; }
  const std::vector<double>& edges() const { return edges_; }

 private:
  std::vector<double> edges_;
  double steepness_;
};

// 1 / (1 + exp(-c (f - alpha))), evaluated without overflow.
double logistic_membership(double f, double alpha, double c);

// Soft count of bin n over values already in [0, 1]; 0 for no values.
double bin_mass(std::span<const double> values, std::size_t bin, const HistogramSpec& spec);
// Same for one feature column of an s x features matrix.
double bin_mass(const Tensor& features, std::size_t feature, std::size_t bin,
                const HistogramSpec& spec);

// Soft counts over consecutive groups of `group_size` rows of an already
// squashed [groups*group_size x F] matrix. Output is [groups x F*B], feature
// major: column j*B + n holds bin n of feature j. Rows are summed in index
// order.
Var histogram_counts(Var squashed, std::size_t group_size, const HistogramSpec& spec);

// Squashes raw features through a sigmoid, then bins them per group.
Var soft_histogram_grouped(Var raw, std::size_t group_size, const HistogramSpec& spec);

// Single-set form: [s x F] raw features -> [F x B] soft counts.
Var soft_histogram(Var raw, const HistogramSpec& spec);

}  // namespace setgan
