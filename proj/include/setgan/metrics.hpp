#pragma once

// Sample-quality metrics for generated distributions: space-binning distance
// over a PCA-median partition tree, its Haar multi-scale variant, and the
// mixture-aware scores used on the Gaussian grid.

#include <cstddef>
#include <vector>

#include "setgan/autodiff.hpp"
#include "setgan/layers.hpp"

namespace setgan {

// Samples are rank-2 tensors [N x d], one sample per row.

// Binary tree of depth n over R^d. Internal node i (heap order, children
// 2i+1 / 2i+2) routes x left when <direction_i, x> <= threshold_i. Leaves are
// numbered 0..2^n-1 by their left/right path, most significant bit first.
class PartitionTree {
 public:
  PartitionTree() = default;
  PartitionTree(std::size_t depth, std::size_t dim);

  std::size_t depth() const { return depth_; }
  std::size_t dim() const { return dim_; }
  std::size_t leaves() const { return std::size_t{1} << depth_; }
  std::size_t internal_nodes() const { return leaves() - 1; }

  std::span<const double> direction(std::size_t node) const;
  double threshold(std::size_t node) const { return thresholds_.at(node); }

  std::size_t leaf_of(std::span<const double> x) const;

  void set_split(std::size_t node, std::span<const double> direction, double threshold);

 private:
  std::size_t depth_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> directions_;
  std::vector<double> thresholds_;
};

// At every node: top principal direction of the node's data, split at the
// lower median of the projections (ties go left). Requires N >= 2^depth.
PartitionTree build_partition_tree(const Tensor& data, std::size_t depth);

// Normalized leaf occupancy; sums to 1.
using BinHistogram = std::vector<double>;

BinHistogram assign_histogram(const PartitionTree& tree, const Tensor& samples);

// sum_i (p_i - q_i)^2 / (p_i + q_i); empty bins contribute 0. In [0, 2].
double sbd(const BinHistogram& p, const BinHistogram& q);

// Tree on `reference`, histograms of both, their SBD.
double sbd_between(const Tensor& reference, const Tensor& other, std::size_t depth);

// Orthonormal 2D Haar pyramid in Mallat layout: after each level the
// approximation occupies the top-left quadrant of the previous extent.
struct HaarPyramid {
  std::size_t side = 0;
  std::size_t levels = 0;
  std::vector<double> coefficients;  // side x side, row-major

  // Detail coefficients of level l (1 = finest): the HL, LH and HH quadrants,
  // flattened in that order.
  std::vector<double> band(std::size_t level) const;
};

HaarPyramid haar_transform(std::span<const double> image, std::size_t side, std::size_t levels);
std::vector<double> inverse_haar_transform(const HaarPyramid& pyramid);

struct MultiscaleSbd {
  std::vector<double> per_level;  // index 0 = level 1 (finest)
  double average = 0.0;
};

// Rows are flattened side x side images.
MultiscaleSbd multiscale_sbd(const Tensor& real_images, const Tensor& fake_images,
                             std::size_t depth, std::size_t levels);

// Isotropic Gaussian mixture with equal weights.
struct MixtureSpec {
  Tensor means;  // K x d
  double sigma = 0.05;

  std::size_t components() const { return means.rows(); }
  std::size_t dim() const { return means.cols(); }
  void validate() const;
};

// side x side grid of means spaced `spacing` apart and centred on the origin.
MixtureSpec grid_mixture(std::size_t side, double spacing, double sigma);

// Draws n samples: uniform component, then isotropic noise.
Tensor sample_mixture(const MixtureSpec& mixture, std::size_t n, Rng& rng);

// Index of the nearest component mean and its Euclidean distance.
std::pair<std::size_t, double> nearest_component(const MixtureSpec& mixture,
                                                 std::span<const double> x);

double high_quality_fraction(const Tensor& samples, const MixtureSpec& mixture,
                             double n_std = 3.0);

// exp(E_x KL(p(y|x) || p(y))) with the exact mixture posterior as p(y|x).
double analytic_inception_score(const Tensor& samples, const MixtureSpec& mixture);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}) between Gaussian fits.
double frechet_distance(const Tensor& a, const Tensor& b);

// Components that receive at least threshold_fraction of the samples within
// 3 sigma (assigning each sample to its nearest mean).
std::size_t mode_coverage(const Tensor& samples, const MixtureSpec& mixture,
                          double threshold_fraction);

}  // namespace setgan
