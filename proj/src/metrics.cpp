#include "setgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace setgan {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t) {
  return Eigen::Map<const RowMatrix>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                                     static_cast<Eigen::Index>(t.cols()));
}

void require_samples(const Tensor& samples, const char* who) {
  if (samples.rank() != 2)
    throw DimensionError(std::string(who) + ": samples must be [N x d], got " +
                         shape_string(samples.shape()));
}

double dot(std::span<const double> a, const double* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool lexicographically_greater(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return true;
    if (a[i] < b[i]) return false;
  }
  return false;
}

// Sign fixed so the first clearly nonzero component is positive.
Eigen::VectorXd canonical_sign(Eigen::VectorXd v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0) v = -v;
      break;
    }
  }
  return v;
}

Eigen::VectorXd principal_direction(const Tensor& data, const std::vector<std::size_t>& rows) {
  const std::size_t d = data.cols();
  const auto n = static_cast<Eigen::Index>(rows.size());
  RowMatrix centered(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, static_cast<Eigen::Index>(c)) = data.at(rows[r], c);
  const Eigen::RowVectorXd mu = centered.colwise().mean();
  centered.rowwise() -= mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const auto& values = solver.eigenvalues();
  const Eigen::Index top = values.size() - 1;
  const double tol = 1e-12 * std::max(std::abs(values[top]), 1e-300);
  Eigen::VectorXd best = canonical_sign(solver.eigenvectors().col(top));
  for (Eigen::Index i = top - 1; i >= 0 && values[top] - values[i] <= tol; --i) {
    Eigen::VectorXd candidate = canonical_sign(solver.eigenvectors().col(i));
    if (lexicographically_greater(candidate, best)) best = candidate;
  }
  return best.normalized();
}

bool all_identical(const Tensor& data, const std::vector<std::size_t>& rows) {
  const std::size_t d = data.cols();
  for (std::size_t r = 1; r < rows.size(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      if (data.at(rows[r], c) != data.at(rows[0], c)) return false;
  return true;
}

void split_node(PartitionTree& tree, const Tensor& data, std::size_t node, std::size_t level,
                const std::vector<std::size_t>& rows) {
  if (level == tree.depth()) return;
  const std::size_t d = data.cols();
  std::vector<double> axis(d, 0.0);
  axis[0] = 1.0;

  std::vector<std::size_t> left, right;
  if (rows.empty()) {
    tree.set_split(node, axis, std::numeric_limits<double>::infinity());
  } else if (rows.size() == 1 || all_identical(data, rows)) {
    tree.set_split(node, axis, data.at(rows[0], 0));
    left = rows;
  } else {
    Eigen::VectorXd dir = principal_direction(data, rows);
    std::vector<double> direction(dir.data(), dir.data() + dir.size());
    std::vector<double> proj(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      proj[i] = dot(direction, &data.data()[rows[i] * d]);
    std::vector<double> sorted = proj;
    const std::size_t lower_median = (sorted.size() - 1) / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(lower_median),
                     sorted.end());
    const double threshold = sorted[lower_median];
    tree.set_split(node, direction, threshold);
    for (std::size_t i = 0; i < rows.size(); ++i)
      (proj[i] <= threshold ? left : right).push_back(rows[i]);
  }
  split_node(tree, data, 2 * node + 1, level + 1, left);
  split_node(tree, data, 2 * node + 2, level + 1, right);
}

}  // namespace

// ---------------------------------------------------------------------------

PartitionTree::PartitionTree(std::size_t depth, std::size_t dim)
    : depth_(depth),
      dim_(dim),
      directions_(((std::size_t{1} << depth) - 1) * dim, 0.0),
      thresholds_((std::size_t{1} << depth) - 1, 0.0) {
  if (depth >= 8 * sizeof(std::size_t) - 1) throw ContractError("partition tree too deep");
}

std::span<const double> PartitionTree::direction(std::size_t node) const {
  if (node >= internal_nodes()) throw ContractError("partition tree node out of range");
  return std::span<const double>(directions_).subspan(node * dim_, dim_);
}

void PartitionTree::set_split(std::size_t node, std::span<const double> direction,
                              double threshold) {
  if (node >= internal_nodes()) throw ContractError("partition tree node out of range");
  if (direction.size() != dim_) throw DimensionError("split direction has the wrong width");
  std::copy(direction.begin(), direction.end(), directions_.begin() + node * dim_);
  thresholds_[node] = threshold;
}

std::size_t PartitionTree::leaf_of(std::span<const double> x) const {
  if (x.size() != dim_)
    throw DimensionError("sample width " + std::to_string(x.size()) +
                         " does not match partition tree width " + std::to_string(dim_));
  std::size_t node = 0;
  std::size_t leaf = 0;
  for (std::size_t level = 0; level < depth_; ++level) {
    const bool go_right = dot(direction(node), x.data()) > thresholds_[node];
    leaf = (leaf << 1) | (go_right ? 1 : 0);
    node = 2 * node + (go_right ? 2 : 1);
  }
  return leaf;
}

PartitionTree build_partition_tree(const Tensor& data, std::size_t depth) {
  require_samples(data, "build_partition_tree");
  const std::size_t n = data.rows();
  if (depth >= 8 * sizeof(std::size_t) - 1 || n < (std::size_t{1} << depth))
    throw ContractError("partition tree of depth " + std::to_string(depth) + " needs at least " +
                        "2^depth samples, got " + std::to_string(n));
  PartitionTree tree(depth, data.cols());
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  split_node(tree, data, 0, 0, rows);
  return tree;
}

BinHistogram assign_histogram(const PartitionTree& tree, const Tensor& samples) {
  require_samples(samples, "assign_histogram");
  const std::size_t m = samples.rows();
  if (samples.size() == 0 || m == 0) throw ContractError("assign_histogram needs samples");
  if (samples.cols() != tree.dim())
    throw DimensionError("sample width " + std::to_string(samples.cols()) +
                         " does not match partition tree width " + std::to_string(tree.dim()));
  std::vector<std::size_t> counts(tree.leaves(), 0);
  const std::size_t d = samples.cols();
  for (std::size_t r = 0; r < m; ++r) ++counts[tree.leaf_of(samples.data().subspan(r * d, d))];
  BinHistogram hist(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    hist[i] = static_cast<double>(counts[i]) / static_cast<double>(m);
  return hist;
}

double sbd(const BinHistogram& p, const BinHistogram& q) {
  if (p.size() != q.size())
    throw ContractError("sbd: histograms have " + std::to_string(p.size()) + " and " +
                        std::to_string(q.size()) + " bins");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double s = p[i] + q[i];
    if (s > 0.0) total += (p[i] - q[i]) * (p[i] - q[i]) / s;
  }
  return total;
}

double sbd_between(const Tensor& reference, const Tensor& other, std::size_t depth) {
  const PartitionTree tree = build_partition_tree(reference, depth);
  return sbd(assign_histogram(tree, reference), assign_histogram(tree, other));
}

// ---------------------------------------------------------------------------
// Haar

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t log2_exact(std::size_t n) {
  std::size_t a = 0;
  while ((std::size_t{1} << a) < n) ++a;
  return a;
}

// One orthonormal Haar step on the leading `extent` entries of a strided line.
void haar_line(double* line, std::size_t stride, std::size_t extent, std::vector<double>& tmp) {
  const double r = 1.0 / std::sqrt(2.0);
  const std::size_t half = extent / 2;
  tmp.resize(extent);
  for (std::size_t i = 0; i < half; ++i) {
    const double u = line[(2 * i) * stride], v = line[(2 * i + 1) * stride];
    tmp[i] = (u + v) * r;
    tmp[half + i] = (u - v) * r;
  }
  for (std::size_t i = 0; i < extent; ++i) line[i * stride] = tmp[i];
}

void inverse_haar_line(double* line, std::size_t stride, std::size_t extent,
                       std::vector<double>& tmp) {
  const double r = 1.0 / std::sqrt(2.0);
  const std::size_t half = extent / 2;
  tmp.resize(extent);
  for (std::size_t i = 0; i < half; ++i) {
    const double s = line[i * stride], d = line[(half + i) * stride];
    tmp[2 * i] = (s + d) * r;
    tmp[2 * i + 1] = (s - d) * r;
  }
  for (std::size_t i = 0; i < extent; ++i) line[i * stride] = tmp[i];
}

}  // namespace

HaarPyramid haar_transform(std::span<const double> image, std::size_t side, std::size_t levels) {
  if (!is_power_of_two(side)) throw ContractError("haar: side must be a power of two");
  if (image.size() != side * side)
    throw DimensionError("haar: image has " + std::to_string(image.size()) +
                         " pixels, expected " + std::to_string(side * side));
  if (levels > log2_exact(side)) throw ContractError("haar: too many levels for the image side");
  HaarPyramid p{side, levels, std::vector<double>(image.begin(), image.end())};
  std::vector<double> tmp;
  std::size_t extent = side;
  for (std::size_t level = 0; level < levels; ++level, extent /= 2) {
    for (std::size_t r = 0; r < extent; ++r) haar_line(&p.coefficients[r * side], 1, extent, tmp);
    for (std::size_t c = 0; c < extent; ++c) haar_line(&p.coefficients[c], side, extent, tmp);
  }
  return p;
}

std::vector<double> inverse_haar_transform(const HaarPyramid& pyramid) {
  const std::size_t side = pyramid.side;
  std::vector<double> image = pyramid.coefficients;
  std::vector<double> tmp;
  for (std::size_t level = pyramid.levels; level-- > 0;) {
    const std::size_t extent = side >> level;
    for (std::size_t c = 0; c < extent; ++c) inverse_haar_line(&image[c], side, extent, tmp);
    for (std::size_t r = 0; r < extent; ++r) inverse_haar_line(&image[r * side], 1, extent, tmp);
  }
  return image;
}

std::vector<double> HaarPyramid::band(std::size_t level) const {
  if (level < 1 || level > levels) throw ContractError("haar: band level out of range");
  const std::size_t extent = side >> (level - 1);
  const std::size_t half = extent / 2;
  std::vector<double> out;
  out.reserve(3 * half * half);
  auto quadrant = [&](std::size_t r0, std::size_t c0) {
    for (std::size_t r = 0; r < half; ++r)
      for (std::size_t c = 0; c < half; ++c) out.push_back(coefficients[(r0 + r) * side + c0 + c]);
  };
  quadrant(0, half);
  quadrant(half, 0);
  quadrant(half, half);
  return out;
}

MultiscaleSbd multiscale_sbd(const Tensor& real_images, const Tensor& fake_images,
                             std::size_t depth, std::size_t levels) {
  require_samples(real_images, "multiscale_sbd");
  require_samples(fake_images, "multiscale_sbd");
  if (real_images.cols() != fake_images.cols())
    throw DimensionError("multiscale_sbd: image sizes differ");
  const std::size_t pixels = real_images.cols();
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
  if (side * side != pixels || !is_power_of_two(side))
    throw ContractError("multiscale_sbd: rows must be flattened dyadic square images");
  if (levels < 1) throw ContractError("multiscale_sbd: need at least one level");

  auto bands = [&](const Tensor& images) {
    std::vector<Tensor> per_level;
    const std::size_t n = images.rows();
    for (std::size_t level = 1; level <= levels; ++level) {
      const std::size_t half = (side >> (level - 1)) / 2;
      per_level.emplace_back(Shape{n, 3 * half * half});
    }
    for (std::size_t i = 0; i < n; ++i) {
      HaarPyramid p = haar_transform(images.data().subspan(i * pixels, pixels), side, levels);
      for (std::size_t level = 1; level <= levels; ++level) {
        std::vector<double> b = p.band(level);
        std::copy(b.begin(), b.end(), &per_level[level - 1][i * b.size()]);
      }
    }
    return per_level;
  };

  const std::vector<Tensor> real_bands = bands(real_images);
  const std::vector<Tensor> fake_bands = bands(fake_images);
  MultiscaleSbd result;
  for (std::size_t l = 0; l < levels; ++l)
    result.per_level.push_back(sbd_between(real_bands[l], fake_bands[l], depth));
  result.average = std::accumulate(result.per_level.begin(), result.per_level.end(), 0.0) /
                   static_cast<double>(levels);
  return result;
}

// ---------------------------------------------------------------------------
// Mixture metrics

void MixtureSpec::validate() const {
  if (means.rank() != 2 || means.size() == 0)
    throw ContractError("mixture needs at least one component mean");
  if (!(sigma > 0.0)) throw ContractError("mixture sigma must be positive");
}

MixtureSpec grid_mixture(std::size_t side, double spacing, double sigma) {
  if (side < 1) throw ContractError("grid side must be at least 1");
  Tensor means(Shape{side * side, 2});
  const double offset = spacing * static_cast<double>(side - 1) / 2.0;
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      means.at(i * side + j, 0) = static_cast<double>(i) * spacing - offset;
      means.at(i * side + j, 1) = static_cast<double>(j) * spacing - offset;
    }
  return MixtureSpec{std::move(means), sigma};
}

Tensor sample_mixture(const MixtureSpec& mixture, std::size_t n, Rng& rng) {
  if (mixture.means.rank() != 2 || mixture.components() == 0)
    throw ContractError("mixture needs at least one component mean");
  if (mixture.sigma < 0.0) throw ContractError("mixture sigma must be non-negative");
  const std::size_t d = mixture.dim();
  Tensor out(Shape{n, d});
  std::uniform_int_distribution<std::size_t> pick(0, mixture.components() - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(rng);
    for (std::size_t c = 0; c < d; ++c)
      out.at(i, c) = mixture.means.at(k, c) + mixture.sigma * noise(rng);
  }
  return out;
}

std::pair<std::size_t, double> nearest_component(const MixtureSpec& mixture,
                                                 std::span<const double> x) {
  if (x.size() != mixture.dim()) throw DimensionError("sample width does not match mixture");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < mixture.components(); ++k) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double diff = x[c] - mixture.means.at(k, c);
      d2 += diff * diff;
    }
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return {best, std::sqrt(best_d2)};
}

double high_quality_fraction(const Tensor& samples, const MixtureSpec& mixture, double n_std) {
  mixture.validate();
  if (samples.size() == 0) return 0.0;
  require_samples(samples, "high_quality_fraction");
  const std::size_t n = samples.rows(), d = samples.cols();
  std::size_t good = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (nearest_component(mixture, samples.data().subspan(i * d, d)).second <=
        n_std * mixture.sigma)
      ++good;
  return static_cast<double>(good) / static_cast<double>(n);
}

double analytic_inception_score(const Tensor& samples, const MixtureSpec& mixture) {
  mixture.validate();
  require_samples(samples, "analytic_inception_score");
  const std::size_t n = samples.rows(), d = samples.cols(), kc = mixture.components();
  if (n == 0 || samples.size() == 0) throw ContractError("inception score needs samples");
  if (d != mixture.dim()) throw DimensionError("sample width does not match mixture");
  const double inv_two_var = 1.0 / (2.0 * mixture.sigma * mixture.sigma);

  std::vector<double> posterior(n * kc);
  std::vector<double> marginal(kc, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* post = &posterior[i * kc];
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kc; ++k) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = samples.at(i, c) - mixture.means.at(k, c);
        d2 += diff * diff;
      }
      post[k] = -d2 * inv_two_var;
      top = std::max(top, post[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < kc; ++k) z += (post[k] = std::exp(post[k] - top));
    for (std::size_t k = 0; k < kc; ++k) {
      post[k] /= z;
      marginal[k] += post[k];
    }
  }
  for (double& p : marginal) p /= static_cast<double>(n);

  double mean_kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double kl = 0.0;
    for (std::size_t k = 0; k < kc; ++k) {
      const double p = posterior[i * kc + k];
      if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[k]));
    }
    mean_kl += kl;
  }
  return std::exp(mean_kl / static_cast<double>(n));
}

double frechet_distance(const Tensor& a, const Tensor& b) {
  require_samples(a, "frechet_distance");
  require_samples(b, "frechet_distance");
  if (a.rows() < 2 || b.rows() < 2) throw ContractError("frechet distance needs >= 2 samples each");
  if (a.cols() != b.cols()) throw DimensionError("frechet distance: sample widths differ");
  const auto d = static_cast<Eigen::Index>(a.cols());

  auto fit = [](const Tensor& t, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const auto x = as_matrix(t);
    mu = x.colwise().mean().transpose();
    const RowMatrix centered = x.rowwise() - mu.transpose();
    cov = (centered.transpose() * centered) / static_cast<double>(t.rows() - 1);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  fit(a, mu_a, cov_a);
  fit(b, mu_b, cov_b);

  auto min_eigen = [](const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly)
        .eigenvalues()
        .minCoeff();
  };
  if (min_eigen(cov_a) <= 0.0 || min_eigen(cov_b) <= 0.0) {
    std::clog << "warning: frechet_distance: singular covariance, adding 1e-10 I jitter\n";
    cov_a += 1e-10 * Eigen::MatrixXd::Identity(d, d);
    cov_b += 1e-10 * Eigen::MatrixXd::Identity(d, d);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sa(cov_a);
  const Eigen::VectorXd root_values = sa.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a =
      sa.eigenvectors() * root_values.asDiagonal() * sa.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  const Eigen::VectorXd inner_values =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(inner, Eigen::EigenvaluesOnly).eigenvalues();
  const double trace_sqrt = inner_values.cwiseMax(0.0).cwiseSqrt().sum();

  const double fd =
      (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
  return std::max(fd, 0.0);
}

std::size_t mode_coverage(const Tensor& samples, const MixtureSpec& mixture,
                          double threshold_fraction) {
  mixture.validate();
  if (samples.size() == 0) return 0;
  require_samples(samples, "mode_coverage");
  const std::size_t n = samples.rows(), d = samples.cols();
  std::vector<std::size_t> hits(mixture.components(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [k, dist] = nearest_component(mixture, samples.data().subspan(i * d, d));
    if (dist <= 3.0 * mixture.sigma) ++hits[k];
  }
  const double needed = threshold_fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::count_if(
      hits.begin(), hits.end(), [&](std::size_t h) { return h > 0 && static_cast<double>(h) >= needed; }));
}

}  // namespace setgan
