#include "setgan/soft_histogram.hpp"

#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace setgan {

HistogramSpec::HistogramSpec(std::vector<double> edges, double steepness)
    : edges_(std::move(edges)), steepness_(steepness) {
  if (edges_.size() < 2) throw ContractError("histogram needs at least one bin");
  if (!(steepness_ > 0.0)) throw ContractError("histogram steepness must be positive");
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (edges_[i] < 0.0 || edges_[i] > 1.0)
      throw ContractError("histogram edges must lie in [0, 1]");
    if (i > 0 && !(edges_[i] > edges_[i - 1]))
      throw ContractError("histogram edges must be strictly increasing");
  }
}

HistogramSpec HistogramSpec::uniform(std::size_t bins, double steepness) {
  if (bins < 1) throw ContractError("histogram needs at least one bin");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    edges[i] = static_cast<double>(i) / static_cast<double>(bins);
  return HistogramSpec(std::move(edges), steepness);
}

double logistic_membership(double f, double alpha, double c) {
  if (!(c > 0.0)) throw ContractError("logistic steepness must be positive");
  return logistic(c * (f - alpha));
}

double bin_mass(std::span<const double> values, std::size_t bin, const HistogramSpec& spec) {
  if (bin >= spec.bins()) throw ContractError("bin index out of range");
  const double c = spec.steepness();
  const double lo = spec.edges()[bin], hi = spec.edges()[bin + 1];
  double mass = 0.0;
  for (double f : values) {
    if (f < 0.0 || f > 1.0) throw ContractError("bin_mass expects features in [0, 1]");
    mass += logistic(c * (f - lo)) * logistic(-c * (f - hi));
  }
  return mass;
}

double bin_mass(const Tensor& features, std::size_t feature, std::size_t bin,
                const HistogramSpec& spec) {
  const std::size_t rows = features.rows(), cols = features.cols();
  if (feature >= cols) throw ContractError("feature index out of range");
  std::vector<double> column(rows);
  for (std::size_t i = 0; i < rows; ++i) column[i] = features[i * cols + feature];
  return bin_mass(column, bin, spec);
}

namespace {

// rise[n] = phi(c (f - a_n)), fall[n] = 1 - rise[n]. With moderate steepness a
// single exp serves every edge: t_n = exp(-c f) exp(c a_n).
class EdgeLogistics {
 public:
  EdgeLogistics(const std::vector<double>& edges, double c)
      : edges_(edges), c_(c), scale_(edges.size()), fast_(c <= 300.0) {
    for (std::size_t n = 0; n < edges.size(); ++n) scale_[n] = std::exp(c * edges[n]);
  }

  void eval(double f, double* rise, double* fall) const {
    const std::size_t m = edges_.size();
    if (fast_) {
      const double e = std::exp(-c_ * f);
      for (std::size_t n = 0; n < m; ++n) {
        const double t = e * scale_[n];
        const double r = 1.0 / (1.0 + t);
        rise[n] = r;
        fall[n] = t * r;
      }
    } else {
      for (std::size_t n = 0; n < m; ++n) {
        rise[n] = logistic(c_ * (f - edges_[n]));
        fall[n] = logistic(-c_ * (f - edges_[n]));
      }
    }
  }

 private:
  std::vector<double> edges_;
  double c_;
  std::vector<double> scale_;
  bool fast_;
};

}  // namespace

Var histogram_counts(Var squashed, std::size_t group_size, const HistogramSpec& spec) {
  const Tensor& in = squashed.value();
  if (in.rank() != 2) throw DimensionError("histogram_counts: input must be rank 2");
  if (group_size == 0 || in.dim(0) % group_size != 0)
    throw DimensionError("histogram_counts: " + std::to_string(in.dim(0)) +
                         " rows do not split into groups of " + std::to_string(group_size));
  const std::size_t groups = in.dim(0) / group_size;
  const std::size_t width = in.dim(1);
  const std::size_t bins = spec.bins();
  const double c = spec.steepness();
  auto logistics = std::make_shared<EdgeLogistics>(spec.edges(), c);

  Tensor out(Shape{groups, width * bins});
  std::vector<double> rise(bins + 1), fall(bins + 1);
  for (std::size_t g = 0; g < groups; ++g) {
    double* row_out = &out[g * width * bins];
    for (std::size_t r = 0; r < group_size; ++r) {
      const double* row_in = &in[(g * group_size + r) * width];
      for (std::size_t j = 0; j < width; ++j) {
        logistics->eval(row_in[j], rise.data(), fall.data());
        double* o = row_out + j * bins;
        for (std::size_t n = 0; n < bins; ++n) o[n] += rise[n] * fall[n + 1];
      }
    }
  }

  Tape& tape = squashed.tape();
  return tape.record(
      std::move(out), {squashed},
      [group_size, groups, width, bins, c, logistics](const BackwardContext& ctx) {
        const Tensor& x = ctx.input(0);
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        std::vector<double> rise(bins + 1), fall(bins + 1);
        for (std::size_t grp = 0; grp < groups; ++grp) {
          const double* g_row = &g[grp * width * bins];
          for (std::size_t r = 0; r < group_size; ++r) {
            const std::size_t row = grp * group_size + r;
            for (std::size_t j = 0; j < width; ++j) {
              logistics->eval(x[row * width + j], rise.data(), fall.data());
              // d/df [rise_n * fall_{n+1}]
              //   = c rise_n fall_n fall_{n+1} - c rise_n rise_{n+1} fall_{n+1}
              const double* gj = g_row + j * bins;
              double acc = 0.0;
              for (std::size_t n = 0; n < bins; ++n)
                acc += gj[n] * rise[n] * fall[n + 1] * (fall[n] - rise[n + 1]);
              gx[row * width + j] += c * acc;
            }
          }
        }
      },
      "histogram_counts");
}

Var soft_histogram_grouped(Var raw, std::size_t group_size, const HistogramSpec& spec) {
  return histogram_counts(sigmoid(raw), group_size, spec);
}

Var soft_histogram(Var raw, const HistogramSpec& spec) {
  const Tensor& in = raw.value();
  if (in.rank() != 2) throw DimensionError("soft_histogram: input must be [samples x features]");
  const std::size_t width = in.dim(1);
  Var counts = soft_histogram_grouped(raw, in.dim(0), spec);
  return reshape(counts, Shape{width, spec.bins()});
}

}  // namespace setgan
