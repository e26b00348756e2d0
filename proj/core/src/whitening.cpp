#include <Eigen/Dense>

#include <cmath>

#include "latentmark/error.hpp"
#include "latentmark/features.hpp"
#include "latentmark/tensor_file.hpp"

namespace latentmark {

WhiteningTransform::WhiteningTransform(std::vector<double> mean, std::vector<double> matrix, int dim)
    : mean_(std::move(mean)), matrix_(std::move(matrix)), dim_(dim) {
  if (dim_ < 1 || mean_.empty()) throw InvalidArgument("whitening dimensions must be positive");
  if (matrix_.size() != static_cast<std::size_t>(dim_) * mean_.size()) {
    throw InvalidArgument("whitening matrix size does not match dimensions");
  }
  for (double v : matrix_) {
    if (!std::isfinite(v)) throw InvalidArgument("whitening matrix has non-finite entries");
  }
}

FeatureVector WhiteningTransform::apply(std::span<const double> raw) const {
  if (raw.size() != mean_.size()) {
    throw InvalidArgument("raw feature has dimension " + std::to_string(raw.size()) + ", whitening expects " +
                          std::to_string(mean_.size()));
  }
  const std::size_t n = mean_.size();
  FeatureVector out(dim_, 0.0);
  for (int i = 0; i < dim_; ++i) {
    const double* row = matrix_.data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * (raw[j] - mean_[j]);
    out[i] = s;
  }
  return out;
}

RawFeature WhiteningTransform::transpose_apply(std::span<const double> g) const {
  if (g.size() != static_cast<std::size_t>(dim_)) throw InvalidArgument("whitened cotangent dimension mismatch");
  const std::size_t n = mean_.size();
  RawFeature out(n, 0.0);
  for (int i = 0; i < dim_; ++i) {
    const double* row = matrix_.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += row[j] * g[i];
  }
  return out;
}

WhiteningTransform fit_whitening(const std::vector<RawFeature>& samples, int dim, double eps) {
  if (samples.empty()) throw InvalidArgument("insufficient samples: none given");
  const auto raw_dim = static_cast<Eigen::Index>(samples.front().size());
  if (dim < 1 || dim > raw_dim) throw InvalidArgument("whitening dimension must be in [1, raw dimension]");
  if (samples.size() < static_cast<std::size_t>(dim) + 1) {
    throw InvalidArgument("insufficient samples: need at least " + std::to_string(dim + 1) + ", got " +
                          std::to_string(samples.size()));
  }
  if (eps < 0.0) throw InvalidArgument("eigenvalue floor must be non-negative");

  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x(n, raw_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(samples[i].size()) != raw_dim) throw InvalidArgument("samples differ in dimension");
    for (Eigen::Index j = 0; j < raw_dim; ++j) x(i, j) = samples[i][j];
  }
  const Eigen::VectorXd mean = x.colwise().mean();
  x.rowwise() -= mean.transpose();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const double largest = values(raw_dim - 1);

  std::vector<double> matrix(static_cast<std::size_t>(dim) * raw_dim);
  for (int i = 0; i < dim; ++i) {
    const Eigen::Index col = raw_dim - 1 - i;
    double lambda = values(col);
    if (eps == 0.0 && !(lambda > 1e-12 * std::max(largest, 0.0) && lambda > 0.0)) {
      throw InvalidArgument("rank-deficient covariance: eigenvalue " + std::to_string(i) +
                            " is zero and no floor was given");
    }
    lambda = std::max(lambda, eps);
    Eigen::VectorXd u = vectors.col(col);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index argmax = 0;
    u.cwiseAbs().maxCoeff(&argmax);
    if (u(argmax) < 0) u = -u;
    const double scale = 1.0 / std::sqrt(lambda);
    for (Eigen::Index j = 0; j < raw_dim; ++j) matrix[static_cast<std::size_t>(i) * raw_dim + j] = u(j) * scale;
  }
  return WhiteningTransform(std::vector<double>(mean.data(), mean.data() + raw_dim), std::move(matrix), dim);
}

void save_whitening(const WhiteningTransform& w, const std::filesystem::path& path) {
  write_tensor_file(path, {TensorRecord::f64("mean", {w.mean().size()}, w.mean()),
                           TensorRecord::f64("W", {static_cast<std::uint64_t>(w.dim()), w.mean().size()},
                                             w.matrix())});
}

WhiteningTransform load_whitening(const std::filesystem::path& path) {
  const auto tensors = read_tensor_file(path);
  const auto& mean = find_tensor(tensors, "mean");
  const auto& mat = find_tensor(tensors, "W");
  if (mean.dims.size() != 1 || mat.dims.size() != 2 || mat.dims[1] != mean.dims[0] || mean.real.empty()) {
    throw FormatError("whitening file '" + path.string() + "' has inconsistent shapes");
  }
  return WhiteningTransform(mean.real, mat.real, static_cast<int>(mat.dims[0]));
}

}  // namespace latentmark
