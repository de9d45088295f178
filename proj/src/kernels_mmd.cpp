#include "cap2aug/kernels_mmd.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cap2aug/error.hpp"

namespace cap2aug::mmd {

KernelSpec KernelSpec::equal_weights(std::vector<double> bandwidths) {
  const std::size_t n = bandwidths.size();
  if (n == 0) throw Error(ErrorKind::invalid_argument, "kernel needs at least one bandwidth");
  return {std::move(bandwidths), std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

void KernelSpec::validate() const {
  if (bandwidths.empty() || bandwidths.size() != weights.size()) {
    throw Error(ErrorKind::invalid_argument, "kernel spec needs matching non-empty bandwidth and weight lists");
  }
  double total = 0.0;
  for (std::size_t p = 0; p < bandwidths.size(); ++p) {
    if (!(bandwidths[p] > 0.0) || !std::isfinite(bandwidths[p])) {
      throw Error(ErrorKind::invalid_argument, "bandwidth " + std::to_string(p) + " must be positive");
    }
    if (!(weights[p] > 0.0) || !std::isfinite(weights[p])) {
      throw Error(ErrorKind::invalid_argument, "kernel weight " + std::to_string(p) + " must be positive");
    }
    total += weights[p];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(ErrorKind::invalid_argument, "kernel weights sum to " + std::to_string(total) + ", not 1");
  }
}

namespace {

double squared_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::dimension_mismatch,
                "vectors of dim " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    d2 += diff * diff;
  }
  return d2;
}

double mixture(double d2, const KernelSpec& spec) {
  double k = 0.0;
  for (std::size_t p = 0; p < spec.bandwidths.size(); ++p) {
    const double s = spec.bandwidths[p];
    k += spec.weights[p] * std::exp(-d2 / (2.0 * s * s));
  }
  return k;
}

void check_pair(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt) {
  if (zs.rows() == 0 || zt.rows() == 0) throw Error(ErrorKind::empty_input, "MMD needs at least one row per side");
  if (zs.cols() != zt.cols()) {
    throw Error(ErrorKind::dimension_mismatch,
                "sample dims " + std::to_string(zs.cols()) + " and " + std::to_string(zt.cols()));
  }
}

}  // namespace

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::invalid_argument, "sigma must be positive");
  return std::exp(-squared_distance(x, y) / (2.0 * sigma * sigma));
}

double multi_kernel(std::span<const double> x, std::span<const double> y, const KernelSpec& spec) {
  return mixture(squared_distance(x, y), spec);
}

namespace {

// Exact per-pair squared distances; avoids the cancellation of the
// |a|^2 + |b|^2 - 2 a.b expansion so coincident rows give exactly 0.
Eigen::ArrayXXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::ArrayXXd d2(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) d2(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d2;
}

// Kernel block and, when `coeff` is given, sum_p w_p k_p / sigma_p^2 from the
// same exponentials.
Eigen::ArrayXXd mixture_of(const Eigen::ArrayXXd& d2, const KernelSpec& spec, Eigen::ArrayXXd* coeff = nullptr) {
  Eigen::ArrayXXd k = Eigen::ArrayXXd::Zero(d2.rows(), d2.cols());
  if (coeff) *coeff = Eigen::ArrayXXd::Zero(d2.rows(), d2.cols());
  for (std::size_t p = 0; p < spec.bandwidths.size(); ++p) {
    const double s2 = spec.bandwidths[p] * spec.bandwidths[p];
    const Eigen::ArrayXXd e = (d2 * (-1.0 / (2.0 * s2))).exp();
    k += spec.weights[p] * e;
    if (coeff) *coeff += (spec.weights[p] / s2) * e;
  }
  return k;
}

}  // namespace

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelSpec& spec) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::dimension_mismatch,
                "sample dims " + std::to_string(a.cols()) + " and " + std::to_string(b.cols()));
  }
  return mixture_of(squared_distances(a, b), spec).matrix();
}

MmdResult mmd_biased(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt, const KernelSpec& spec) {
  check_pair(zs, zt);
  spec.validate();
  MmdResult r;
  r.term_ss = kernel_matrix(zs, zs, spec).mean();
  r.term_tt = kernel_matrix(zt, zt, spec).mean();
  r.term_st = kernel_matrix(zs, zt, spec).mean();
  r.value = r.term_ss + r.term_tt - 2.0 * r.term_st;
  return r;
}

// d/dx k_sigma(x, y) = -k_sigma(x, y) (x - y) / sigma^2, summed over the mixture.
MmdGradient mmd_gradient(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt, const KernelSpec& spec) {
  check_pair(zs, zt);
  spec.validate();
  const double ns = static_cast<double>(zs.rows());
  const double nt = static_cast<double>(zt.rows());

  // Adds scale * sum_j C(i, j) (a_i - b_j) to out and returns mean k(a_i, b_j).
  auto block = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double scale, Eigen::MatrixXd& out) {
    Eigen::ArrayXXd c;
    const double mean_k = mixture_of(squared_distances(a, b), spec, &c).mean();
    out -= scale * (c.matrix().rowwise().sum().asDiagonal() * a - c.matrix() * b);
    return mean_k;
  };

  MmdGradient g{Eigen::MatrixXd::Zero(zs.rows(), zs.cols()), Eigen::MatrixXd::Zero(zt.rows(), zt.cols())};
  // Each within-domain pair appears twice (i,j and j,i), hence the factor 2.
  // The cross block is evaluated once and used for both sides: d/dzt of
  // k(zs_i, zt_j) is -C(i, j) (zt_j - zs_i).
  const double ss = block(zs, zs, 2.0 / (ns * ns), g.d_zs);
  const double tt = block(zt, zt, 2.0 / (nt * nt), g.d_zt);
  Eigen::ArrayXXd c;
  const double st = mixture_of(squared_distances(zs, zt), spec, &c).mean();
  const Eigen::MatrixXd cm = c.matrix();
  const double cross = -2.0 / (ns * nt);
  g.d_zs -= cross * (cm.rowwise().sum().asDiagonal() * zs - cm * zt);
  g.d_zt -= cross * (cm.colwise().sum().transpose().asDiagonal() * zt - cm.transpose() * zs);
  g.value = ss + tt - 2.0 * st;
  return g;
}

double permutation_test(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt, const KernelSpec& spec,
                        std::size_t n_perm, std::uint64_t seed) {
  check_pair(zs, zt);
  spec.validate();
  if (n_perm < kMinPermutations) {
    throw Error(ErrorKind::invalid_argument, "permutation test needs at least 100 permutations");
  }
  const Eigen::Index ns = zs.rows();
  const Eigen::Index n = zs.rows() + zt.rows();
  Eigen::MatrixXd pooled(n, zs.cols());
  pooled << zs, zt;
  const Eigen::MatrixXd k = kernel_matrix(pooled, pooled, spec);

  auto statistic = [&](const std::vector<Eigen::Index>& order) {
    double ss = 0.0, tt = 0.0, st = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double v = k(order[i], order[j]);
        const bool si = i < ns, sj = j < ns;
        if (si && sj) ss += v;
        else if (!si && !sj) tt += v;
        else if (si) st += v;
      }
    }
    const double a = static_cast<double>(ns), b = static_cast<double>(n - ns);
    return ss / (a * a) + tt / (b * b) - 2.0 * st / (a * b);
  };

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double observed = statistic(order);
  const double slack = 1e-12 * std::max(1.0, std::abs(observed));

  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < n_perm; ++p) {
    std::shuffle(order.begin(), order.end(), rng);
    if (statistic(order) >= observed - slack) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(n_perm + 1);
}

std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows[i][j] = m(i, j);
  return rows;
}

}  // namespace cap2aug::mmd
