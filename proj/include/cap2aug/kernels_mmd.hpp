#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cap2aug::mmd {

// Multi-kernel k = sum_p weight_p * exp(-|x - y|^2 / (2 sigma_p^2)).
struct KernelSpec {
  std::vector<double> bandwidths{0.5, 1.0, 2.0};
  std::vector<double> weights{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  static KernelSpec single(double sigma) { return {{sigma}, {1.0}}; }
  static KernelSpec equal_weights(std::vector<double> bandwidths);

  // Throws invalid_argument unless lengths agree, all entries are positive and
  // the weights sum to 1 within 1e-12.
  void validate() const;

  bool operator==(const KernelSpec&) const = default;
};

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma);
double multi_kernel(std::span<const double> x, std::span<const double> y, const KernelSpec& spec);

// Biased (V-statistic) estimate, diagonal terms included.
struct MmdResult {
  double value = 0.0;
  double term_ss = 0.0;
  double term_tt = 0.0;
  double term_st = 0.0;
};

// Kernel matrix K(i, j) = k(a_i, b_j) over rows.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelSpec& spec);

MmdResult mmd_biased(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt, const KernelSpec& spec);

// Same estimator evaluated with plain nested loops; shares no code with
// mmd_biased and exists to cross-check it.
double mmd_oracle(const std::vector<std::vector<double>>& zs, const std::vector<std::vector<double>>& zt,
                  const KernelSpec& spec);

struct MmdGradient {
  Eigen::MatrixXd d_zs;
  Eigen::MatrixXd d_zt;
  double value = 0.0;  // same estimate as mmd_biased, from the shared kernel blocks
};

MmdGradient mmd_gradient(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt, const KernelSpec& spec);

inline constexpr std::size_t kMinPermutations = 100;

// Fraction of row-label permutations whose MMD reaches the observed one,
// computed as (1 + hits) / (1 + n_perm).
double permutation_test(const Eigen::MatrixXd& zs, const Eigen::MatrixXd& zt, const KernelSpec& spec,
                        std::size_t n_perm, std::uint64_t seed);

std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m);

}  // namespace cap2aug::mmd
