#include <cmath>
#include <string>

#include "cap2aug/error.hpp"
#include "cap2aug/kernels_mmd.hpp"

namespace cap2aug::mmd {

double mmd_oracle(const std::vector<std::vector<double>>& zs, const std::vector<std::vector<double>>& zt,
                  const KernelSpec& spec) {
  if (zs.empty() || zt.empty()) throw Error(ErrorKind::empty_input, "MMD needs at least one row per side");
  const std::size_t dim = zs.front().size();
  for (const auto* side : {&zs, &zt})
    for (const auto& row : *side)
      if (row.size() != dim) throw Error(ErrorKind::dimension_mismatch, "ragged or mismatched sample rows");

  double ss = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    for (std::size_t j = 0; j < zs.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) d2 += (zs[i][c] - zs[j][c]) * (zs[i][c] - zs[j][c]);
      for (std::size_t p = 0; p < spec.bandwidths.size(); ++p)
        ss += spec.weights[p] * std::exp(-d2 / (2.0 * spec.bandwidths[p] * spec.bandwidths[p]));
    }
  }
  double tt = 0.0;
  for (std::size_t i = 0; i < zt.size(); ++i) {
    for (std::size_t j = 0; j < zt.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) d2 += (zt[i][c] - zt[j][c]) * (zt[i][c] - zt[j][c]);
      for (std::size_t p = 0; p < spec.bandwidths.size(); ++p)
        tt += spec.weights[p] * std::exp(-d2 / (2.0 * spec.bandwidths[p] * spec.bandwidths[p]));
    }
  }
  double st = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    for (std::size_t j = 0; j < zt.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) d2 += (zs[i][c] - zt[j][c]) * (zs[i][c] - zt[j][c]);
      for (std::size_t p = 0; p < spec.bandwidths.size(); ++p)
        st += spec.weights[p] * std::exp(-d2 / (2.0 * spec.bandwidths[p] * spec.bandwidths[p]));
    }
  }
  const double ns = static_cast<double>(zs.size());
  const double nt = static_cast<double>(zt.size());
  return ss / (ns * ns) + tt / (nt * nt) - 2.0 * st / (ns * nt);
}

}  // namespace cap2aug::mmd
