#pragma once

// Synthetic SOF instances that are open-loop unstable yet stabilizable by a
// known static gain.

#include <cstdint>
#include <random>
#include <string>

#include "dstune/lti.hpp"

namespace dstune {

/// mt19937_64 with a portable uniform mapping (std distributions are
/// implementation-defined, which would break cross-platform determinism).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = uniform(lo, hi);
    return m;
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; derives independent sub-seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SofInstance {
  StateSpaceModel model;
  GainMatrix certificate;
};

/// A_cl = M - shift*I with abscissa in [-0.5, -0.1]; A = A_cl - B K0 C with
/// K0 ~ U[-1, 1]. Samples with Hurwitz A are redrawn. The performance
/// channel is z = [x; u], w entering every state, no feedthrough from w:
///   B1 = I, C1 = [I; 0], D12 = [0; I], D11 = 0, D21 = 0.
inline SofInstance random_sof_instance(std::uint64_t seed, int n, int m, int p) {
  if (n < 1 || m < 1 || p < 1) throw ArgumentError("random_sof_instance needs n, m, p >= 1");
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Matrix k0 = rng.matrix(m, p, -1.0, 1.0);
    const Matrix mat = rng.matrix(n, n, -1.0, 1.0);
    const double target = -rng.uniform(0.1, 0.5);
    Matrix a_cl = mat;
    a_cl.diagonal().array() += target - spectral_abscissa(mat);
    const Matrix b = rng.matrix(n, m, -1.0, 1.0);
    const Matrix c = rng.matrix(p, n, -1.0, 1.0);
    Matrix a = a_cl - b * k0 * c;

    if (spectral_abscissa(a) < 0.0) continue;
    if (!(spectral_abscissa(a + b * k0 * c) < 0.0)) continue;

    SofInstance inst;
    auto& mdl = inst.model;
    mdl.a = std::move(a);
    mdl.b = b;
    mdl.c = c;
    mdl.b1 = Matrix::Identity(n, n);
    mdl.c1 = Matrix::Zero(n + m, n);
    mdl.c1.topRows(n).setIdentity();
    mdl.d11 = Matrix::Zero(n + m, n);
    mdl.d12 = Matrix::Zero(n + m, m);
    mdl.d12.bottomRows(m).setIdentity();
    mdl.d21 = Matrix::Zero(p, n);
    mdl.name = "gen_" + std::to_string(seed);
    inst.certificate = GainMatrix{k0};
    return inst;
  }
  throw NumericalError("random_sof_instance: no unstable, stabilizable sample in 100 draws");
}

}  // namespace dstune
