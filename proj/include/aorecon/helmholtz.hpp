#pragma once

#include <array>
#include <vector>

#include "aorecon/acousto.hpp"
#include "aorecon/fields.hpp"
#include "aorecon/phantom.hpp"

namespace aorecon {

// U(v) = -int_D (a - a0) div(Phi^2 v) dx, tested against bilinear vector fields on the grid.
class WeakVectorFunctional {
 public:
  WeakVectorFunctional(const Phantom& phantom, const ScalarField& phi, int rim_samples_per_cell = 4,
                       int supersample = 8);

  const Grid& grid() const noexcept { return phi_.grid; }
  const Phantom& phantom() const noexcept { return phantom_; }
  const ScalarField& phi() const noexcept { return phi_; }
  // dual[j][k] = U(hat_k e_j).
  const std::array<std::vector<double>, 2>& dual() const noexcept { return dual_; }
  // U applied to the bilinear interpolant of v.
  double operator()(const VectorField& v) const;

 private:
  Phantom phantom_;
  ScalarField phi_;
  std::array<std::vector<double>, 2> dual_;
};

enum class PsiProvenance { ground_truth, from_measurements };

struct PsiField {
  ScalarField psi;
  PsiProvenance provenance = PsiProvenance::ground_truth;
};

// Riesz solve -Lap u_j = U_j with u = 0 on the boundary, psi = div u, zero weighted mean.
PsiField decompose(const WeakVectorFunctional& U);
PsiField ground_truth_psi(const Phantom& phantom, const ScalarField& phi);
// Riesz fields u_1, u_2 behind decompose.
VectorField riesz_field(const WeakVectorFunctional& U);

// Whole-plane potential psi = div(Gamma * U), Gamma = -log|x| / (2 pi), with U represented by the
// point dipoles dual(k) at the nodes; evaluated at the grid nodes (self term skipped).
ScalarField free_space_psi(const WeakVectorFunctional& U);
// R of the whole-plane potential over full circles, in closed form:
// R[psi](y, r) = sum_k dual(k) . (x_k - y) / |x_k - y|^2 over |x_k - y| > r. Radii shifted by offset * dr.
Sinogram free_space_radon(const WeakVectorFunctional& U, const AcousticConfig& config, int ny, int nr,
                          double offset = 0.0);
// Ideal data r0 ||w||_1 d_r R[psi], d_r the centered difference over [r - dr/2, r + dr/2].
Sinogram ideal_measurements(const WeakVectorFunctional& U, const AcousticConfig& config, int ny, int nr);

// Discrete pairing int grad psi . grad v = sum W psi (-Lap5 v), for v vanishing near the boundary.
double gradient_pairing(const ScalarField& psi, const ScalarField& v);

// psi from measurements: R[psi] = p*(M) / (r0 ||w||_1), then Tikhonov-regularized inversion of R.
PsiField psi_from_measurements(const Sinogram& M, const Grid& grid, double eps = 1e-6);

}  // namespace aorecon
