#pragma once

#include <functional>

#include "aorecon/acousto.hpp"
#include "aorecon/fields.hpp"

namespace aorecon {

// Cylinder quadrature: arc weight 2 pi mu / ny per source, dr per radius node.
double cylinder_inner(const Sinogram& a, const Sinogram& b);

struct CylinderNorms {
  double l2 = 0.0;
  double g = 0.0;      // (||s||^2 + ||D_r s||^2)^(1/2)
  double g_inv = 0.0;  // dual of g over sinograms vanishing at r = 0 and r = R
};
CylinderNorms cylinder_norms(const Sinogram& s);
double g_inverse_norm(const Sinogram& s);

// Angular samples used for a circle of radius r: max(64, ceil(2 pi r / h)).
int angular_samples(double r, double h);

// R[f](y, r) = int over the unit circle of f(y + r xi), trapezoid in angle, f zero outside the square.
Sinogram radon_forward(const ScalarField& f, const AcousticConfig& config, int ny, int nr);
Sinogram radon_forward(const std::function<double(Point)>& f, double h, const AcousticConfig& config, int ny,
                       int nr);
// R*[s](x) = int over S_mu of s(y, |x - y|) / |x - y| dy, by source quadrature and linear
// interpolation in r.
ScalarField radon_adjoint(const Sinogram& s, const Grid& grid);
// Exact transpose of the discrete forward map for the cylinder and grid inner products.
ScalarField radon_transpose(const Sinogram& s, const Grid& grid);

// Forward difference in r; the last radius gets 0.
Sinogram radial_difference(const Sinogram& s);
// p[phi](r) = -int_0^r phi + (R/r0) int_0^min(r,r0) phi(rho R / r0) drho, phi piecewise constant
// on the cells (r_{q-1}, r_q].
Sinogram apply_p(const Sinogram& phi);
// Transpose of apply_p for cylinder_inner. Requires u = 0 for r <= r0.
Sinogram apply_p_star(const Sinogram& u);
// R[psi] = p*(M) / (r0 ||w||_1).
Sinogram recover_Rpsi(const Sinogram& M);

struct RadonInversionReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = true;
};
// Minimizes ||R f - s||^2 + eps ||f||^2 by conjugate gradients on the normal equations.
ScalarField invert_radon(const Sinogram& s, const Grid& grid, double eps = 1e-6, RadonInversionReport* report = nullptr,
                         double rtol = 1e-8, int max_iter = 500);

}  // namespace aorecon
