#include "aorecon/helmholtz.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aorecon/error.hpp"
#include "aorecon/parallel.hpp"
#include "aorecon/radon.hpp"

namespace aorecon {

using std::numbers::pi;

namespace {

struct Stencil {
  std::size_t k[4];
  double w[4];
};

// Bilinear hat values of the four nodes around p (p inside the square).
Stencil stencil_at(const Grid& g, Point p) {
  const int n = g.n();
  const double s = std::clamp(p.x, 0.0, 1.0) * (n - 1), t = std::clamp(p.y, 0.0, 1.0) * (n - 1);
  const int i = std::min(static_cast<int>(s), n - 2), j = std::min(static_cast<int>(t), n - 2);
  const double fx = s - i, fy = t - j;
  const std::size_t k = g.index(i, j);
  return {{k, k + 1, k + n, k + n + 1}, {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy}};
}

double interpolate(const ScalarField& f, const Stencil& s) {
  double v = 0.0;
  for (int c = 0; c < 4; ++c) v += s.w[c] * f.values[s.k[c]];
  return v;
}

double perimeter(const Inclusion& inc) {
  // Ramanujan's approximation; only used to size the rim quadrature
  const double a = inc.semi_a, b = inc.semi_b;
  return pi * (3 * (a + b) - std::sqrt((3 * a + b) * (a + 3 * b)));
}

}  // namespace

WeakVectorFunctional::WeakVectorFunctional(const Phantom& phantom, const ScalarField& phi, int rim_samples_per_cell,
                                           int supersample)
    : phantom_(phantom), phi_(phi) {
  const Grid& g = phi.grid;
  for (auto& d : dual_) d.assign(g.size(), 0.0);
  const double h = g.h();
  for (const Inclusion& inc : phantom.inclusions) {
    // jump part: -(base - a0) int_{dA} Phi^2 hat_k n_j ds
    const double jump = inc.base - phantom.a0;
    if (jump != 0.0) {
      // multiple of 4 keeps quarter-turn symmetry of the samples
      const int N = 4 * std::max(64, static_cast<int>(std::ceil(perimeter(inc) / h * rim_samples_per_cell / 4)));
      const double dt = 2 * pi / N;
      for (int q = 0; q < N; ++q) {
        const double t = (q + 0.5) * dt;
        const Point x = inc.boundary_point(t), nu = inc.outward_normal(t);
        const double st = std::sin(t), ct = std::cos(t);
        const double ds = std::sqrt(inc.semi_a * inc.semi_a * st * st + inc.semi_b * inc.semi_b * ct * ct) * dt;
        const Stencil s = stencil_at(g, x);
        const double p = interpolate(phi, s);
        const double c = -jump * p * p * ds;
        for (int m = 0; m < 4; ++m) {
          dual_[0][s.k[m]] += c * s.w[m] * nu.x;
          dual_[1][s.k[m]] += c * s.w[m] * nu.y;
        }
      }
    }
    // smooth part: int_A Phi^2 hat_k d_j p, p vanishing to second order on the rim
    if (inc.amplitude != 0.0) {
      const Point e = inc.half_extent();
      const int i0 = std::max(0, static_cast<int>(std::floor((inc.center.x - e.x) / h)));
      const int i1 = std::min(g.n() - 2, static_cast<int>(std::floor((inc.center.x + e.x) / h)));
      const int j0 = std::max(0, static_cast<int>(std::floor((inc.center.y - e.y) / h)));
      const int j1 = std::min(g.n() - 2, static_cast<int>(std::floor((inc.center.y + e.y) / h)));
      const double sub = h / supersample, da = sub * sub, step = 1e-6;
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
          for (int b = 0; b < supersample; ++b)
            for (int a = 0; a < supersample; ++a) {
              const Point x{i * h + (a + 0.5) * sub, j * h + (b + 0.5) * sub};
              if (!inc.contains(x)) continue;
              const double gx = (inc.value({x.x + step, x.y}) - inc.value({x.x - step, x.y})) / (2 * step);
              const double gy = (inc.value({x.x, x.y + step}) - inc.value({x.x, x.y - step})) / (2 * step);
              const Stencil s = stencil_at(g, x);
              const double p = interpolate(phi, s);
              for (int m = 0; m < 4; ++m) {
                dual_[0][s.k[m]] += p * p * s.w[m] * gx * da;
                dual_[1][s.k[m]] += p * p * s.w[m] * gy * da;
              }
            }
    }
  }
}

double WeakVectorFunctional::operator()(const VectorField& v) const {
  double s = 0.0;
  for (std::size_t k = 0; k < v.x.size(); ++k) s += dual_[0][k] * v.x[k] + dual_[1][k] * v.y[k];
  return s;
}

VectorField riesz_field(const WeakVectorFunctional& U) {
  for (double v : U.phi().values)
    if (!(v > 0.0)) throw ValidationError("Phi must be strictly positive");
  const Grid& g = U.grid();
  VectorField u(g);
  u.x = poisson_dirichlet_dual(g, U.dual()[0]).values;
  u.y = poisson_dirichlet_dual(g, U.dual()[1]).values;
  return u;
}

PsiField decompose(const WeakVectorFunctional& U) {
  ScalarField psi = divergence(riesz_field(U));
  const double m = weighted_mean(psi);
  for (double& v : psi.values) v -= m;
  return {std::move(psi), PsiProvenance::ground_truth};
}

PsiField ground_truth_psi(const Phantom& phantom, const ScalarField& phi) {
  return decompose(WeakVectorFunctional(phantom, phi));
}

namespace {

struct Dipole {
  Point x;
  double bx, by;
};

std::vector<Dipole> dipoles(const WeakVectorFunctional& U) {
  std::vector<Dipole> out;
  const Grid& g = U.grid();
  for (std::size_t k = 0; k < g.size(); ++k)
    if (U.dual()[0][k] != 0.0 || U.dual()[1][k] != 0.0) out.push_back({g.node(k), U.dual()[0][k], U.dual()[1][k]});
  return out;
}

}  // namespace

ScalarField free_space_psi(const WeakVectorFunctional& U) {
  const Grid& g = U.grid();
  const auto d = dipoles(U);
  ScalarField psi(g);
  parallel_for(g.size(), [&](std::size_t k) {
    const Point x = g.node(k);
    double acc = 0.0;
    for (const Dipole& p : d) {
      const double dx = x.x - p.x.x, dy = x.y - p.x.y, r2 = dx * dx + dy * dy;
      if (r2 > 0.0) acc += (p.bx * dx + p.by * dy) / r2;
    }
    psi.values[k] = -acc / (2 * pi);
  });
  return psi;
}

Sinogram free_space_radon(const WeakVectorFunctional& U, const AcousticConfig& config, int ny, int nr, double offset) {
  Sinogram out(config, ny, nr);
  const auto d = dipoles(U);
  parallel_for(out.values.size(), [&](std::size_t c) {
    const int m = static_cast<int>(c / nr), q = static_cast<int>(c % nr);
    const Point y = out.source(m);
    const double r = out.radius(q) + offset * out.dr(), rr = r * r;
    double acc = 0.0;
    for (const Dipole& p : d) {
      const double dx = p.x.x - y.x, dy = p.x.y - y.y, r2 = dx * dx + dy * dy;
      if (r2 > rr) acc += (p.bx * dx + p.by * dy) / r2;
    }
    out.values[c] = acc;
  });
  return out;
}

Sinogram ideal_measurements(const WeakVectorFunctional& U, const AcousticConfig& config, int ny, int nr) {
  const Sinogram hi = free_space_radon(U, config, ny, nr, 0.5), lo = free_space_radon(U, config, ny, nr, -0.5);
  Sinogram out(config, ny, nr);
  const double scale = config.r0 * bump_l1() / out.dr();
  for (int m = 0; m < ny; ++m)
    for (int q = 0; q < nr; ++q)
      if (out.radius(q) > config.r0) out.at(m, q) = scale * (hi.at(m, q) - lo.at(m, q));
  return out;
}

double gradient_pairing(const ScalarField& psi, const ScalarField& v) {
  const ScalarField lap = laplacian5(v);
  double s = 0.0;
  for (std::size_t k = 0; k < psi.values.size(); ++k) s -= psi.grid.weight(k) * psi.values[k] * lap.values[k];
  return s;
}

PsiField psi_from_measurements(const Sinogram& M, const Grid& grid, double eps) {
  const Sinogram rpsi = recover_Rpsi(M);
  ScalarField psi = invert_radon(rpsi, grid, eps);
  const double m = weighted_mean(psi);
  for (double& v : psi.values) v -= m;
  return {std::move(psi), PsiProvenance::from_measurements};
}

}  // namespace aorecon
