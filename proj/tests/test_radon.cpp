#include <doctest.h>

#include <Eigen/Dense>
#include <boost/math/special_functions/ellint_1.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "aorecon/radon.hpp"

using namespace aorecon;
using std::numbers::pi;

namespace {

ScalarField random_smooth_field(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double c[4][4];
  for (auto& row : c)
    for (double& v : row) v = u(rng);
  // vanishes with its gradient on the boundary, so the zero extension stays C1
  return sample(g, [&](Point p) {
    const double b = 16 * p.x * (1 - p.x) * p.y * (1 - p.y);
    double s = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) s += c[i][j] * std::cos(i * pi * p.x) * std::cos(j * pi * p.y);
    return b * b * s;
  });
}

Sinogram random_smooth_sinogram(const AcousticConfig& c, int ny, int nr, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double a[3][4], b[3][4];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) a[i][j] = u(rng), b[i][j] = u(rng);
  Sinogram s(c, ny, nr);
  for (int m = 0; m < ny; ++m)
    for (int q = 0; q < nr; ++q) {
      const double t = 2 * pi * m / ny, r = s.radius(q);
      double v = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) v += (a[i][j] * std::cos(i * t) + b[i][j] * std::sin(i * t)) * std::sin((j + 1) * pi * r / c.R);
      s.at(m, q) = v;
    }
  return s;
}

// nodes with r_q <= r0 plus the first node beyond r0 are zero
int first_free_node(const Sinogram& s) {
  int q = 0;
  while (s.radius(q) <= s.config.r0) ++q;
  return q + 1;
}

Sinogram random_supported(const AcousticConfig& c, int ny, int nr, std::mt19937_64& rng, int q0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Sinogram s(c, ny, nr);
  for (int m = 0; m < ny; ++m)
    for (int q = q0; q < nr; ++q) s.at(m, q) = u(rng);
  return s;
}

double max_abs(const Sinogram& s) {
  double m = 0.0;
  for (double v : s.values) m = std::max(m, std::abs(v));
  return m;
}

double duality_gap(int n, int ny, int nr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Grid g(n);
  const AcousticConfig c;
  const auto f = random_smooth_field(g, rng);
  const auto s = random_smooth_sinogram(c, ny, nr, rng);
  const Sinogram rf = radon_forward(f, c, ny, nr);
  const double lhs = cylinder_inner(rf, s);
  const double rhs = inner(f, radon_adjoint(s, g));
  return std::abs(lhs - rhs) / (std::sqrt(cylinder_inner(rf, rf)) * std::sqrt(cylinder_inner(s, s)));
}

// sup ||p* u|| / ||u||_G^-1 over u supported on nodes >= q_first, one source row
double p_star_norm(const AcousticConfig& c, int nr, int q_first) {
  const int last = nr - 1;
  Sinogram probe(c, 8, nr);
  const double dr = probe.dr();
  // columns of p* restricted to the support; u at r = R is invisible to both sides
  const int k = last - q_first;
  Eigen::MatrixXd Pt(nr, k);
  for (int j = 0; j < k; ++j) {
    Sinogram e(c, 8, nr);
    e.at(0, q_first + j) = 1.0;
    const Sinogram col = apply_p_star(e);
    for (int i = 0; i < nr; ++i) Pt(i, j) = col.at(0, i);
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nr - 2, nr - 2);
  for (int i = 0; i < nr - 2; ++i) {
    A(i, i) = dr + 2.0 / dr;
    if (i > 0) A(i, i - 1) = A(i - 1, i) = -1.0 / dr;
  }
  const Eigen::MatrixXd Ainv = A.inverse();
  Eigen::MatrixXd N(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) N(a, b) = dr * dr * Ainv(q_first + a - 1, q_first + b - 1);
  const Eigen::MatrixXd M = dr * Pt.transpose() * Pt;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(M, N);
  return std::sqrt(es.eigenvalues().maxCoeff());
}

}  // namespace

TEST_CASE("radon_forward") {
  Grid g(65);
  const AcousticConfig c;
  CHECK(max_abs(radon_forward(ScalarField(g), c, 8, 16)) == 0.0);

  // circles inside the square: a source circle of radius 0.1 is used only for geometry here
  AcousticConfig inner_c;
  inner_c.mu = 0.1;
  const Sinogram ones = radon_forward(ScalarField(g, 1.0), inner_c, 8, 16);
  for (int m = 0; m < 8; ++m)
    for (int q = 1; q < 16; ++q)
      if (ones.radius(q) <= 0.35) CHECK(std::abs(ones.at(m, q) - 2 * pi) <= 1e-6);

  // disk indicator: twice the half-angle of the arc inside the disk
  const Point ctr{0.55, 0.45};
  const double rho = 0.2;
  const Sinogram s = radon_forward([&](Point p) { return std::hypot(p.x - ctr.x, p.y - ctr.y) < rho ? 1.0 : 0.0; },
                                   1e-4, c, 8, 16);
  for (int m = 0; m < 8; ++m)
    for (int q = 0; q < 16; ++q) {
      const Point y = s.source(m);
      const double d = std::hypot(y.x - ctr.x, y.y - ctr.y), r = s.radius(q);
      double expect = 0.0;
      if (r > d - rho && r < d + rho) expect = 2 * std::acos(std::clamp((d * d + r * r - rho * rho) / (2 * d * r), -1.0, 1.0));
      CHECK(std::abs(s.at(m, q) - expect) <= 1e-3);
    }
}

TEST_CASE("radon_adjoint") {
  Grid g(65);
  const AcousticConfig c;
  Sinogram s(c, 64, 128);
  for (double v : radon_adjoint(s, g).values) CHECK(v == 0.0);

  // s = 1: int over S_mu of 1/|x - y| = 4 mu K(k) / (mu + d), k = 2 sqrt(mu d) / (mu + d)
  for (double& v : s.values) v = 1.0;
  const auto a = radon_adjoint(s, g);
  for (int j = 4; j < 64; j += 8)
    for (int i = 4; i < 64; i += 8) {
      const Point x = g.node(g.index(i, j));
      const double d = std::hypot(x.x - 0.5, x.y - 0.5), mu = c.mu;
      const double expect = 4 * mu / (mu + d) * boost::math::ellint_1(2 * std::sqrt(mu * d) / (mu + d));
      CHECK(std::abs(a(i, j) - expect) <= 1e-3 * expect);
    }

  const double coarse = duality_gap(65, 64, 128, 11), fine = duality_gap(129, 128, 256, 11);
  MESSAGE("duality gap " << coarse << " -> " << fine);
  CHECK(coarse <= 1e-3);
  CHECK(fine <= 0.5 * coarse);
}

TEST_CASE("radon_transpose is the exact discrete transpose") {
  Grid g(33);
  const AcousticConfig c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarField f(g);
  for (double& v : f.values) v = u(rng);
  Sinogram s(c, 16, 32);
  for (double& v : s.values) v = u(rng);
  const double lhs = cylinder_inner(radon_forward(f, c, 16, 32), s);
  const double rhs = inner(f, radon_transpose(s, g));
  CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("cylinder norms") {
  const AcousticConfig c;
  Sinogram z(c, 8, 32);
  const auto nz = cylinder_norms(z);
  CHECK(nz.l2 == 0.0);
  CHECK(nz.g == 0.0);
  CHECK(nz.g_inv == 0.0);
  std::mt19937_64 rng(2);
  const auto s = random_smooth_sinogram(c, 8, 32, rng);
  const auto n = cylinder_norms(s);
  CHECK(n.g_inv > 0.0);
  CHECK(n.g_inv <= n.l2);
  CHECK(n.l2 <= n.g);
  // dual norm attains <s, v> / ||v||_G at the Riesz representer, so it bounds every pairing
  const auto v = random_smooth_sinogram(c, 8, 32, rng);
  CHECK(std::abs(cylinder_inner(s, v)) <= n.g_inv * cylinder_norms(v).g * (1 + 1e-12));
}

TEST_CASE("apply_p") {
  const AcousticConfig c;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Sinogram phi(c, 8, 128);
  CHECK(max_abs(apply_p(phi)) == 0.0);
  for (double& v : phi.values) v = u(rng);
  const Sinogram p = apply_p(phi);
  for (int m = 0; m < 8; ++m) {
    CHECK(std::abs(p.at(m, 0)) <= 1e-10);
    CHECK(std::abs(p.at(m, 127)) <= 1e-10);
  }
  Sinogram chi(c, 8, 128);
  for (int m = 0; m < 8; ++m)
    for (int q = 0; q < 128; ++q) chi.at(m, q) = chi.radius(q) >= c.r0 ? 1.0 : 0.0;
  const Sinogram d = radial_difference(apply_p(chi));
  for (int m = 0; m < 8; ++m)
    for (int q = 0; q + 1 < 128; ++q)
      if (chi.radius(q) > c.r0 + chi.dr()) CHECK(std::abs(d.at(m, q) + 1.0) <= 1e-8);
}

TEST_CASE("apply_p_star") {
  const AcousticConfig c;
  std::mt19937_64 rng(9);
  Sinogram zero(c, 8, 128);
  CHECK(max_abs(apply_p_star(zero)) == 0.0);
  Sinogram bad(c, 8, 128);
  bad.at(0, 1) = 1.0;
  CHECK_THROWS_AS(apply_p_star(bad), ValidationError);

  const int q0 = first_free_node(zero);
  // transpose pairing
  Sinogram phi(c, 8, 128);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : phi.values) v = u(rng);
  const Sinogram w = random_supported(c, 8, 128, rng, q0 - 1);
  const double lhs = cylinder_inner(apply_p(phi), w), rhs = cylinder_inner(phi, apply_p_star(w));
  CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));

  // p* D_r f = f
  for (int trial = 0; trial < 10; ++trial) {
    const Sinogram f = random_supported(c, 8, 128, rng, q0);
    const Sinogram back = apply_p_star(radial_difference(f));
    double err = 0.0;
    for (std::size_t k = 0; k < f.values.size(); ++k) err = std::max(err, std::abs(back.values[k] - f.values[k]));
    CHECK(err <= 1e-12);
  }

  // stability in the Hilbertized dual norm, against the operator norm from a dense eigenproblem
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Sinogram v = random_supported(c, 8, 128, rng, q0 - 1);
    worst = std::max(worst, cylinder_norms(apply_p_star(v)).l2 / g_inverse_norm(v));
  }
  const double bound = p_star_norm(c, 128, q0 - 1);
  MESSAGE("max ||p* u|| / ||u||_G^-1 = " << worst << ", operator norm " << bound);
  CHECK(worst <= bound * (1 + 1e-9));
  CHECK(bound <= 1 + std::sqrt(c.R / c.r0) + 1);
}

TEST_CASE("recover_Rpsi") {
  Grid g(65);
  const AcousticConfig c;
  Sinogram zero(c, 64, 128);
  CHECK(max_abs(recover_Rpsi(zero)) == 0.0);

  const auto psi = sample(g, [](Point p) {
    return std::exp(-30 * ((p.x - 0.45) * (p.x - 0.45) + (p.y - 0.55) * (p.y - 0.55))) - 0.2 * p.x;
  });
  const Sinogram rpsi = radon_forward(psi, c, 64, 128);
  Sinogram M = radial_difference(rpsi);
  for (double& v : M.values) v *= c.r0 * bump_l1();
  const Sinogram back = recover_Rpsi(M);
  double err = 0.0;
  for (std::size_t k = 0; k < back.values.size(); ++k) err = std::max(err, std::abs(back.values[k] - rpsi.values[k]));
  CHECK(err <= 1e-3 * max_abs(rpsi));

  Sinogram M2 = M;
  for (std::size_t k = 0; k < M2.values.size(); ++k) M2.values[k] = 3.0 * M.values[k] - 2.0 * rpsi.values[k] * (M.values[k] != 0.0);
  const Sinogram b2 = recover_Rpsi(M2);
  Sinogram part(c, 64, 128);
  for (std::size_t k = 0; k < M2.values.size(); ++k) part.values[k] = rpsi.values[k] * (M.values[k] != 0.0);
  const Sinogram bp = recover_Rpsi(part);
  double lin = 0.0;
  for (std::size_t k = 0; k < b2.values.size(); ++k)
    lin = std::max(lin, std::abs(b2.values[k] - 3.0 * back.values[k] + 2.0 * bp.values[k]));
  CHECK(lin <= 1e-12 * std::max(1.0, max_abs(b2)));
}

TEST_CASE("invert_radon") {
  Grid g(65);
  const AcousticConfig c;
  Sinogram zero(c, 64, 128);
  for (double v : invert_radon(zero, g).values) CHECK(v == 0.0);

  const auto truth = sample(g, [](Point p) {
    const double s = ((p.x - 0.45) * (p.x - 0.45) + (p.y - 0.55) * (p.y - 0.55)) / 0.09;
    return s < 1 ? std::pow(1 - s, 3) : 0.0;
  });
  const Sinogram s = radon_forward(truth, c, 64, 128);
  auto error = [&](double eps) {
    RadonInversionReport rep;
    const auto f = invert_radon(s, g, eps, &rep);
    ScalarField d(g);
    for (std::size_t k = 0; k < g.size(); ++k) d[k] = f[k] - truth[k];
    MESSAGE("eps " << eps << ": " << rep.iterations << " iterations, residual " << rep.relative_residual);
    return std::sqrt(inner(d, d) / inner(truth, truth));
  };
  const double e6 = error(1e-6), e4 = error(1e-4);
  MESSAGE("relative error " << e6 << " (eps 1e-6), " << e4 << " (eps 1e-4)");
  CHECK(e6 <= 0.05);
  CHECK(e4 > e6);
}
