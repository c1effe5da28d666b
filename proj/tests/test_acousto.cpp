#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>

#include "aorecon/acousto.hpp"

using namespace aorecon;
using std::numbers::pi;

namespace {

AcousticConfig config_with(double eta) {
  AcousticConfig c;
  c.eta = eta;
  return c;
}

// (y, r) whose shell crosses the reference disk transversally
std::pair<Point, double> probe(const AcousticConfig& c, int m, double s) {
  const Point y = c.source(m, 64);
  return {y, std::hypot(y.x - 0.5, y.y - 0.5) + 0.2 * s};
}

double fitted_order(const std::vector<double>& etas, const std::vector<double>& errs) {
  // least-squares slope of log err against log eta
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(etas.size());
  for (std::size_t k = 0; k < etas.size(); ++k) {
    const double x = std::log(etas[k]), y = std::log(errs[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("wave profile") {
  CHECK(bump(0.0) == 1.0);
  CHECK(bump(1.0) == 0.0);
  CHECK(bump(-1.5) == 0.0);
  for (int k = -100; k <= 100; ++k) CHECK(bump(k / 100.0) <= 1.0);
  // independent composite Simpson on ]-1,1[
  const int N = 200000;
  double s = 0.0;
  for (int k = 0; k <= N; ++k) {
    const double x = -1.0 + 2.0 * k / N;
    const double c = (k == 0 || k == N) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    s += c * bump(x);
  }
  s *= (2.0 / N) / 3.0;
  MESSAGE("||w||_1 = " << bump_l1() << " (Simpson " << s << ")");
  CHECK(std::abs(bump_l1() - s) <= 1e-10);
  // sup |w'| against a dense scan
  double m = 0.0;
  for (int k = 0; k < 2000000; ++k) m = std::max(m, std::abs(bump_derivative(-1.0 + 2.0 * k / 2000000)));
  CHECK(std::abs(bump_derivative_sup() - m) <= 1e-8);
  // derivative against central differences
  for (double x : {-0.7, -0.2, 0.1, 0.55}) {
    const double fd = (bump(x + 1e-6) - bump(x - 1e-6)) / 2e-6;
    CHECK(std::abs(bump_derivative(x) - fd) <= 1e-6);
  }
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(AcousticConfig{}.validate());
  AcousticConfig c;
  c.r0 = 0.25;
  CHECK_THROWS_AS(c.validate(), ValidationError);  // P not invertible for this r0
  c = {};
  c.eta = 0.06;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.mu = 0.6;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.R = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_THROWS_AS(AcousticConfig{}.validate_for_grid(Grid(65)), ValidationError);
  CHECK_NOTHROW(AcousticConfig{}.validate_for_grid(Grid(129)));
  CHECK_NOTHROW(config_with(0.04).validate_for_grid(Grid(65)));
}

TEST_CASE("displacement_v") {
  const AcousticConfig c = config_with(0.04);
  Grid g(65);
  const auto [y, r] = probe(c, 5, 0.1);
  const auto v = displacement_v(c, y, r, g);
  double vmax = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point x = g.node(k);
    const double rho = std::hypot(x.x - y.x, x.y - y.y);
    const double mag = std::hypot(v.x[k], v.y[k]);
    if (std::abs(rho - r) >= c.eta) CHECK(mag == 0.0);
    vmax = std::max(vmax, mag);
  }
  CHECK(vmax <= c.eta * c.r0 / r);
  CHECK(radial_displacement(c, r, r) == doctest::Approx(c.eta * c.r0 / r).epsilon(1e-15));
}

TEST_CASE("displacement_u inverts P") {
  Grid g(129);
  std::vector<double> scaled;
  for (double eta : {0.04, 0.02, 0.01}) {
    const AcousticConfig c = config_with(eta);
    const auto [y, r] = probe(c, 9, -0.3);
    const auto u = displacement_u(c, y, r, g);
    const auto v = displacement_v(c, y, r, g);
    double worst = 0.0, uv = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Point x = g.node(k);
      if (v.x[k] == 0.0 && v.y[k] == 0.0) CHECK((u.x[k] == 0.0 && u.y[k] == 0.0));
      // P(x + u) = x + u + v(x + u)
      const Point z{x.x + u.x[k], x.y + u.y[k]};
      const double rho = std::hypot(z.x - y.x, z.y - y.y);
      const double V = radial_displacement(c, r, rho);
      const Point pz{z.x + V * (z.x - y.x) / rho, z.y + V * (z.y - y.y) / rho};
      worst = std::max(worst, std::hypot(pz.x - x.x, pz.y - x.y));
      uv = std::max(uv, std::hypot(u.x[k] + v.x[k], u.y[k] + v.y[k]));
    }
    CHECK(worst <= 1e-10);
    scaled.push_back(uv / eta);
  }
  // u + v = v(x) - v(x + u) is first order in eta with an eta-independent profile
  MESSAGE("||u+v||/eta: " << scaled[0] << " " << scaled[1] << " " << scaled[2]);
  CHECK(std::abs(scaled[1] / scaled[0] - 1.0) <= 0.05);
  CHECK(std::abs(scaled[2] / scaled[1] - 1.0) <= 0.05);
  // the radial identity behind it: int (u + v) drho = 0 across the shell
  const AcousticConfig c = config_with(0.02);
  const double r = 1.0;
  const int N = 20000;
  double integral = 0.0, mass = 0.0;
  for (int k = 0; k < N; ++k) {
    const double rho = r - c.eta + 2 * c.eta * (k + 0.5) / N;
    const double uv = inverse_radial(c, r, rho) - rho + radial_displacement(c, r, rho);
    integral += uv * 2 * c.eta / N;
    mass += std::abs(uv) * 2 * c.eta / N;
  }
  CHECK(std::abs(integral) <= 1e-6 * mass);
}

TEST_CASE("M_eta and M_tilde vanish without inclusions or away from them") {
  Grid g(65);
  const AcousticConfig c = config_with(0.04);
  const MeasurementContext empty(Phantom{}, g, c);
  const auto [y, r] = probe(c, 3, 0.2);
  CHECK(empty.M_eta(y, r) == 0.0);
  CHECK(empty.M_tilde(y, r) == 0.0);
  CHECK(std::abs(empty.cross_correlation(y, r, empty.illumination(), empty.illumination())) <= 1e-6);
  BoundaryTrace edge(g.n(), 0.0);
  for (int t = 0; t < g.n() - 1; ++t) edge.values[t] = 1.0;
  CHECK(std::abs(empty.cross_correlation(y, r, edge, empty.illumination())) <= 1e-6);

  const MeasurementContext disk(reference_phantom(), g, c);
  const double far = std::hypot(y.x - 0.5, y.y - 0.5) + 0.35;
  CHECK(disk.M_eta(y, far) == 0.0);
  CHECK(std::abs(disk.M_tilde(y, far)) <= 1e-10);
  CHECK(disk.M_eta(y, r) != 0.0);
}

TEST_CASE("M_eta refinement and cross-correlation equivalence") {
  const AcousticConfig c = config_with(0.04);
  const MeasurementContext coarse(reference_phantom(), Grid(65), c);
  const MeasurementContext fine(reference_phantom(), Grid(129), c);
  for (double s : {-0.5, 0.4}) {
    const auto [y, r] = probe(c, 7, s);
    const double a = coarse.M_eta(y, r), b = fine.M_eta(y, r);
    CHECK(std::abs(a - b) <= 0.05 * std::abs(b));
    const auto& g = fine.illumination();
    const double cc = fine.cross_correlation(y, r, g, g);
    CHECK(std::abs(cc - b) <= 0.02 * std::abs(b));
    // the grid form is the same quantity up to solver tolerance (discrete Green identity)
    CHECK(std::abs(cc - fine.M_eta_grid(y, r)) <= 1e-7 * std::abs(b));
  }
}

TEST_CASE("M_eta - M_tilde is first order in eta") {
  Grid g(257);
  std::vector<double> etas{0.04, 0.02, 0.01}, errs;
  for (double eta : etas) {
    const AcousticConfig c = config_with(eta);
    const MeasurementContext ctx(reference_phantom(), g, c);
    const auto [y, r] = probe(c, 11, 0.35);
    REQUIRE(check_H_condition(ctx.phantom(), y, r, eta));
    errs.push_back(std::abs(ctx.M_eta(y, r) - ctx.M_tilde(y, r)));
  }
  MESSAGE("|M_eta - M_tilde|: " << errs[0] << " " << errs[1] << " " << errs[2]);
  CHECK(fitted_order(etas, errs) >= 0.8);
}

TEST_CASE("perturbation bounds are second order in eta") {
  Grid g(129);
  std::vector<double> etas{0.04, 0.02, 0.01}, l1, sym;
  for (double eta : etas) {
    const AcousticConfig c = config_with(eta);
    const MeasurementContext ctx(reference_phantom(), g.n() * eta >= 2 ? g : Grid(257), c);
    const auto [y, r] = probe(c, 2, -0.45);
    REQUIRE(check_H_condition(ctx.phantom(), y, r, eta));
    l1.push_back(ctx.perturbation_l1(y, r));
    sym.push_back(ctx.symmetric_difference_area(0, y, r));
  }
  MESSAGE("L1 " << l1[0] << " " << l1[1] << " " << l1[2] << " | area " << sym[0] << " " << sym[1] << " " << sym[2]);
  CHECK(fitted_order(etas, l1) >= 1.8);
  CHECK(fitted_order(etas, sym) >= 1.8);
}

TEST_CASE("sinograms") {
  Grid g(65);
  const AcousticConfig c = config_with(0.04);
  const MeasurementContext empty(Phantom{}, g, c);
  for (double v : sample_sinogram(empty, 8, 16, MeasurementKind::m_eta).values) CHECK(v == 0.0);

  const MeasurementContext disk(reference_phantom(), g, c);
  // quarter turns are symmetries of the square grid and of the centered disk
  const Sinogram s = sample_sinogram(disk, 8, 32, MeasurementKind::m_eta);
  double scale = 0.0, diff = 0.0;
  for (int m = 0; m < 8; ++m)
    for (int q = 0; q < 32; ++q) {
      scale = std::max(scale, std::abs(s.at(m, q)));
      diff = std::max(diff, std::abs(s.at(m, q) - s.at((m + 2) % 8, q)));
    }
  CHECK(scale > 0.0);
  CHECK(diff <= 1e-8);
  // other rotations only up to the grid discretization
  const Sinogram st = sample_sinogram(disk, 16, 32, MeasurementKind::m_tilde);
  double rot = 0.0, sc = 0.0;
  for (int q = 0; q < 32; ++q) {
    rot = std::max(rot, std::abs(st.at(1, q) - st.at(0, q)));
    sc = std::max(sc, std::abs(st.at(0, q)));
  }
  CHECK(rot <= 0.02 * sc);

  // continuity proxy: neighbouring cells get closer when the sampling is refined
  double prev = 1e300;
  for (int f = 1; f <= 4; f *= 2) {
    const Sinogram sf = sample_sinogram(disk, 16 * f, 64 * f, MeasurementKind::m_tilde);
    double jump = 0.0;
    for (int m = 0; m < sf.ny; ++m)
      for (int q = 0; q + 1 < sf.nr; ++q)
        jump = std::max({jump, std::abs(sf.at(m, q + 1) - sf.at(m, q)),
                         std::abs(sf.at((m + 1) % sf.ny, q) - sf.at(m, q))});
    CHECK(jump < prev);
    prev = jump;
  }

  const std::string path = "test_acousto_sino.csv";
  write_sinogram_csv(path, s);
  const Sinogram back = read_sinogram_csv(path, c);
  CHECK(back.ny == 8);
  CHECK(back.nr == 32);
  CHECK(back.values == s.values);
  std::remove(path.c_str());
}
