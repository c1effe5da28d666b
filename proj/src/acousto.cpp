#include "aorecon/acousto.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include "aorecon/parallel.hpp"

namespace aorecon {

using std::numbers::pi;

double bump(double s) {
  if (s <= -1.0 || s >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double bump_derivative(double s) {
  if (s <= -1.0 || s >= 1.0) return 0.0;
  const double q = 1.0 - s * s;
  return bump(s) * (-2.0 * s / (q * q));
}

double bump_l1() {
  static const double value = [] {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(bump, -1.0, 1.0, 20, 1e-14, &err);
  }();
  return value;
}

double bump_derivative_sup() {
  static const double value = [] {
    // |w'| peaks on ]0,1[; start from a coarse scan, then refine with Brent
    double best_s = 0.0, best = 0.0;
    for (int k = 1; k < 1000; ++k) {
      const double s = k / 1000.0, v = std::abs(bump_derivative(s));
      if (v > best) best = v, best_s = s;
    }
    auto neg = [](double s) { return -std::abs(bump_derivative(s)); };
    const auto res = boost::math::tools::brent_find_minima(neg, best_s - 1e-3, best_s + 1e-3, 50);
    return -res.second;
  }();
  return value;
}

void AcousticConfig::validate() const {
  const double half_diag = std::sqrt(0.5);
  auto fail = [](const std::string& m) { throw ValidationError("acoustic config: " + m); };
  if (!(mu > half_diag)) fail("sources must lie outside the domain (mu > sqrt(2)/2)");
  if (!(r0 > 0.0 && r0 < R)) fail("need 0 < r0 < R");
  if (!(r0 <= mu - half_diag)) fail("r0 must not exceed mu - sqrt(2)/2");
  if (!(R >= mu + half_diag)) fail("R must reach the far side of the domain (R >= mu + sqrt(2)/2)");
  if (!(eta > 0.0 && eta < r0 / 2)) fail("need 0 < eta < r0/2");
  // P(z) = z + v(z) must stay invertible on every shell meeting the domain
  if (!(r0 * bump_derivative_sup() < mu - half_diag - eta))
    fail("r0 * sup|w'| must stay below the distance from the sources to the domain");
}

void AcousticConfig::validate_for_grid(const Grid& grid) const {
  validate();
  if ((grid.n() - 1) * eta < 2.0 - 1e-12)
    throw ValidationError("grid too coarse for the shell: need (n - 1) * eta >= 2");
}

Point AcousticConfig::source(int m, int ny) const {
  const double t = 2.0 * pi * m / ny;
  return {center.x + mu * std::cos(t), center.y + mu * std::sin(t)};
}

Sinogram::Sinogram(const AcousticConfig& c, int ny_, int nr_) : config(c), ny(ny_), nr(nr_) {
  if (ny < 8 || nr < 16) throw ValidationError("sinogram needs ny >= 8 and nr >= 16");
  values.assign(static_cast<std::size_t>(ny) * nr, 0.0);
}

void write_sinogram_csv(const std::string& path, const Sinogram& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "y_index,r,value\n" << std::setprecision(17);
  for (int m = 0; m < s.ny; ++m)
    for (int q = 0; q < s.nr; ++q) out << m << ',' << s.radius(q) << ',' << s.at(m, q) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Sinogram read_sinogram_csv(const std::string& path, const AcousticConfig& config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("y_index,r,value", 0) != 0) throw IoError(path + ": bad header");
  std::map<int, std::vector<std::pair<double, double>>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
      throw IoError(path + ": malformed line '" + line + "'");
    try {
      rows[std::stoi(a)].emplace_back(std::stod(b), std::stod(c));
    } catch (const std::exception&) {
      throw IoError(path + ": malformed line '" + line + "'");
    }
  }
  if (rows.empty()) throw IoError(path + ": no data");
  const int ny = static_cast<int>(rows.size());
  const int nr = static_cast<int>(rows.begin()->second.size());
  AcousticConfig c = config;
  c.R = rows.begin()->second.back().first;
  Sinogram s(c, ny, nr);
  for (auto& [m, cells] : rows) {
    if (m < 0 || m >= ny || static_cast<int>(cells.size()) != nr) throw IoError(path + ": ragged sinogram");
    for (int q = 0; q < nr; ++q) s.at(m, q) = cells[q].second;
  }
  return s;
}

double radial_displacement(const AcousticConfig& c, double r, double rho) {
  return c.eta * (c.r0 / r) * bump((r - rho) / c.eta);
}

double radial_displacement_derivative(const AcousticConfig& c, double r, double rho) {
  return -(c.r0 / r) * bump_derivative((r - rho) / c.eta);
}

double inverse_radial(const AcousticConfig& c, double r, double rho) {
  const double lo_w = r - c.eta, hi_w = r + c.eta;
  if (rho <= lo_w || rho >= hi_w) return rho;
  // V >= 0, so the preimage lies in [rho - eta r0/r, rho]
  double lo = std::max(lo_w, rho - c.eta * c.r0 / r), hi = rho;
  double p = std::clamp(rho - radial_displacement(c, r, rho), lo, hi);
  for (int it = 0; it < 50; ++it) {
    const double f = p + radial_displacement(c, r, p) - rho;
    if (f > 0.0) hi = p; else lo = p;
    const double df = 1.0 + radial_displacement_derivative(c, r, p);
    double next = p - f / df;
    if (!(next > lo && next < hi) || !(df > 0.0)) next = 0.5 * (lo + hi);
    if (std::abs(next - p) <= 1e-13 || hi - lo <= 1e-13) return next;
    p = next;
  }
  throw SolverError("radial inverse did not converge at rho = " + std::to_string(rho) + ", r = " + std::to_string(r),
                    50, hi - lo);
}

VectorField displacement_v(const AcousticConfig& c, Point y, double r, const Grid& grid) {
  VectorField v(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point x = grid.node(k);
    const double dx = x.x - y.x, dy = x.y - y.y, rho = std::hypot(dx, dy);
    const double V = radial_displacement(c, r, rho);
    if (V == 0.0) continue;
    v.x[k] = V * dx / rho;
    v.y[k] = V * dy / rho;
  }
  return v;
}

VectorField displacement_u(const AcousticConfig& c, Point y, double r, const Grid& grid) {
  VectorField u(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point x = grid.node(k);
    const double dx = x.x - y.x, dy = x.y - y.y, rho = std::hypot(dx, dy);
    if (std::abs(rho - r) >= c.eta) continue;
    double p;
    try {
      p = inverse_radial(c, r, rho);
    } catch (const SolverError& e) {
      throw SolverError(std::string(e.what()) + " (y = " + std::to_string(y.x) + "," + std::to_string(y.y) +
                            ", node " + std::to_string(k) + ")",
                        e.iterations(), e.residual());
    }
    u.x[k] = (p - rho) * dx / rho;
    u.y[k] = (p - rho) * dy / rho;
  }
  return u;
}

namespace {

// Directions from y whose rays hit the inclusion: [center - half, center + half].
struct Cone {
  double center = 0.0;
  double half = 0.0;
};

Cone inclusion_cone(const Inclusion& inc, Point y) {
  const double ca = std::cos(inc.angle), sa = std::sin(inc.angle);
  const double ia = 1.0 / (inc.semi_a * inc.semi_a), ib = 1.0 / (inc.semi_b * inc.semi_b);
  // M = R diag(ia, ib) R^T
  const double m11 = ca * ca * ia + sa * sa * ib, m22 = sa * sa * ia + ca * ca * ib, m12 = ca * sa * (ia - ib);
  const double ox = y.x - inc.center.x, oy = y.y - inc.center.y;
  const double mo1 = m11 * ox + m12 * oy, mo2 = m12 * ox + m22 * oy;
  const double C = ox * mo1 + oy * mo2 - 1.0;
  // Q = (Mo)(Mo)^T - C M
  const double q11 = mo1 * mo1 - C * m11, q22 = mo2 * mo2 - C * m22, q12 = mo1 * mo2 - C * m12;
  const double tr = q11 + q22, det = q11 * q22 - q12 * q12;
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  const double l1 = 0.5 * tr + disc, l2 = 0.5 * tr - disc;
  double vx, vy;
  if (std::abs(q12) > 1e-300) {
    vx = q12;
    vy = l1 - q11;
  } else if (q11 >= q22) {
    vx = 1.0, vy = 0.0;
  } else {
    vx = 0.0, vy = 1.0;
  }
  if (vx * (-ox) + vy * (-oy) < 0.0) vx = -vx, vy = -vy;
  Cone c;
  c.center = std::atan2(vy, vx);
  c.half = l2 < 0.0 ? std::atan(std::sqrt(-l1 / l2)) : pi / 2;
  return c;
}

double bounding_radius(const Inclusion& inc) { return std::max(inc.semi_a, inc.semi_b); }

// Gauss-Legendre rule on [-1, 1], expanded from boost's half-range tables.
template <unsigned N>
const std::vector<std::pair<double, double>>& legendre_rule() {
  static const std::vector<std::pair<double, double>> rule = [] {
    using G = boost::math::quadrature::gauss<double, N>;
    std::vector<std::pair<double, double>> out;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.emplace_back(x[i], w[i]);
      if (x[i] != 0.0) out.emplace_back(-x[i], w[i]);
    }
    return out;
  }();
  return rule;
}

// Visits quadrature points (rho, e, weight) covering the part of the shell of (y, r) swept by
// rays through `inc`; weight includes the polar Jacobian. Rays use composite Gauss panels of arc
// length about `arc`; along each ray the pieces between rim crossings (and, when `images`, their
// images under P) get a Gauss rule each.
template <class Visit>
void shell_quadrature(const AcousticConfig& c, const Inclusion& inc, Point y, double r, bool images, double arc,
                      Visit&& visit) {
  const double dist = std::hypot(inc.center.x - y.x, inc.center.y - y.y);
  const double reach = bounding_radius(inc) + c.eta * c.r0 / r;
  if (r + c.eta <= dist - reach || r - c.eta >= dist + reach) return;
  const Cone cone = inclusion_cone(inc, y);
  const double lo_w = r - c.eta, hi_w = r + c.eta;
  const auto& rule_t = legendre_rule<6>();
  const auto& rule_r = legendre_rule<12>();
  // theta = center - half cos(pi s): clusters rays near the tangent directions
  const int panels = std::max(8, static_cast<int>(std::ceil(2.0 * cone.half * (r + c.eta) / arc)));
  for (int pnl = 0; pnl < panels; ++pnl) {
    const double s0 = static_cast<double>(pnl) / panels, s1 = static_cast<double>(pnl + 1) / panels;
    for (const auto& [xt, wt] : rule_t) {
      const double s = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * xt;
      const double theta = cone.center - cone.half * std::cos(pi * s);
      const double wtheta = 0.5 * (s1 - s0) * wt * cone.half * pi * std::sin(pi * s);
      const Point e{std::cos(theta), std::sin(theta)};
      const auto t = inc.ray_crossings(y, e);
      if (t.size() != 2) continue;
      const double end = images ? t[1] + radial_displacement(c, r, t[1]) : t[1];
      const double a = std::max(lo_w, t[0]), b = std::min(hi_w, end);
      if (!(b > a)) continue;
      double br[6];
      int nb = 0;
      br[nb++] = a;
      br[nb++] = b;
      for (double tc : t) {
        if (tc > a && tc < b) br[nb++] = tc;
        if (images) {
          const double pc = tc + radial_displacement(c, r, tc);
          if (pc > a && pc < b) br[nb++] = pc;
        }
      }
      std::sort(br, br + nb);
      for (int k = 0; k + 1 < nb; ++k) {
        const double span = br[k + 1] - br[k];
        if (span <= 0.0) continue;
        // the profile varies on the scale eta; keep sub-pieces below eta/2
        const int sub = std::max(1, static_cast<int>(std::ceil(span / (0.5 * c.eta))));
        const double len = span / sub;
        for (int q = 0; q < sub; ++q)
          for (const auto& [xr, wr] : rule_r) {
            const double rho = br[k] + len * (q + 0.5 * (1.0 + xr));
            visit(rho, e, wtheta * 0.5 * len * wr * rho);
          }
      }
    }
  }
}

template <class F>
double shell_integral(const AcousticConfig& c, const Inclusion& inc, Point y, double r, bool images, double arc,
                      F&& f) {
  double sum = 0.0;
  shell_quadrature(c, inc, y, r, images, arc, [&](double rho, Point e, double w) { sum += w * f(rho, e); });
  return sum;
}

// Deviation of the coefficient from a0 contributed by one inclusion.
inline double excess(const Inclusion& inc, double a0, Point x) {
  const double s = inc.normalized_radius(x);
  return s < 1.0 ? inc.base + inc.profile(s) - a0 : 0.0;
}

inline Point along(Point y, double rho, Point e) { return {y.x + rho * e.x, y.y + rho * e.y}; }

}  // namespace

struct MeasurementContext::Impl {
  Phantom phantom;
  Grid grid;
  AcousticConfig config;
  MeasurementOptions options;
  BoundaryTrace g;
  ScalarField abar;
  std::unique_ptr<RobinOperator> op;
  ScalarField phi;
  ScalarField phi_dx, phi_dy;

  // Mean of fn over the dual cell of node k, clipped to the unit square.
  template <class Fn>
  double cell_average(std::size_t k, Fn&& fn) const {
    const Point x = grid.node(k);
    const double h = grid.h();
    const double x0 = std::max(0.0, x.x - h / 2), x1 = std::min(1.0, x.x + h / 2);
    const double y0 = std::max(0.0, x.y - h / 2), y1 = std::min(1.0, x.y + h / 2);
    const int s = options.supersample;
    double sum = 0.0;
    for (int b = 0; b < s; ++b)
      for (int a = 0; a < s; ++a)
        sum += fn(Point{x0 + (a + 0.5) * (x1 - x0) / s, y0 + (b + 0.5) * (y1 - y0) / s});
    return sum / (s * s);
  }

  // Nodes within `pad` of some inclusion's bounding circle.
  template <class Fn>
  void for_nodes_near_inclusions(double pad, Fn&& fn) const {
    const int n = grid.n();
    std::vector<std::uint8_t> seen(grid.size(), 0);
    for (const Inclusion& inc : phantom.inclusions) {
      const double rad = bounding_radius(inc) + pad;
      const int i0 = std::max(0, static_cast<int>(std::floor((inc.center.x - rad) * (n - 1))));
      const int i1 = std::min(n - 1, static_cast<int>(std::ceil((inc.center.x + rad) * (n - 1))));
      const int j0 = std::max(0, static_cast<int>(std::floor((inc.center.y - rad) * (n - 1))));
      const int j1 = std::min(n - 1, static_cast<int>(std::ceil((inc.center.y + rad) * (n - 1))));
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          const std::size_t k = grid.index(i, j);
          const Point x = grid.node(k);
          if (seen[k] || std::hypot(x.x - inc.center.x, x.y - inc.center.y) > rad) continue;
          seen[k] = 1;
          fn(k);
        }
    }
  }

  // Hat-function projection of a o P^-1 - a: delta_k = (1/W_k) int (a o P^-1 - a) phi_k.
  std::vector<double> coefficient_change(Point y, double r) const {
    std::vector<double> delta(grid.size(), 0.0);
    const int n = grid.n();
    for (const Inclusion& inc : phantom.inclusions)
      shell_quadrature(config, inc, y, r, true, grid.h() / 2, [&](double rho, Point e, double w) {
        const Point x = along(y, rho, e);
        const double d = excess(inc, phantom.a0, along(y, inverse_radial(config, r, rho), e)) -
                         excess(inc, phantom.a0, x);
        if (d == 0.0) return;
        const double sx = x.x * (n - 1), sy = x.y * (n - 1);
        const int i = std::clamp(static_cast<int>(sx), 0, n - 2), j = std::clamp(static_cast<int>(sy), 0, n - 2);
        const double fx = sx - i, fy = sy - j, v = w * d;
        const std::size_t k = grid.index(i, j);
        delta[k] += v * (1 - fx) * (1 - fy);
        delta[k + 1] += v * fx * (1 - fy);
        delta[k + n] += v * (1 - fx) * fy;
        delta[k + n + 1] += v * fx * fy;
      });
    const auto& wts = grid.weights();
    for (std::size_t k = 0; k < delta.size(); ++k)
      if (delta[k] != 0.0) delta[k] /= wts[k];
    return delta;
  }

  std::vector<double> perturbed_phi(const std::vector<double>& delta, const BoundaryTrace& data,
                                    const std::vector<double>* initial) const {
    const auto load = op->boundary_load(data);
    return op->solve_perturbed(delta, load, initial ? std::span<const double>(*initial) : std::span<const double>());
  }
};

MeasurementContext::MeasurementContext(const Phantom& phantom, const Grid& grid, const AcousticConfig& config,
                                       const MeasurementOptions& options)
    : impl_(std::make_unique<Impl>()) {
  phantom.validate();
  config.validate_for_grid(grid);
  if (options.supersample < 1) throw InvalidArgument("supersample must be >= 1");
  Impl& m = *impl_;
  m.phantom = phantom;
  m.grid = grid;
  m.config = config;
  m.options = options;
  m.g = options.g ? *options.g : constant_trace(grid, 1.0);
  if (m.g.values.size() != grid.boundary_size()) throw InvalidArgument("illumination trace does not match grid");
  m.abar = ScalarField(grid, phantom.a0);
  m.for_nodes_near_inclusions(grid.h(), [&](std::size_t k) {
    m.abar[k] = m.cell_average(k, [&](Point p) { return m.phantom.eval(p); });
  });
  m.op = std::make_unique<RobinOperator>(m.abar, options.l);
  m.phi = solve_T(*m.op, m.g).phi;
  const VectorField gp = gradient(m.phi);
  m.phi_dx = ScalarField(grid, gp.x);
  m.phi_dy = ScalarField(grid, gp.y);
}

MeasurementContext::~MeasurementContext() = default;

const Phantom& MeasurementContext::phantom() const noexcept { return impl_->phantom; }
const Grid& MeasurementContext::grid() const noexcept { return impl_->grid; }
const AcousticConfig& MeasurementContext::config() const noexcept { return impl_->config; }
const ScalarField& MeasurementContext::phi() const noexcept { return impl_->phi; }
const ScalarField& MeasurementContext::averaged_coefficient() const noexcept { return impl_->abar; }
const RobinOperator& MeasurementContext::op() const noexcept { return *impl_->op; }
const BoundaryTrace& MeasurementContext::illumination() const noexcept { return impl_->g; }

bool MeasurementContext::shell_hits_inclusions(Point y, double r) const {
  const auto& c = impl_->config;
  for (const Inclusion& inc : impl_->phantom.inclusions) {
    const double dist = std::hypot(inc.center.x - y.x, inc.center.y - y.y);
    const double reach = bounding_radius(inc) + c.eta * c.r0 / r;
    if (r + c.eta > dist - reach && r - c.eta < dist + reach) return true;
  }
  return false;
}

ScalarField MeasurementContext::perturbed_coefficient(Point y, double r) const {
  const auto delta = impl_->coefficient_change(y, r);
  ScalarField out = impl_->abar;
  for (std::size_t k = 0; k < delta.size(); ++k) out[k] += delta[k];
  return out;
}

double MeasurementContext::M_eta(Point y, double r) const {
  const Impl& m = *impl_;
  if (!shell_hits_inclusions(y, r)) return 0.0;
  const auto delta = m.coefficient_change(y, r);
  const ScalarField phi_u(m.grid, m.perturbed_phi(delta, m.g, &m.phi.values));
  const AcousticConfig& c = m.config;
  double total = 0.0;
  for (const Inclusion& inc : m.phantom.inclusions) {
    total += shell_integral(c, inc, y, r, true, m.grid.h() / 2, [&](double rho, Point e) {
      const Point x = along(y, rho, e);
      const double d = excess(inc, m.phantom.a0, along(y, inverse_radial(c, r, rho), e)) - excess(inc, m.phantom.a0, x);
      if (d == 0.0) return 0.0;
      return d * m.phi.interpolate(x) * phi_u.interpolate(x);
    });
  }
  return total / (c.eta * c.eta);
}

double MeasurementContext::M_eta_grid(Point y, double r) const {
  const Impl& m = *impl_;
  if (!shell_hits_inclusions(y, r)) return 0.0;
  const auto delta = m.coefficient_change(y, r);
  const auto phi_u = m.perturbed_phi(delta, m.g, &m.phi.values);
  const auto& w = m.grid.weights();
  double s = 0.0;
  for (std::size_t k = 0; k < delta.size(); ++k)
    if (delta[k] != 0.0) s += w[k] * delta[k] * m.phi[k] * phi_u[k];
  return s / (m.config.eta * m.config.eta);
}

double MeasurementContext::cross_correlation(Point y, double r, const BoundaryTrace& f,
                                             const BoundaryTrace& g) const {
  const Impl& m = *impl_;
  const auto delta = m.coefficient_change(y, r);
  const ScalarField phi_f(m.grid, m.op->solve(m.op->boundary_load(f)));
  const ScalarField phi_gu(m.grid, m.perturbed_phi(delta, g, nullptr));
  const BoundaryTrace flux_f = m.op->flux(phi_f, f);
  const BoundaryTrace flux_gu = m.op->flux(phi_gu, g);
  double s = 0.0;
  for (std::size_t t = 0; t < f.values.size(); ++t) s += f.values[t] * flux_gu.values[t] - g.values[t] * flux_f.values[t];
  return s * m.grid.h() / (m.config.eta * m.config.eta);
}

namespace {

double mtilde_rays(const Phantom& phantom, const AcousticConfig& c, Point y, double r, const ScalarField& phi,
                   const ScalarField& dx, const ScalarField& dy) {
  double total = 0.0;
  for (const Inclusion& inc : phantom.inclusions) {
    total += shell_integral(c, inc, y, r, false, phi.grid.h() / 2, [&](double rho, Point e) {
      const Point x = along(y, rho, e);
      const double b = excess(inc, phantom.a0, x);
      if (b == 0.0) return 0.0;
      const double p = phi.interpolate(x);
      const double dpe = dx.interpolate(x) * e.x + dy.interpolate(x) * e.y;
      const double V = radial_displacement(c, r, rho);
      const double dV = radial_displacement_derivative(c, r, rho);
      return b * (2.0 * p * dpe * V + p * p * (dV + V / rho));
    });
  }
  return total / (c.eta * c.eta);
}

}  // namespace

double MeasurementContext::M_tilde(Point y, double r) const {
  const Impl& m = *impl_;
  if (!shell_hits_inclusions(y, r)) return 0.0;
  return mtilde_rays(m.phantom, m.config, y, r, m.phi, m.phi_dx, m.phi_dy);
}

double MeasurementContext::perturbation_l1(Point y, double r) const {
  const Impl& m = *impl_;
  const AcousticConfig& c = m.config;
  double total = 0.0;
  for (const Inclusion& inc : m.phantom.inclusions)
    total += shell_integral(c, inc, y, r, true, m.grid.h() / 2, [&](double rho, Point e) {
      return std::abs(excess(inc, m.phantom.a0, along(y, inverse_radial(c, r, rho), e)) -
                      excess(inc, m.phantom.a0, along(y, rho, e)));
    });
  return total;
}

double MeasurementContext::symmetric_difference_area(std::size_t inclusion, Point y, double r) const {
  const Impl& m = *impl_;
  const Inclusion& inc = m.phantom.inclusions.at(inclusion);
  const AcousticConfig& c = m.config;
  return shell_integral(c, inc, y, r, true, m.grid.h() / 2, [&](double rho, Point e) {
    const bool a = inc.contains(along(y, inverse_radial(c, r, rho), e));
    const bool b = inc.contains(along(y, rho, e));
    return a != b ? 1.0 : 0.0;
  });
}

double measure_M_eta(const Phantom& phantom, const Grid& grid, const AcousticConfig& config, Point y, double r) {
  return MeasurementContext(phantom, grid, config).M_eta(y, r);
}

double measure_Mtilde(const Phantom& phantom, const AcousticConfig& config, Point y, double r, const ScalarField& phi) {
  config.validate();
  const VectorField gp = gradient(phi);
  return mtilde_rays(phantom, config, y, r, phi, ScalarField(phi.grid, gp.x), ScalarField(phi.grid, gp.y));
}

Sinogram sample_sinogram(const MeasurementContext& ctx, int ny, int nr, MeasurementKind kind, int threads) {
  Sinogram s(ctx.config(), ny, nr);
  std::vector<std::pair<int, int>> cells;
  for (int m = 0; m < ny; ++m)
    for (int q = 0; q < nr; ++q)
      if (s.radius(q) > ctx.config().r0 && ctx.shell_hits_inclusions(s.source(m), s.radius(q))) cells.emplace_back(m, q);
  parallel_for(
      cells.size(),
      [&](std::size_t i) {
        const auto [m, q] = cells[i];
        try {
          s.at(m, q) = kind == MeasurementKind::m_eta ? ctx.M_eta(s.source(m), s.radius(q))
                                                      : ctx.M_tilde(s.source(m), s.radius(q));
        } catch (const Error& e) {
          throw SolverError("sinogram cell (" + std::to_string(m) + "," + std::to_string(q) + "): " + e.what(), 0, 0.0);
        }
      },
      threads);
  return s;
}

}  // namespace aorecon
