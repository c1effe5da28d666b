#include "aorecon/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/tools/minima.hpp>

#include "aorecon/error.hpp"
#include "aorecon/segmentation.hpp"

namespace aorecon {

namespace {

// Calls fn(p, q) for every grid edge with both ends in the mask.
template <class Fn>
void for_each_edge(const Grid& g, const Mask& m, Fn&& fn) {
  const int n = g.n();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t p = g.index(i, j);
      if (!m[p]) continue;
      if (i + 1 < n && m[p + 1]) fn(p, p + 1);
      if (j + 1 < n && m[p + n]) fn(p, p + n);
    }
}

// Dual vectors from edge coefficients c_e, pairing sum_e c_e (v_q - v_p).
std::vector<std::vector<double>> assemble(const MaskSet& m, const std::function<double(std::size_t, std::size_t, std::size_t)>& c) {
  std::vector<std::vector<double>> dual(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    std::vector<double>& d = dual[j];
    d.assign(m.grid.size(), 0.0);
    for_each_edge(m.grid, m.domain[j], [&](std::size_t p, std::size_t q) {
      const double v = c(j, p, q);
      d[q] += v;
      d[p] -= v;
    });
  }
  return dual;
}

std::vector<std::uint8_t> interior_flags(const MaskSet& m, std::size_t j) {
  std::vector<std::uint8_t> f(m.grid.size(), 0);
  for (std::size_t k : m.interior[j]) f[k] = 1;
  return f;
}

}  // namespace

MaskSet make_mask_set(const Grid& grid, const std::vector<Mask>& masks, double a0, int erosion) {
  MaskSet out;
  out.grid = grid;
  out.a0 = a0;
  const int n = grid.n();
  for (const Mask& r : masks) {
    if (r.size() != grid.size()) throw InvalidArgument("mask size does not match the grid");
    Mask d = r;
    for (int e = 0; e < erosion; ++e) d = erode(grid, d);
    std::vector<std::size_t> inner;
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        const std::size_t k = grid.index(i, j);
        if (d[k] && d[k - 1] && d[k + 1] && d[k - n] && d[k + n]) inner.push_back(k);
      }
    if (inner.empty()) throw ValidationError("mask has no interior after erosion");
    out.region.push_back(r);
    out.domain.push_back(std::move(d));
    out.interior.push_back(std::move(inner));
  }
  return out;
}

HElement zero_element(const MaskSet& m) {
  HElement h;
  h.parts.assign(m.size(), ScalarField(m.grid));
  return h;
}

double h_inner(const MaskSet& m, const HElement& a, const HElement& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    const auto& x = a.parts[j].values;
    const auto& y = b.parts[j].values;
    for_each_edge(m.grid, m.domain[j], [&](std::size_t p, std::size_t q) { s += (x[q] - x[p]) * (y[q] - y[p]); });
  }
  return s;
}

double h_norm(const MaskSet& m, const HElement& a) { return std::sqrt(h_inner(m, a, a)); }

double h_norm_field(const MaskSet& m, const ScalarField& f) {
  double s = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j)
    for_each_edge(m.grid, m.domain[j], [&](std::size_t p, std::size_t q) {
      const double d = f[q] - f[p];
      s += d * d;
    });
  return std::sqrt(s);
}

HElement axpy(double s, const HElement& x, const HElement& y) {
  HElement out = y;
  for (std::size_t j = 0; j < out.parts.size(); ++j)
    for (std::size_t k = 0; k < out.parts[j].values.size(); ++k) out.parts[j][k] += s * x.parts[j][k];
  return out;
}

double h_star_norm(const MaskSet& m, const HFunctional& f) { return h_norm(m, f.rep); }

HElement riesz(const MaskSet& m, const std::vector<std::vector<double>>& dual) {
  HElement out = zero_element(m);
  for (std::size_t j = 0; j < m.size(); ++j) {
    const auto& nodes = m.interior[j];
    const auto flag = interior_flags(m, j);
    std::vector<std::size_t> slot(m.grid.size(), 0);
    for (std::size_t s = 0; s < nodes.size(); ++s) slot[nodes[s]] = s;
    const int n = m.grid.n();
    std::vector<double> b(nodes.size()), x(nodes.size(), 0.0);
    for (std::size_t s = 0; s < nodes.size(); ++s) b[s] = dual[j][nodes[s]];
    auto apply = [&](std::span<const double> in, std::span<double> o) {
      for (std::size_t s = 0; s < nodes.size(); ++s) {
        const std::size_t k = nodes[s];
        double v = 4.0 * in[s];
        for (std::size_t c : {k - 1, k + 1, k - n, k + n})
          if (flag[c]) v -= in[slot[c]];
        o[s] = v;
      }
    };
    auto precond = [](std::span<const double> r, std::span<double> z) {
      for (std::size_t s = 0; s < r.size(); ++s) z[s] = r[s] / 4.0;
    };
    conjugate_gradient(apply, precond, euclidean_dot, b, x, 1e-12, 50 * n);
    for (std::size_t s = 0; s < nodes.size(); ++s) out.parts[j][nodes[s]] = x[s];
  }
  return out;
}

double gradient_l4(const MaskSet& m, const ScalarField& h, std::size_t j) {
  const VectorField g = gradient(h);
  double s = 0.0;
  for (std::size_t k = 0; k < m.grid.size(); ++k) {
    if (!m.domain[j][k]) continue;
    const double q = g.x[k] * g.x[k] + g.y[k] * g.y[k];
    s += m.grid.weight(k) * q * q;
  }
  return std::pow(s, 0.25);
}

Iterate project_K(const MaskSet& m, const Iterate& x, const KProjectionConfig& c) {
  Iterate out = x;
  for (std::size_t j = 0; j < m.size(); ++j) {
    ScalarField& h = out.h.parts[j];
    const double base = out.alpha[j];
    for (std::size_t k : m.interior[j]) {
      if (base + h[k] < c.lower) h[k] = c.lower - base;
      if (base + h[k] > c.upper) h[k] = c.upper - base;
    }
    // scaling toward 0 keeps base + h inside the bounds
    const double l4 = gradient_l4(m, h, j);
    if (l4 > c.theta) {
      const double s = c.theta / l4;
      for (std::size_t k : m.interior[j]) h[k] *= s;
    }
  }
  return out;
}

InversionProblem::InversionProblem(MaskSet masks, double l, std::optional<BoundaryTrace> g)
    : masks_(std::move(masks)), l_(l), g_(g ? *g : constant_trace(masks_.grid, 1.0)) {}

ScalarField InversionProblem::coefficient(const std::vector<double>& alpha) const {
  if (alpha.size() != masks_.size()) throw InvalidArgument("one constant per mask expected");
  ScalarField a(masks_.grid, masks_.a0);
  for (std::size_t j = 0; j < masks_.size(); ++j)
    for (std::size_t k = 0; k < a.values.size(); ++k)
      if (masks_.region[j][k]) a[k] = alpha[j];
  return a;
}

ScalarField InversionProblem::coefficient(const Iterate& x) const {
  ScalarField a = coefficient(x.alpha);
  for (std::size_t j = 0; j < masks_.size(); ++j)
    for (std::size_t k : masks_.interior[j]) a[k] += x.h.parts[j][k];
  return a;
}

ForwardState InversionProblem::forward(const ScalarField& a) const {
  ForwardState s;
  s.a = a;
  auto op = std::make_shared<RobinOperator>(a, l_);
  OpticalSolution t = solve_T(*op, g_);
  s.op = std::move(op);
  s.phi = std::move(t.phi);
  s.flux = std::move(t.flux);
  return s;
}

HFunctional InversionProblem::F_apply(const ForwardState& s) const {
  const auto& phi = s.phi.values;
  const auto& a = s.a.values;
  return {riesz(masks_, assemble(masks_, [&](std::size_t, std::size_t p, std::size_t q) {
                  return 0.5 * (phi[p] * phi[p] + phi[q] * phi[q]) * (a[q] - a[p]);
                }))};
}

HFunctional InversionProblem::delta_psi_functional(const ScalarField& psi) const {
  const auto& v = psi.values;
  return {riesz(masks_, assemble(masks_, [&](std::size_t, std::size_t p, std::size_t q) { return -(v[q] - v[p]); }))};
}

HFunctional InversionProblem::DF_apply(const ForwardState& s, const HElement& h) const {
  ScalarField dh(masks_.grid);
  for (std::size_t j = 0; j < masks_.size(); ++j)
    for (std::size_t k : masks_.interior[j]) dh[k] += h.parts[j][k];
  const ScalarField dphi = solve_DT(*s.op, s.phi, dh);
  const auto& phi = s.phi.values;
  const auto& a = s.a.values;
  return {riesz(masks_, assemble(masks_, [&](std::size_t j, std::size_t p, std::size_t q) {
                  const auto& hj = h.parts[j].values;
                  const double cross = phi[p] * dphi[p] + phi[q] * dphi[q];
                  const double sq = 0.5 * (phi[p] * phi[p] + phi[q] * phi[q]);
                  return cross * (a[q] - a[p]) + sq * (hj[q] - hj[p]);
                }))};
}

HElement InversionProblem::DF_adjoint(const ForwardState& s, const HFunctional& rho) const {
  const Grid& g = masks_.grid;
  const auto& phi = s.phi.values;
  const auto& a = s.a.values;
  // DF(h)(rho) = sum_k dphi_k z_k + sum_e avg(Phi^2) dh de(rho), z_k = 2 Phi_k sum_{e at k} da de(rho) / 2
  std::vector<double> z(g.size(), 0.0);
  for (std::size_t j = 0; j < masks_.size(); ++j) {
    const auto& r = rho.rep.parts[j].values;
    for_each_edge(g, masks_.domain[j], [&](std::size_t p, std::size_t q) {
      const double c = 0.5 * (a[q] - a[p]) * (r[q] - r[p]);
      z[p] += c;
      z[q] += c;
    });
  }
  for (std::size_t k = 0; k < z.size(); ++k) z[k] *= 2.0 * phi[k];
  // dphi = K^-1 W (-h Phi), so sum dphi z = sum_k h_k (-W_k Phi_k (K^-1 z)_k)
  const std::vector<double> zeta = s.op->solve(z);
  auto dual = assemble(masks_, [&](std::size_t j, std::size_t p, std::size_t q) {
    const auto& r = rho.rep.parts[j].values;
    return 0.5 * (phi[p] * phi[p] + phi[q] * phi[q]) * (r[q] - r[p]);
  });
  for (std::size_t j = 0; j < masks_.size(); ++j)
    for (std::size_t k : masks_.interior[j]) dual[j][k] -= g.weight(k) * phi[k] * zeta[k];
  return riesz(masks_, dual);
}

double InversionProblem::misfit(const std::vector<double>& alpha, const BoundaryTrace& measured) const {
  return misfit(Iterate{alpha, zero_element(masks_)}, measured);
}

double InversionProblem::misfit(const Iterate& x, const BoundaryTrace& measured) const {
  const ForwardState s = forward(coefficient(x));
  if (measured.values.size() != s.flux.values.size()) throw InvalidArgument("flux size does not match the grid");
  BoundaryTrace d = s.flux;
  for (std::size_t k = 0; k < d.values.size(); ++k) d.values[k] -= measured.values[k];
  return 0.5 * boundary_inner(d, d, masks_.grid.h());
}

PiecewiseConstantGuess initial_guess_exhaustion(const InversionProblem& p, const BoundaryTrace& measured,
                                                const ExhaustionOptions& o) {
  const std::size_t k = p.masks().size();
  if (k == 0) throw InvalidArgument("no masks to fit");
  if (!(o.step > 0.0) || !(o.upper >= o.lower)) throw InvalidArgument("invalid constant lattice");
  if (k > 3 && !o.coordinate_descent)
    throw InvalidArgument("exhaustive search is limited to 3 masks; use coordinate descent");
  std::vector<double> lattice;
  for (int i = 0;; ++i) {
    const double v = o.lower + i * o.step;
    if (v > o.upper + 1e-12) break;
    lattice.push_back(v);
  }
  PiecewiseConstantGuess best{std::vector<double>(k, lattice.front()), std::numeric_limits<double>::infinity()};
  if (!o.coordinate_descent) {
    // lexicographic order; strict improvement keeps the first minimizer
    std::vector<std::size_t> idx(k, 0);
    for (;;) {
      std::vector<double> alpha(k);
      for (std::size_t j = 0; j < k; ++j) alpha[j] = lattice[idx[j]];
      const double J = p.misfit(alpha, measured);
      if (J < best.misfit) best = {alpha, J};
      std::size_t j = k;
      while (j > 0 && ++idx[j - 1] == lattice.size()) idx[--j] = 0;
      if (j == 0) break;
    }
    return best;
  }
  std::size_t start = 0;
  for (std::size_t i = 1; i < lattice.size(); ++i)
    if (std::abs(lattice[i] - p.masks().a0) < std::abs(lattice[start] - p.masks().a0)) start = i;
  best.alpha.assign(k, lattice[start]);
  best.misfit = p.misfit(best.alpha, measured);
  for (int pass = 0; pass < 3; ++pass)
    for (std::size_t j = 0; j < k; ++j)
      for (double v : lattice) {
        std::vector<double> alpha = best.alpha;
        alpha[j] = v;
        const double J = p.misfit(alpha, measured);
        if (J < best.misfit) best = {alpha, J};
      }
  return best;
}

Iterate refit_constants(const InversionProblem& p, const Iterate& x, const BoundaryTrace& measured, double lower,
                        double upper, int passes) {
  Iterate out = x;
  for (int pass = 0; pass < passes; ++pass)
    for (std::size_t j = 0; j < out.alpha.size(); ++j) {
      auto J = [&](double v) {
        Iterate y = out;
        y.alpha[j] = v;
        return p.misfit(y, measured);
      };
      std::uintmax_t iters = 60;
      const auto best = boost::math::tools::brent_find_minima(J, lower, upper, 30, iters);
      if (best.second < J(out.alpha[j])) out.alpha[j] = best.first;
    }
  return out;
}

double embedding_constant(const Grid& grid, int iterations) {
  const int n = grid.n();
  ScalarField u = sample(grid, [](Point p) { return std::sin(std::numbers::pi * p.x) * std::sin(std::numbers::pi * p.y); });
  auto seminorm2 = [&](const ScalarField& f) {
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        if (i + 1 < n) s += std::pow(f(i + 1, j) - f(i, j), 2);
        if (j + 1 < n) s += std::pow(f(i, j + 1) - f(i, j), 2);
      }
    return s;
  };
  auto ratio = [&](const ScalarField& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.values.size(); ++k) s += grid.weight(k) * std::pow(f[k], 4);
    return std::pow(s, 0.25) / std::sqrt(seminorm2(f));
  };
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> dual(grid.size());
    for (std::size_t k = 0; k < dual.size(); ++k) dual[k] = grid.weight(k) * std::pow(u[k], 3);
    u = poisson_dirichlet_dual(grid, dual);
    const double s = 1.0 / std::sqrt(seminorm2(u));
    for (double& v : u.values) v *= s;
  }
  return ratio(u);
}

double default_theta(double lambda, double Lambda, double embedding) {
  if (!(embedding > 0.0) || !(Lambda > 0.0)) throw InvalidArgument("theta needs positive constants");
  return 0.5 * lambda * lambda / (embedding * Lambda * Lambda);
}

double ReconstructionState::monotone_fraction() const {
  int accepted = 0, decreasing = 0;
  for (std::size_t n = 0; n + 1 < residual.size() && n + 1 < distance.size(); ++n) {
    if (residual[n + 1] > residual[n]) continue;
    ++accepted;
    if (distance[n + 1] < distance[n]) ++decreasing;
  }
  return accepted ? static_cast<double>(decreasing) / accepted : 1.0;
}

double estimate_DF_norm(const InversionProblem& p, const ForwardState& s, int iterations) {
  const MaskSet& m = p.masks();
  HElement x = zero_element(m);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  for (std::size_t j = 0; j < m.size(); ++j)
    for (std::size_t k : m.interior[j]) x.parts[j][k] = normal(rng);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const double nx = h_norm(m, x);
    if (nx == 0.0) return 0.0;
    for (auto& part : x.parts)
      for (double& v : part.values) v /= nx;
    x = p.DF_adjoint(s, p.DF_apply(s, x));
    lambda = h_norm(m, x);
  }
  return std::sqrt(lambda);
}

StepSizeController::Action StepSizeController::observe(double residual) {
  increases = last && residual > *last ? increases + 1 : 0;
  last = residual;
  if (increases < 5) return Action::proceed;
  increases = 0;
  if (++halvings == 3) return Action::stop;
  tau *= 0.5;
  return Action::halved;
}

ReconstructionState landweber_run(const InversionProblem& p, const Iterate& start, const HFunctional& target,
                                  const LandweberConfig& c, const ScalarField* truth) {
  const MaskSet& m = p.masks();
  ReconstructionState st;
  st.iterate = start;
  if (c.tau) {
    st.tau = *c.tau;
  } else {
    const ForwardState s0 = p.forward(p.coefficient(project_K(m, start, c.k)));
    const double L = estimate_DF_norm(p, s0, c.power_iterations);
    if (!(L > 0.0)) throw SolverError("derivative norm estimate vanished", c.power_iterations, 0.0);
    st.tau = 0.9 / (L * L);
  }
  StepSizeController step;
  step.tau = st.tau;
  for (int it = 0;; ++it) {
    const Iterate proj = project_K(m, st.iterate, c.k);
    const ForwardState s = p.forward(p.coefficient(proj));
    HFunctional r = p.F_apply(s);
    r.rep = axpy(-1.0, target.rep, r.rep);
    const double res = h_star_norm(m, r);
    if (!std::isfinite(res)) throw SolverError("residual is not finite", it, res);
    const StepSizeController::Action action = step.observe(res);
    st.residual.push_back(res);
    st.taus.push_back(st.tau);
    st.iterate = proj;
    st.coefficient = s.a;
    if (truth) {
      ScalarField d = s.a;
      for (std::size_t k = 0; k < d.values.size(); ++k) d[k] -= (*truth)[k];
      st.distance.push_back(h_norm_field(m, d));
    }
    if (res <= c.stop_tol * st.residual.front()) {
      st.diagnostic = "converged";
      break;
    }
    st.halvings = step.halvings;
    if (action == StepSizeController::Action::stop) {
      st.diagnostic = "residual kept increasing after 3 step halvings";
      break;
    }
    st.tau = step.tau;
    if (it == c.max_iter) {
      st.diagnostic = "iteration limit reached";
      break;
    }
    const HElement grad = p.DF_adjoint(s, r);
    st.iterate.h = axpy(-st.tau, grad, proj.h);
  }
  return st;
}

PipelineResult reconstruct(const Grid& grid, const std::vector<Mask>& masks, const ScalarField& psi,
                           const BoundaryTrace& flux, double a0, double l, const PipelineOptions& o,
                           const ScalarField* truth) {
  if (masks.empty()) throw ValidationError("no inclusion masks to reconstruct");
  if (!(psi.grid == grid) || (truth && !(truth->grid == grid))) throw InvalidArgument("fields do not match the grid");
  const InversionProblem p(make_mask_set(grid, masks, a0, o.erosion), l);
  PipelineResult out;
  out.guess = initial_guess_exhaustion(p, flux, o.exhaustion);
  LandweberConfig c = o.landweber;
  c.k.lower = o.exhaustion.lower;
  c.k.upper = o.exhaustion.upper;
  if (o.theta) {
    out.theta = *o.theta;
  } else {
    const ForwardState s = p.forward(p.coefficient(out.guess.alpha));
    const auto [lo, hi] = phi_bounds_on(s.phi, o.d_margin);
    out.theta = default_theta(lo, hi, embedding_constant(grid));
  }
  c.k.theta = out.theta;
  const Iterate start{out.guess.alpha, zero_element(p.masks())};
  out.state = landweber_run(p, start, p.delta_psi_functional(psi), c, truth);
  out.final_iterate = o.refit ? refit_constants(p, out.state.iterate, flux, c.k.lower, c.k.upper) : out.state.iterate;
  out.coefficient = p.coefficient(out.final_iterate);
  return out;
}

void write_reconstruction_log(const std::string& path, const ReconstructionState& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "iter,residual_Hstar,dist_to_truth_H,tau\n";
  out.precision(17);
  for (std::size_t n = 0; n < s.residual.size(); ++n) {
    out << n << ',' << s.residual[n] << ',';
    if (n < s.distance.size()) out << s.distance[n];
    out << ',' << s.taus[n] << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace aorecon
