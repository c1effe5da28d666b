#include "aorecon/radon.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aorecon/error.hpp"
#include "aorecon/parallel.hpp"

namespace aorecon {

using std::numbers::pi;

namespace {

double arc_weight(const Sinogram& s) { return 2.0 * pi * s.config.mu / s.ny; }

void require_same_shape(const Sinogram& a, const Sinogram& b) {
  if (a.ny != b.ny || a.nr != b.nr) throw InvalidArgument("sinogram shapes differ");
}

// Rows of the forward map in compressed form; repeated columns are summed on use.
struct ForwardMatrix {
  std::vector<std::size_t> start;
  std::vector<std::uint32_t> col;
  std::vector<double> val;
};

template <class Fn>
void for_each_sample(Point y, double r, double h, Fn&& fn) {
  const int m = angular_samples(r, h);
  const double w = 2.0 * pi / m;
  for (int k = 0; k < m; ++k) {
    const double t = 2.0 * pi * k / m;
    const Point p{y.x + r * std::cos(t), y.y + r * std::sin(t)};
    if (p.x < 0.0 || p.y < 0.0 || p.x > 1.0 || p.y > 1.0) continue;
    fn(p, w);
  }
}

// Bilinear stencil matching ScalarField::interpolate.
template <class Fn>
void for_each_stencil(const Grid& g, Point p, double w, Fn&& fn) {
  const int n = g.n();
  const double s = p.x * (n - 1), t = p.y * (n - 1);
  const int i = std::min(static_cast<int>(s), n - 2), j = std::min(static_cast<int>(t), n - 2);
  const double fx = s - i, fy = t - j;
  const std::size_t k = g.index(i, j);
  fn(k, w * (1 - fx) * (1 - fy));
  fn(k + 1, w * fx * (1 - fy));
  fn(k + n, w * (1 - fx) * fy);
  fn(k + n + 1, w * fx * fy);
}

ForwardMatrix forward_matrix(const Grid& g, const Sinogram& shape) {
  const std::size_t rows = shape.values.size();
  std::vector<std::vector<std::pair<std::uint32_t, double>>> entries(rows);
  parallel_for(rows, [&](std::size_t c) {
    const int m = static_cast<int>(c / shape.nr), q = static_cast<int>(c % shape.nr);
    auto& row = entries[c];
    for_each_sample(shape.source(m), shape.radius(q), g.h(), [&](Point p, double w) {
      for_each_stencil(g, p, w, [&](std::size_t k, double v) { row.emplace_back(static_cast<std::uint32_t>(k), v); });
    });
  });
  ForwardMatrix out;
  out.start.assign(rows + 1, 0);
  for (std::size_t c = 0; c < rows; ++c) out.start[c + 1] = out.start[c] + entries[c].size();
  out.col.resize(out.start[rows]);
  out.val.resize(out.start[rows]);
  for (std::size_t c = 0; c < rows; ++c) {
    std::size_t o = out.start[c];
    for (auto [k, v] : entries[c]) out.col[o] = k, out.val[o++] = v;
    std::vector<std::pair<std::uint32_t, double>>().swap(entries[c]);
  }
  return out;
}

void apply_forward(const ForwardMatrix& B, std::span<const double> f, std::span<double> out) {
  parallel_for(out.size(), [&](std::size_t c) {
    double s = 0.0;
    for (std::size_t o = B.start[c]; o < B.start[c + 1]; ++o) s += B.val[o] * f[B.col[o]];
    out[c] = s;
  });
}

// out = W^-1 B^T (omega s), the transpose for the weighted inner products.
void apply_transpose(const ForwardMatrix& B, std::span<const double> s, double omega, const Grid& g,
                     std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c + 1 < B.start.size(); ++c) {
    if (s[c] == 0.0) continue;
    const double v = omega * s[c];
    for (std::size_t o = B.start[c]; o < B.start[c + 1]; ++o) out[B.col[o]] += B.val[o] * v;
  }
  for (std::size_t k = 0; k < out.size(); ++k) out[k] /= g.weight(k);
}

// Coefficients of F(t) = int_0^t phi, phi constant phi_k on (r_{k-1}, r_k].
void primitive_row(double t, int nr, double dr, std::vector<double>& c) {
  std::fill(c.begin(), c.end(), 0.0);
  if (t <= 0.0) return;
  const int k = std::clamp(static_cast<int>(std::ceil(t / dr)), 1, nr - 1);
  for (int j = 1; j < k; ++j) c[j] = dr;
  c[k] = t - (k - 1) * dr;
}

// Dense matrix of p on one source row; identical for every source.
std::vector<double> p_matrix(const Sinogram& s) {
  const int nr = s.nr;
  const double dr = s.dr(), r0 = s.config.r0, R = s.config.R;
  std::vector<double> P(static_cast<std::size_t>(nr) * nr, 0.0), c(nr);
  for (int q = 0; q < nr; ++q) {
    double* row = &P[static_cast<std::size_t>(q) * nr];
    for (int j = 1; j <= q; ++j) row[j] -= dr;
    if (s.radius(q) >= r0) {
      for (int j = 1; j < nr; ++j) row[j] += dr;
    } else {
      primitive_row(s.radius(q) * R / r0, nr, dr, c);
      for (int j = 0; j < nr; ++j) row[j] += c[j];
    }
  }
  return P;
}

}  // namespace

double cylinder_inner(const Sinogram& a, const Sinogram& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) s += a.values[k] * b.values[k];
  return s * arc_weight(a) * a.dr();
}

double g_inverse_norm(const Sinogram& s) {
  const int n = s.nr - 2;  // interior radii
  const double dr = s.dr();
  const double diag = dr + 2.0 / dr, off = -1.0 / dr;
  std::vector<double> cp(n), dp(n);
  double total = 0.0;
  for (int m = 0; m < s.ny; ++m) {
    // Thomas sweep for (dr I + tridiag(-1, 2, -1)/dr) z = dr u
    for (int i = 0; i < n; ++i) {
      const double b = dr * s.at(m, i + 1);
      const double den = diag - (i > 0 ? off * cp[i - 1] : 0.0);
      cp[i] = off / den;
      dp[i] = (b - (i > 0 ? off * dp[i - 1] : 0.0)) / den;
    }
    double z = 0.0;
    for (int i = n - 1; i >= 0; --i) {
      z = dp[i] - (i < n - 1 ? cp[i] * z : 0.0);
      total += dr * s.at(m, i + 1) * z;
    }
  }
  return std::sqrt(std::max(0.0, total * arc_weight(s)));
}

CylinderNorms cylinder_norms(const Sinogram& s) {
  CylinderNorms out;
  const double l2sq = cylinder_inner(s, s);
  const Sinogram d = radial_difference(s);
  out.l2 = std::sqrt(l2sq);
  out.g = std::sqrt(l2sq + cylinder_inner(d, d));
  out.g_inv = g_inverse_norm(s);
  return out;
}

int angular_samples(double r, double h) {
  return std::max(64, static_cast<int>(std::ceil(2.0 * pi * r / h)));
}

Sinogram radon_forward(const ScalarField& f, const AcousticConfig& config, int ny, int nr) {
  Sinogram out(config, ny, nr);
  const Grid& g = f.grid;
  parallel_for(out.values.size(), [&](std::size_t c) {
    const int m = static_cast<int>(c / nr), q = static_cast<int>(c % nr);
    double s = 0.0;
    for_each_sample(out.source(m), out.radius(q), g.h(), [&](Point p, double w) {
      for_each_stencil(g, p, w, [&](std::size_t k, double v) { s += v * f.values[k]; });
    });
    out.values[c] = s;
  });
  return out;
}

Sinogram radon_forward(const std::function<double(Point)>& f, double h, const AcousticConfig& config, int ny,
                       int nr) {
  Sinogram out(config, ny, nr);
  parallel_for(out.values.size(), [&](std::size_t c) {
    const int m = static_cast<int>(c / nr), q = static_cast<int>(c % nr);
    double s = 0.0;
    for_each_sample(out.source(m), out.radius(q), h, [&](Point p, double w) { s += w * f(p); });
    out.values[c] = s;
  });
  return out;
}

ScalarField radon_adjoint(const Sinogram& s, const Grid& grid) {
  ScalarField out(grid);
  const double arc = arc_weight(s), dr = s.dr();
  parallel_for(grid.size(), [&](std::size_t k) {
    const Point x = grid.node(k);
    double acc = 0.0;
    for (int m = 0; m < s.ny; ++m) {
      const Point y = s.source(m);
      const double d = std::hypot(x.x - y.x, x.y - y.y);
      const double t = d / dr;
      const int q = static_cast<int>(t);
      if (q >= s.nr - 1) {
        if (q == s.nr - 1 && t == q) acc += s.at(m, q) / d;
        continue;
      }
      const double f = t - q;
      acc += ((1 - f) * s.at(m, q) + f * s.at(m, q + 1)) / d;
    }
    out.values[k] = arc * acc;
  });
  return out;
}

ScalarField radon_transpose(const Sinogram& s, const Grid& grid) {
  const ForwardMatrix B = forward_matrix(grid, s);
  ScalarField out(grid);
  apply_transpose(B, s.values, arc_weight(s) * s.dr(), grid, out.values);
  return out;
}

Sinogram radial_difference(const Sinogram& s) {
  Sinogram out(s.config, s.ny, s.nr);
  const double dr = s.dr();
  for (int m = 0; m < s.ny; ++m)
    for (int q = 0; q + 1 < s.nr; ++q) out.at(m, q) = (s.at(m, q + 1) - s.at(m, q)) / dr;
  return out;
}

Sinogram apply_p(const Sinogram& phi) {
  const std::vector<double> P = p_matrix(phi);
  Sinogram out(phi.config, phi.ny, phi.nr);
  const int nr = phi.nr;
  parallel_for(static_cast<std::size_t>(phi.ny), [&](std::size_t m) {
    const double* in = &phi.values[m * nr];
    for (int q = 0; q < nr; ++q) {
      const double* row = &P[static_cast<std::size_t>(q) * nr];
      double s = 0.0;
      for (int j = 0; j < nr; ++j) s += row[j] * in[j];
      out.values[m * nr + q] = s;
    }
  });
  return out;
}

Sinogram apply_p_star(const Sinogram& u) {
  for (int m = 0; m < u.ny; ++m)
    for (int q = 0; q < u.nr && u.radius(q) <= u.config.r0; ++q)
      if (u.at(m, q) != 0.0) throw ValidationError("p* needs data vanishing for r <= r0");
  const std::vector<double> P = p_matrix(u);
  Sinogram out(u.config, u.ny, u.nr);
  const int nr = u.nr;
  parallel_for(static_cast<std::size_t>(u.ny), [&](std::size_t m) {
    const double* in = &u.values[m * nr];
    double* o = &out.values[m * nr];
    for (int q = 0; q < nr; ++q) {
      if (in[q] == 0.0) continue;
      const double* row = &P[static_cast<std::size_t>(q) * nr];
      for (int j = 0; j < nr; ++j) o[j] += row[j] * in[q];
    }
  });
  return out;
}

Sinogram recover_Rpsi(const Sinogram& M) {
  Sinogram out = apply_p_star(M);
  const double scale = 1.0 / (M.config.r0 * bump_l1());
  for (double& v : out.values) v *= scale;
  return out;
}

ScalarField invert_radon(const Sinogram& s, const Grid& grid, double eps, RadonInversionReport* report, double rtol,
                         int max_iter) {
  for (double v : s.values)
    if (!std::isfinite(v)) throw InvalidArgument("sinogram has non-finite values");
  const ForwardMatrix B = forward_matrix(grid, s);
  const double omega = arc_weight(s) * s.dr();
  std::vector<double> b(grid.size()), tmp(s.values.size());
  apply_transpose(B, s.values, omega, grid, b);
  auto apply = [&](std::span<const double> f, std::span<double> out) {
    apply_forward(B, f, tmp);
    apply_transpose(B, tmp, omega, grid, out);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += eps * f[k];
  };
  auto copy = [](std::span<const double> r, std::span<double> z) { std::copy(r.begin(), r.end(), z.begin()); };
  auto dot = [&](std::span<const double> a, std::span<const double> c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += grid.weight(k) * a[k] * c[k];
    return acc;
  };
  ScalarField f(grid);
  RadonInversionReport rep;
  try {
    const SolveReport r = conjugate_gradient(apply, copy, dot, b, f.values, rtol, max_iter);
    rep.iterations = r.iterations;
    rep.relative_residual = r.relative_residual;
  } catch (const SolverError& e) {
    rep.iterations = e.iterations();
    rep.relative_residual = e.residual();
    rep.converged = false;
  }
  if (report) *report = rep;
  return f;
}

}  // namespace aorecon
