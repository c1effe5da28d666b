#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "aorecon/error.hpp"

namespace aorecon {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Uniform square grid on [0,1]^2. Node (i,j) sits at (i*h, j*h), stored at j*n + i.
class Grid {
 public:
  Grid() = default;
  explicit Grid(int n);

  int n() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(n_) * n_; }
  std::size_t index(int i, int j) const noexcept { return static_cast<std::size_t>(j) * n_ + i; }
  Point node(int i, int j) const noexcept { return {i * h_, j * h_}; }
  Point node(std::size_t k) const noexcept { return node(static_cast<int>(k % n_), static_cast<int>(k / n_)); }
  bool on_boundary(int i, int j) const noexcept { return i == 0 || j == 0 || i == n_ - 1 || j == n_ - 1; }
  // Trapezoid weight: h^2 inside, h^2/2 on edges, h^2/4 at corners.
  double weight(int i, int j) const noexcept;
  double weight(std::size_t k) const noexcept { return weight(static_cast<int>(k % n_), static_cast<int>(k / n_)); }
  const std::vector<double>& weights() const noexcept { return weights_; }

  // Boundary nodes counterclockwise from (0,0); 4(n-1) entries.
  std::vector<std::size_t> boundary_nodes() const;
  std::size_t boundary_size() const noexcept { return 4 * static_cast<std::size_t>(n_ - 1); }

  bool operator==(const Grid& o) const noexcept { return n_ == o.n_; }

 private:
  int n_ = 0;
  double h_ = 0.0;
  std::vector<double> weights_;
};

using Mask = std::vector<std::uint8_t>;

struct ScalarField {
  Grid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  ScalarField(const Grid& g, std::vector<double> v);

  double& operator()(int i, int j) { return values[grid.index(i, j)]; }
  double operator()(int i, int j) const { return values[grid.index(i, j)]; }
  double& operator[](std::size_t k) { return values[k]; }
  double operator[](std::size_t k) const { return values[k]; }

  // Bilinear interpolation; returns 0 outside the unit square.
  double interpolate(Point p) const;
};

struct VectorField {
  Grid grid;
  std::vector<double> x;
  std::vector<double> y;

  VectorField() = default;
  explicit VectorField(const Grid& g) : grid(g), x(g.size(), 0.0), y(g.size(), 0.0) {}
};

struct BoundaryTrace {
  int n = 0;
  std::vector<double> values;

  BoundaryTrace() = default;
  BoundaryTrace(int n_nodes, double fill) : n(n_nodes), values(4 * static_cast<std::size_t>(n_nodes - 1), fill) {}
};

ScalarField sample(const Grid& g, const std::function<double(Point)>& f);
BoundaryTrace sample_trace(const Grid& g, const std::function<double(Point)>& f);

VectorField gradient(const ScalarField& f);
ScalarField divergence(const VectorField& v);
// Five-point Laplacian; boundary nodes are set to 0.
ScalarField laplacian5(const ScalarField& f);

double integrate(const ScalarField& f, const Mask* mask = nullptr);
double inner(const ScalarField& a, const ScalarField& b);
double inner(const VectorField& a, const VectorField& b);
// Boundary integral with weight h per trace node.
double boundary_inner(const BoundaryTrace& a, const BoundaryTrace& b, double h);

struct Norms {
  double l2 = 0.0;
  double l4 = 0.0;
  double h1_semi = 0.0;
};
Norms norms(const ScalarField& f);
double weighted_mean(const ScalarField& f);

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

// Preconditioned conjugate gradient for A x = b with a caller-supplied inner product.
// `apply(x, out)` computes A x; `precond(r, out)` applies M^-1 (copy for none).
template <class Apply, class Precond, class Dot>
SolveReport conjugate_gradient(Apply&& apply, Precond&& precond, Dot&& dot, std::span<const double> b,
                               std::span<double> x, double rtol, int max_iter) {
  const std::size_t m = b.size();
  std::vector<double> r(m), z(m), p(m), ap(m);
  apply(std::span<const double>(x.data(), m), std::span<double>(ap));
  for (std::size_t k = 0; k < m; ++k) r[k] = b[k] - ap[k];
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return {0, 0.0};
  }
  double rnorm = std::sqrt(dot(std::span<const double>(r), std::span<const double>(r)));
  if (rnorm <= rtol * bnorm) return {0, rnorm / bnorm};
  precond(std::span<const double>(r), std::span<double>(z));
  p = z;
  double rz = dot(std::span<const double>(r), std::span<const double>(z));
  int it = 0;
  while (it < max_iter) {
    ++it;
    apply(std::span<const double>(p), std::span<double>(ap));
    const double pap = dot(std::span<const double>(p), std::span<const double>(ap));
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    for (std::size_t k = 0; k < m; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    rnorm = std::sqrt(dot(std::span<const double>(r), std::span<const double>(r)));
    if (rnorm <= rtol * bnorm) {
      // confirm against the true residual; recurrences drift
      apply(std::span<const double>(x.data(), m), std::span<double>(ap));
      for (std::size_t k = 0; k < m; ++k) r[k] = b[k] - ap[k];
      rnorm = std::sqrt(dot(std::span<const double>(r), std::span<const double>(r)));
      if (rnorm <= rtol * bnorm) return {it, rnorm / bnorm};
    }
    precond(std::span<const double>(r), std::span<double>(z));
    const double rz_new = dot(std::span<const double>(r), std::span<const double>(z));
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t k = 0; k < m; ++k) p[k] = z[k] + beta * p[k];
  }
  throw SolverError("conjugate gradient did not converge: relative residual " + std::to_string(rnorm / bnorm),
                    it, rnorm / bnorm);
}

inline double euclidean_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// -Lap5 u = rhs inside, u = 0 on the boundary.
ScalarField poisson_dirichlet(const ScalarField& rhs, SolveReport* report = nullptr);
// Same system with an assembled right-hand side: (4u - sum of neighbours)_k = dual_k.
ScalarField poisson_dirichlet_dual(const Grid& g, std::span<const double> dual, SolveReport* report = nullptr);
// Lap f = rhs - mean(rhs), zero normal derivative, zero weighted mean.
ScalarField poisson_neumann(const ScalarField& rhs, const ScalarField* initial = nullptr,
                            SolveReport* report = nullptr);

inline int default_max_iterations(const Grid& g) { return 50 * g.n(); }
constexpr double kSolverTolerance = 1e-10;

// AORF binary files.
enum class FieldKind : std::uint8_t { scalar = 0, vector = 1, trace = 2 };
using AnyField = std::variant<ScalarField, VectorField, BoundaryTrace>;

void write_field(const std::string& path, const ScalarField& f);
void write_field(const std::string& path, const VectorField& f);
void write_field(const std::string& path, const BoundaryTrace& t);
AnyField read_field(const std::string& path);
ScalarField read_scalar_field(const std::string& path);

}  // namespace aorecon
