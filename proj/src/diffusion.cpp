#include "aorecon/diffusion.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace aorecon {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

struct RobinOperator::Impl {
  Grid grid;
  double l = 0.0;
  ScalarField a;
  std::vector<std::size_t> boundary;
  std::vector<std::uint8_t> is_boundary;
  SpMat K;
  Eigen::SimplicialLDLT<SpMat> factor;
};

namespace {

void check_coefficient(const ScalarField& a, double l) {
  if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("extrapolation length must be finite and >= 0");
  for (double v : a.values)
    if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("absorption must be finite and non-negative");
}

double rel_residual(const SpMat& K, const Vec& x, const Vec& b, Vec& r) {
  r = b - K * x;
  const double bn = b.norm();
  return bn == 0.0 ? r.norm() : r.norm() / bn;
}

}  // namespace

RobinOperator::RobinOperator(const ScalarField& a, double l) : impl_(std::make_unique<Impl>()) {
  check_coefficient(a, l);
  Impl& m = *impl_;
  m.grid = a.grid;
  m.l = l;
  m.a = a;
  const Grid& g = m.grid;
  const int n = g.n();
  const double h = g.h();
  m.boundary = g.boundary_nodes();
  m.is_boundary.assign(g.size(), 0);
  for (auto k : m.boundary) m.is_boundary[k] = 1;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * g.size());
  const auto& w = g.weights();
  if (l > 0.0) {
    std::vector<double> diag(g.size(), 0.0);
    auto edge = [&](std::size_t p, std::size_t q, double c) {
      diag[p] += c;
      diag[q] += c;
      trip.emplace_back(static_cast<int>(p), static_cast<int>(q), -c);
      trip.emplace_back(static_cast<int>(q), static_cast<int>(p), -c);
    };
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const std::size_t k = g.index(i, j);
        if (i < n - 1) edge(k, k + 1, (j == 0 || j == n - 1) ? 0.5 : 1.0);
        if (j < n - 1) edge(k, k + n, (i == 0 || i == n - 1) ? 0.5 : 1.0);
      }
    for (std::size_t k = 0; k < g.size(); ++k) {
      double d = diag[k] + w[k] * a.values[k];
      if (m.is_boundary[k]) d += h / l;
      trip.emplace_back(static_cast<int>(k), static_cast<int>(k), d);
    }
  } else {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const std::size_t k = g.index(i, j);
        const int kk = static_cast<int>(k);
        if (g.on_boundary(i, j)) {
          trip.emplace_back(kk, kk, 1.0);
          continue;
        }
        trip.emplace_back(kk, kk, 4.0 + w[k] * a.values[k]);
        for (std::size_t q : {k - 1, k + 1, k - n, k + n})
          if (!m.is_boundary[q]) trip.emplace_back(kk, static_cast<int>(q), -1.0);
      }
  }
  m.K.resize(static_cast<int>(g.size()), static_cast<int>(g.size()));
  m.K.setFromTriplets(trip.begin(), trip.end());
  m.factor.compute(m.K);
  if (m.factor.info() != Eigen::Success) throw SolverError("Robin operator factorization failed", 0, 0.0);
}

RobinOperator::~RobinOperator() = default;
RobinOperator::RobinOperator(RobinOperator&&) noexcept = default;
RobinOperator& RobinOperator::operator=(RobinOperator&&) noexcept = default;

const Grid& RobinOperator::grid() const noexcept { return impl_->grid; }
double RobinOperator::l() const noexcept { return impl_->l; }
const ScalarField& RobinOperator::a() const noexcept { return impl_->a; }

void RobinOperator::apply(std::span<const double> x, std::span<double> out) const {
  Eigen::Map<const Vec> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::Map<Vec> ov(out.data(), static_cast<Eigen::Index>(out.size()));
  ov.noalias() = impl_->K * xv;
}

std::vector<double> RobinOperator::solve(std::span<const double> rhs) const {
  const Impl& m = *impl_;
  Eigen::Map<const Vec> b(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  Vec x = m.factor.solve(b);
  Vec r;
  double res = rel_residual(m.K, x, b, r);
  for (int pass = 0; pass < 3 && res > kSolverTolerance; ++pass) {
    x += m.factor.solve(r);
    res = rel_residual(m.K, x, b, r);
  }
  if (!(res <= kSolverTolerance) || !x.allFinite())
    throw SolverError("Robin solve missed tolerance: relative residual " + std::to_string(res), 3, res);
  return {x.data(), x.data() + x.size()};
}

std::vector<double> RobinOperator::solve_perturbed(std::span<const double> delta_a, std::span<const double> rhs,
                                                   std::span<const double> initial) const {
  const Impl& m = *impl_;
  const auto& w = m.grid.weights();
  std::vector<double> dw(delta_a.size());
  for (std::size_t k = 0; k < dw.size(); ++k) dw[k] = (m.l == 0.0 && m.is_boundary[k]) ? 0.0 : w[k] * delta_a[k];
  std::vector<double> x(rhs.size(), 0.0);
  if (!initial.empty()) std::copy(initial.begin(), initial.end(), x.begin());
  auto apply_p = [&](std::span<const double> v, std::span<double> out) {
    apply(v, out);
    for (std::size_t k = 0; k < v.size(); ++k) out[k] += dw[k] * v[k];
  };
  auto precond = [&](std::span<const double> r, std::span<double> z) {
    Eigen::Map<const Vec> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    Eigen::Map<Vec> zv(z.data(), static_cast<Eigen::Index>(z.size()));
    zv = m.factor.solve(rv);
  };
  conjugate_gradient(apply_p, precond, euclidean_dot, rhs, std::span<double>(x), kSolverTolerance,
                     default_max_iterations(m.grid));
  return x;
}

std::vector<double> RobinOperator::boundary_load(const BoundaryTrace& g) const {
  const Impl& m = *impl_;
  if (g.values.size() != m.boundary.size()) throw InvalidArgument("boundary trace size does not match grid");
  std::vector<double> b(m.grid.size(), 0.0);
  if (m.l > 0.0) {
    const double c = m.grid.h() / m.l;
    for (std::size_t t = 0; t < m.boundary.size(); ++t) b[m.boundary[t]] = c * g.values[t];
    return b;
  }
  const int n = m.grid.n();
  for (std::size_t t = 0; t < m.boundary.size(); ++t) b[m.boundary[t]] = g.values[t];
  for (int j = 1; j < n - 1; ++j)
    for (int i = 1; i < n - 1; ++i) {
      const std::size_t k = m.grid.index(i, j);
      for (std::size_t q : {k - 1, k + 1, k - n, k + n})
        if (m.is_boundary[q]) b[k] += b[q];
    }
  return b;
}

std::vector<double> RobinOperator::source_load(const ScalarField& s) const {
  const Impl& m = *impl_;
  const auto& w = m.grid.weights();
  std::vector<double> b(m.grid.size());
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = (m.l == 0.0 && m.is_boundary[k]) ? 0.0 : w[k] * s.values[k];
  return b;
}

BoundaryTrace RobinOperator::flux(const ScalarField& phi, const BoundaryTrace& g) const {
  const Impl& m = *impl_;
  BoundaryTrace out(m.grid.n(), 0.0);
  if (m.l > 0.0) {
    for (std::size_t t = 0; t < m.boundary.size(); ++t)
      out.values[t] = (g.values[t] - phi.values[m.boundary[t]]) / m.l;
    return out;
  }
  const int n = m.grid.n();
  const double h = m.grid.h();
  const double* v = phi.values.data();
  // one-sided second-order outward derivative from node k stepping inward by `in`
  auto outward = [&](std::size_t k, long in) {
    return -(-3.0 * v[k] + 4.0 * v[k + in] - v[k + 2 * in]) / (2.0 * h);
  };
  for (std::size_t t = 0; t < m.boundary.size(); ++t) {
    const std::size_t k = m.boundary[t];
    const int i = static_cast<int>(k % n), j = static_cast<int>(k / n);
    double sum = 0.0;
    int cnt = 0;
    if (i == 0) sum += outward(k, 1), ++cnt;
    if (i == n - 1) sum += outward(k, -1), ++cnt;
    if (j == 0) sum += outward(k, n), ++cnt;
    if (j == n - 1) sum += outward(k, -static_cast<long>(n)), ++cnt;
    out.values[t] = sum / cnt;
  }
  return out;
}

BoundaryTrace constant_trace(const Grid& g, double value) { return BoundaryTrace(g.n(), value); }

OpticalSolution solve_T(const RobinOperator& op, const BoundaryTrace& g) {
  OpticalSolution s;
  s.phi = ScalarField(op.grid(), op.solve(op.boundary_load(g)));
  s.flux = op.flux(s.phi, g);
  const auto [lo, hi] = std::minmax_element(s.phi.values.begin(), s.phi.values.end());
  s.min_phi = *lo;
  s.max_phi = *hi;
  return s;
}

OpticalSolution solve_T(const RobinProblem& problem) {
  const RobinOperator op(problem.a, problem.l);
  return solve_T(op, problem.g);
}

ScalarField solve_DT(const RobinOperator& op, const ScalarField& phi, const ScalarField& h) {
  ScalarField src(op.grid());
  for (std::size_t k = 0; k < src.values.size(); ++k) src.values[k] = -h.values[k] * phi.values[k];
  return ScalarField(op.grid(), op.solve(op.source_load(src)));
}

ScalarField solve_DT(const ScalarField& a, const ScalarField& phi, const ScalarField& h, double l) {
  return solve_DT(RobinOperator(a, l), phi, h);
}

ScalarField solve_adjoint(const RobinOperator& op, const ScalarField& source) {
  return ScalarField(op.grid(), op.solve(op.source_load(source)));
}

ScalarField solve_adjoint(const ScalarField& a, const ScalarField& source, double l) {
  return solve_adjoint(RobinOperator(a, l), source);
}

std::pair<double, double> phi_bounds_on(const ScalarField& phi, double margin) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  const Grid& g = phi.grid;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point p = g.node(k);
    if (p.x < margin || p.x > 1.0 - margin || p.y < margin || p.y > 1.0 - margin) continue;
    lo = std::min(lo, phi.values[k]);
    hi = std::max(hi, phi.values[k]);
  }
  return {lo, hi};
}

}  // namespace aorecon
