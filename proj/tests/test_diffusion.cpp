#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "aorecon/diffusion.hpp"
#include "aorecon/phantom.hpp"

using namespace aorecon;

namespace {

// Unscaled ghost-node equations, assembled node by node and solved densely.
Eigen::VectorXd dense_robin(int n, double a, double g, double l) {
  const double h = 1.0 / (n - 1);
  const int N = n * n;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(N);
  auto id = [n](int i, int j) { return j * n + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int k = id(i, j);
      A(k, k) += 4.0 / (h * h) + a;
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        const int ii = i + di[d], jj = j + dj[d];
        if (ii >= 0 && ii < n && jj >= 0 && jj < n) {
          A(k, id(ii, jj)) -= 1.0 / (h * h);
          continue;
        }
        // ghost = mirror + (2h/l)(g - u0)
        const int mi = i - di[d], mj = j - dj[d];
        A(k, id(mi, mj)) -= 1.0 / (h * h);
        A(k, k) += 2.0 * h / l / (h * h);
        b(k) += 2.0 * h / l * g / (h * h);
      }
    }
  return A.partialPivLu().solve(b);
}

ScalarField smooth_field(const Grid& g, double s) {
  return sample(g, [s](Point p) { return std::sin(3 * p.x + s) * std::cos(2 * p.y - s) + 0.3 * p.x * p.y; });
}

double l2(const ScalarField& f) { return std::sqrt(inner(f, f)); }

double h1(const ScalarField& f) {
  const auto n = norms(f);
  return std::sqrt(n.l2 * n.l2 + n.h1_semi * n.h1_semi);
}

std::vector<Phantom> family() {
  std::vector<Phantom> out;
  for (const char* name : {"empty", "disk", "two-disk", "ellipse"}) out.push_back(phantom_preset(name));
  for (std::uint64_t s = 1; s <= 4; ++s) out.push_back(phantom_preset("random", s));
  return out;
}

}  // namespace

TEST_CASE("constant solution without absorption") {
  Grid g(33);
  for (double l : {0.0, 0.05, 0.1, 1.0}) {
    const auto sol = solve_T({ScalarField(g, 0.0), constant_trace(g, 1.0), l});
    for (double v : sol.phi.values) CHECK(std::abs(v - 1.0) < 1e-10);
    for (double v : sol.flux.values) CHECK(std::abs(v) < 1e-8);
  }
}

TEST_CASE("positive absorption keeps phi strictly between 0 and 1") {
  Grid g(33);
  const auto sol = solve_T({ScalarField(g, 1.0), constant_trace(g, 1.0), 0.1});
  for (int j = 1; j < 32; ++j)
    for (int i = 1; i < 32; ++i) CHECK((sol.phi(i, j) > 0.0 && sol.phi(i, j) < 1.0));
}

TEST_CASE("matches a dense solve of the ghost-node equations") {
  const int n = 17;
  Grid g(n);
  const auto sol = solve_T({ScalarField(g, 1.0), constant_trace(g, 1.0), 0.1});
  const Eigen::VectorXd ref = dense_robin(n, 1.0, 1.0, 0.1);
  CHECK(std::abs(sol.phi(8, 8) - ref(8 * n + 8)) <= 1e-10);
  double m = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) m = std::max(m, std::abs(sol.phi[k] - ref(static_cast<int>(k))));
  CHECK(m <= 1e-10);
}

TEST_CASE("dirichlet data and one-sided flux") {
  Grid g(33);
  const auto data = sample_trace(g, [](Point p) { return p.x; });
  const auto sol = solve_T({ScalarField(g, 0.0), data, 0.0});
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::abs(sol.phi[k] - g.node(k).x) < 1e-10);
  const auto nodes = g.boundary_nodes();
  for (std::size_t t = 0; t < nodes.size(); ++t) {
    const Point p = g.node(nodes[t]);
    double expect = 0.0;
    int c = 0;
    if (p.x == 0.0) expect += -1.0, ++c;
    if (p.x == 1.0) expect += 1.0, ++c;
    if (p.y == 0.0 || p.y == 1.0) ++c;
    CHECK(std::abs(sol.flux.values[t] - expect / c) < 1e-8);
  }
}

TEST_CASE("solve_DT") {
  Grid g(65);
  const Phantom ph = reference_phantom();
  const auto a = sample(ph, g);
  const RobinOperator op(a, 0.1);
  const auto T = solve_T(op, constant_trace(g, 1.0));
  for (double v : solve_DT(op, T.phi, ScalarField(g)).values) CHECK(v == 0.0);

  const auto h1f = smooth_field(g, 0.2), h2f = smooth_field(g, 1.1);
  ScalarField sum(g);
  for (std::size_t k = 0; k < g.size(); ++k) sum[k] = h1f[k] + h2f[k];
  const auto d1 = solve_DT(op, T.phi, h1f), d2 = solve_DT(op, T.phi, h2f), ds = solve_DT(op, T.phi, sum);
  double m = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    m = std::max(m, std::abs(ds[k] - d1[k] - d2[k]));
    scale = std::max(scale, std::abs(ds[k]));
  }
  CHECK(m <= 1e-10 * std::max(1.0, scale));

  // Taylor remainder
  std::vector<double> rem;
  for (double eps : {1e-2, 5e-3, 2.5e-3}) {
    ScalarField ap(g);
    for (std::size_t k = 0; k < g.size(); ++k) ap[k] = a[k] + eps * h1f[k];
    const auto Tp = solve_T({ap, constant_trace(g, 1.0), 0.1});
    ScalarField r(g);
    for (std::size_t k = 0; k < g.size(); ++k) r[k] = Tp.phi[k] - T.phi[k] - eps * d1[k];
    rem.push_back(l2(r));
  }
  CHECK(std::log2(rem[0] / rem[1]) >= 1.9);
  CHECK(std::log2(rem[1] / rem[2]) >= 1.9);
}

TEST_CASE("solve_adjoint") {
  Grid g(65);
  for (double l : {0.1, 0.0}) {
    const auto a = sample(phantom_preset("two-disk"), g);
    const RobinOperator op(a, l);
    for (double v : solve_adjoint(op, ScalarField(g)).values) CHECK(v == 0.0);
    const auto s1 = smooth_field(g, 0.4), s2 = smooth_field(g, 2.0);
    const double x = inner(solve_adjoint(op, s1), s2), y = inner(solve_adjoint(op, s2), s1);
    CHECK(std::abs(x - y) <= 1e-9 * std::abs(x));

    const auto T = solve_T(op, constant_trace(g, 1.0));
    const auto hf = smooth_field(g, 0.9);
    const auto z = solve_adjoint(op, s1);
    ScalarField pz(g);
    for (std::size_t k = 0; k < g.size(); ++k) pz[k] = -T.phi[k] * z[k];
    const double lhs = inner(solve_DT(op, T.phi, hf), s1);
    const double rhs = inner(hf, pz);
    CHECK(std::abs(lhs - rhs) <= 1e-8 * std::abs(lhs));
  }
}

TEST_CASE("perturbed solve agrees with a fresh factorization") {
  Grid g(65);
  const auto a = sample(reference_phantom(), g);
  const RobinOperator op(a, 0.1);
  const auto delta = sample(g, [](Point p) { return 0.5 * std::exp(-40 * ((p.x - 0.4) * (p.x - 0.4) + p.y * p.y)); });
  ScalarField ap(g);
  for (std::size_t k = 0; k < g.size(); ++k) ap[k] = a[k] + delta[k];
  const auto load = op.boundary_load(constant_trace(g, 1.0));
  const auto x = op.solve_perturbed(delta.values, load);
  const auto ref = RobinOperator(ap, 0.1).solve(load);
  double m = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) m = std::max(m, std::abs(x[k] - ref[k]));
  CHECK(m <= 1e-9);
}

TEST_CASE("comparison principle and recorded bounds over the phantom family") {
  Grid g(65);
  // regression constants for g = 1, l = 0.1, n = 65
  constexpr double kLambdaLow = 0.87;
  constexpr double kLambdaHigh = 0.955;
  constexpr double kDtBound = 0.015;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  double worst_ratio = 0.0, lo_all = 1e300, hi_all = -1e300;
  for (const Phantom& p : family()) {
    const RobinOperator op(sample(p, g), 0.1);
    const auto T = solve_T(op, constant_trace(g, 1.0));
    CHECK(T.min_phi >= -1e-10);
    const auto [lo, hi] = phi_bounds_on(T.phi, p.d_margin);
    lo_all = std::min(lo_all, lo);
    hi_all = std::max(hi_all, hi);
    CHECK(lo >= kLambdaLow);
    CHECK(hi <= kLambdaHigh);
    for (int trial = 0; trial < 3; ++trial) {
      ScalarField hf(g);
      for (double& v : hf.values) v = nd(rng);
      const auto d = solve_DT(op, T.phi, hf);
      worst_ratio = std::max(worst_ratio, h1(d) / l2(hf));
    }
  }
  MESSAGE("lambda " << lo_all << " Lambda " << hi_all << " DT ratio " << worst_ratio);
  CHECK(worst_ratio <= kDtBound);
}
