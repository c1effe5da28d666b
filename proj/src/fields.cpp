#include "aorecon/fields.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace aorecon {

Grid::Grid(int n) : n_(n) {
  if (n < 17) throw ValidationError("grid needs at least 17 nodes per axis, got " + std::to_string(n));
  h_ = 1.0 / (n - 1);
  weights_.resize(size());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) weights_[index(i, j)] = weight(i, j);
}

double Grid::weight(int i, int j) const noexcept {
  double w = h_ * h_;
  if (i == 0 || i == n_ - 1) w *= 0.5;
  if (j == 0 || j == n_ - 1) w *= 0.5;
  return w;
}

std::vector<std::size_t> Grid::boundary_nodes() const {
  std::vector<std::size_t> out;
  out.reserve(boundary_size());
  const int m = n_ - 1;
  for (int i = 0; i < m; ++i) out.push_back(index(i, 0));
  for (int j = 0; j < m; ++j) out.push_back(index(m, j));
  for (int i = m; i > 0; --i) out.push_back(index(i, m));
  for (int j = m; j > 0; --j) out.push_back(index(0, j));
  return out;
}

ScalarField::ScalarField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.size()) throw InvalidArgument("field size does not match grid");
}

double ScalarField::interpolate(Point p) const {
  if (p.x < 0.0 || p.y < 0.0 || p.x > 1.0 || p.y > 1.0) return 0.0;
  const int n = grid.n();
  const double s = p.x * (n - 1);
  const double t = p.y * (n - 1);
  int i = std::min(static_cast<int>(s), n - 2);
  int j = std::min(static_cast<int>(t), n - 2);
  const double fx = s - i;
  const double fy = t - j;
  const double* v = values.data();
  const std::size_t k = grid.index(i, j);
  return (1 - fy) * ((1 - fx) * v[k] + fx * v[k + 1]) + fy * ((1 - fx) * v[k + n] + fx * v[k + n + 1]);
}

ScalarField sample(const Grid& g, const std::function<double(Point)>& f) {
  ScalarField out(g);
  for (std::size_t k = 0; k < g.size(); ++k) out.values[k] = f(g.node(k));
  return out;
}

BoundaryTrace sample_trace(const Grid& g, const std::function<double(Point)>& f) {
  BoundaryTrace t(g.n(), 0.0);
  const auto nodes = g.boundary_nodes();
  for (std::size_t b = 0; b < nodes.size(); ++b) t.values[b] = f(g.node(nodes[b]));
  return t;
}

namespace {

// d/dx along one line of nodes with stride `st`, index `i` of `n`.
inline double diff(const double* v, std::size_t k, int i, int n, std::size_t st, double h) {
  if (i == 0) return (-3.0 * v[k] + 4.0 * v[k + st] - v[k + 2 * st]) / (2.0 * h);
  if (i == n - 1) return (3.0 * v[k] - 4.0 * v[k - st] + v[k - 2 * st]) / (2.0 * h);
  return (v[k + st] - v[k - st]) / (2.0 * h);
}

}  // namespace

VectorField gradient(const ScalarField& f) {
  const Grid& g = f.grid;
  VectorField out(g);
  const int n = g.n();
  const double h = g.h();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      out.x[k] = diff(f.values.data(), k, i, n, 1, h);
      out.y[k] = diff(f.values.data(), k, j, n, n, h);
    }
  return out;
}

ScalarField divergence(const VectorField& v) {
  const Grid& g = v.grid;
  ScalarField out(g);
  const int n = g.n();
  const double h = g.h();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      out.values[k] = diff(v.x.data(), k, i, n, 1, h) + diff(v.y.data(), k, j, n, n, h);
    }
  return out;
}

ScalarField laplacian5(const ScalarField& f) {
  const Grid& g = f.grid;
  ScalarField out(g);
  const int n = g.n();
  const double ih2 = 1.0 / (g.h() * g.h());
  const double* v = f.values.data();
  for (int j = 1; j < n - 1; ++j)
    for (int i = 1; i < n - 1; ++i) {
      const std::size_t k = g.index(i, j);
      out.values[k] = (v[k - 1] + v[k + 1] + v[k - n] + v[k + n] - 4.0 * v[k]) * ih2;
    }
  return out;
}

double integrate(const ScalarField& f, const Mask* mask) {
  const auto& w = f.grid.weights();
  double s = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k)
    if (!mask || (*mask)[k]) s += w[k] * f.values[k];
  return s;
}

double inner(const ScalarField& a, const ScalarField& b) {
  const auto& w = a.grid.weights();
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) s += w[k] * a.values[k] * b.values[k];
  return s;
}

double inner(const VectorField& a, const VectorField& b) {
  const auto& w = a.grid.weights();
  double s = 0.0;
  for (std::size_t k = 0; k < a.x.size(); ++k) s += w[k] * (a.x[k] * b.x[k] + a.y[k] * b.y[k]);
  return s;
}

double boundary_inner(const BoundaryTrace& a, const BoundaryTrace& b, double h) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) s += a.values[k] * b.values[k];
  return s * h;
}

Norms norms(const ScalarField& f) {
  const auto& w = f.grid.weights();
  double s2 = 0.0, s4 = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k) {
    const double v2 = f.values[k] * f.values[k];
    s2 += w[k] * v2;
    s4 += w[k] * v2 * v2;
  }
  const VectorField gr = gradient(f);
  return {std::sqrt(s2), std::sqrt(std::sqrt(s4)), std::sqrt(inner(gr, gr))};
}

double weighted_mean(const ScalarField& f) { return integrate(f); }

namespace {

void dirichlet_apply(const Grid& g, std::span<const double> x, std::span<double> out) {
  const int n = g.n();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      if (g.on_boundary(i, j)) {
        out[k] = x[k];
        continue;
      }
      double s = 4.0 * x[k];
      if (i > 1) s -= x[k - 1];
      if (i < n - 2) s -= x[k + 1];
      if (j > 1) s -= x[k - n];
      if (j < n - 2) s -= x[k + n];
      out[k] = s;
    }
}

// Edge Laplacian with half weight on edges lying in the boundary.
void neumann_apply(const Grid& g, std::span<const double> x, std::span<double> out) {
  const int n = g.n();
  std::fill(out.begin(), out.end(), 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const std::size_t k = g.index(i, j);
      if (i < n - 1) {
        const double c = (j == 0 || j == n - 1) ? 0.5 : 1.0;
        const double d = c * (x[k] - x[k + 1]);
        out[k] += d;
        out[k + 1] -= d;
      }
      if (j < n - 1) {
        const double c = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        const double d = c * (x[k] - x[k + n]);
        out[k] += d;
        out[k + n] -= d;
      }
    }
}

void copy_precond(std::span<const double> r, std::span<double> z) { std::copy(r.begin(), r.end(), z.begin()); }

}  // namespace

ScalarField poisson_dirichlet_dual(const Grid& g, std::span<const double> dual, SolveReport* report) {
  std::vector<double> b(dual.begin(), dual.end());
  const int n = g.n();
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (g.on_boundary(i, j)) b[g.index(i, j)] = 0.0;
  ScalarField u(g);
  auto rep = conjugate_gradient([&](auto x, auto out) { dirichlet_apply(g, x, out); }, copy_precond, euclidean_dot,
                                std::span<const double>(b), std::span<double>(u.values), kSolverTolerance,
                                default_max_iterations(g));
  if (report) *report = rep;
  return u;
}

ScalarField poisson_dirichlet(const ScalarField& rhs, SolveReport* report) {
  const double h2 = rhs.grid.h() * rhs.grid.h();
  std::vector<double> dual(rhs.values.size());
  for (std::size_t k = 0; k < dual.size(); ++k) dual[k] = h2 * rhs.values[k];
  return poisson_dirichlet_dual(rhs.grid, dual, report);
}

ScalarField poisson_neumann(const ScalarField& rhs, const ScalarField* initial, SolveReport* report) {
  const Grid& g = rhs.grid;
  const double mean = weighted_mean(rhs);
  const auto& w = g.weights();
  std::vector<double> b(g.size());
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = -w[k] * (rhs.values[k] - mean);
  ScalarField f = initial ? *initial : ScalarField(g);
  auto rep = conjugate_gradient([&](auto x, auto out) { neumann_apply(g, x, out); }, copy_precond, euclidean_dot,
                                std::span<const double>(b), std::span<double>(f.values), kSolverTolerance,
                                default_max_iterations(g));
  const double m = weighted_mean(f);
  for (double& v : f.values) v -= m;
  if (report) *report = rep;
  return f;
}

namespace {

constexpr char kMagic[4] = {'A', 'O', 'R', 'F'};

static_assert(std::endian::native == std::endian::little, "AORF writer assumes a little-endian host");

void write_header(std::ofstream& out, FieldKind kind, std::uint32_t n) {
  const std::uint16_t version = 1;
  const auto k = static_cast<std::uint8_t>(kind);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), 2);
  out.write(reinterpret_cast<const char*>(&k), 1);
  out.write(reinterpret_cast<const char*>(&n), 4);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void write_field(const std::string& path, const ScalarField& f) {
  auto out = open_out(path);
  write_header(out, FieldKind::scalar, static_cast<std::uint32_t>(f.grid.n()));
  out.write(reinterpret_cast<const char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * 8));
  finish(out, path);
}

void write_field(const std::string& path, const VectorField& f) {
  auto out = open_out(path);
  write_header(out, FieldKind::vector, static_cast<std::uint32_t>(f.grid.n()));
  for (std::size_t k = 0; k < f.x.size(); ++k) {
    out.write(reinterpret_cast<const char*>(&f.x[k]), 8);
    out.write(reinterpret_cast<const char*>(&f.y[k]), 8);
  }
  finish(out, path);
}

void write_field(const std::string& path, const BoundaryTrace& t) {
  auto out = open_out(path);
  write_header(out, FieldKind::trace, static_cast<std::uint32_t>(t.n));
  out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 8));
  finish(out, path);
}

AnyField read_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  std::uint16_t version = 0;
  std::uint8_t kind = 0;
  std::uint32_t n = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 2);
  in.read(reinterpret_cast<char*>(&kind), 1);
  in.read(reinterpret_cast<char*>(&n), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path + ": not an AORF file");
  if (version != 1) throw IoError(path + ": unsupported AORF version " + std::to_string(version));
  if (n < 17 || n > 1u << 15) throw IoError(path + ": bad grid size");
  const Grid g(static_cast<int>(n));
  auto read_values = [&](std::size_t count) {
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 8));
    if (!in) throw IoError(path + ": truncated");
    return v;
  };
  switch (static_cast<FieldKind>(kind)) {
    case FieldKind::scalar:
      return ScalarField(g, read_values(g.size()));
    case FieldKind::vector: {
      auto v = read_values(2 * g.size());
      VectorField f(g);
      for (std::size_t k = 0; k < g.size(); ++k) {
        f.x[k] = v[2 * k];
        f.y[k] = v[2 * k + 1];
      }
      return f;
    }
    case FieldKind::trace: {
      BoundaryTrace t(static_cast<int>(n), 0.0);
      t.values = read_values(g.boundary_size());
      return t;
    }
  }
  throw IoError(path + ": unknown field kind " + std::to_string(kind));
}

ScalarField read_scalar_field(const std::string& path) {
  auto any = read_field(path);
  if (auto* s = std::get_if<ScalarField>(&any)) return std::move(*s);
  throw IoError(path + ": expected a scalar field");
}

}  // namespace aorecon
