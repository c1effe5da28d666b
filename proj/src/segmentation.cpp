#include "aorecon/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>

#include "aorecon/error.hpp"

namespace aorecon {

namespace {

template <class Fn>
void for_each_neighbour4(const Grid& g, std::size_t k, Fn&& fn) {
  const int n = g.n(), i = static_cast<int>(k % n), j = static_cast<int>(k / n);
  if (i > 0) fn(k - 1);
  if (i < n - 1) fn(k + 1);
  if (j > 0) fn(k - n);
  if (j < n - 1) fn(k + n);
}

double mean_over(const ScalarField& f, const Mask& m) {
  double s = 0.0;
  std::size_t c = 0;
  for (std::size_t k = 0; k < m.size(); ++k)
    if (m[k]) s += f[k], ++c;
  return c ? s / c : 0.0;
}

// Region plus everything it encloses.
Mask fill_holes(const Grid& g, const Mask& region) {
  const int n = g.n();
  Mask outside(region.size(), 0);
  std::queue<std::size_t> q;
  for (std::size_t k = 0; k < region.size(); ++k) {
    const int i = static_cast<int>(k % n), j = static_cast<int>(k / n);
    if ((i == 0 || j == 0 || i == n - 1 || j == n - 1) && !region[k]) outside[k] = 1, q.push(k);
  }
  while (!q.empty()) {
    const std::size_t k = q.front();
    q.pop();
    for_each_neighbour4(g, k, [&](std::size_t m) {
      if (!outside[m] && !region[m]) outside[m] = 1, q.push(m);
    });
  }
  Mask out(region.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = !outside[k];
  return out;
}

}  // namespace

std::optional<double> otsu_threshold(const std::vector<double>& values, int bins) {
  if (values.empty()) return std::nullopt;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return std::nullopt;
  std::vector<double> hist(bins, 0.0);
  const double width = (hi - lo) / bins;
  for (double v : values) hist[std::min(bins - 1, static_cast<int>((v - lo) / width))] += 1.0;
  const double total = static_cast<double>(values.size());
  double sum_all = 0.0;
  for (int b = 0; b < bins; ++b) sum_all += b * hist[b];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int cut = 0;
  for (int b = 0; b < bins - 1; ++b) {
    w0 += hist[b];
    sum0 += b * hist[b];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) best = between, cut = b;
  }
  return lo + (cut + 1) * width;
}

Mask detect_edges(const ScalarField& psi, std::optional<double> threshold) {
  for (double v : psi.values)
    if (!std::isfinite(v)) throw InvalidArgument("psi has non-finite values");
  const Grid& g = psi.grid;
  const VectorField grad = gradient(psi);
  std::vector<double> mag(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) mag[k] = g.h() * std::hypot(grad.x[k], grad.y[k]);
  Mask edges(g.size(), 0);
  const std::optional<double> t = threshold ? threshold : otsu_threshold(mag);
  if (!t) return edges;
  for (std::size_t k = 0; k < g.size(); ++k) edges[k] = mag[k] > *t;
  return edges;
}

Mask dilate(const Grid& g, const Mask& m) {
  const int n = g.n();
  Mask out(m.size(), 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (!m[g.index(i, j)]) continue;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int a = i + di, b = j + dj;
          if (a >= 0 && b >= 0 && a < n && b < n) out[g.index(a, b)] = 1;
        }
    }
  return out;
}

Mask erode(const Grid& g, const Mask& m) {
  Mask inv(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) inv[k] = !m[k];
  Mask d = dilate(g, inv);
  for (auto& v : d) v = !v;
  return d;
}

std::vector<int> label_components(const Grid& g, const Mask& m, int* count) {
  std::vector<int> label(m.size(), 0);
  int next = 0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (!m[s] || label[s]) continue;
    ++next;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      const std::size_t k = q.front();
      q.pop();
      for_each_neighbour4(g, k, [&](std::size_t c) {
        if (m[c] && !label[c]) label[c] = next, q.push(c);
      });
    }
  }
  if (count) *count = next;
  return label;
}

std::size_t InclusionMask::area_nodes() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

Point InclusionMask::centroid() const {
  double x = 0.0, y = 0.0;
  std::size_t c = 0;
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask[k]) {
      const Point p = grid.node(k);
      x += p.x, y += p.y, ++c;
    }
  return c ? Point{x / c, y / c} : Point{0.0, 0.0};
}

std::vector<InclusionMask> extract_inclusions(const Grid& g, const Mask& edges, const ScalarField* psi,
                                              const SegmentationOptions& options) {
  const int n = g.n();
  const Mask closed = erode(g, dilate(g, edges));
  Mask open(closed.size());
  for (std::size_t k = 0; k < open.size(); ++k) open[k] = !closed[k];
  int count = 0;
  const std::vector<int> label = label_components(g, open, &count);
  std::vector<char> touches(count + 1, 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (i == 0 || j == 0 || i == n - 1 || j == n - 1) touches[label[g.index(i, j)]] = 1;

  Mask background(g.size(), 0);
  for (std::size_t k = 0; k < g.size(); ++k) background[k] = label[k] && touches[label[k]];

  Mask taken(g.size(), 0);
  std::vector<InclusionMask> out;
  for (int c = 1; c <= count; ++c) {
    if (touches[c]) continue;
    Mask region(g.size(), 0);
    bool absorbed = false;
    for (std::size_t k = 0; k < g.size(); ++k)
      if (label[k] == c) {
        region[k] = 1;
        absorbed = absorbed || taken[k];
      }
    if (absorbed) continue;
    region = fill_holes(g, region);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (taken[k]) region[k] = 0;

    if (psi) {
      // grow into the edge band through nodes whose psi is closer to the inside level
      const double inside = mean_over(*psi, region);
      Mask ring = dilate(g, dilate(g, dilate(g, region)));
      for (std::size_t k = 0; k < g.size(); ++k) ring[k] = ring[k] && background[k];
      const double outside = std::count(ring.begin(), ring.end(), 1) ? mean_over(*psi, ring) : mean_over(*psi, background);
      std::queue<std::size_t> q;
      for (std::size_t k = 0; k < g.size(); ++k)
        if (region[k]) q.push(k);
      while (!q.empty()) {
        const std::size_t k = q.front();
        q.pop();
        for_each_neighbour4(g, k, [&](std::size_t m) {
          if (region[m] || taken[m] || !closed[m]) return;
          if (std::abs((*psi)[m] - inside) < std::abs((*psi)[m] - outside)) region[m] = 1, q.push(m);
        });
      }
    }
    for (std::size_t k = 0; k < g.size(); ++k)
      if (region[k]) taken[k] = 1;
    if (static_cast<int>(std::count(region.begin(), region.end(), 1)) < options.min_area) continue;

    InclusionMask m;
    m.grid = g;
    m.mask = std::move(region);
    const double lo = options.d_margin, hi = 1.0 - options.d_margin;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!m.mask[k]) continue;
      const Point p = g.node(k);
      if (p.x < lo || p.y < lo || p.x > hi || p.y > hi) m.mask[k] = 0, ++m.clipped;
    }
    if (m.area_nodes() == 0) continue;
    m.boundary = inclusion_mask(g, m.mask).boundary;
    m.label = static_cast<int>(out.size()) + 1;
    out.push_back(std::move(m));
  }
  return out;
}

InclusionMask inclusion_mask(const Grid& g, const Mask& mask) {
  InclusionMask m;
  m.grid = g;
  m.mask = mask;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!m.mask[k]) continue;
    bool edge = false;
    for_each_neighbour4(g, k, [&](std::size_t c) { edge = edge || !m.mask[c]; });
    if (edge) m.boundary.push_back(k);
  }
  return m;
}

double hausdorff(const std::vector<Point>& a, const std::vector<Point>& b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : INFINITY;
  auto directed = [](const std::vector<Point>& p, const std::vector<Point>& q) {
    double worst = 0.0;
    for (const Point& x : p) {
      double best = INFINITY;
      for (const Point& y : q) best = std::min(best, (x.x - y.x) * (x.x - y.x) + (x.y - y.y) * (x.y - y.y));
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

std::vector<Point> boundary_points(const InclusionMask& m) {
  std::vector<Point> out;
  for (std::size_t k : m.boundary) out.push_back(m.grid.node(k));
  return out;
}

std::vector<Point> rim_points(const Inclusion& inc, int samples) {
  std::vector<Point> out;
  for (int k = 0; k < samples; ++k) out.push_back(inc.boundary_point(2 * std::numbers::pi * k / samples));
  return out;
}

void write_pgm(const std::string& path, const Grid& g, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const int n = g.n();
  out << "P5\n" << n << ' ' << n << "\n255\n";
  std::vector<char> row(n);
  for (int j = n - 1; j >= 0; --j) {
    for (int i = 0; i < n; ++i) row[i] = mask[g.index(i, j)] ? static_cast<char>(255) : 0;
    out.write(row.data(), n);
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_field_pgm(const std::string& path, const ScalarField& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const Grid& g = f.grid;
  const int n = g.n();
  const auto [lo_it, hi_it] = std::minmax_element(f.values.begin(), f.values.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  out << "P5\n" << n << ' ' << n << "\n255\n";
  std::vector<unsigned char> row(n);
  for (int j = n - 1; j >= 0; --j) {
    for (int i = 0; i < n; ++i)
      row[i] = span > 0.0 ? static_cast<unsigned char>(std::lround(255.0 * (f(i, j) - lo) / span)) : 0;
    out.write(reinterpret_cast<const char*>(row.data()), n);
  }
  if (!out) throw IoError("failed writing " + path);
}

Mask read_pgm(const std::string& path, const Grid& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  in.get();
  if (magic != "P5" || w != g.n() || h != g.n() || maxv != 255) throw IoError(path + " is not a matching P5 mask");
  const int n = g.n();
  Mask m(g.size(), 0);
  std::vector<char> row(n);
  for (int j = n - 1; j >= 0; --j) {
    if (!in.read(row.data(), n)) throw IoError("truncated " + path);
    for (int i = 0; i < n; ++i) m[g.index(i, j)] = row[i] != 0;
  }
  return m;
}

}  // namespace aorecon
