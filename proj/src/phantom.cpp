#include "aorecon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

namespace aorecon {

using std::numbers::pi;

Inclusion Inclusion::disk(Point c, double radius, double base, double amplitude) {
  return {ShapeKind::disk, c, radius, radius, 0.0, base, amplitude};
}

Inclusion Inclusion::ellipse(Point c, double a, double b, double angle, double base, double amplitude) {
  return {ShapeKind::ellipse, c, a, b, angle, base, amplitude};
}

namespace {

inline Point to_local(const Inclusion& inc, Point p) {
  const double dx = p.x - inc.center.x, dy = p.y - inc.center.y;
  const double c = std::cos(inc.angle), s = std::sin(inc.angle);
  return {c * dx + s * dy, -s * dx + c * dy};
}

inline Point rotate(Point v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

}  // namespace

double Inclusion::normalized_radius(Point p) const {
  if (kind == ShapeKind::disk) return std::hypot(p.x - center.x, p.y - center.y) / semi_a;
  const Point q = to_local(*this, p);
  return std::hypot(q.x / semi_a, q.y / semi_b);
}

double Inclusion::profile(double s) const {
  if (s >= 1.0 || amplitude == 0.0) return 0.0;
  const double t = 1.0 - s * s;
  return amplitude * t * t * t;
}

Point Inclusion::boundary_point(double t) const {
  const Point l = rotate({semi_a * std::cos(t), semi_b * std::sin(t)}, angle);
  return {center.x + l.x, center.y + l.y};
}

Point Inclusion::outward_normal(double t) const {
  const Point l = rotate({semi_b * std::cos(t), semi_a * std::sin(t)}, angle);
  const double m = std::hypot(l.x, l.y);
  return {l.x / m, l.y / m};
}

double Inclusion::curvature(double t) const {
  const double st = std::sin(t), ct = std::cos(t);
  const double q = semi_a * semi_a * st * st + semi_b * semi_b * ct * ct;
  return semi_a * semi_b / (q * std::sqrt(q));
}

std::vector<double> Inclusion::ray_crossings(Point origin, Point dir) const {
  const Point o = to_local(*this, origin);
  const Point d = rotate(dir, -angle);
  const double ia2 = 1.0 / (semi_a * semi_a), ib2 = 1.0 / (semi_b * semi_b);
  const double A = d.x * d.x * ia2 + d.y * d.y * ib2;
  const double B = 2.0 * (o.x * d.x * ia2 + o.y * d.y * ib2);
  const double C = o.x * o.x * ia2 + o.y * o.y * ib2 - 1.0;
  const double disc = B * B - 4.0 * A * C;
  if (disc <= 0.0) return {};
  const double sq = std::sqrt(disc);
  // numerically stable pair of roots
  const double qq = -0.5 * (B + std::copysign(sq, B));
  double t1 = qq / A, t2 = C / qq;
  if (qq == 0.0) t1 = t2 = 0.0;
  if (t1 > t2) std::swap(t1, t2);
  return {t1, t2};
}

Point Inclusion::half_extent() const {
  const double c = std::cos(angle), s = std::sin(angle);
  return {std::sqrt(semi_a * semi_a * c * c + semi_b * semi_b * s * s),
          std::sqrt(semi_a * semi_a * s * s + semi_b * semi_b * c * c)};
}

double Inclusion::area() const { return pi * semi_a * semi_b; }

namespace {

// Smallest normalized radius of b's boundary measured in a's coordinates.
double min_boundary_radius(const Inclusion& a, const Inclusion& b) {
  double m = a.normalized_radius(b.center);
  for (int k = 0; k < 2048; ++k) m = std::min(m, a.normalized_radius(b.boundary_point(2 * pi * k / 2048)));
  return m;
}

std::string where(std::size_t i) { return "inclusion " + std::to_string(i) + ": "; }

}  // namespace

void Phantom::validate() const {
  if (!(lower > 0.0)) throw ValidationError("lower bound must be positive");
  if (!(lower <= a0 && a0 <= upper)) throw ValidationError("a0 must lie in [lower, upper]");
  if (!(d_margin >= 0.1 && d_margin < 0.5)) throw ValidationError("D margin must lie in [0.1, 0.5)");
  const double lo = d_margin, hi = 1.0 - d_margin;
  for (std::size_t i = 0; i < inclusions.size(); ++i) {
    const Inclusion& inc = inclusions[i];
    if (!(inc.semi_a > 0.0 && inc.semi_b > 0.0)) throw ValidationError(where(i) + "non-positive size");
    if (!std::isfinite(inc.center.x) || !std::isfinite(inc.center.y) || !std::isfinite(inc.angle))
      throw ValidationError(where(i) + "non-finite geometry");
    const double top = inc.base + std::max(0.0, inc.amplitude);
    const double bottom = inc.base + std::min(0.0, inc.amplitude);
    if (!(bottom >= lower && top <= upper)) throw ValidationError(where(i) + "values leave [lower, upper]");
    const Point e = inc.half_extent();
    if (!(inc.center.x - e.x > lo && inc.center.x + e.x < hi && inc.center.y - e.y > lo && inc.center.y + e.y < hi))
      throw ValidationError(where(i) + "closure not strictly inside D");
    for (std::size_t j = 0; j < i; ++j) {
      const Inclusion& other = inclusions[j];
      bool overlap;
      if (inc.kind == ShapeKind::disk && other.kind == ShapeKind::disk)
        overlap = std::hypot(inc.center.x - other.center.x, inc.center.y - other.center.y) <= inc.semi_a + other.semi_a;
      else
        overlap = min_boundary_radius(inc, other) <= 1.0 || min_boundary_radius(other, inc) <= 1.0;
      if (overlap) throw ValidationError(where(i) + "overlaps inclusion " + std::to_string(j));
    }
  }
}

int Phantom::inclusion_at(Point p) const {
  for (std::size_t i = 0; i < inclusions.size(); ++i)
    if (inclusions[i].contains(p)) return static_cast<int>(i);
  return -1;
}

double Phantom::eval(Point p) const {
  for (const Inclusion& inc : inclusions) {
    const double s = inc.normalized_radius(p);
    if (s < 1.0) return inc.base + inc.profile(s);
  }
  return a0;
}

ScalarField sample(const Phantom& phantom, const Grid& grid) {
  ScalarField out(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) out.values[k] = phantom.eval(grid.node(k));
  return out;
}

ScalarField sample_displaced(const Phantom& phantom, const Grid& grid, const VectorField& disp) {
  ScalarField out(grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point p = grid.node(k);
    const Point q{std::clamp(p.x + disp.x[k], 0.0, 1.0), std::clamp(p.y + disp.y[k], 0.0, 1.0)};
    out.values[k] = phantom.eval(q);
  }
  return out;
}

bool check_H_condition(const Phantom& phantom, Point y, double r, double eta, const HConditionOptions& opt) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  for (const Inclusion& inc : phantom.inclusions) {
    for (int k = 0; k < opt.samples_per_inclusion; ++k) {
      const double t = 2 * pi * k / opt.samples_per_inclusion;
      const Point x = inc.boundary_point(t);
      const double dist = std::hypot(x.x - y.x, x.y - y.y);
      if (std::abs(dist - r) >= eta || dist == 0.0) continue;
      const Point e{(x.x - y.x) / dist, (x.y - y.y) / dist};
      const Point nu = inc.outward_normal(t);
      const double c = e.x * nu.x + e.y * nu.y;
      const double theta = std::acos(std::min(1.0, std::abs(c)));
      if (theta > opt.delta) continue;
      const double kappa_wave = (c >= 0.0 ? 1.0 : -1.0) / dist;
      if (std::abs(inc.curvature(t) - kappa_wave) <= opt.curvature_tolerance) return false;
    }
  }
  return true;
}

Phantom reference_phantom() {
  Phantom p;
  p.inclusions.push_back(Inclusion::disk({0.5, 0.5}, 0.2, 2.0, 0.3));
  return p;
}

Phantom phantom_preset(const std::string& name, std::uint64_t seed) {
  Phantom p;
  if (name == "empty") return p;
  if (name == "disk") return reference_phantom();
  if (name == "two-disk") {
    p.inclusions.push_back(Inclusion::disk({0.36, 0.38}, 0.11, 2.0, 0.2));
    p.inclusions.push_back(Inclusion::disk({0.64, 0.63}, 0.12, 1.6, 0.0));
    return p;
  }
  if (name == "ellipse") {
    p.inclusions.push_back(Inclusion::ellipse({0.5, 0.5}, 0.22, 0.13, 0.5, 1.8, 0.25));
    return p;
  }
  if (name == "random") {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> count(1, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int k = count(rng);
    for (int attempt = 0; attempt < 10000 && static_cast<int>(p.inclusions.size()) < k; ++attempt) {
      const double radius = 0.06 + 0.08 * unit(rng);
      const double lo = p.d_margin + radius + 0.02, hi = 1.0 - lo;
      const Point c{lo + (hi - lo) * unit(rng), lo + (hi - lo) * unit(rng)};
      bool ok = true;
      for (const Inclusion& o : p.inclusions)
        ok = ok && std::hypot(c.x - o.center.x, c.y - o.center.y) > radius + o.semi_a + 0.04;
      if (!ok) continue;
      const double base = p.lower + 0.1 + (p.upper - p.lower - 0.5) * unit(rng);
      const double amp = std::min(0.3, p.upper - base) * unit(rng);
      p.inclusions.push_back(Inclusion::disk(c, radius, base, amp));
    }
    return p;
  }
  throw InvalidArgument("unknown phantom preset '" + name + "'");
}

Phantom parse_phantom_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("phantom JSON: ") + e.what());
  }
  Phantom p;
  try {
    p.a0 = j.at("a0").get<double>();
    p.lower = j.at("lower").get<double>();
    p.upper = j.at("upper").get<double>();
    p.d_margin = j.at("D_margin").get<double>();
    for (const auto& ji : j.value("inclusions", nlohmann::json::array())) {
      const std::string shape = ji.at("shape").get<std::string>();
      const auto params = ji.at("params").get<std::vector<double>>();
      const double base = ji.at("base").get<double>();
      const double amp = ji.value("amplitude", 0.0);
      if (shape == "disk") {
        if (params.size() != 3) throw ValidationError("disk params are [cx, cy, radius]");
        p.inclusions.push_back(Inclusion::disk({params[0], params[1]}, params[2], base, amp));
      } else if (shape == "ellipse") {
        if (params.size() != 5) throw ValidationError("ellipse params are [cx, cy, a, b, angle]");
        p.inclusions.push_back(Inclusion::ellipse({params[0], params[1]}, params[2], params[3], params[4], base, amp));
      } else {
        throw ValidationError("unknown inclusion shape '" + shape + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("phantom JSON: ") + e.what());
  }
  p.validate();
  return p;
}

std::string phantom_to_json(const Phantom& p) {
  nlohmann::json j;
  j["a0"] = p.a0;
  j["lower"] = p.lower;
  j["upper"] = p.upper;
  j["D_margin"] = p.d_margin;
  j["inclusions"] = nlohmann::json::array();
  for (const Inclusion& inc : p.inclusions) {
    nlohmann::json ji;
    if (inc.kind == ShapeKind::disk) {
      ji["shape"] = "disk";
      ji["params"] = {inc.center.x, inc.center.y, inc.semi_a};
    } else {
      ji["shape"] = "ellipse";
      ji["params"] = {inc.center.x, inc.center.y, inc.semi_a, inc.semi_b, inc.angle};
    }
    ji["base"] = inc.base;
    ji["amplitude"] = inc.amplitude;
    j["inclusions"].push_back(ji);
  }
  return j.dump(2);
}

Phantom load_phantom(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_phantom_json(ss.str());
}

void save_phantom(const std::string& path, const Phantom& phantom) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << phantom_to_json(phantom) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace aorecon
