#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aorecon/fields.hpp"

namespace aorecon {

enum class ShapeKind { disk, ellipse };

// A disk is stored as an ellipse with equal semi-axes.
struct Inclusion {
  ShapeKind kind = ShapeKind::disk;
  Point center;
  double semi_a = 0.0;
  double semi_b = 0.0;
  double angle = 0.0;
  double base = 1.0;
  double amplitude = 0.0;

  static Inclusion disk(Point c, double radius, double base, double amplitude);
  static Inclusion ellipse(Point c, double a, double b, double angle, double base, double amplitude);

  // 0 at the center, 1 on the boundary.
  double normalized_radius(Point p) const;
  bool contains(Point p) const { return normalized_radius(p) < 1.0; }
  double profile(double s) const;
  double value(Point p) const { return base + profile(normalized_radius(p)); }

  // Boundary point, outward unit normal and curvature at parameter t in [0, 2pi).
  Point boundary_point(double t) const;
  Point outward_normal(double t) const;
  double curvature(double t) const;

  // Parameters t along origin + t*dir where the ray crosses the boundary (0 or 2 values, ascending).
  std::vector<double> ray_crossings(Point origin, Point dir) const;
  // Half-widths of the axis-aligned bounding box.
  Point half_extent() const;
  double area() const;
};

struct Phantom {
  double a0 = 1.0;
  double lower = 0.5;
  double upper = 2.5;
  double d_margin = 0.15;
  std::vector<Inclusion> inclusions;

  // Throws ValidationError when the phantom is outside the admissible class.
  void validate() const;
  double eval(Point p) const;
  // Index of the inclusion containing p, or -1.
  int inclusion_at(Point p) const;
  std::size_t count() const { return inclusions.size(); }
};

ScalarField sample(const Phantom& phantom, const Grid& grid);
ScalarField sample_displaced(const Phantom& phantom, const Grid& grid, const VectorField& disp);

struct HConditionOptions {
  double delta = 5.0 * 3.14159265358979323846 / 180.0;
  double curvature_tolerance = 1e-3;
  int samples_per_inclusion = 4096;
};

bool check_H_condition(const Phantom& phantom, Point y, double r, double eta, const HConditionOptions& opt = {});

// Reference phantom and named presets: empty, disk, two-disk, ellipse, random.
Phantom reference_phantom();
Phantom phantom_preset(const std::string& name, std::uint64_t seed = 1);

Phantom parse_phantom_json(const std::string& text);
std::string phantom_to_json(const Phantom& phantom);
Phantom load_phantom(const std::string& path);
void save_phantom(const std::string& path, const Phantom& phantom);

}  // namespace aorecon
