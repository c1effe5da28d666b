#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aorecon/fields.hpp"
#include "aorecon/phantom.hpp"

namespace aorecon {

// Nodes where |grad psi| h exceeds the threshold (Otsu on the histogram when none is given).
Mask detect_edges(const ScalarField& psi, std::optional<double> threshold = std::nullopt);
// Otsu threshold of a sample; nullopt when all values are equal.
std::optional<double> otsu_threshold(const std::vector<double>& values, int bins = 256);

struct InclusionMask {
  Grid grid;
  Mask mask;
  int label = 0;
  std::vector<std::size_t> boundary;  // mask nodes with a 4-neighbour outside
  std::size_t clipped = 0;            // nodes removed by clipping to D

  std::size_t area_nodes() const;
  Point centroid() const;
};

struct SegmentationOptions {
  int min_area = 9;
  double d_margin = 0.15;  // D = [d_margin, 1 - d_margin]^2
};

// Closes the edge map, takes enclosed regions of its complement, fills holes, assigns edge
// nodes to the side whose psi level they match, drops small regions and clips to D.
// Without psi the edge band is left out of the masks.
std::vector<InclusionMask> extract_inclusions(const Grid& grid, const Mask& edges, const ScalarField* psi = nullptr,
                                              const SegmentationOptions& options = {});

// Morphological operations with the 3x3 structuring element.
Mask dilate(const Grid& grid, const Mask& m);
Mask erode(const Grid& grid, const Mask& m);
// 4-connected components; labels start at 1, 0 where m is unset.
std::vector<int> label_components(const Grid& grid, const Mask& m, int* count = nullptr);

// Symmetric Hausdorff distance between point sets.
// Mask with its boundary nodes (mask nodes with a 4-neighbour outside).
InclusionMask inclusion_mask(const Grid& grid, const Mask& mask);

double hausdorff(const std::vector<Point>& a, const std::vector<Point>& b);
std::vector<Point> boundary_points(const InclusionMask& m);
std::vector<Point> rim_points(const Inclusion& inc, int samples = 2048);

// P5 image, top row first, 0 background and 255 inclusion.
void write_pgm(const std::string& path, const Grid& grid, const Mask& mask);
Mask read_pgm(const std::string& path, const Grid& grid);
// Field as P5 with min and max mapped affinely to 0 and 255 (constant fields map to 0).
void write_field_pgm(const std::string& path, const ScalarField& f);

}  // namespace aorecon
