#pragma once

#include <array>
#include <vector>

namespace mbbr {

// Axis-aligned box, pixel coordinates, image origin top-left.
struct Box {
  double x_lt = 0, y_lt = 0, x_rb = 0, y_rb = 0;

  double width() const { return x_rb - x_lt; }
  double height() const { return y_rb - y_lt; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x_lt + x_rb); }
  double cy() const { return 0.5 * (y_lt + y_rb); }
};

// Throws DataError if the box is degenerate or falls outside [0,W]x[0,H].
void validate_box(const Box& b, double w, double h);

double intersection_area(const Box& a, const Box& b);
double union_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
bool contains_strictly(const Box& outer, const Box& inner);

// (x_lt/W, y_lt/H, x_rb/W, y_rb/H)
std::array<double, 4> normalize_box(const Box& b, double w, double h);

inline constexpr size_t kGeometryDim = 256;
inline constexpr size_t kFreqsPerCoord = 32;
inline constexpr double kFreqBase = 10000.0;

// Each normalized coordinate v expands to 32 interleaved (sin, cos) pairs with
// wavelengths base^(2i/64); the four 64-d blocks are concatenated -> 256-d.
std::vector<double> sinusoidal_embed(const std::array<double, 4>& nb);

std::vector<double> geometry_embedding(const Box& b, double w, double h);

inline constexpr size_t kSpatialDim = 14;

// [norm subject box | norm object box | dx_c/w_s, dy_c/h_s, log(w_o/w_s),
//  log(h_o/h_s) | iou | union area / image area]
std::array<double, kSpatialDim> compute_spatial(const Box& subj, const Box& obj,
                                                double w, double h);

}  // namespace mbbr
