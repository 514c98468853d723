#include "mbbr/geometry.hpp"

#include <cmath>
#include <string>

#include "mbbr/errors.hpp"

namespace mbbr {

namespace {
std::string box_str(const Box& b) {
  return "[" + std::to_string(b.x_lt) + "," + std::to_string(b.y_lt) + "," +
         std::to_string(b.x_rb) + "," + std::to_string(b.y_rb) + "]";
}
}  // namespace

void validate_box(const Box& b, double w, double h) {
  if (!(w > 0) || !(h > 0))
    throw DataError("image dims must be positive, got " + std::to_string(w) + "x" +
                    std::to_string(h));
  if (!std::isfinite(b.x_lt) || !std::isfinite(b.y_lt) || !std::isfinite(b.x_rb) ||
      !std::isfinite(b.y_rb))
    throw DataError("box has non-finite coordinates " + box_str(b));
  if (!(b.x_lt < b.x_rb) || !(b.y_lt < b.y_rb))
    throw DataError("degenerate box " + box_str(b));
  if (b.x_lt < 0 || b.y_lt < 0 || b.x_rb > w || b.y_rb > h)
    throw DataError("box " + box_str(b) + " outside image " + std::to_string(w) +
                    "x" + std::to_string(h));
}

double intersection_area(const Box& a, const Box& b) {
  double iw = std::min(a.x_rb, b.x_rb) - std::max(a.x_lt, b.x_lt);
  double ih = std::min(a.y_rb, b.y_rb) - std::max(a.y_lt, b.y_lt);
  if (iw <= 0 || ih <= 0) return 0.0;
  return iw * ih;
}

double union_area(const Box& a, const Box& b) {
  return a.area() + b.area() - intersection_area(a, b);
}

double iou(const Box& a, const Box& b) {
  double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / union_area(a, b);
}

bool contains_strictly(const Box& outer, const Box& inner) {
  return outer.x_lt < inner.x_lt && outer.y_lt < inner.y_lt &&
         outer.x_rb > inner.x_rb && outer.y_rb > inner.y_rb;
}

std::array<double, 4> normalize_box(const Box& b, double w, double h) {
  validate_box(b, w, h);
  return {b.x_lt / w, b.y_lt / h, b.x_rb / w, b.y_rb / h};
}

std::vector<double> sinusoidal_embed(const std::array<double, 4>& nb) {
  std::vector<double> out(kGeometryDim);
  size_t pos = 0;
  for (double v : nb) {
    for (size_t i = 0; i < kFreqsPerCoord; ++i) {
      double wavelength =
          std::pow(kFreqBase, (2.0 * static_cast<double>(i)) /
                                  (2.0 * static_cast<double>(kFreqsPerCoord)));
      out[pos++] = std::sin(v / wavelength);
      out[pos++] = std::cos(v / wavelength);
    }
  }
  return out;
}

std::vector<double> geometry_embedding(const Box& b, double w, double h) {
  return sinusoidal_embed(normalize_box(b, w, h));
}

std::array<double, kSpatialDim> compute_spatial(const Box& subj, const Box& obj,
                                                double w, double h) {
  auto ns = normalize_box(subj, w, h);
  auto no = normalize_box(obj, w, h);
  std::array<double, kSpatialDim> f{};
  for (size_t i = 0; i < 4; ++i) f[i] = ns[i];
  for (size_t i = 0; i < 4; ++i) f[4 + i] = no[i];
  f[8] = (obj.cx() - subj.cx()) / subj.width();
  f[9] = (obj.cy() - subj.cy()) / subj.height();
  f[10] = std::log(obj.width() / subj.width());
  f[11] = std::log(obj.height() / subj.height());
  f[12] = iou(subj, obj);
  f[13] = union_area(subj, obj) / (w * h);
  return f;
}

}  // namespace mbbr
