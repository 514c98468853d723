#include "mbbr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mbbr/errors.hpp"

namespace mbbr::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

void finalize_values(const char* op, std::vector<double>& v) {
  if (precision() == Precision::f32)
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  if (finite_checks())
    for (double x : v)
      if (!std::isfinite(x))
        throw NumericError(std::string(op) + ": produced a non-finite value");
}

bool wants_grad(std::initializer_list<const Tensor*> parents) {
  if (!Tape::active()) return false;
  for (const Tensor* p : parents)
    if (p->d->requires_grad) return true;
  return false;
}

bool wants_grad(const std::vector<const Tensor*>& parents) {
  if (!Tape::active()) return false;
  for (const Tensor* p : parents)
    if (p->d->requires_grad) return true;
  return false;
}

Tensor make_out(const char* op, Shape shape, std::vector<double> v, bool requires_grad) {
  finalize_values(op, v);
  Tensor t;
  t.d = std::make_shared<TensorData>();
  t.d->shape = std::move(shape);
  t.d->values = std::move(v);
  t.d->requires_grad = requires_grad;
  t.d->is_leaf = false;
  return t;
}

void check_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  check_defined(op, a);
  check_defined(op, b);
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> v(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  bool rg = wants_grad({&a, &b});
  Tensor out = make_out("add", a.shape(), std::move(v), rg);
  if (rg) {
    auto an = a.d, bn = b.d, on = out.d;
    Tape::active()->record({on, {an, bn}, [an, bn, on] {
      if (an->requires_grad)
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += on->grad[i];
    }});
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> v(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  bool rg = wants_grad({&a, &b});
  Tensor out = make_out("sub", a.shape(), std::move(v), rg);
  if (rg) {
    auto an = a.d, bn = b.d, on = out.d;
    Tape::active()->record({on, {an, bn}, [an, bn, on] {
      if (an->requires_grad)
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] -= on->grad[i];
    }});
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> v(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  bool rg = wants_grad({&a, &b});
  Tensor out = make_out("mul", a.shape(), std::move(v), rg);
  if (rg) {
    auto an = a.d, bn = b.d, on = out.d;
    Tape::active()->record({on, {an, bn}, [an, bn, on] {
      if (an->requires_grad)
        for (size_t i = 0; i < an->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->values[i];
      if (bn->requires_grad)
        for (size_t i = 0; i < bn->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->values[i];
    }});
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  check_defined("scale", a);
  std::vector<double> v(a.size());
  const auto& av = a.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * s;
  bool rg = wants_grad({&a});
  Tensor out = make_out("scale", a.shape(), std::move(v), rg);
  if (rg) {
    auto an = a.d, on = out.d;
    Tape::active()->record({on, {an}, [an, on, s] {
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i] * s;
    }});
  }
  return out;
}

Tensor relu(const Tensor& x) {
  check_defined("relu", x);
  std::vector<double> v(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  bool rg = wants_grad({&x});
  Tensor out = make_out("relu", x.shape(), std::move(v), rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    Tape::active()->record({on, {xn}, [xn, on] {
      for (size_t i = 0; i < xn->grad.size(); ++i)
        if (xn->values[i] > 0.0) xn->grad[i] += on->grad[i];
    }});
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  check_defined("gelu", x);
  const double inv_sqrt2 = 0.7071067811865475244;
  const double inv_sqrt2pi = 0.3989422804014326779;
  std::vector<double> v(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
  bool rg = wants_grad({&x});
  Tensor out = make_out("gelu", x.shape(), std::move(v), rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    Tape::active()->record({on, {xn}, [xn, on, inv_sqrt2, inv_sqrt2pi] {
      for (size_t i = 0; i < xn->grad.size(); ++i) {
        double xi = xn->values[i];
        double cdf = 0.5 * (1.0 + std::erf(xi * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
        xn->grad[i] += on->grad[i] * (cdf + xi * pdf);
      }
    }});
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  check_defined("add_bias", x);
  check_defined("add_bias", bias);
  if (bias.ndim() != 1 || x.ndim() < 1 || x.shape().back() != bias.dim(0))
    throw std::invalid_argument("add_bias: x " + shape_str(x.shape()) + " bias " +
                                shape_str(bias.shape()));
  size_t d = bias.dim(0);
  size_t rows = x.size() / d;
  std::vector<double> v(x.size());
  const auto& xv = x.values();
  const auto& bv = bias.values();
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < d; ++c) v[r * d + c] = xv[r * d + c] + bv[c];
  bool rg = wants_grad({&x, &bias});
  Tensor out = make_out("add_bias", x.shape(), std::move(v), rg);
  if (rg) {
    auto xn = x.d, bn = bias.d, on = out.d;
    Tape::active()->record({on, {xn, bn}, [xn, bn, on, rows, d] {
      if (xn->requires_grad)
        for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < d; ++c) bn->grad[c] += on->grad[r * d + c];
    }});
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined("matmul", a);
  check_defined("matmul", b);
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> v(m * n);
  {
    CMap A(a.values().data(), m, k);
    CMap B(b.values().data(), k, n);
    MMap C(v.data(), m, n);
    C.noalias() = A * B;
  }
  bool rg = wants_grad({&a, &b});
  Tensor out = make_out("matmul", {m, n}, std::move(v), rg);
  if (rg) {
    auto an = a.d, bn = b.d, on = out.d;
    Tape::active()->record({on, {an, bn}, [an, bn, on, m, k, n] {
      CMap G(on->grad.data(), m, n);
      if (an->requires_grad) {
        CMap B(bn->values.data(), k, n);
        MMap GA(an->grad.data(), m, k);
        GA.noalias() += G * B.transpose();
      }
      if (bn->requires_grad) {
        CMap A(an->values.data(), m, k);
        MMap GB(bn->grad.data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    }});
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  check_defined("bmm", a);
  check_defined("bmm", b);
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("bmm: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2);
  size_t n = transpose_b ? b.dim(1) : b.dim(2);
  size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k)
    throw std::invalid_argument("bmm: inner dim mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()) +
                                (transpose_b ? " (b transposed)" : ""));
  std::vector<double> v(bs * m * n);
  for (size_t i = 0; i < bs; ++i) {
    CMap A(a.values().data() + i * m * k, m, k);
    MMap C(v.data() + i * m * n, m, n);
    if (transpose_b) {
      CMap B(b.values().data() + i * n * k, n, k);
      C.noalias() = A * B.transpose();
    } else {
      CMap B(b.values().data() + i * k * n, k, n);
      C.noalias() = A * B;
    }
  }
  bool rg = wants_grad({&a, &b});
  Tensor out = make_out("bmm", {bs, m, n}, std::move(v), rg);
  if (rg) {
    auto an = a.d, bn = b.d, on = out.d;
    Tape::active()->record({on, {an, bn}, [an, bn, on, bs, m, k, n, transpose_b] {
      for (size_t i = 0; i < bs; ++i) {
        CMap G(on->grad.data() + i * m * n, m, n);
        if (transpose_b) {
          // C = A * B^T with B stored [n,k]
          if (an->requires_grad) {
            CMap B(bn->values.data() + i * n * k, n, k);
            MMap GA(an->grad.data() + i * m * k, m, k);
            GA.noalias() += G * B;
          }
          if (bn->requires_grad) {
            CMap A(an->values.data() + i * m * k, m, k);
            MMap GB(bn->grad.data() + i * n * k, n, k);
            GB.noalias() += G.transpose() * A;
          }
        } else {
          if (an->requires_grad) {
            CMap B(bn->values.data() + i * k * n, k, n);
            MMap GA(an->grad.data() + i * m * k, m, k);
            GA.noalias() += G * B.transpose();
          }
          if (bn->requires_grad) {
            CMap A(an->values.data() + i * m * k, m, k);
            MMap GB(bn->grad.data() + i * k * n, k, n);
            GB.noalias() += A.transpose() * G;
          }
        }
      }
    }});
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  check_defined("softmax", x);
  int nd = static_cast<int>(x.ndim());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd)
    throw std::invalid_argument("softmax: axis out of range for " + shape_str(x.shape()));
  const auto& s = x.shape();
  size_t n = s[axis];
  size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < nd; ++i) inner *= s[i];
  for (int i = 0; i < axis; ++i) outer *= s[i];

  std::vector<double> v(x.size());
  const auto& xv = x.values();
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double denom = 0.0;
      for (size_t j = 0; j < n; ++j) {
        double e = std::exp(xv[base + j * inner] - mx);
        v[base + j * inner] = e;
        denom += e;
      }
      for (size_t j = 0; j < n; ++j) v[base + j * inner] /= denom;
    }
  }
  bool rg = wants_grad({&x});
  Tensor out = make_out("softmax", x.shape(), std::move(v), rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    Tape::active()->record({on, {xn}, [xn, on, outer, n, inner] {
      for (size_t o = 0; o < outer; ++o) {
        for (size_t in = 0; in < inner; ++in) {
          size_t base = o * n * inner + in;
          double dot = 0.0;
          for (size_t j = 0; j < n; ++j) {
            size_t idx = base + j * inner;
            dot += on->grad[idx] * on->values[idx];
          }
          for (size_t j = 0; j < n; ++j) {
            size_t idx = base + j * inner;
            xn->grad[idx] += on->values[idx] * (on->grad[idx] - dot);
          }
        }
      }
    }});
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check_defined("layer_norm", x);
  check_defined("layer_norm", gain);
  check_defined("layer_norm", bias);
  if (x.ndim() < 1) throw std::invalid_argument("layer_norm: scalar input");
  size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
    throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
  size_t rows = x.size() / d;

  std::vector<double> v(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (size_t c = 0; c < d; ++c) {
      double t = row[c] - mu;
      var += t * t;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (size_t c = 0; c < d; ++c) {
      double xh = (row[c] - mu) * is;
      (*xhat)[r * d + c] = xh;
      v[r * d + c] = xh * gv[c] + bv[c];
    }
  }
  bool rg = wants_grad({&x, &gain, &bias});
  Tensor out = make_out("layer_norm", x.shape(), std::move(v), rg);
  if (rg) {
    auto xn = x.d, gn = gain.d, bn = bias.d, on = out.d;
    Tape::active()->record({on, {xn, gn, bn}, [xn, gn, bn, on, xhat, inv_std, rows, d] {
      for (size_t r = 0; r < rows; ++r) {
        const double* dy = on->grad.data() + r * d;
        const double* xh = xhat->data() + r * d;
        if (gn->requires_grad)
          for (size_t c = 0; c < d; ++c) gn->grad[c] += dy[c] * xh[c];
        if (bn->requires_grad)
          for (size_t c = 0; c < d; ++c) bn->grad[c] += dy[c];
        if (xn->requires_grad) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (size_t c = 0; c < d; ++c) {
            double dxh = dy[c] * gn->values[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[c];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          double is = (*inv_std)[r];
          for (size_t c = 0; c < d; ++c) {
            double dxh = dy[c] * gn->values[c];
            xn->grad[r * d + c] += is * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
          }
        }
      }
    }});
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  check_defined("reshape", x);
  if (shape_numel(new_shape) != x.size())
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " +
                                shape_str(new_shape) + " changes element count");
  std::vector<double> v = x.values();
  bool rg = wants_grad({&x});
  Tensor out = make_out("reshape", std::move(new_shape), std::move(v), rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    Tape::active()->record({on, {xn}, [xn, on] {
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
    }});
  }
  return out;
}

Tensor swap_axes(const Tensor& x, size_t i, size_t j) {
  check_defined("swap_axes", x);
  size_t nd = x.ndim();
  if (i >= nd || j >= nd)
    throw std::invalid_argument("swap_axes: axes out of range for " + shape_str(x.shape()));
  const auto& s = x.shape();
  Shape os = s;
  std::swap(os[i], os[j]);

  // map_to_out[flat index in x] = flat index in out
  auto map_to_out = std::make_shared<std::vector<size_t>>(x.size());
  std::vector<size_t> xstr(nd, 1), ostr(nd, 1);
  for (size_t k = nd; k-- > 1;) {
    xstr[k - 1] = xstr[k] * s[k];
    ostr[k - 1] = ostr[k] * os[k];
  }
  std::vector<double> v(x.size());
  const auto& xv = x.values();
  std::vector<size_t> coord(nd);
  for (size_t f = 0; f < x.size(); ++f) {
    size_t rem = f;
    for (size_t k = 0; k < nd; ++k) {
      coord[k] = rem / xstr[k];
      rem %= xstr[k];
    }
    std::swap(coord[i], coord[j]);
    size_t of = 0;
    for (size_t k = 0; k < nd; ++k) of += coord[k] * ostr[k];
    v[of] = xv[f];
    (*map_to_out)[f] = of;
  }
  bool rg = wants_grad({&x});
  Tensor out = make_out("swap_axes", std::move(os), std::move(v), rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    Tape::active()->record({on, {xn}, [xn, on, map_to_out] {
      for (size_t f = 0; f < xn->grad.size(); ++f)
        xn->grad[f] += on->grad[(*map_to_out)[f]];
    }});
  }
  return out;
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_lastdim: no inputs");
  for (const Tensor& p : parts) check_defined("concat_lastdim", p);
  const Shape& s0 = parts[0].shape();
  if (s0.empty()) throw std::invalid_argument("concat_lastdim: scalar input");
  size_t total_last = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size() ||
        !std::equal(s.begin(), s.end() - 1, s0.begin()))
      throw std::invalid_argument("concat_lastdim: leading dims differ: " +
                                  shape_str(s0) + " vs " + shape_str(s));
    total_last += s.back();
  }
  size_t rows = parts[0].size() / s0.back();
  Shape os = s0;
  os.back() = total_last;

  std::vector<double> v(rows * total_last);
  std::vector<size_t> lasts, offsets;
  size_t off = 0;
  for (const Tensor& p : parts) {
    size_t ld = p.shape().back();
    lasts.push_back(ld);
    offsets.push_back(off);
    const auto& pv = p.values();
    for (size_t r = 0; r < rows; ++r)
      std::copy(pv.begin() + r * ld, pv.begin() + (r + 1) * ld,
                v.begin() + r * total_last + off);
    off += ld;
  }
  bool needs = false;
  if (Tape::active())
    for (const Tensor& p : parts)
      if (p.requires_grad()) needs = true;
  Tensor out = make_out("concat_lastdim", std::move(os), std::move(v), needs);
  if (needs) {
    std::vector<std::shared_ptr<TensorData>> pns;
    for (const Tensor& p : parts) pns.push_back(p.d);
    auto on = out.d;
    Tape::active()->record({on, pns, [pns, on, lasts, offsets, rows, total_last] {
      for (size_t pi = 0; pi < pns.size(); ++pi) {
        if (!pns[pi]->requires_grad) continue;
        size_t ld = lasts[pi], off2 = offsets[pi];
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < ld; ++c)
            pns[pi]->grad[r * ld + c] += on->grad[r * total_last + off2 + c];
      }
    }});
  }
  return out;
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  return concat_lastdim(std::vector<Tensor>{a, b});
}

Tensor gather_rows(const Tensor& x, std::vector<size_t> indices) {
  check_defined("gather_rows", x);
  if (x.ndim() != 2)
    throw std::invalid_argument("gather_rows: expects 2-d input, got " +
                                shape_str(x.shape()));
  size_t r = x.dim(0), c = x.dim(1);
  for (size_t idx : indices)
    if (idx >= r)
      throw std::out_of_range("gather_rows: index " + std::to_string(idx) +
                              " out of " + std::to_string(r));
  std::vector<double> v(indices.size() * c);
  const auto& xv = x.values();
  for (size_t k = 0; k < indices.size(); ++k)
    std::copy(xv.begin() + indices[k] * c, xv.begin() + (indices[k] + 1) * c,
              v.begin() + k * c);
  bool rg = wants_grad({&x});
  Tensor out = make_out("gather_rows", {indices.size(), c}, std::move(v), rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    auto idx = std::make_shared<std::vector<size_t>>(std::move(indices));
    Tape::active()->record({on, {xn}, [xn, on, idx, c] {
      for (size_t k = 0; k < idx->size(); ++k)
        for (size_t j = 0; j < c; ++j)
          xn->grad[(*idx)[k] * c + j] += on->grad[k * c + j];
    }});
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_rows: no parts");
  size_t cols = 0, rows = 0;
  for (const Tensor& p : parts) {
    check_defined("stack_rows", p);
    if (p.ndim() != 2)
      throw std::invalid_argument("stack_rows: parts must be rank 2, got " +
                                  shape_str(p.shape()));
    if (cols == 0)
      cols = p.dim(1);
    else if (p.dim(1) != cols)
      throw std::invalid_argument("stack_rows: column mismatch");
    rows += p.dim(0);
  }
  std::vector<double> v;
  v.reserve(rows * cols);
  for (const Tensor& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());

  std::vector<const Tensor*> refs;
  for (const Tensor& p : parts) refs.push_back(&p);
  bool rg = wants_grad(refs);
  Tensor out = make_out("stack_rows", {rows, cols}, std::move(v), rg);
  if (rg) {
    std::vector<std::shared_ptr<TensorData>> row_parents;
    for (const Tensor& p : parts) row_parents.push_back(p.d);
    auto on = out.d;
    Tape::active()->record({on, row_parents, [row_parents, on] {
      size_t offset = 0;
      for (const auto& pn : row_parents) {
        size_t n = pn->values.size();
        if (pn->requires_grad)
          for (size_t i = 0; i < n; ++i) pn->grad[i] += on->grad[offset + i];
        offset += n;
      }
    }});
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  check_defined("sum_all", x);
  double s = 0.0;
  for (double v : x.values()) s += v;
  bool rg = wants_grad({&x});
  Tensor out = make_out("sum_all", {1}, {s}, rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    Tape::active()->record({on, {xn}, [xn, on] {
      double g = on->grad[0];
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    }});
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  check_defined("mean_all", x);
  if (x.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
  double s = 0.0;
  for (double v : x.values()) s += v;
  double n = static_cast<double>(x.size());
  bool rg = wants_grad({&x});
  Tensor out = make_out("mean_all", {1}, {s / n}, rg);
  if (rg) {
    auto xn = x.d, on = out.d;
    Tape::active()->record({on, {xn}, [xn, on, n] {
      double g = on->grad[0] / n;
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    }});
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape("mse_loss", pred, target);
  if (pred.size() == 0) throw std::invalid_argument("mse_loss: empty tensors");
  const auto& pv = pred.values();
  const auto& tv = target.values();
  double s = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    double dvi = pv[i] - tv[i];
    s += dvi * dvi;
  }
  double n = static_cast<double>(pred.size());
  bool rg = wants_grad({&pred, &target});
  Tensor out = make_out("mse_loss", {1}, {s / n}, rg);
  if (rg) {
    auto pn = pred.d, tn = target.d, on = out.d;
    Tape::active()->record({on, {pn, tn}, [pn, tn, on, n] {
      double g = on->grad[0] * 2.0 / n;
      if (pn->requires_grad)
        for (size_t i = 0; i < pn->grad.size(); ++i)
          pn->grad[i] += g * (pn->values[i] - tn->values[i]);
      if (tn->requires_grad)
        for (size_t i = 0; i < tn->grad.size(); ++i)
          tn->grad[i] -= g * (pn->values[i] - tn->values[i]);
    }});
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<size_t>& labels) {
  check_defined("cross_entropy", logits);
  if (logits.ndim() != 2)
    throw std::invalid_argument("cross_entropy: logits must be [N,C], got " +
                                shape_str(logits.shape()));
  size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  for (size_t y : labels)
    if (y >= c) throw std::out_of_range("cross_entropy: label " + std::to_string(y));
  if (n == 0) throw std::invalid_argument("cross_entropy: empty batch");

  auto probs = std::make_shared<std::vector<double>>(n * c);
  const auto& lv = logits.values();
  double total = 0.0;
  for (size_t r = 0; r < n; ++r) {
    const double* row = lv.data() + r * c;
    double mx = row[0];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (size_t j = 0; j < c; ++j) {
      double e = std::exp(row[j] - mx);
      (*probs)[r * c + j] = e;
      denom += e;
    }
    for (size_t j = 0; j < c; ++j) (*probs)[r * c + j] /= denom;
    total += std::log(denom) + mx - row[labels[r]];
  }
  bool rg = wants_grad({&logits});
  Tensor out = make_out("cross_entropy", {1}, {total / static_cast<double>(n)}, rg);
  if (rg) {
    auto ln = logits.d, on = out.d;
    auto lab = std::make_shared<std::vector<size_t>>(labels);
    Tape::active()->record({on, {ln}, [ln, on, probs, lab, n, c] {
      double g = on->grad[0] / static_cast<double>(n);
      for (size_t r = 0; r < n; ++r)
        for (size_t j = 0; j < c; ++j)
          ln->grad[r * c + j] +=
              g * ((*probs)[r * c + j] - (j == (*lab)[r] ? 1.0 : 0.0));
    }});
  }
  return out;
}

Tensor detach(const Tensor& x) {
  check_defined("detach", x);
  return Tensor::from_values(x.shape(), x.values(), false);
}

}  // namespace mbbr::ad
