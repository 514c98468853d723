#include "mbbr/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace mbbr::ad {

namespace {
Precision g_precision = Precision::f64;
bool g_finite_checks = true;
thread_local Tape* g_active_tape = nullptr;
}  // namespace

void set_precision(Precision p) { g_precision = p; }
Precision precision() { return g_precision; }
void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks() { return g_finite_checks; }

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

TensorData& Tensor::node() const {
  if (!d) throw std::logic_error("use of default-constructed Tensor");
  return *d;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_values(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  size_t n = shape_numel(shape);
  if (values.empty()) values.assign(n, 0.0);
  if (values.size() != n)
    throw std::invalid_argument("from_values: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  Tensor t;
  t.d = std::make_shared<TensorData>();
  t.d->shape = std::move(shape);
  t.d->values = std::move(values);
  t.d->requires_grad = requires_grad;
  t.d->is_leaf = true;
  return t;
}

size_t Tensor::dim(size_t i) const {
  const auto& s = node().shape;
  if (i >= s.size()) throw std::out_of_range("dim index " + std::to_string(i));
  return s[i];
}

std::vector<double>& Tensor::values_mut() {
  TensorData& n = node();
  if (!n.is_leaf) throw std::logic_error("values_mut on non-leaf tensor");
  return n.values;
}

const std::vector<double>& Tensor::grad() const {
  const TensorData& n = node();
  if (n.grad.empty()) throw std::logic_error("tensor has no gradient");
  return n.grad;
}

void Tensor::zero_grad() {
  TensorData& n = node();
  if (!n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

double Tensor::scalar() const {
  const TensorData& n = node();
  if (n.values.size() != 1)
    throw std::invalid_argument("scalar() on tensor of shape " + shape_str(n.shape));
  return n.values[0];
}

void ensure_grad(TensorData& node) {
  if (node.grad.empty()) node.grad.assign(node.values.size(), 0.0);
}

Tape::Tape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(TapeEntry entry) { entries_.push_back(std::move(entry)); }

void Tape::reset() {
  entries_.clear();
  backward_done_ = false;
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_)
    throw std::logic_error("backward already ran on this tape; call reset() first");
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward expects a scalar loss");

  TensorData* root = loss.d.get();
  bool recorded = false;
  for (const auto& e : entries_) {
    if (e.out.get() == root) {
      recorded = true;
      break;
    }
  }
  if (!recorded)
    throw std::invalid_argument("backward: loss was not produced on this tape");

  backward_done_ = true;
  ensure_grad(*root);
  root->grad[0] = 1.0;

  std::unordered_set<TensorData*> needed;
  needed.insert(root);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!needed.count(it->out.get())) continue;
    ensure_grad(*it->out);
    for (const auto& p : it->parents)
      if (p->requires_grad) ensure_grad(*p);
    it->backward();
    for (const auto& p : it->parents)
      if (p->requires_grad) needed.insert(p.get());
  }
}

}  // namespace mbbr::ad
