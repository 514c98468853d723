#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mbbr::ad {

enum class Precision { f64, f32 };

// Global execution settings. Not thread-local: the trainer is single threaded.
void set_precision(Precision p);
Precision precision();
void set_finite_checks(bool on);
bool finite_checks();

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until touched by backward
  bool requires_grad = false;
  bool is_leaf = true;
};

// Value + shared autodiff node. Copies alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);

  bool defined() const { return d != nullptr; }
  const Shape& shape() const { return node().shape; }
  size_t ndim() const { return node().shape.size(); }
  size_t size() const { return node().values.size(); }
  size_t dim(size_t i) const;

  const std::vector<double>& values() const { return node().values; }
  // Leaf mutation (parameter updates, data staging). Throws on non-leaf nodes:
  // interior values feed recorded backward closures.
  std::vector<double>& values_mut();

  bool requires_grad() const { return node().requires_grad; }
  bool has_grad() const { return d && !d->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  double scalar() const;  // size-1 tensors only

  std::shared_ptr<TensorData> d;

 private:
  TensorData& node() const;
};

struct TapeEntry {
  std::shared_ptr<TensorData> out;
  std::vector<std::shared_ptr<TensorData>> parents;
  std::function<void()> backward;
};

// Records ops in creation order; creation order is a topological order, so the
// reverse sweep sees every consumer before its producer. One backward per tape
// unless reset() is called.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(TapeEntry entry);
  void backward(const Tensor& loss);
  void reset();
  size_t size() const { return entries_.size(); }

  static Tape* active();

 private:
  std::vector<TapeEntry> entries_;
  bool backward_done_ = false;
  Tape* prev_ = nullptr;
};

// Allocates node.grad as zeros if empty.
void ensure_grad(TensorData& node);

}  // namespace mbbr::ad
