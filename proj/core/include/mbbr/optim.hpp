#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mbbr/tensor.hpp"

namespace mbbr::ad {

// Named parameters in a fixed order. Order matters: the optimizer state, the
// checkpoint layout and the update sequence all follow it.
class ParamSet {
 public:
  void add(std::string name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  size_t size() const { return items_.size(); }
  size_t total_elements() const;

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamConfig {
  double lr = 2e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // false: decay folded into the gradient (classic L2). true: applied directly
  // to the weights after the Adam update.
  bool decoupled_decay = false;
};

class Adam {
 public:
  Adam(ParamSet& params, AdamConfig cfg = {});

  // One update from the gradients currently on the parameters. Parameters that
  // never received a gradient this step are left alone.
  void step();
  void zero_grad();
  int64_t steps_taken() const { return t_; }
  void set_learning_rate(double lr) { cfg_.lr = lr; }
  double learning_rate() const { return cfg_.lr; }

 private:
  ParamSet& params_;
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace mbbr::ad
