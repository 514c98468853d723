#include "mbbr/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "mbbr/errors.hpp"

namespace mbbr::ad {

void ParamSet::add(std::string name, Tensor t) {
  if (!t.defined()) throw std::invalid_argument("ParamSet::add: undefined tensor");
  if (contains(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
  items_.emplace_back(std::move(name), std::move(t));
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  throw std::out_of_range("ParamSet: no parameter named " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  throw std::out_of_range("ParamSet: no parameter named " + name);
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

size_t ParamSet::total_elements() const {
  size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

Adam::Adam(ParamSet& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    size_t n = params_.items()[i].second.size();
    m_[i].assign(n, 0.0);
    v_[i].assign(n, 0.0);
  }
}

void Adam::zero_grad() { params_.zero_grad(); }

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& [name, p] = params_.items()[i];
    if (!p.has_grad()) continue;
    auto& theta = p.d->values;
    const auto& grad = p.d->grad;
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < theta.size(); ++j) {
      double g = grad[j];
      if (!cfg_.decoupled_decay) g += cfg_.weight_decay * theta[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      theta[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      if (cfg_.decoupled_decay) theta[j] -= cfg_.lr * cfg_.weight_decay * theta[j];
      if (finite_checks() && !std::isfinite(theta[j]))
        throw NumericError("Adam: parameter " + name + " became non-finite");
    }
  }
}

}  // namespace mbbr::ad
