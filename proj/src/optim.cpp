#include "dlseg/optim.hpp"

#include <cmath>

namespace dlseg {

Adam::Adam(std::vector<torch::Tensor> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_)
    if (p.grad().defined()) p.mutable_grad().zero_();
}

void Adam::step() {
  torch::NoGradGuard guard;
  ++step_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    m_[i].mul_(opts_.beta1).add_(g, 1.0 - opts_.beta1);
    v_[i].mul_(opts_.beta2).addcmul_(g, g, 1.0 - opts_.beta2);
    if (opts_.weight_decay > 0) p.mul_(1.0 - opts_.lr * opts_.weight_decay);
    auto denom = (v_[i] / bc2).sqrt_().add_(opts_.eps);
    p.addcdiv_(m_[i], denom, -opts_.lr / bc1);
  }
}

void Adam::save(Checkpoint& ckpt, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.add(prefix + "m." + std::to_string(i), m_[i]);
    ckpt.add(prefix + "v." + std::to_string(i), v_[i]);
  }
  ckpt.meta.set(prefix + "steps", std::to_string(step_));
}

void Adam::load(const Checkpoint& ckpt, const std::string& prefix) {
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].copy_(ckpt.get(prefix + "m." + std::to_string(i)));
    v_[i].copy_(ckpt.get(prefix + "v." + std::to_string(i)));
  }
  step_ = ckpt.meta.get_int(prefix + "steps", 0);
}

}  // namespace dlseg
