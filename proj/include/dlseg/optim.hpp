#pragma once

// Adam with explicit, checkpointable state so resumed runs continue bit-identically.

#include <torch/torch.h>

#include <string>
#include <vector>

#include "dlseg/checkpoint.hpp"

namespace dlseg {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW style)
};

class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, AdamOptions opts);

  void zero_grad();
  void step();

  long steps() const { return step_; }
  const AdamOptions& options() const { return opts_; }

  void save(Checkpoint& ckpt, const std::string& prefix) const;
  void load(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> m_;
  std::vector<torch::Tensor> v_;
  AdamOptions opts_;
  long step_ = 0;
};

}  // namespace dlseg
