#pragma once

// Small convolutional networks used by the light-adaptation, segmentation and
// proposal modules. All take [N, 3, H, W] inputs in [0, 1] and accept any H, W >= 8.

#include <torch/torch.h>

#include <memory>
#include <string>

namespace dlseg::nets {

/// Residual encoder-decoder emitting a per-pixel RGB shift in [-1, 1].
/// The output convolution starts at zero, so a fresh generator is the identity shift.
class LightGeneratorImpl : public torch::nn::Module {
 public:
  LightGeneratorImpl(int width = 8, int blocks = 6);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential stem_{nullptr}, down1_{nullptr}, down2_{nullptr}, up1_{nullptr}, up2_{nullptr};
  torch::nn::ModuleList blocks_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(LightGenerator);

/// Four strided convolutions producing patch logits [N, 1, h, w].
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(int width = 16);
  torch::Tensor forward(const torch::Tensor& x);
  /// Per-image day probability: mean of the patch sigmoids, shape [N].
  torch::Tensor probability(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

/// Interface every segmentation backbone implements: logits [N, C, H, W] at input resolution.
class SegNetwork : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  virtual int downsampling() const = 0;
};

/// Three stride-2 stages (1/2, 1/4, 1/8) with a 1/4-resolution skip and bilinear decoding.
class ToySegNet : public SegNetwork {
 public:
  ToySegNet(int classes, int width = 16);
  torch::Tensor forward(const torch::Tensor& x) override;
  int downsampling() const override { return 8; }

 private:
  torch::nn::Sequential stage1_{nullptr}, stage2_{nullptr}, stage3_{nullptr};
  torch::nn::Conv2d head3_{nullptr}, head2_{nullptr};
};

/// Build a backbone by name; only "toy" ships. Unknown names are ConfigErrors.
std::shared_ptr<SegNetwork> make_seg_network(const std::string& arch, int classes, int width);

/// Stride-8 trunk with per-anchor objectness and box-regression heads.
class DetectorNetImpl : public torch::nn::Module {
 public:
  DetectorNetImpl(int anchors_per_location, int width = 32);
  /// Returns {objectness logits [N, h, w, A], regression [N, h, w, A, 4]}.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);

 private:
  int anchors_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d cls_{nullptr}, reg_{nullptr};
};
TORCH_MODULE(DetectorNet);

/// Map [0, 1] pixels onto a roughly zero-mean unit-range input.
inline torch::Tensor normalize_input(const torch::Tensor& x) { return (x - 0.5) * 4.0; }

int64_t parameter_count(const torch::nn::Module& m);

}  // namespace dlseg::nets
