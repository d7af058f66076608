#include "dlseg/nets.hpp"

#include "dlseg/errors.hpp"

namespace dlseg::nets {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv(int in, int out, int k, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

torch::nn::Sequential conv_in_relu(int in, int out, int stride = 1) {
  return torch::nn::Sequential(conv(in, out, 3, stride), torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)),
                               torch::nn::ReLU());
}

struct ConvSpec {
  int in, out, stride;
};

/// Flat conv-ReLU stack.
torch::nn::Sequential conv_relu_stack(std::initializer_list<ConvSpec> specs) {
  torch::nn::Sequential seq;
  for (const auto& s : specs) {
    seq->push_back(conv(s.in, s.out, 3, s.stride));
    seq->push_back(torch::nn::ReLU());
  }
  return seq;
}

torch::Tensor upsample_to(const torch::Tensor& x, const torch::Tensor& like) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{like.size(2), like.size(3)})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int ch) {
    a_ = register_module("a", conv_in_relu(ch, ch));
    b_ = register_module("b", conv(ch, ch, 3));
    norm_ = register_module("norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(ch).affine(true)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return x + norm_(b_(a_->forward(x))); }

 private:
  torch::nn::Sequential a_{nullptr};
  torch::nn::Conv2d b_{nullptr};
  torch::nn::InstanceNorm2d norm_{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace

LightGeneratorImpl::LightGeneratorImpl(int width, int blocks) {
  stem_ = register_module("stem", conv_in_relu(3, width));
  down1_ = register_module("down1", conv_in_relu(width, 2 * width, 2));
  down2_ = register_module("down2", conv_in_relu(2 * width, 4 * width, 2));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < blocks; ++i) blocks_->push_back(ResidualBlock(4 * width));
  up1_ = register_module("up1", conv_in_relu(4 * width, 2 * width));
  up2_ = register_module("up2", conv_in_relu(2 * width, width));
  out_ = register_module("out", conv(width, 3, 3));
  torch::NoGradGuard guard;
  out_->weight.zero_();
  out_->bias.zero_();
}

torch::Tensor LightGeneratorImpl::forward(const torch::Tensor& x) {
  auto s = stem_->forward(normalize_input(x));
  auto d1 = down1_->forward(s);
  auto h = down2_->forward(d1);
  for (auto& block : *blocks_) h = block->as<ResidualBlock>()->forward(h);
  h = up1_->forward(upsample_to(h, d1));
  h = up2_->forward(upsample_to(h, s));
  return torch::tanh(out_(h));
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int width) {
  auto lrelu = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
  auto down = [](int in, int out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1)); };
  body_ = register_module("body", torch::nn::Sequential(down(3, width), lrelu(), down(width, 2 * width), lrelu(),
                                                        down(2 * width, 4 * width), lrelu(), conv(4 * width, 1, 3)));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) { return body_->forward(normalize_input(x)); }

torch::Tensor PatchDiscriminatorImpl::probability(const torch::Tensor& x) {
  return torch::sigmoid(forward(x)).mean({1, 2, 3});
}

ToySegNet::ToySegNet(int classes, int width) {
  stage1_ = register_module("stage1", conv_relu_stack({{3, width, 2}, {width, width, 1}}));
  stage2_ = register_module("stage2", conv_relu_stack({{width, 2 * width, 2}, {2 * width, 2 * width, 1}}));
  stage3_ = register_module("stage3", conv_relu_stack({{2 * width, 3 * width, 2}, {3 * width, 3 * width, 1}}));
  head3_ = register_module("head3", conv(3 * width, classes, 1));
  head2_ = register_module("head2", conv(2 * width, classes, 1));
}

torch::Tensor ToySegNet::forward(const torch::Tensor& x) {
  auto f1 = stage1_->forward(normalize_input(x));
  auto f2 = stage2_->forward(f1);
  auto f3 = stage3_->forward(f2);
  auto logits = upsample_to(head3_(f3), f2) + head2_(f2);
  return upsample_to(logits, x);
}

std::shared_ptr<SegNetwork> make_seg_network(const std::string& arch, int classes, int width) {
  if (classes < 2) throw ConfigError("a segmentation model needs at least two classes");
  if (arch == "toy") return std::make_shared<ToySegNet>(classes, width);
  throw ConfigError("unknown segmentation backbone '" + arch + "' (available: toy)");
}

DetectorNetImpl::DetectorNetImpl(int anchors_per_location, int width) : anchors_(anchors_per_location) {
  trunk_ = register_module("trunk", conv_relu_stack({{3, width / 2, 2}, {width / 2, width, 2}, {width, width, 2}, {width, width, 1}}));
  cls_ = register_module("cls", conv(width, anchors_, 1));
  reg_ = register_module("reg", conv(width, 4 * anchors_, 1));
  torch::NoGradGuard guard;
  torch::nn::init::normal_(reg_->weight, 0.0, 0.01);
  reg_->bias.zero_();
}

std::pair<torch::Tensor, torch::Tensor> DetectorNetImpl::forward(const torch::Tensor& x) {
  auto f = trunk_->forward(normalize_input(x));
  const auto n = f.size(0), h = f.size(2), w = f.size(3);
  auto cls = cls_(f).permute({0, 2, 3, 1}).contiguous();
  auto reg = reg_(f).view({n, anchors_, 4, h, w}).permute({0, 3, 4, 1, 2}).contiguous();
  return {cls, reg};
}

int64_t parameter_count(const torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace dlseg::nets
