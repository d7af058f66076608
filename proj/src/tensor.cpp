#include "dlseg/tensor.hpp"

#include "dlseg/errors.hpp"

namespace dlseg {

void configure_torch_runtime() { torch::set_num_threads(1); }

torch::Tensor to_tensor(const Image& img) {
  auto hwc = torch::from_blob(const_cast<float*>(img.data.data()), {img.height, img.width, 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

torch::Tensor stack_images(const std::vector<Image>& images) {
  if (images.empty()) throw ValidationError("cannot stack an empty image list");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) {
    if (img.height != images[0].height || img.width != images[0].width)
      throw ValidationError("images in a batch must share one shape");
    parts.push_back(to_tensor(img));
  }
  return torch::stack(parts);
}

torch::Tensor to_tensor(const LabelMask& mask) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(mask.data.data()), {mask.height, mask.width}, torch::kUInt8);
  return t.to(torch::kInt64);
}

torch::Tensor stack_masks(const std::vector<LabelMask>& masks) {
  if (masks.empty()) throw ValidationError("cannot stack an empty mask list");
  std::vector<torch::Tensor> parts;
  for (const auto& m : masks) {
    if (!m.same_shape(masks[0])) throw ValidationError("masks in a batch must share one shape");
    parts.push_back(to_tensor(m));
  }
  return torch::stack(parts);
}

Image to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw ValidationError("expected a [3, H, W] tensor");
  auto hwc = chw.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  Image img(static_cast<int>(chw.size(1)), static_cast<int>(chw.size(2)));
  std::memcpy(img.data.data(), hwc.data_ptr<float>(), img.data.size() * sizeof(float));
  return img;
}

ProbMap to_probmap(const torch::Tensor& chw) {
  if (chw.dim() != 3) throw ValidationError("expected a [C, H, W] tensor");
  auto hwc = chw.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  ProbMap p(static_cast<int>(chw.size(1)), static_cast<int>(chw.size(2)), static_cast<int>(chw.size(0)));
  std::memcpy(p.data.data(), hwc.data_ptr<float>(), p.data.size() * sizeof(float));
  return p;
}

}  // namespace dlseg
