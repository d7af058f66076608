#pragma once

// Conversions between the plain rasters and torch tensors, plus runtime setup.

#include <torch/torch.h>

#include <vector>

#include "dlseg/raster.hpp"

namespace dlseg {

/// Pin torch to a single intra-op thread so results are bit-reproducible.
void configure_torch_runtime();

/// [3, H, W] float32 copy of an image.
torch::Tensor to_tensor(const Image& img);

/// [N, 3, H, W]; every image must share one shape.
torch::Tensor stack_images(const std::vector<Image>& images);

/// [H, W] int64 copy of a mask.
torch::Tensor to_tensor(const LabelMask& mask);

torch::Tensor stack_masks(const std::vector<LabelMask>& masks);

/// Inverse of to_tensor for a [3, H, W] tensor (any float dtype).
Image to_image(const torch::Tensor& chw);

/// [C, H, W] probabilities to an interleaved ProbMap.
ProbMap to_probmap(const torch::Tensor& chw);

}  // namespace dlseg
