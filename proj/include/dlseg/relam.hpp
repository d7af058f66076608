#pragma once

// Light adaptation: a generator adds an RGB shift L to a night image, I' = clip(I + L, 0, 1),
// trained against a day/night discriminator while an SSIM term keeps I' close to I.

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dlseg/kvconfig.hpp"
#include "dlseg/nets.hpp"
#include "dlseg/raster.hpp"

namespace dlseg::relam {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;

  double c1() const { return (k1 * range) * (k1 * range); }
  double c2() const { return (k2 * range) * (k2 * range); }
  /// ConfigError unless the window is odd and >= 3 and both stabilisers are positive.
  void validate() const;
};

/// Mean SSIM per image over channels and positions for [N, 3, H, W] batches.
/// Gaussian window, reflect padding; keeps the input dtype and autograd graph.
torch::Tensor ssim_per_image(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& p = {});

double ssim(const Image& a, const Image& b, const SsimParams& p = {});

inline constexpr double kProbEpsilon = 1e-7;

/// Guarded log-probability: NumericalError on NaN or values outside [0, 1], then
/// clamps into [eps, 1 - eps].
torch::Tensor guarded_probability(const torch::Tensor& p);

/// sum_i (1 - ssim(I_i, clip(I_i + L_i, 0, 1))) over a batch.
torch::Tensor structure_loss(const torch::Tensor& images, const torch::Tensor& shifts, const SsimParams& p = {});

/// sum log D(day) + sum log(1 - D(adapted)).
torch::Tensor adversarial_objective(const torch::Tensor& d_day, const torch::Tensor& d_adapted);

struct RelamConfig {
  int width = 8;
  int blocks = 6;
  int disc_width = 16;
  long steps = 300;
  int batch = 4;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double ssim_weight = 1.0;
  std::string generator_loss = "non_saturating";  // or "minimax"
  std::uint64_t seed = 0;
  SsimParams ssim;

  void validate() const;
  static RelamConfig from_config(const KvConfig& cfg, const std::string& prefix);
  void write(KvConfig& cfg, const std::string& prefix) const;
};

class RelamNets {
 public:
  explicit RelamNets(const RelamConfig& cfg = {});

  nets::LightGenerator generator{nullptr};
  nets::PatchDiscriminator discriminator{nullptr};
  RelamConfig config;
  long trained_steps = 0;

  bool trained() const { return trained_steps > 0; }

  /// clip(x + G(x), 0, 1) for a [N, 3, H, W] batch.
  torch::Tensor adapt(const torch::Tensor& x);
  Image adapt(const Image& img);
  /// Discriminator day-probability per image, no gradient.
  std::vector<double> day_probability(const std::vector<Image>& images);

  void save(const std::filesystem::path& path) const;
  static RelamNets load(const std::filesystem::path& path);
};

struct LightLoss {
  torch::Tensor l_s;
  torch::Tensor l_p;
  torch::Tensor l_light;
};

/// L_S over both day and night inputs (each passed through the generator),
/// L_P on real day images and adapted night images, L_light = L_S + L_P.
LightLoss light_loss(const torch::Tensor& day, const torch::Tensor& night, RelamNets& nets);

struct RelamLogEntry {
  long step;
  double l_s;
  double l_p;
  double l_light;
};

/// Alternating discriminator / generator updates (1:1). Writes one JSON record per step
/// to `log_path` when given. Throws NumericalError if L_light becomes non-finite.
RelamNets train_relam(const std::vector<Image>& day, const std::vector<Image>& night, const RelamConfig& cfg,
                      const std::filesystem::path& log_path = {},
                      std::vector<RelamLogEntry>* log = nullptr);

}  // namespace dlseg::relam
