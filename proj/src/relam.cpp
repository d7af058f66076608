#include "dlseg/relam.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dlseg/checkpoint.hpp"
#include "dlseg/errors.hpp"
#include "dlseg/optim.hpp"
#include "dlseg/rng.hpp"
#include "dlseg/tensor.hpp"

namespace dlseg::relam {

namespace F = torch::nn::functional;

void SsimParams::validate() const {
  if (window < 3 || window % 2 == 0) throw ConfigError("ssim window must be odd and >= 3");
  if (!(sigma > 0)) throw ConfigError("ssim sigma must be positive");
  if (!(c1() > 0) || !(c2() > 0)) throw ConfigError("ssim stabilisers must be positive");
}

namespace {

torch::Tensor gaussian_kernel(const SsimParams& p, torch::Dtype dtype) {
  auto coords = torch::arange(p.window, torch::kFloat64) - (p.window - 1) / 2.0;
  auto g = torch::exp(-(coords * coords) / (2.0 * p.sigma * p.sigma));
  g = g / g.sum();
  auto k2 = torch::outer(g, g).to(dtype);
  return k2.expand({3, 1, p.window, p.window}).contiguous();
}

torch::Tensor blur(const torch::Tensor& x, const torch::Tensor& kernel, int pad) {
  auto padded = F::pad(x, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect));
  return F::conv2d(padded, kernel, F::Conv2dFuncOptions().groups(3));
}

}  // namespace

torch::Tensor ssim_per_image(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& p) {
  p.validate();
  if (a.sizes() != b.sizes()) throw ValidationError("ssim inputs differ in shape");
  if (a.dim() != 4 || a.size(1) != 3) throw ValidationError("ssim expects [N, 3, H, W] batches");
  const int pad = p.window / 2;
  if (a.size(2) <= pad || a.size(3) <= pad) throw ValidationError("image too small for the ssim window");
  const auto kernel = gaussian_kernel(p, a.scalar_type());
  auto mu_a = blur(a, kernel, pad), mu_b = blur(b, kernel, pad);
  auto var_a = blur(a * a, kernel, pad) - mu_a * mu_a;
  auto var_b = blur(b * b, kernel, pad) - mu_b * mu_b;
  auto cov = blur(a * b, kernel, pad) - mu_a * mu_b;
  const double c1 = p.c1(), c2 = p.c2();
  auto map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean({1, 2, 3});
}

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  if (a.height != b.height || a.width != b.width) throw ValidationError("ssim inputs differ in shape");
  torch::NoGradGuard guard;
  auto ta = to_tensor(a).unsqueeze(0).to(torch::kFloat64), tb = to_tensor(b).unsqueeze(0).to(torch::kFloat64);
  return ssim_per_image(ta, tb, p).item<double>();
}

torch::Tensor guarded_probability(const torch::Tensor& p) {
  {
    torch::NoGradGuard guard;
    if (torch::isnan(p).any().item<bool>() || (p < 0).any().item<bool>() || (p > 1).any().item<bool>())
      throw NumericalError("discriminator probability outside [0, 1]");
  }
  return p.clamp(kProbEpsilon, 1.0 - kProbEpsilon);
}

torch::Tensor structure_loss(const torch::Tensor& images, const torch::Tensor& shifts, const SsimParams& p) {
  auto adapted = (images + shifts).clamp(0.0, 1.0);
  return (1.0 - ssim_per_image(images, adapted, p)).sum();
}

torch::Tensor adversarial_objective(const torch::Tensor& d_day, const torch::Tensor& d_adapted) {
  return torch::log(guarded_probability(d_day)).sum() + torch::log(1.0 - guarded_probability(d_adapted)).sum();
}

void RelamConfig::validate() const {
  ssim.validate();
  if (width < 1 || blocks < 0 || disc_width < 1) throw ConfigError("relam network sizes must be positive");
  if (steps < 0 || batch < 1) throw ConfigError("relam steps must be >= 0 and batch >= 1");
  if (!(lr > 0)) throw ConfigError("relam learning rate must be positive");
  if (generator_loss != "non_saturating" && generator_loss != "minimax")
    throw ConfigError("relam generator_loss must be non_saturating or minimax");
}

RelamConfig RelamConfig::from_config(const KvConfig& cfg, const std::string& prefix) {
  RelamConfig c;
  c.width = static_cast<int>(cfg.get_int(prefix + "width", c.width));
  c.blocks = static_cast<int>(cfg.get_int(prefix + "blocks", c.blocks));
  c.disc_width = static_cast<int>(cfg.get_int(prefix + "disc_width", c.disc_width));
  c.steps = cfg.get_int(prefix + "steps", c.steps);
  c.batch = static_cast<int>(cfg.get_int(prefix + "batch", c.batch));
  c.lr = cfg.get_double(prefix + "lr", c.lr);
  c.beta1 = cfg.get_double(prefix + "beta1", c.beta1);
  c.beta2 = cfg.get_double(prefix + "beta2", c.beta2);
  c.ssim_weight = cfg.get_double(prefix + "ssim_weight", c.ssim_weight);
  c.generator_loss = cfg.get_string(prefix + "generator_loss", c.generator_loss);
  c.seed = cfg.get_uint64(prefix + "seed", c.seed);
  c.ssim.window = static_cast<int>(cfg.get_int(prefix + "ssim.window", c.ssim.window));
  c.ssim.sigma = cfg.get_double(prefix + "ssim.sigma", c.ssim.sigma);
  c.ssim.k1 = cfg.get_double(prefix + "ssim.k1", c.ssim.k1);
  c.ssim.k2 = cfg.get_double(prefix + "ssim.k2", c.ssim.k2);
  c.ssim.range = cfg.get_double(prefix + "ssim.range", c.ssim.range);
  c.validate();
  return c;
}

void RelamConfig::write(KvConfig& cfg, const std::string& prefix) const {
  cfg.set(prefix + "width", std::to_string(width));
  cfg.set(prefix + "blocks", std::to_string(blocks));
  cfg.set(prefix + "disc_width", std::to_string(disc_width));
  cfg.set(prefix + "steps", std::to_string(steps));
  cfg.set(prefix + "batch", std::to_string(batch));
  cfg.set(prefix + "lr", format_double(lr));
  cfg.set(prefix + "beta1", format_double(beta1));
  cfg.set(prefix + "beta2", format_double(beta2));
  cfg.set(prefix + "ssim_weight", format_double(ssim_weight));
  cfg.set(prefix + "generator_loss", generator_loss);
  cfg.set(prefix + "seed", std::to_string(seed));
  cfg.set(prefix + "ssim.window", std::to_string(ssim.window));
  cfg.set(prefix + "ssim.sigma", format_double(ssim.sigma));
  cfg.set(prefix + "ssim.k1", format_double(ssim.k1));
  cfg.set(prefix + "ssim.k2", format_double(ssim.k2));
  cfg.set(prefix + "ssim.range", format_double(ssim.range));
}

RelamNets::RelamNets(const RelamConfig& cfg) : config(cfg) {
  config.validate();
  torch::manual_seed(derive_seed(cfg.seed, "relam-init"));
  generator = nets::LightGenerator(cfg.width, cfg.blocks);
  discriminator = nets::PatchDiscriminator(cfg.disc_width);
}

torch::Tensor RelamNets::adapt(const torch::Tensor& x) { return (x + generator->forward(x)).clamp(0.0, 1.0); }

Image RelamNets::adapt(const Image& img) {
  torch::NoGradGuard guard;
  generator->eval();
  return to_image(adapt(to_tensor(img).unsqueeze(0))[0]);
}

std::vector<double> RelamNets::day_probability(const std::vector<Image>& images) {
  torch::NoGradGuard guard;
  std::vector<double> out;
  for (const auto& img : images) out.push_back(discriminator->probability(to_tensor(img).unsqueeze(0)).item<double>());
  return out;
}

void RelamNets::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.kind = "relam";
  config.write(ckpt.meta, "relam.");
  ckpt.meta.set("trained_steps", std::to_string(trained_steps));
  ckpt.add_module("generator.", *generator);
  ckpt.add_module("discriminator.", *discriminator);
  save_checkpoint(ckpt, path);
}

RelamNets RelamNets::load(const std::filesystem::path& path) {
  auto ckpt = load_checkpoint(path, "relam");
  RelamNets nets(RelamConfig::from_config(ckpt.meta, "relam."));
  ckpt.load_module("generator.", *nets.generator);
  ckpt.load_module("discriminator.", *nets.discriminator);
  nets.trained_steps = ckpt.meta.get_int("trained_steps", 0);
  return nets;
}

LightLoss light_loss(const torch::Tensor& day, const torch::Tensor& night, RelamNets& nets) {
  if (day.size(0) == 0 || night.size(0) == 0) throw ValidationError("light_loss needs non-empty batches");
  const auto& p = nets.config.ssim;
  auto l_s = structure_loss(day, nets.generator->forward(day), p) + structure_loss(night, nets.generator->forward(night), p);
  auto l_p = adversarial_objective(nets.discriminator->probability(day), nets.discriminator->probability(nets.adapt(night)));
  return {l_s, l_p, l_s + l_p};
}

namespace {

torch::Tensor sample_batch(const std::vector<Image>& set, int batch, Rng& rng) {
  std::vector<Image> picked;
  for (int i = 0; i < batch; ++i) picked.push_back(set[static_cast<std::size_t>(rng.randint(0, static_cast<int>(set.size()) - 1))]);
  return stack_images(picked);
}

}  // namespace

RelamNets train_relam(const std::vector<Image>& day, const std::vector<Image>& night, const RelamConfig& cfg,
                      const std::filesystem::path& log_path, std::vector<RelamLogEntry>* log) {
  if (day.empty() || night.empty()) throw PreconditionError("light adaptation needs non-empty day and night sets");
  cfg.validate();
  RelamNets nets(cfg);
  Adam opt_g(nets.generator->parameters(), {cfg.lr, cfg.beta1, cfg.beta2});
  Adam opt_d(nets.discriminator->parameters(), {cfg.lr, cfg.beta1, cfg.beta2});
  Rng rng(derive_seed(cfg.seed, "relam-batches"));
  std::ofstream out;
  if (!log_path.empty()) {
    if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
    out.open(log_path);
    if (!out) throw IoError("cannot write " + log_path.string());
  }
  const bool minimax = cfg.generator_loss == "minimax";
  for (long step = 1; step <= cfg.steps; ++step) {
    auto xd = sample_batch(day, cfg.batch, rng);
    auto xn = sample_batch(night, cfg.batch, rng);

    // Discriminator ascent on L_P.
    torch::Tensor fake;
    {
      torch::NoGradGuard guard;
      fake = nets.adapt(xn);
    }
    opt_d.zero_grad();
    auto l_p = adversarial_objective(nets.discriminator->probability(xd), nets.discriminator->probability(fake));
    (-l_p / cfg.batch).backward();
    opt_d.step();

    // Generator descent on the SSIM term plus the adversarial term.
    opt_g.zero_grad();
    auto l_s = structure_loss(xd, nets.generator->forward(xd), cfg.ssim) +
               structure_loss(xn, nets.generator->forward(xn), cfg.ssim);
    auto d_fake = guarded_probability(nets.discriminator->probability(nets.adapt(xn)));
    auto adv = minimax ? torch::log(1.0 - d_fake).sum() : -torch::log(d_fake).sum();
    ((cfg.ssim_weight * l_s + adv) / cfg.batch).backward();
    opt_g.step();
    nets.discriminator->zero_grad();

    const RelamLogEntry entry{step, l_s.item<double>(), l_p.item<double>(), l_s.item<double>() + l_p.item<double>()};
    if (!std::isfinite(entry.l_light))
      throw NumericalError("light adaptation diverged at step " + std::to_string(step) + " (L_light non-finite)");
    if (log) log->push_back(entry);
    if (out) {
      nlohmann::ordered_json j;
      j["step"] = entry.step;
      j["L_S"] = entry.l_s;
      j["L_P"] = entry.l_p;
      j["L_light"] = entry.l_light;
      out << j.dump() << '\n';
    }
  }
  nets.trained_steps = cfg.steps;
  return nets;
}

}  // namespace dlseg::relam
