#include "zigan/training.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "zigan/errors.hpp"
#include "zigan/util.hpp"

namespace zigan {
namespace {

constexpr std::uint64_t kInitStream = 0x494E'4954;     // "INIT"
constexpr std::uint64_t kDropoutStream = 0x4452'4F50;  // "DROP"
constexpr std::uint64_t kEpochStream = 0x4550'0000;    // "EP" + epoch

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "'" + key + "' expects a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "'" + key + "' expects an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw Error(ErrorCode::Config, "'" + key + "' expects true/false, got '" + value + "'");
}

std::vector<std::pair<std::string, torch::Tensor>> prefixed(const std::string& prefix, const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
  for (const auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> prefixed_params(const std::string& prefix, const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
  return out;
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool on) {
  for (auto p : params) p.set_requires_grad(on);
}

std::uint64_t init_seed(std::uint64_t seed, std::uint64_t net) { return derive_rng(seed, kInitStream + net)(); }

void check_finite(const torch::Tensor& loss, const std::string& what) {
  if (!std::isfinite(loss.item<double>())) {
    throw Error(ErrorCode::NonFiniteLoss, what + " is " + format_double(loss.item<double>()));
  }
}

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, msg); };
  if (epochs < 0) fail("epochs must be nonnegative");
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) fail("lr must be finite and nonnegative");
  if (halve_every <= 0) fail("halve_every must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must lie in [0,1)");
  if (batch_size < 2) fail("batch_size must be at least 2 (batch normalization)");
  if (resolution < 64 || (resolution & (resolution - 1)) != 0) fail("resolution must be a power of two >= 64");
  if (shots <= 0) fail("shots must be positive");
  if (width_divisor < 1) fail("width_divisor must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  weights.validate();
  if (kernel_policy == KernelPolicy::Fixed) KernelBank{kernel_sigmas}.validate();
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["epochs"] = std::to_string(epochs);
  m["lr"] = format_double(lr0);
  m["halve_every"] = std::to_string(halve_every);
  m["beta1"] = format_double(beta1);
  m["beta2"] = format_double(beta2);
  m["batch_size"] = std::to_string(batch_size);
  m["resolution"] = std::to_string(resolution);
  m["shots"] = std::to_string(shots);
  m["seed"] = std::to_string(seed);
  m["lambda1"] = format_double(weights.lambda1);
  m["lambda2"] = format_double(weights.lambda2);
  m["lambda3"] = format_double(weights.lambda3);
  m["lambda4"] = format_double(weights.lambda4);
  m["alpha"] = format_double(weights.alpha);
  if (kernel_policy == KernelPolicy::Median) {
    m["kernel_bank"] = "median";
  } else {
    std::string list;
    for (double s : kernel_sigmas) list += (list.empty() ? "" : ",") + format_double(s);
    m["kernel_bank"] = list;
  }
  m["mmd_estimator"] = estimator == MmdEstimator::Biased ? "biased" : "unbiased";
  m["width_divisor"] = std::to_string(width_divisor);
  m["skip_connections"] = skip_connections ? "true" : "false";
  m["local_global"] = local_global ? "true" : "false";
  m["checkpoint_every"] = std::to_string(checkpoint_every);
  return m;
}

std::vector<std::string> TrainConfig::apply(const std::map<std::string, std::string>& values) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : values) {
    if (key == "epochs") {
      epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "lr") {
      lr0 = parse_double(key, value);
    } else if (key == "halve_every") {
      halve_every = static_cast<int>(parse_int(key, value));
    } else if (key == "beta1") {
      beta1 = parse_double(key, value);
    } else if (key == "beta2") {
      beta2 = parse_double(key, value);
    } else if (key == "batch_size") {
      batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "resolution") {
      resolution = static_cast<int>(parse_int(key, value));
    } else if (key == "shots") {
      shots = static_cast<int>(parse_int(key, value));
    } else if (key == "seed") {
      const auto s = parse_int(key, value);
      if (s < 0) throw Error(ErrorCode::Config, "seed must be nonnegative");
      seed = static_cast<std::uint64_t>(s);
    } else if (key == "lambda1") {
      weights.lambda1 = parse_double(key, value);
    } else if (key == "lambda2") {
      weights.lambda2 = parse_double(key, value);
    } else if (key == "lambda3") {
      weights.lambda3 = parse_double(key, value);
    } else if (key == "lambda4") {
      weights.lambda4 = parse_double(key, value);
    } else if (key == "alpha") {
      weights.alpha = parse_double(key, value);
    } else if (key == "kernel_bank") {
      if (value == "median") {
        kernel_policy = KernelPolicy::Median;
        kernel_sigmas.clear();
      } else {
        kernel_policy = KernelPolicy::Fixed;
        kernel_sigmas.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) kernel_sigmas.push_back(parse_double(key, item));
      }
    } else if (key == "mmd_estimator") {
      if (value == "biased") {
        estimator = MmdEstimator::Biased;
      } else if (value == "unbiased") {
        estimator = MmdEstimator::Unbiased;
      } else {
        throw Error(ErrorCode::Config, "mmd_estimator must be biased or unbiased");
      }
    } else if (key == "width_divisor") {
      width_divisor = static_cast<int>(parse_int(key, value));
    } else if (key == "skip_connections") {
      skip_connections = parse_bool(key, value);
    } else if (key == "local_global") {
      local_global = parse_bool(key, value);
    } else if (key == "checkpoint_every") {
      checkpoint_every = static_cast<int>(parse_int(key, value));
    } else {
      unknown.push_back(key);
    }
  }
  return unknown;
}

std::string TrainConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t TrainConfig::hash() const {
  const auto text = serialize();
  return fnv1a(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw Error(ErrorCode::Config, "epoch must be nonnegative");
  return config.lr0 * std::ldexp(1.0, -(epoch / config.halve_every));
}

// ---------------------------------------------------------------- Adam

Adam::Adam(std::vector<torch::Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
    v_.push_back(torch::zeros_like(p, torch::MemoryFormat::Contiguous));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.mutable_grad().defined()) p.mutable_grad() = torch::Tensor();
  }
}

void Adam::step(double lr) {
  torch::NoGradGuard no_grad;
  for (const auto& p : params_) {
    if (p.grad().defined() && !torch::isfinite(p.grad()).all().item<bool>()) {
      throw Error(ErrorCode::NonFiniteLoss, "non-finite gradient; update skipped");
    }
  }
  ++steps_;
  last_lr_ = lr;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    auto denom = (v_[i].sqrt() / std::sqrt(bc2)).add_(eps_);
    p.addcdiv_(m_[i], denom, -lr / bc1);
  }
}

// ---------------------------------------------------------------- model

ZiGanModel ZiGanModel::create(const TrainConfig& config) {
  ZiGanModel m;
  const auto gopts = config.generator_options();
  m.gen_s = init_generator(init_seed(config.seed, 0), gopts);
  m.gen_t = init_generator(init_seed(config.seed, 1), gopts);
  std::vector<int> depths = {5};
  if (config.local_global) depths.push_back(3);
  std::uint64_t net = 2;
  for (int depth : depths) {
    const DiscriminatorOptions dopts{config.resolution, config.width_divisor, depth};
    m.disc_t.push_back(init_discriminator(init_seed(config.seed, net++), dopts));
    m.disc_s.push_back(init_discriminator(init_seed(config.seed, net++), dopts));
  }
  return m;
}

std::vector<torch::Tensor> ZiGanModel::generator_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& [name, t] : prefixed_params("gen_s.", *gen_s)) out.push_back(t);
  for (const auto& [name, t] : prefixed_params("gen_t.", *gen_t)) out.push_back(t);
  return out;
}

std::vector<std::string> ZiGanModel::generator_parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : prefixed_params("gen_s.", *gen_s)) out.push_back(name);
  for (const auto& [name, t] : prefixed_params("gen_t.", *gen_t)) out.push_back(name);
  return out;
}

std::vector<torch::Tensor> ZiGanModel::discriminator_parameters() const {
  std::vector<torch::Tensor> out;
  for (std::size_t i = 0; i < disc_t.size(); ++i) {
    for (const auto& [name, t] : prefixed_params("disc_t" + std::to_string(i) + ".", *disc_t[i])) out.push_back(t);
    for (const auto& [name, t] : prefixed_params("disc_s" + std::to_string(i) + ".", *disc_s[i])) out.push_back(t);
  }
  return out;
}

std::vector<std::string> ZiGanModel::discriminator_parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < disc_t.size(); ++i) {
    for (const auto& [name, t] : prefixed_params("disc_t" + std::to_string(i) + ".", *disc_t[i])) out.push_back(name);
    for (const auto& [name, t] : prefixed_params("disc_s" + std::to_string(i) + ".", *disc_s[i])) out.push_back(name);
  }
  return out;
}

std::vector<std::pair<std::string, torch::Tensor>> ZiGanModel::named_state() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto append = [&](std::vector<std::pair<std::string, torch::Tensor>> items) {
    out.insert(out.end(), items.begin(), items.end());
  };
  append(prefixed("gen_s.", *gen_s));
  append(prefixed("gen_t.", *gen_t));
  for (std::size_t i = 0; i < disc_t.size(); ++i) {
    append(prefixed("disc_t" + std::to_string(i) + ".", *disc_t[i]));
    append(prefixed("disc_s" + std::to_string(i) + ".", *disc_s[i]));
  }
  return out;
}

void ZiGanModel::train(bool on) {
  gen_s->train(on);
  gen_t->train(on);
  for (auto& d : disc_t) d->train(on);
  for (auto& d : disc_s) d->train(on);
}

// ---------------------------------------------------------------- data

BatchScheduler::BatchScheduler(std::size_t train_size, std::size_t pool_size, int batch_size, std::uint64_t seed)
    : train_size_(train_size), pool_size_(pool_size), batch_size_(batch_size), seed_(seed) {
  if (batch_size <= 0) throw Error(ErrorCode::Config, "batch_size must be positive");
  if (train_size == 0) throw Error(ErrorCode::EmptyBatch, "no paired training samples");
  if (pool_size == 0) throw Error(ErrorCode::EmptyPool, "unpaired pool is empty");
  paired_per_epoch_ = static_cast<int>((train_size + static_cast<std::size_t>(batch_size) - 1) /
                                       static_cast<std::size_t>(batch_size));
}

std::vector<BatchPlan> BatchScheduler::epoch(int epoch) const {
  auto rng = derive_rng(seed_, kEpochStream + static_cast<std::uint64_t>(epoch));
  const auto b = static_cast<std::size_t>(batch_size_);

  std::vector<std::size_t> order(train_size_);
  for (std::size_t i = 0; i < train_size_; ++i) order[i] = i;
  shuffle_in_place(order, rng);
  std::vector<std::size_t> pool(pool_size_);
  for (std::size_t i = 0; i < pool_size_; ++i) pool[i] = i;
  shuffle_in_place(pool, rng);

  std::vector<BatchPlan> plans;
  std::size_t pool_cursor = 0;
  for (int k = 0; k < paired_per_epoch_; ++k) {
    BatchPlan paired{BatchKind::Paired, {}, {}};
    for (std::size_t i = static_cast<std::size_t>(k) * b; i < std::min(train_size_, (static_cast<std::size_t>(k) + 1) * b); ++i) {
      paired.sources.push_back(order[i]);
    }
    // Short batches are topped up by sampling with replacement.
    while (paired.sources.size() < b) paired.sources.push_back(uniform_below(rng, train_size_));
    paired.targets = paired.sources;
    plans.push_back(std::move(paired));

    BatchPlan unpaired{BatchKind::Unpaired, {}, {}};
    for (std::size_t i = 0; i < b; ++i) {
      unpaired.sources.push_back(pool[pool_cursor]);
      pool_cursor = (pool_cursor + 1) % pool_size_;
      unpaired.targets.push_back(uniform_below(rng, train_size_));
    }
    plans.push_back(std::move(unpaired));
  }
  return plans;
}

TrainingData::TrainingData(std::vector<PairedSample> train, std::vector<GlyphImage> pool)
    : train_(std::move(train)), pool_size_(pool.size()) {
  for (auto& img : pool) pool_cache_.push_back(img.pixels.permute({2, 0, 1}).contiguous());
}

TrainingData::TrainingData(std::vector<PairedSample> train, const std::filesystem::path& font,
                           std::vector<char32_t> pool, int canvas)
    : train_(std::move(train)),
      font_(FontFace::open(font)),
      pool_codepoints_(std::move(pool)),
      pool_size_(pool_codepoints_.size()),
      canvas_(canvas) {
  pool_cache_.resize(pool_size_);
}

torch::Tensor TrainingData::pool_image(std::size_t i) {
  if (!font_) return pool_cache_[i];
  // Lazy mode keeps one uint8 channel per glyph; renders are gray, so this round trip is exact.
  if (!pool_cache_[i].defined()) {
    pool_cache_[i] = denormalize_image(font_->render(pool_codepoints_[i], canvas_).pixels).select(2, 0).contiguous();
  }
  return normalize_image(pool_cache_[i]).permute({2, 0, 1}).contiguous();
}

TrainingBatch TrainingData::materialize(const BatchPlan& plan) {
  if (plan.sources.empty()) throw Error(ErrorCode::EmptyBatch, "batch plan has no items");
  std::vector<torch::Tensor> sources, targets;
  for (auto i : plan.targets) targets.push_back(train_.at(i).target.pixels.permute({2, 0, 1}));
  if (plan.kind == BatchKind::Paired) {
    for (auto i : plan.sources) sources.push_back(train_.at(i).source.pixels.permute({2, 0, 1}));
  } else {
    for (auto i : plan.sources) sources.push_back(pool_image(i));
  }
  return TrainingBatch{plan.kind, torch::stack(sources).contiguous(), torch::stack(targets).contiguous()};
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config)
    : config_((config.validate(), std::move(config))),
      model_(ZiGanModel::create(config_)),
      opt_d_(model_.discriminator_parameters(), config_.beta1, config_.beta2),
      opt_g_(model_.generator_parameters(), config_.beta1, config_.beta2),
      dropout_rng_(at::make_generator<at::CPUGeneratorImpl>(derive_rng(config_.seed, kDropoutStream)())) {}

KernelBank Trainer::kernel_bank(const torch::Tensor& real, const torch::Tensor& fake) const {
  if (config_.kernel_policy == KernelPolicy::Fixed) return KernelBank{config_.kernel_sigmas};
  return median_heuristic_bank(
      torch::cat({real.detach().reshape({real.size(0), -1}), fake.detach().reshape({fake.size(0), -1})}));
}

Translation Trainer::translate(const TrainingBatch& batch) {
  if (!batch.source.defined() || batch.source.size(0) == 0 || !batch.target.defined() || batch.target.size(0) == 0) {
    throw Error(ErrorCode::EmptyBatch, "training batch is empty");
  }
  if (batch.source.size(0) != batch.target.size(0)) {
    throw Error(ErrorCode::ShapeMismatch, "source and target batches differ in size");
  }
  model_.train(true);
  Translation t;
  t.latent_x = model_.gen_s->encoder->forward(batch.source);
  t.fake_y = model_.gen_s->decoder->forward(t.latent_x, dropout_rng_);
  t.latent_y = model_.gen_t->encoder->forward(batch.target);
  t.fake_x = model_.gen_t->decoder->forward(t.latent_y, dropout_rng_);
  return t;
}

double Trainer::discriminator_phase(const TrainingBatch& batch, const Translation& t) {
  const auto params = model_.discriminator_parameters();
  set_requires_grad(params, true);
  opt_d_.zero_grad();
  const auto fake_y = t.fake_y.detach();
  const auto fake_x = t.fake_x.detach();
  torch::Tensor loss = torch::zeros({}, batch.source.options());
  auto judge = [&](std::vector<Discriminator>& discs, const torch::Tensor& real, const torch::Tensor& fake) {
    for (auto& d : discs) {
      const auto r = d->forward(real);
      const auto f = d->forward(fake);
      loss = loss + adv_loss_d(r.patch_scores, f.patch_scores) + cam_loss_d(r.cam_logit, f.cam_logit);
    }
  };
  judge(model_.disc_t, batch.target, fake_y);
  judge(model_.disc_s, batch.source, fake_x);
  check_finite(loss, "discriminator loss at step " + std::to_string(global_step_));
  loss.backward();
  opt_d_.step(lr_at(config_, epoch_));
  return loss.item<double>();
}

LossReport Trainer::generator_phase(const TrainingBatch& batch, const Translation& t) {
  const auto disc_params = model_.discriminator_parameters();
  set_requires_grad(disc_params, false);
  opt_g_.zero_grad();

  const auto& x = batch.source;
  const auto& y = batch.target;
  auto& gs = model_.gen_s;
  auto& gt = model_.gen_t;

  // Cycles and identities.
  const auto latent_fake_y = gt->encoder->forward(t.fake_y);  // E_t(G_s(E_s(x)))
  const auto rec_x = gt->decoder->forward(latent_fake_y, dropout_rng_);
  const auto latent_fake_x = gs->encoder->forward(t.fake_x);  // E_s(G_t(E_t(y)))
  const auto rec_y = gs->decoder->forward(latent_fake_x, dropout_rng_);
  const auto id_y = gs->forward(y, dropout_rng_);
  const auto id_x = gt->forward(x, dropout_rng_);

  LossComponents<torch::Tensor> fwd, bwd;
  auto zero = torch::zeros({}, x.options());
  fwd.adv = fwd.cam = bwd.adv = bwd.cam = zero;
  for (auto& d : model_.disc_t) {
    const auto out = d->forward(t.fake_y);
    fwd.adv = fwd.adv + adv_loss_g(out.patch_scores);
    fwd.cam = fwd.cam + cam_loss_g(out.cam_logit);
  }
  for (auto& d : model_.disc_s) {
    const auto out = d->forward(t.fake_x);
    bwd.adv = bwd.adv + adv_loss_g(out.patch_scores);
    bwd.cam = bwd.cam + cam_loss_g(out.cam_logit);
  }
  fwd.cycle = cycle_loss(x, rec_x);
  bwd.cycle = cycle_loss(y, rec_y);
  fwd.identity = identity_loss(y, id_y);
  bwd.identity = identity_loss(x, id_x);

  if (batch.kind == BatchKind::Paired) {
    fwd.l1 = paired_l1_loss(y, t.fake_y);
    bwd.l1 = paired_l1_loss(x, t.fake_x);
    fwd.constancy = constancy_loss(t.latent_y.bottleneck, latent_fake_y.bottleneck);
    bwd.constancy = constancy_loss(t.latent_x.bottleneck, latent_fake_x.bottleneck);
    fwd.style = bwd.style = zero;
  } else {
    fwd.l1 = bwd.l1 = fwd.constancy = bwd.constancy = zero;
    const auto& real_t = t.latent_y.bottleneck;
    const auto& fake_t = latent_fake_y.bottleneck;
    fwd.style = style_loss(real_t, fake_t, kernel_bank(real_t, fake_t), config_.estimator);
    const auto& real_s = t.latent_x.bottleneck;
    const auto& fake_s = latent_fake_x.bottleneck;
    bwd.style = style_loss(real_s, fake_s, kernel_bank(real_s, fake_s), config_.estimator);
  }

  const auto& w = config_.weights;
  const auto total = weighted_total(group_terms(fwd, w), w) + weighted_total(group_terms(bwd, w), w);

  auto to_double = [](const LossComponents<torch::Tensor>& c) {
    return LossComponents<double>{c.adv.item<double>(),       c.cam.item<double>(), c.cycle.item<double>(),
                                  c.identity.item<double>(),  c.l1.item<double>(),  c.constancy.item<double>(),
                                  c.style.item<double>()};
  };
  auto report = make_report(to_double(fwd), to_double(bwd), w);
  if (!std::isfinite(total.item<double>())) {
    set_requires_grad(disc_params, true);
    std::ostringstream msg;
    msg << "generator objective at step " << global_step_ << " is non-finite; components:\n"
        << loss_csv_header() << loss_csv_rows(global_step_, report);
    throw Error(ErrorCode::NonFiniteLoss, msg.str());
  }
  total.backward();
  try {
    opt_g_.step(lr_at(config_, epoch_));
  } catch (...) {
    set_requires_grad(disc_params, true);
    throw;
  }
  set_requires_grad(disc_params, true);
  return report;
}

LossReport Trainer::train_step(const TrainingBatch& batch) {
  const auto translation = translate(batch);
  const double d_loss = discriminator_phase(batch, translation);
  auto report = generator_phase(batch, translation);
  report.discriminator = d_loss;
  ++global_step_;
  return report;
}

Checkpoint Trainer::snapshot() {
  Checkpoint c;
  c.config = config_;
  c.epoch = epoch_;
  c.global_step = global_step_;
  for (const auto& [name, t] : model_.named_state()) c.model.emplace_back(name, t.detach().clone());
  const auto gnames = model_.generator_parameter_names();
  const auto dnames = model_.discriminator_parameter_names();
  for (std::size_t i = 0; i < gnames.size(); ++i) {
    c.optimizer.emplace_back("gen." + gnames[i] + ".m", opt_g_.first_moments()[i].clone());
    c.optimizer.emplace_back("gen." + gnames[i] + ".v", opt_g_.second_moments()[i].clone());
  }
  for (std::size_t i = 0; i < dnames.size(); ++i) {
    c.optimizer.emplace_back("disc." + dnames[i] + ".m", opt_d_.first_moments()[i].clone());
    c.optimizer.emplace_back("disc." + dnames[i] + ".v", opt_d_.second_moments()[i].clone());
  }
  c.generator_steps = opt_g_.steps();
  c.discriminator_steps = opt_d_.steps();
  c.rng_state = dropout_rng_.get_state();
  return c;
}

namespace {

void copy_named(const std::vector<std::pair<std::string, torch::Tensor>>& from,
                const std::vector<std::pair<std::string, torch::Tensor>>& into) {
  std::map<std::string, torch::Tensor> source(from.begin(), from.end());
  if (source.size() != into.size()) {
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint holds " + std::to_string(source.size()) +
                                                  " tensors, model expects " + std::to_string(into.size()));
  }
  torch::NoGradGuard no_grad;
  for (const auto& [name, target] : into) {
    auto it = source.find(name);
    if (it == source.end()) throw Error(ErrorCode::CorruptCheckpoint, "missing tensor " + name);
    if (it->second.sizes() != target.sizes() || it->second.scalar_type() != target.scalar_type()) {
      throw Error(ErrorCode::CorruptCheckpoint, "tensor " + name + " has shape " + c10::str(it->second.sizes()) +
                                                    ", model expects " + c10::str(target.sizes()));
    }
  }
  for (const auto& [name, target] : into) {
    auto t = target;
    t.copy_(source.at(name));
  }
}

}  // namespace

void Trainer::restore(const Checkpoint& checkpoint) {
  copy_named(checkpoint.model, model_.named_state());
  std::vector<std::pair<std::string, torch::Tensor>> moments;
  const auto gnames = model_.generator_parameter_names();
  const auto dnames = model_.discriminator_parameter_names();
  for (std::size_t i = 0; i < gnames.size(); ++i) {
    moments.emplace_back("gen." + gnames[i] + ".m", opt_g_.first_moments()[i]);
    moments.emplace_back("gen." + gnames[i] + ".v", opt_g_.second_moments()[i]);
  }
  for (std::size_t i = 0; i < dnames.size(); ++i) {
    moments.emplace_back("disc." + dnames[i] + ".m", opt_d_.first_moments()[i]);
    moments.emplace_back("disc." + dnames[i] + ".v", opt_d_.second_moments()[i]);
  }
  copy_named(checkpoint.optimizer, moments);
  opt_g_.set_steps(checkpoint.generator_steps);
  opt_d_.set_steps(checkpoint.discriminator_steps);
  if (checkpoint.rng_state.defined()) dropout_rng_.set_state(checkpoint.rng_state);
  epoch_ = checkpoint.epoch;
  global_step_ = checkpoint.global_step;
}

ZiGanModel model_from_checkpoint(const Checkpoint& checkpoint) {
  auto model = ZiGanModel::create(checkpoint.config);
  copy_named(checkpoint.model, model.named_state());
  model.train(false);
  return model;
}

// ---------------------------------------------------------------- loop

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%05d", epoch);
  return buf;
}

TrainingRun run_training(const TrainConfig& config, TrainingData& data, const RunOptions& options) {
  Trainer trainer(config);
  int start = 0;
  std::string log_text = loss_csv_header();
  if (options.resume_from) {
    const auto checkpoint = load_checkpoint(*options.resume_from);
    trainer.restore(checkpoint);
    start = checkpoint.epoch;
    if (!options.loss_log.empty() && std::filesystem::exists(options.loss_log)) {
      // Keep only the rows logged before the checkpoint was taken.
      std::istringstream in(read_text_file(options.loss_log));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (std::stol(line.substr(0, line.find(','))) < checkpoint.global_step) log_text += line + "\n";
      }
    }
  }

  const BatchScheduler scheduler(data.train_size(), data.pool_size(), config.batch_size, config.seed);
  TrainingRun run;
  auto save = [&]() {
    run.final_dir = options.checkpoint_dir / checkpoint_name(trainer.epoch());
    run.final_checkpoint = trainer.snapshot();
    if (!options.checkpoint_dir.empty()) {
      save_checkpoint(run.final_checkpoint, run.final_dir);
      write_file_atomic(options.checkpoint_dir / "latest", checkpoint_name(trainer.epoch()) + "\n");
    }
    if (!options.loss_log.empty()) write_file_atomic(options.loss_log, log_text);
  };

  for (int epoch = start; epoch < config.epochs; ++epoch) {
    trainer.set_epoch(epoch);
    double sum = 0.0;
    for (const auto& plan : scheduler.epoch(epoch)) {
      const auto batch = data.materialize(plan);
      const long step = trainer.global_step();
      auto report = trainer.train_step(batch);
      log_text += loss_csv_rows(step, report);
      sum += report.total;
      run.log.push_back(report);
    }
    trainer.set_epoch(epoch + 1);
    if (options.on_epoch) options.on_epoch(epoch, run.log.back(), sum / scheduler.steps_per_epoch());
    if ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.epochs) save();
  }
  if (start >= config.epochs) {
    trainer.set_epoch(start);
    save();
  }
  return run;
}

}  // namespace zigan
