#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace zigan {

struct LossWeights {
  double lambda1 = 5.0;   // GAN (adv + cam)
  double lambda2 = 10.0;  // consistency (cycle + identity)
  double lambda3 = 10.0;  // alignment
  double lambda4 = 10.0;  // style
  double alpha = 5.0;     // L1 weight inside alignment

  /// Throws Error(Config) if any weight is negative or non-finite.
  void validate() const;
};

/// Gaussian bandwidths for the multi-kernel estimator.
struct KernelBank {
  std::vector<double> sigmas;

  void validate() const;
};

enum class MmdEstimator { Biased, Unbiased };

inline const std::vector<double> kMedianMultipliers = {0.25, 0.5, 1.0, 2.0, 4.0};

/// σ = m·multiplier for every multiplier, m the median pairwise Euclidean
/// distance over the rows of `joint` (1.0 when all rows coincide).
KernelBank median_heuristic_bank(const torch::Tensor& joint,
                                 const std::vector<double>& multipliers = kMedianMultipliers);

// Least-squares adversarial terms; real targets 1, fake targets 0.
torch::Tensor adv_loss_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
torch::Tensor adv_loss_g(const torch::Tensor& fake_scores);
torch::Tensor cam_loss_d(const torch::Tensor& real_cam, const torch::Tensor& fake_cam);
torch::Tensor cam_loss_g(const torch::Tensor& fake_cam);

// Per-element mean absolute differences.
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_reconstructed);
torch::Tensor identity_loss(const torch::Tensor& y, const torch::Tensor& y_passed_through);
torch::Tensor paired_l1_loss(const torch::Tensor& y, const torch::Tensor& y_hat);

/// Mean squared difference of encoder bottleneck features.
torch::Tensor constancy_loss(const torch::Tensor& feat_y, const torch::Tensor& feat_y_hat);

/// alpha·L1(y, ŷ) + constancy(E(y), E(ŷ)).
torch::Tensor alignment_loss(const torch::Tensor& y, const torch::Tensor& y_hat, const torch::Tensor& feat_y,
                             const torch::Tensor& feat_y_hat, const LossWeights& weights);

/// exp(-‖a-b‖² / (2σ²)) for two vectors.
torch::Tensor gaussian_kernel(const torch::Tensor& a, const torch::Tensor& b, double sigma);

/// Squared MK-MMD between row sets A (n×d) and B (m×d), averaged over the
/// bank. The biased V-statistic is always ≥ 0.
torch::Tensor mk_mmd_sq(const torch::Tensor& a, const torch::Tensor& b, const KernelBank& bank,
                        MmdEstimator estimator = MmdEstimator::Biased);

/// mk_mmd_sq over flattened per-item features (N×... → N×d).
torch::Tensor style_loss(const torch::Tensor& feat_real, const torch::Tensor& feat_fake, const KernelBank& bank,
                         MmdEstimator estimator = MmdEstimator::Biased);

/// Raw loss components for one translation direction.
template <typename T>
struct LossComponents {
  T adv{};
  T cam{};
  T cycle{};
  T identity{};
  T l1{};
  T constancy{};
  T style{};
};

/// Grouped objective terms for one direction.
template <typename T>
struct ObjectiveTerms {
  T gan{};
  T consistency{};
  T alignment{};
  T style{};
};

template <typename T>
ObjectiveTerms<T> group_terms(const LossComponents<T>& c, const LossWeights& w) {
  return ObjectiveTerms<T>{c.adv + c.cam, c.cycle + c.identity, c.l1 * w.alpha + c.constancy, c.style};
}

template <typename T>
T weighted_total(const ObjectiveTerms<T>& t, const LossWeights& w) {
  return t.gan * w.lambda1 + t.consistency * w.lambda2 + t.alignment * w.lambda3 + t.style * w.lambda4;
}

/// Full objective over both directions.
double total_losses(const ObjectiveTerms<double>& x2y, const ObjectiveTerms<double>& y2x, const LossWeights& w);

struct DirectionReport {
  LossComponents<double> parts;
  double total = 0.0;
};

struct LossReport {
  DirectionReport x2y;
  DirectionReport y2x;
  double total = 0.0;
  /// Discriminator objective from the same step (not part of `total`).
  double discriminator = 0.0;
};

LossReport make_report(const LossComponents<double>& x2y, const LossComponents<double>& y2x, const LossWeights& w);

std::string loss_csv_header();
/// Two rows (x2y, y2x) for one training step.
std::string loss_csv_rows(long step, const LossReport& report);

}  // namespace zigan
