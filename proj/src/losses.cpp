#include "zigan/losses.hpp"

#include <cmath>
#include <sstream>

#include "zigan/errors.hpp"

namespace zigan {
namespace {

void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (a.sizes() != b.sizes()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(who) + ": shapes " + c10::str(a.sizes()) + " and " + c10::str(b.sizes()) + " differ");
  }
}

torch::Tensor mean_abs(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  same_shape(a, b, who);
  return (a - b).abs().mean();
}

torch::Tensor pairwise_sq_dist(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.unsqueeze(1) - b.unsqueeze(0)).pow(2).sum(-1);
}

torch::Tensor off_diagonal_mean(const torch::Tensor& k) {
  const auto n = k.size(0);
  return (k.sum() - k.diagonal().sum()) / static_cast<double>(n * (n - 1));
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda1, lambda2, lambda3, lambda4, alpha}) {
    if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::Config, "loss weights must be finite and nonnegative");
  }
}

void KernelBank::validate() const {
  if (sigmas.empty()) throw Error(ErrorCode::Config, "kernel bank is empty");
  for (double s : sigmas) {
    if (!std::isfinite(s) || s <= 0.0) throw Error(ErrorCode::Config, "kernel bandwidths must be positive");
  }
}

KernelBank median_heuristic_bank(const torch::Tensor& joint, const std::vector<double>& multipliers) {
  torch::NoGradGuard no_grad;
  const auto rows = joint.detach().reshape({joint.size(0), -1}).to(torch::kFloat64);
  double median = 1.0;
  if (rows.size(0) >= 2) {
    const auto d = pairwise_sq_dist(rows, rows).clamp_min(0.0).sqrt();
    const auto upper = torch::triu_indices(rows.size(0), rows.size(0), 1);
    const auto values = d.index({upper[0], upper[1]});
    // Lower median, so the value is an actual observed distance.
    const double m = std::get<0>(values.sort()).select(0, (values.numel() - 1) / 2).item<double>();
    if (m > 0.0 && std::isfinite(m)) median = m;
  }
  KernelBank bank;
  for (double k : multipliers) bank.sigmas.push_back(median * k);
  bank.validate();
  return bank;
}

torch::Tensor adv_loss_d(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  same_shape(real_scores, fake_scores, "adv_loss_d");
  return (real_scores - 1).pow(2).mean() + fake_scores.pow(2).mean();
}

torch::Tensor adv_loss_g(const torch::Tensor& fake_scores) { return (fake_scores - 1).pow(2).mean(); }

torch::Tensor cam_loss_d(const torch::Tensor& real_cam, const torch::Tensor& fake_cam) {
  same_shape(real_cam, fake_cam, "cam_loss_d");
  return (real_cam - 1).pow(2).mean() + fake_cam.pow(2).mean();
}

torch::Tensor cam_loss_g(const torch::Tensor& fake_cam) { return (fake_cam - 1).pow(2).mean(); }

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_reconstructed) {
  return mean_abs(x, x_reconstructed, "cycle_loss");
}

torch::Tensor identity_loss(const torch::Tensor& y, const torch::Tensor& y_passed_through) {
  return mean_abs(y, y_passed_through, "identity_loss");
}

torch::Tensor paired_l1_loss(const torch::Tensor& y, const torch::Tensor& y_hat) {
  return mean_abs(y, y_hat, "paired_l1_loss");
}

torch::Tensor constancy_loss(const torch::Tensor& feat_y, const torch::Tensor& feat_y_hat) {
  same_shape(feat_y, feat_y_hat, "constancy_loss");
  return (feat_y - feat_y_hat).pow(2).mean();
}

torch::Tensor alignment_loss(const torch::Tensor& y, const torch::Tensor& y_hat, const torch::Tensor& feat_y,
                             const torch::Tensor& feat_y_hat, const LossWeights& weights) {
  return paired_l1_loss(y, y_hat) * weights.alpha + constancy_loss(feat_y, feat_y_hat);
}

torch::Tensor gaussian_kernel(const torch::Tensor& a, const torch::Tensor& b, double sigma) {
  same_shape(a, b, "gaussian_kernel");
  if (!(sigma > 0.0)) throw Error(ErrorCode::Config, "kernel bandwidth must be positive");
  return torch::exp(-(a - b).pow(2).sum() / (2.0 * sigma * sigma));
}

torch::Tensor mk_mmd_sq(const torch::Tensor& a, const torch::Tensor& b, const KernelBank& bank,
                        MmdEstimator estimator) {
  bank.validate();
  if (a.dim() != 2 || b.dim() != 2) throw Error(ErrorCode::DimensionMismatch, "MMD expects n×d row sets");
  const int64_t min_size = estimator == MmdEstimator::Biased ? 1 : 2;
  if (a.size(0) < min_size || b.size(0) < min_size) {
    throw Error(ErrorCode::EmptySet, "MMD sets need at least " + std::to_string(min_size) + " rows");
  }
  if (a.size(1) != b.size(1)) {
    throw Error(ErrorCode::DimensionMismatch, "MMD sets have dimensions " + std::to_string(a.size(1)) + " and " +
                                                  std::to_string(b.size(1)));
  }
  const auto daa = pairwise_sq_dist(a, a);
  const auto dbb = pairwise_sq_dist(b, b);
  const auto dab = pairwise_sq_dist(a, b);
  torch::Tensor total;
  for (double sigma : bank.sigmas) {
    const double scale = -1.0 / (2.0 * sigma * sigma);
    const auto kaa = torch::exp(daa * scale);
    const auto kbb = torch::exp(dbb * scale);
    const auto kab = torch::exp(dab * scale);
    // Both reduction orders of the cross term, so swapping A and B is exact.
    const auto cross = kab.mean() + kab.t().contiguous().mean();
    torch::Tensor term;
    if (estimator == MmdEstimator::Biased) {
      term = kaa.mean() + kbb.mean() - cross;
    } else {
      term = off_diagonal_mean(kaa) + off_diagonal_mean(kbb) - cross;
    }
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<double>(bank.sigmas.size());
}

torch::Tensor style_loss(const torch::Tensor& feat_real, const torch::Tensor& feat_fake, const KernelBank& bank,
                         MmdEstimator estimator) {
  if (feat_real.dim() == 0 || feat_fake.dim() == 0 || feat_real.size(0) == 0 || feat_fake.size(0) == 0) {
    throw Error(ErrorCode::EmptySet, "style loss needs nonempty feature batches");
  }
  return mk_mmd_sq(feat_real.reshape({feat_real.size(0), -1}), feat_fake.reshape({feat_fake.size(0), -1}), bank,
                   estimator);
}

double total_losses(const ObjectiveTerms<double>& x2y, const ObjectiveTerms<double>& y2x, const LossWeights& w) {
  w.validate();
  return weighted_total(x2y, w) + weighted_total(y2x, w);
}

LossReport make_report(const LossComponents<double>& x2y, const LossComponents<double>& y2x, const LossWeights& w) {
  LossReport r;
  r.x2y = {x2y, weighted_total(group_terms(x2y, w), w)};
  r.y2x = {y2x, weighted_total(group_terms(y2x, w), w)};
  r.total = r.x2y.total + r.y2x.total;
  return r;
}

std::string loss_csv_header() { return "step,direction,adv,cam,cycle,identity,l1,constancy,style,total\n"; }

std::string loss_csv_rows(long step, const LossReport& report) {
  std::ostringstream out;
  out.precision(9);
  auto row = [&](const char* dir, const DirectionReport& d) {
    const auto& p = d.parts;
    out << step << ',' << dir << ',' << p.adv << ',' << p.cam << ',' << p.cycle << ',' << p.identity << ',' << p.l1
        << ',' << p.constancy << ',' << p.style << ',' << d.total << '\n';
  };
  row("x2y", report.x2y);
  row("y2x", report.y2x);
  return out.str();
}

}  // namespace zigan
