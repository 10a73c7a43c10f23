#include <cmath>
#include <random>

#include "test_doctest.hpp"
#include "oracles.hpp"
#include "zigan/errors.hpp"
#include "zigan/losses.hpp"

using namespace zigan;
using namespace zigan::testing;

namespace {

torch::Tensor full(double v, std::vector<int64_t> shape = {2, 1, 4, 4}) {
  return torch::full(shape, v, torch::kFloat64);
}

double val(const torch::Tensor& t) { return t.item<double>(); }

/// Random double tensor whose entries stay at least `gap` away from `away`'s,
/// so |a-b| never sits on its kink during finite differencing.
torch::Tensor away_from(const torch::Tensor& away, std::mt19937_64& rng, double gap = 1e-2) {
  std::normal_distribution<double> n(0.0, 1.0);
  auto out = torch::empty_like(away);
  auto flat = out.view({-1});
  auto ref = away.reshape({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    double v = n(rng);
    while (std::abs(v - ref[i].item<double>()) < gap) v = n(rng);
    flat[i] = v;
  }
  return out;
}

}  // namespace

TEST_CASE("least-squares adversarial losses") {
  CHECK(val(adv_loss_d(full(1), full(0))) == 0.0);
  CHECK(val(adv_loss_d(full(0), full(1))) == 2.0);
  CHECK(val(adv_loss_d(full(0.5), full(0.5))) == 0.5);
  CHECK(val(adv_loss_g(full(1))) == 0.0);
  CHECK(val(adv_loss_g(full(0))) == 1.0);
  CHECK(val(adv_loss_g(full(0.5))) == 0.25);
  CHECK_THROWS_AS(adv_loss_d(full(1), full(0, {2, 1, 2, 2})), Error);

  CHECK(val(cam_loss_d(full(1, {4}), full(0, {4}))) == 0.0);
  CHECK(val(cam_loss_g(full(1, {4}))) == 0.0);
  CHECK(val(cam_loss_g(full(0.5, {4}))) == 0.25);
  CHECK_THROWS_AS(cam_loss_d(full(1, {4}), full(0, {3})), Error);
}

TEST_CASE("L1 family: cycle, identity, paired") {
  for (auto fn : {cycle_loss, identity_loss, paired_l1_loss}) {
    auto x = torch::randn({2, 3, 4, 4}, torch::kFloat64);
    CHECK(val(fn(x, x)) == 0.0);
    CHECK(val(fn(full(1, {2, 3, 4, 4}), full(-1, {2, 3, 4, 4}))) == 2.0);
    auto half = torch::zeros({2, 3, 4, 4}, torch::kFloat64);
    half.slice(3, 0, 2).fill_(1.0);
    CHECK(val(fn(torch::zeros_like(half), half)) == 0.5);
    CHECK_THROWS_AS(fn(x, x.slice(0, 0, 1)), Error);
  }
}

TEST_CASE("constancy and alignment") {
  auto f = torch::randn({3, 8, 1, 1}, torch::kFloat64);
  CHECK(val(constancy_loss(f, f)) == 0.0);
  CHECK(val(constancy_loss(f, f + 1.0)) == doctest::Approx(1.0).epsilon(1e-12));
  auto four = torch::zeros({4}, torch::kFloat64);
  auto other = four.clone();
  other[2] = 2.0;
  CHECK(val(constancy_loss(four, other)) == 1.0);

  const LossWeights w;
  auto y = torch::zeros({1, 3, 2, 2}, torch::kFloat64);
  CHECK(val(alignment_loss(y, y, f, f, w)) == 0.0);
  CHECK(val(alignment_loss(y, y + 1.0, f, f, w)) == 5.0);
  CHECK(val(alignment_loss(y, y + 0.2, four, four + std::sqrt(0.5), w)) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("gaussian kernel") {
  auto a = torch::tensor({0.5, -1.0, 2.0}, torch::kFloat64);
  CHECK(val(gaussian_kernel(a, a, 0.7)) == 1.0);
  // ‖a-b‖² = 2σ² with σ = 1.5
  auto b = a.clone();
  b[0] += 1.5 * std::sqrt(2.0);
  CHECK(val(gaussian_kernel(a, b, 1.5)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(std::abs(val(gaussian_kernel(a, b, 1e9)) - 1.0) < 1e-9);
  CHECK_THROWS_AS(gaussian_kernel(a, b, 0.0), Error);
}

TEST_CASE("mk_mmd_sq hand value and errors") {
  auto a = torch::zeros({1, 1}, torch::kFloat64);
  auto b = torch::ones({1, 1}, torch::kFloat64);
  CHECK(val(mk_mmd_sq(a, b, KernelBank{{1.0}})) == doctest::Approx(0.786939).epsilon(1e-6));
  CHECK(std::abs(val(mk_mmd_sq(a, b, KernelBank{{1.0}})) - (2.0 - 2.0 * std::exp(-0.5))) < 1e-15);

  CHECK_THROWS_AS(mk_mmd_sq(torch::zeros({0, 2}, torch::kFloat64), torch::zeros({2, 2}, torch::kFloat64),
                            KernelBank{{1.0}}),
                  Error);
  CHECK_THROWS_AS(mk_mmd_sq(torch::zeros({3, 2}, torch::kFloat64), torch::zeros({3, 3}, torch::kFloat64),
                            KernelBank{{1.0}}),
                  Error);
  CHECK_THROWS_AS(mk_mmd_sq(a, b, KernelBank{{}}), Error);
  CHECK_THROWS_AS(mk_mmd_sq(a, b, KernelBank{{-1.0}}), Error);
  try {
    mk_mmd_sq(a, b, KernelBank{{1.0}}, MmdEstimator::Unbiased);
    FAIL("unbiased estimator must reject singleton sets");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySet);
  }
}

TEST_CASE("mk_mmd_sq matches the double-loop oracle, is symmetric and permutation invariant") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 16);
  for (int trial = 0; trial < 40; ++trial) {
    const auto na = static_cast<std::size_t>(size(rng)), nb = static_cast<std::size_t>(size(rng));
    auto ra = random_rows(rng, na, 4);
    auto rb = random_rows(rng, nb, 4, 1.5);
    const KernelBank bank{{0.5, 1.0, 2.0}};
    auto ta = to_tensor(ra), tb = to_tensor(rb);
    const double fast = val(mk_mmd_sq(ta, tb, bank));
    CHECK(std::abs(fast - naive_mk_mmd(ra, rb, bank.sigmas)) < 1e-6);
    CHECK(fast >= 0.0);
    CHECK(val(mk_mmd_sq(tb, ta, bank)) == fast);
    auto perm = torch::randperm(static_cast<int64_t>(na));
    CHECK(std::abs(val(mk_mmd_sq(ta.index_select(0, perm), tb, bank)) - fast) < 1e-12);
    CHECK(val(mk_mmd_sq(ta, ta, bank)) <= 1e-10);
  }
}

TEST_CASE("unbiased estimator agrees with the off-diagonal oracle") {
  std::mt19937_64 rng(5);
  auto ra = random_rows(rng, 6, 3), rb = random_rows(rng, 5, 3);
  const double s = 1.3;
  double aa = 0, bb = 0, ab = 0;
  for (std::size_t i = 0; i < ra.size(); ++i)
    for (std::size_t j = 0; j < ra.size(); ++j)
      if (i != j) aa += naive_gaussian(ra[i], ra[j], s);
  for (std::size_t i = 0; i < rb.size(); ++i)
    for (std::size_t j = 0; j < rb.size(); ++j)
      if (i != j) bb += naive_gaussian(rb[i], rb[j], s);
  for (const auto& x : ra)
    for (const auto& y : rb) ab += naive_gaussian(x, y, s);
  const double expected = aa / 30.0 + bb / 20.0 - 2.0 * ab / 30.0;
  CHECK(std::abs(val(mk_mmd_sq(to_tensor(ra), to_tensor(rb), KernelBank{{s}}, MmdEstimator::Unbiased)) - expected) <
        1e-12);
}

TEST_CASE("style loss") {
  std::mt19937_64 rng(9);
  auto real = torch::randn({6, 16, 1, 1}, torch::kFloat64);
  const KernelBank bank{{1.0, 4.0}};
  CHECK(val(style_loss(real, real, bank)) <= 1e-12);
  auto perm = torch::randperm(6);
  auto fake = torch::randn({5, 16, 1, 1}, torch::kFloat64) + 0.5;
  CHECK(std::abs(val(style_loss(real, fake, bank)) - val(style_loss(real.index_select(0, perm), fake, bank))) < 1e-12);

  // Far-apart clusters with σ ≪ gap: the cross term vanishes.
  auto cluster_a = torch::randn({4, 3}, torch::kFloat64) * 0.01;
  auto cluster_b = torch::randn({4, 3}, torch::kFloat64) * 0.01 + 100.0;
  const KernelBank narrow{{0.1}};
  Rows ra(4, std::vector<double>(3)), rb(4, std::vector<double>(3));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      ra[i][j] = cluster_a[i][j].item<double>();
      rb[i][j] = cluster_b[i][j].item<double>();
    }
  const double got = val(style_loss(cluster_a, cluster_b, narrow));
  CHECK(std::abs(got - naive_mk_mmd(ra, rb, narrow.sigmas)) < 1e-9);
  double within = 0.0;
  for (const auto& x : ra)
    for (const auto& y : ra) within += naive_gaussian(x, y, 0.1);
  for (const auto& x : rb)
    for (const auto& y : rb) within += naive_gaussian(x, y, 0.1);
  CHECK(std::abs(got - within / 16.0) < 1e-9);
  CHECK_THROWS_AS(style_loss(torch::zeros({0, 4}), torch::zeros({2, 4}), bank), Error);
}

TEST_CASE("median heuristic bank") {
  auto pts = torch::tensor({0.0, 1.0, 3.0}, torch::kFloat64).reshape({3, 1});
  // Distances 1, 2, 3 -> median 2.
  auto bank = median_heuristic_bank(pts);
  REQUIRE(bank.sigmas.size() == 5);
  CHECK(bank.sigmas[0] == 0.5);
  CHECK(bank.sigmas[2] == 2.0);
  CHECK(bank.sigmas[4] == 8.0);
  CHECK(median_heuristic_bank(torch::zeros({4, 2})).sigmas[2] == 1.0);
}

TEST_CASE("total_losses: weights, unit components and linearity") {
  const LossWeights w;
  const ObjectiveTerms<double> zero{};
  const ObjectiveTerms<double> unit{1, 1, 1, 1};
  CHECK(total_losses(zero, zero, w) == 0.0);
  CHECK(total_losses(unit, zero, w) == 35.0);
  CHECK(total_losses(zero, unit, w) == 35.0);
  const ObjectiveTerms<double> t{0.3, 1.7, 2.2, 0.05};
  const ObjectiveTerms<double> t2{0.6, 3.4, 4.4, 0.1};
  CHECK(std::abs(total_losses(t2, t2, w) - 2.0 * total_losses(t, t, w)) < 1e-12);
  LossWeights w2 = w;
  w2.lambda3 *= 3.0;
  const ObjectiveTerms<double> only_align{0, 0, 2.2, 0};
  CHECK(std::abs(total_losses(only_align, zero, w2) - 3.0 * total_losses(only_align, zero, w)) < 1e-12);

  LossWeights bad = w;
  bad.lambda2 = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);

  LossComponents<double> c{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  auto report = make_report(c, LossComponents<double>{}, w);
  const double expected = 5 * (0.1 + 0.2) + 10 * (0.3 + 0.4) + 10 * (5 * 0.5 + 0.6) + 10 * 0.7;
  CHECK(report.x2y.total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(report.total == report.x2y.total);
  const auto rows = loss_csv_rows(3, report);
  CHECK(rows.rfind("3,x2y,0.1,0.2,0.3,0.4,0.5,0.6,0.7,", 0) == 0);
  CHECK(rows.find("\n3,y2x,0,0,0,0,0,0,0,0\n") != std::string::npos);
}

TEST_CASE("every loss is nonnegative on random inputs") {
  std::mt19937_64 rng(1);
  const LossWeights w;
  for (int trial = 0; trial < 20; ++trial) {
    auto a = torch::randn({2, 8}, torch::kFloat64), b = torch::randn({2, 8}, torch::kFloat64);
    CHECK(val(adv_loss_d(a, b)) >= 0);
    CHECK(val(adv_loss_g(a)) >= 0);
    CHECK(val(cam_loss_d(a, b)) >= 0);
    CHECK(val(cam_loss_g(a)) >= 0);
    CHECK(val(cycle_loss(a, b)) >= 0);
    CHECK(val(constancy_loss(a, b)) >= 0);
    CHECK(val(alignment_loss(a, b, a, b, w)) >= 0);
    CHECK(val(style_loss(a, b, median_heuristic_bank(torch::cat({a, b})))) >= 0);
  }
}

TEST_CASE("autograd gradients match central differences") {
  std::mt19937_64 rng(77);
  const LossWeights w;
  const KernelBank bank{{0.7, 1.5}};
  for (int trial = 0; trial < 5; ++trial) {
    auto fixed = torch::randn({8}, torch::kFloat64);
    auto x = away_from(fixed, rng);
    CHECK(gradient_check([&](const torch::Tensor& v) { return adv_loss_d(v, fixed); }, x) < 1e-3);
    CHECK(gradient_check([&](const torch::Tensor& v) { return adv_loss_g(v); }, x) < 1e-3);
    CHECK(gradient_check([&](const torch::Tensor& v) { return cycle_loss(fixed, v); }, x) < 1e-3);
    CHECK(gradient_check([&](const torch::Tensor& v) { return constancy_loss(fixed, v); }, x) < 1e-3);
    CHECK(gradient_check([&](const torch::Tensor& v) { return alignment_loss(fixed, v, fixed, v, w); }, x) < 1e-3);
    CHECK(gradient_check(
              [&](const torch::Tensor& v) { return mk_mmd_sq(v.reshape({4, 2}), fixed.reshape({4, 2}), bank); }, x) <
          1e-3);
  }
}
