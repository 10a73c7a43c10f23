#include <cmath>
#include <fstream>

#include "test_doctest.hpp"
#include "fixtures.hpp"
#include "zigan/errors.hpp"
#include "zigan/training.hpp"
#include "zigan/util.hpp"

using namespace zigan;
using zigan::testing::bitwise_equal;
using zigan::testing::kFont;
using zigan::testing::kFontAlt;
using zigan::testing::TempDir;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.resolution = 64;
  c.width_divisor = 8;
  c.batch_size = 2;
  c.epochs = 2;
  c.shots = 4;
  c.seed = 11;
  c.checkpoint_every = 1;
  return c;
}

std::vector<PairedSample> tiny_pairs(std::size_t n) {
  std::vector<PairedSample> out;
  for (char32_t cp : zigan::testing::test_codepoints(n)) {
    auto target = render_source_glyph(kFontAlt, cp, 64);
    out.push_back({render_source_glyph(kFont, cp, 64), target});
  }
  return out;
}

std::vector<GlyphImage> tiny_pool(std::size_t n) {
  std::vector<GlyphImage> out;
  const auto cps = zigan::testing::test_codepoints(n + 8);
  for (std::size_t i = 8; i < cps.size(); ++i) out.push_back(render_source_glyph(kFont, cps[i], 64));
  return out;
}

std::vector<torch::Tensor> clone_all(const std::vector<torch::Tensor>& ts) {
  std::vector<torch::Tensor> out;
  for (const auto& t : ts) out.push_back(t.detach().clone());
  return out;
}

bool all_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bitwise_equal(a[i], b[i])) return false;
  }
  return true;
}

bool any_changed(const std::vector<torch::Tensor>& before, const std::vector<torch::Tensor>& after) {
  return !all_equal(before, clone_all(after));
}

void require_same_checkpoint(const Checkpoint& a, const Checkpoint& b) {
  REQUIRE(a.model.size() == b.model.size());
  for (std::size_t i = 0; i < a.model.size(); ++i) {
    CHECK(a.model[i].first == b.model[i].first);
    CHECK_MESSAGE(bitwise_equal(a.model[i].second, b.model[i].second), a.model[i].first);
  }
  REQUIRE(a.optimizer.size() == b.optimizer.size());
  for (std::size_t i = 0; i < a.optimizer.size(); ++i) {
    CHECK_MESSAGE(bitwise_equal(a.optimizer[i].second, b.optimizer[i].second), a.optimizer[i].first);
  }
  CHECK(a.generator_steps == b.generator_steps);
  CHECK(a.discriminator_steps == b.discriminator_steps);
  CHECK(a.epoch == b.epoch);
  CHECK(a.global_step == b.global_step);
  CHECK(bitwise_equal(a.rng_state, b.rng_state));
}

}  // namespace

TEST_CASE("learning rate halves every 500 epochs") {
  TrainConfig c;
  CHECK(lr_at(c, 0) == 3e-4);
  CHECK(lr_at(c, 499) == 3e-4);
  CHECK(lr_at(c, 500) == 1.5e-4);
  CHECK(lr_at(c, 1000) == 7.5e-5);
  CHECK(lr_at(c, 1499) == 7.5e-5);
  for (int e = 1; e < 1500; ++e) CHECK(lr_at(c, e) <= lr_at(c, e - 1));
  CHECK_THROWS_AS(lr_at(c, -1), Error);
}

TEST_CASE("config round-trips through its key=value form") {
  auto c = tiny_config();
  c.kernel_policy = KernelPolicy::Fixed;
  c.kernel_sigmas = {0.5, 1.0, 2.0};
  c.estimator = MmdEstimator::Unbiased;
  TrainConfig d;
  CHECK(d.apply(c.to_map()).empty());
  CHECK(d.serialize() == c.serialize());
  CHECK(d.hash() == c.hash());

  const auto unknown = d.apply({{"epochz", "3"}, {"lr", "0.001"}});
  REQUIRE(unknown.size() == 1);
  CHECK(unknown[0] == "epochz");
  CHECK(d.lr0 == 0.001);

  CHECK_THROWS_AS(d.apply({{"batch_size", "eight"}}), Error);
  TrainConfig bad = tiny_config();
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny_config();
  bad.resolution = 96;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny_config();
  bad.weights.lambda2 = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("scheduler alternates paired and unpaired batches deterministically") {
  BatchScheduler s(5, 7, 2, 3);
  CHECK(s.steps_per_epoch() == 6);
  const auto e0 = s.epoch(0);
  REQUIRE(e0.size() == 6);
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < e0.size(); ++i) {
    CHECK(e0[i].kind == (i % 2 == 0 ? BatchKind::Paired : BatchKind::Unpaired));
    CHECK(e0[i].sources.size() == 2);
    CHECK(e0[i].targets.size() == 2);
    if (e0[i].kind == BatchKind::Paired) {
      CHECK((e0[i].sources == e0[i].targets));
      for (auto k : e0[i].sources) CHECK(k < 5);
      if (i < 4) seen.insert(seen.end(), e0[i].sources.begin(), e0[i].sources.end());
    } else {
      for (auto k : e0[i].sources) CHECK(k < 7);
      for (auto k : e0[i].targets) CHECK(k < 5);
    }
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());

  BatchScheduler again(5, 7, 2, 3);
  const auto r0 = again.epoch(0);
  for (std::size_t i = 0; i < e0.size(); ++i) {
    CHECK((r0[i].sources == e0[i].sources));
    CHECK((r0[i].targets == e0[i].targets));
  }
  bool differs = false;
  const auto e1 = s.epoch(1);
  for (std::size_t i = 0; i < e0.size(); ++i) differs |= e1[i].sources != e0[i].sources;
  CHECK(differs);

  CHECK_THROWS_AS(BatchScheduler(5, 0, 2, 3), Error);
  try {
    BatchScheduler(5, 0, 2, 3);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyPool);
  }
}

TEST_CASE("Adam matches the reference optimizer") {
  torch::manual_seed(5);
  auto w0 = torch::randn({4, 3});
  auto x = torch::randn({6, 4});
  auto ours = w0.clone().set_requires_grad(true);
  auto theirs = w0.clone().set_requires_grad(true);
  Adam adam({ours}, 0.5, 0.999);
  torch::optim::Adam ref({theirs}, torch::optim::AdamOptions(3e-4).betas({0.5, 0.999}).eps(1e-8));
  for (int i = 0; i < 5; ++i) {
    adam.zero_grad();
    x.matmul(ours).pow(2).sum().backward();
    adam.step(3e-4);
    ref.zero_grad();
    x.matmul(theirs).pow(2).sum().backward();
    ref.step();
  }
  CHECK(torch::allclose(ours, theirs, 0.0, 1e-7));
}

TEST_CASE("each phase updates only its own networks") {
  Trainer trainer(tiny_config());
  TrainingData data(tiny_pairs(4), tiny_pool(6));
  BatchScheduler s(4, 6, 2, 11);
  const auto batch = data.materialize(s.epoch(0)[0]);

  const auto gen = trainer.model().generator_parameters();
  const auto disc = trainer.model().discriminator_parameters();
  const auto gen0 = clone_all(gen);
  const auto disc0 = clone_all(disc);

  const auto t = trainer.translate(batch);
  trainer.discriminator_phase(batch, t);
  CHECK(all_equal(gen0, clone_all(gen)));
  CHECK(any_changed(disc0, disc));

  const auto disc1 = clone_all(disc);
  trainer.generator_phase(batch, t);
  CHECK(all_equal(disc1, clone_all(disc)));
  CHECK(any_changed(gen0, gen));
  for (const auto& p : disc) CHECK(p.requires_grad());
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  auto c = tiny_config();
  c.lr0 = 0.0;
  Trainer trainer(c);
  TrainingData data(tiny_pairs(4), tiny_pool(6));
  BatchScheduler s(4, 6, 2, 11);
  const auto gen0 = clone_all(trainer.model().generator_parameters());
  const auto disc0 = clone_all(trainer.model().discriminator_parameters());
  for (const auto& plan : s.epoch(0)) trainer.train_step(data.materialize(plan));
  CHECK(all_equal(gen0, clone_all(trainer.model().generator_parameters())));
  CHECK(all_equal(disc0, clone_all(trainer.model().discriminator_parameters())));
}

TEST_CASE("identical seeds give bitwise identical loss traces") {
  auto run = [] {
    Trainer trainer(tiny_config());
    TrainingData data(tiny_pairs(4), tiny_pool(6));
    BatchScheduler s(4, 6, 2, 11);
    std::vector<double> totals;
    for (int e = 0; e < 2; ++e) {
      for (const auto& plan : s.epoch(e)) totals.push_back(trainer.train_step(data.materialize(plan)).total);
    }
    return totals;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  for (double v : a) CHECK(std::isfinite(v));
}

TEST_CASE("checkpoints round-trip bit-exactly and resume the same trajectory") {
  TempDir tmp("ckpt");
  Trainer trainer(tiny_config());
  TrainingData data(tiny_pairs(4), tiny_pool(6));
  BatchScheduler s(4, 6, 2, 11);
  const auto plans = s.epoch(0);
  trainer.train_step(data.materialize(plans[0]));
  trainer.train_step(data.materialize(plans[1]));

  const auto snap = trainer.snapshot();
  save_checkpoint(snap, tmp / "c");
  for (const auto* f : {"manifest.tsv", "meta.txt", "config.txt", "rng.bin", "optimizer/state.txt"}) {
    CHECK_MESSAGE(std::filesystem::exists(tmp / "c" / f), f);
  }
  const auto loaded = load_checkpoint(tmp / "c");
  require_same_checkpoint(snap, loaded);

  Trainer resumed(tiny_config());
  resumed.restore(loaded);
  const auto next = data.materialize(plans[2]);
  const double a = trainer.train_step(next).total;
  const double b = resumed.train_step(next).total;
  CHECK(a == b);
  CHECK(all_equal(clone_all(trainer.model().generator_parameters()),
                  clone_all(resumed.model().generator_parameters())));
}

TEST_CASE("damaged or mismatched checkpoints are rejected") {
  TempDir tmp("ckpt_bad");
  Trainer trainer(tiny_config());
  save_checkpoint(trainer.snapshot(), tmp / "c");

  auto expect_corrupt = [](auto&& fn) {
    try {
      fn();
      FAIL("expected CorruptCheckpoint");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CorruptCheckpoint);
    }
  };

  SUBCASE("tampered manifest shape") {
    auto text = read_text_file(tmp / "c" / "manifest.tsv");
    const auto pos = text.find("\t8x3x5x5\t");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 9, "\t8x3x5x4\t");
    write_file_atomic(tmp / "c" / "manifest.tsv", text);
    expect_corrupt([&] { load_checkpoint(tmp / "c"); });
  }
  SUBCASE("truncated tensor file") {
    std::filesystem::resize_file(tmp / "c" / "params" / "gen_s.encoder.conv1.weight.bin", 10);
    expect_corrupt([&] { load_checkpoint(tmp / "c"); });
  }
  SUBCASE("edited config") {
    auto text = read_text_file(tmp / "c" / "config.txt");
    const auto pos = text.find("resolution = 64");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 15, "resolution = 128");
    write_file_atomic(tmp / "c" / "config.txt", text);
    expect_corrupt([&] { load_checkpoint(tmp / "c"); });
  }
  SUBCASE("resolution mismatch on restore") {
    const auto loaded = load_checkpoint(tmp / "c");
    auto other = tiny_config();
    other.resolution = 128;
    Trainer bigger(other);
    expect_corrupt([&] { bigger.restore(loaded); });
  }
  SUBCASE("missing directory") {
    expect_corrupt([&] { load_checkpoint(tmp / "nope"); });
  }
}

TEST_CASE("run_training resumes to the same result as an uninterrupted run") {
  TempDir tmp("resume");
  auto c = tiny_config();
  c.epochs = 2;

  TrainingData full_data(tiny_pairs(4), tiny_pool(6));
  RunOptions full{tmp / "full", tmp / "full.csv", std::nullopt, {}};
  const auto straight = run_training(c, full_data, full);
  CHECK(straight.log.size() == 8);
  CHECK(std::filesystem::exists(tmp / "full" / checkpoint_name(1)));
  CHECK(std::filesystem::exists(tmp / "full" / checkpoint_name(2)));

  auto first = c;
  first.epochs = 1;
  TrainingData part_data(tiny_pairs(4), tiny_pool(6));
  RunOptions part{tmp / "part", tmp / "part.csv", std::nullopt, {}};
  run_training(first, part_data, part);
  // A stale row past the checkpoint must be dropped on resume.
  {
    std::ofstream log(tmp / "part.csv", std::ios::app);
    log << "99,x2y,0,0,0,0,0,0,0,0\n";
  }
  RunOptions rest{tmp / "part", tmp / "part.csv", tmp / "part" / checkpoint_name(1), {}};
  const auto resumed = run_training(c, part_data, rest);
  CHECK(resumed.log.size() == 4);

  require_same_checkpoint(straight.final_checkpoint, resumed.final_checkpoint);
  CHECK(read_text_file(tmp / "full.csv") == read_text_file(tmp / "part.csv"));
}

TEST_CASE("zero epochs writes the initialization") {
  TempDir tmp("zero");
  auto c = tiny_config();
  c.epochs = 0;
  TrainingData data(tiny_pairs(4), tiny_pool(6));
  const auto run = run_training(c, data, RunOptions{tmp / "ck", {}, std::nullopt, {}});
  CHECK(run.log.empty());
  const auto loaded = load_checkpoint(tmp / "ck" / checkpoint_name(0));
  Trainer fresh(c);
  require_same_checkpoint(fresh.snapshot(), loaded);
}

TEST_CASE("non-finite losses abort without touching parameters") {
  Trainer trainer(tiny_config());
  TrainingData data(tiny_pairs(4), tiny_pool(6));
  BatchScheduler s(4, 6, 2, 11);
  auto gen = trainer.model().generator_parameters();
  {
    torch::NoGradGuard no_grad;
    gen.back().fill_(std::numeric_limits<float>::quiet_NaN());
  }
  const auto gen0 = clone_all(gen);
  const auto disc0 = clone_all(trainer.model().discriminator_parameters());
  try {
    trainer.train_step(data.materialize(s.epoch(0)[0]));
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
  }
  CHECK(all_equal(disc0, clone_all(trainer.model().discriminator_parameters())));
  CHECK(trainer.global_step() == 0);
}

TEST_CASE("empty batches are rejected") {
  Trainer trainer(tiny_config());
  TrainingBatch empty{BatchKind::Paired, torch::zeros({0, 3, 64, 64}), torch::zeros({0, 3, 64, 64})};
  CHECK_THROWS_AS(trainer.train_step(empty), Error);
}

TEST_CASE("font-backed pool renders the same batches as an in-memory pool") {
  const auto cps = zigan::testing::test_codepoints(14);
  const std::vector<char32_t> pool_cps(cps.begin() + 8, cps.end());
  TrainingData eager(tiny_pairs(4), tiny_pool(6));
  TrainingData lazy(tiny_pairs(4), kFont, pool_cps, 64);
  BatchScheduler s(4, 6, 2, 3);
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (const auto& plan : s.epoch(epoch)) {
      const auto a = eager.materialize(plan);
      const auto b = lazy.materialize(plan);
      CHECK(bitwise_equal(a.source, b.source));
      CHECK(bitwise_equal(a.target, b.target));
    }
  }
}
