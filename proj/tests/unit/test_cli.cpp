#include <opencv2/imgcodecs.hpp>

#include <sstream>

#include "test_doctest.hpp"
#include "fixtures.hpp"
#include "zigan/cli.hpp"
#include "zigan/errors.hpp"
#include "zigan/util.hpp"

using namespace zigan;
using zigan::testing::kFont;
using zigan::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli_main(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

/// A tiny but complete run: 8 styled characters (4 shots, 4 test), Latin pool.
struct Workspace {
  TempDir tmp{"cli"};
  fs::path config = tmp / "run.cfg";

  explicit Workspace(const std::string& extra = "") {
    zigan::testing::write_synthetic_style(tmp / "style", kFont, zigan::testing::test_codepoints(8), 64);
    write_file_atomic(config, "# tiny run\n"
                              "font = " + kFont.string() + "\n"
                              "style_dir = " + (tmp / "style").string() + "\n"
                              "work_dir = " + (tmp / "work").string() + "\n"
                              "resolution = 64\nwidth_divisor = 8\nbatch_size = 2\nepochs = 2\n"
                              "checkpoint_every = 1\nshots = 4\nseed = 3\npool_size = 6\n"
                              "pool_universe = U+0061-U+007A\nrecognizer_epochs = 1\n" + extra);
  }
  fs::path work() const { return tmp / "work"; }
  std::vector<std::string> with(std::vector<std::string> args) const {
    args.insert(args.begin(), {"--config", config.string()});
    return args;
  }
};

std::string file_bytes(const fs::path& p) { return read_text_file(p); }

}  // namespace

TEST_CASE("config text parsing") {
  const auto c = parse_config_text("# comment\n  shots = 12  # trailing\n\nlr=0.001\nshots = 7\n");
  CHECK(c.train.shots == 7);
  CHECK(c.train.lr0 == 0.001);

  try {
    parse_config_text("shots = 1\n\nnot_a_key = 3\n", "run.cfg");
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Config);
    CHECK(std::string(e.what()).find("run.cfg:3") != std::string::npos);
    CHECK(std::string(e.what()).find("not_a_key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("shots 4\n"), Error);
  CHECK_THROWS_AS(parse_config_text("shots = four\n"), Error);
  CHECK_THROWS_AS(parse_config_text("pool_universe = U+0062-U+0061\n"), Error);

  // Every documented key round-trips through to_map.
  RunConfig d;
  const auto m = d.to_map();
  for (const auto& doc : config_key_docs()) CHECK_MESSAGE(m.count(doc.key) == 1, doc.key);
  CHECK(config_key_docs().size() == m.size());
}

TEST_CASE("codepoint range lists") {
  const auto cps = parse_codepoint_ranges("U+0041-U+0043, U+4E00");
  CHECK((cps == std::vector<char32_t>{0x41, 0x42, 0x43, 0x4E00}));
  CHECK(parse_codepoint_ranges("").empty());
  CHECK_THROWS_AS(parse_codepoint_ranges("U+0041-"), Error);
  CHECK_THROWS_AS(parse_codepoint_ranges("banana"), Error);
}

TEST_CASE("help documents every key on every command") {
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{"--help"}, {"prepare", "--help"}, {"train", "--help"}, {"generate", "--help"},
        {"eval", "--help"}, {"attention", "--help"}}) {
    const auto o = run(args);
    CHECK(o.code == 0);
    for (const auto& doc : config_key_docs()) CHECK_MESSAGE(o.out.find("  " + doc.key + " ") != std::string::npos, doc.key);
  }
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"train", "--no-such-flag"}).code == 2);
}

TEST_CASE("configuration errors exit 2 before any work") {
  Workspace ws;
  auto o = run(ws.with({"--set", "lambda1=-1", "prepare"}));
  CHECK(o.code == 2);
  CHECK_FALSE(fs::exists(ws.work()));

  o = run(ws.with({"--set", "colour=blue", "prepare"}));
  CHECK(o.code == 2);
  CHECK(o.err.find("colour") != std::string::npos);

  o = run(ws.with({"--set", "style_dir=" + (ws.tmp / "nowhere").string(), "prepare"}));
  CHECK(o.code == 2);
  CHECK_FALSE(fs::exists(ws.work()));

  o = run({"--config", (ws.tmp / "missing.cfg").string(), "prepare"});
  CHECK(o.code == 2);

  o = run(ws.with({"train"}));
  CHECK(o.code == 2);
  CHECK(o.err.find("prepare") != std::string::npos);

  o = run(ws.with({"--set", "pool_size=500", "prepare"}));
  CHECK(o.code == 3);
  CHECK_FALSE(fs::exists(ws.work() / "split.txt"));
}

TEST_CASE("prepare is idempotent for a fixed seed and overrides apply in order") {
  Workspace ws;
  REQUIRE(run(ws.with({"prepare"})).code == 0);
  const auto split = file_bytes(ws.work() / "split.txt");
  const auto pool = file_bytes(ws.work() / "pool.txt");
  REQUIRE(run(ws.with({"prepare"})).code == 0);
  CHECK(file_bytes(ws.work() / "split.txt") == split);
  CHECK(file_bytes(ws.work() / "pool.txt") == pool);

  REQUIRE(run(ws.with({"--seed", "4", "prepare"})).code == 0);
  CHECK(file_bytes(ws.work() / "pool.txt") != pool);
  // --set is applied after --seed.
  REQUIRE(run(ws.with({"--seed", "4", "--set", "seed=3", "prepare"})).code == 0);
  CHECK(file_bytes(ws.work() / "pool.txt") == pool);
  // Global flags may also follow the command.
  REQUIRE(run(ws.with({"prepare", "--seed", "4"})).code == 0);
  CHECK(file_bytes(ws.work() / "pool.txt") != pool);
}

TEST_CASE("train, resume, generate, eval and attention end to end") {
  Workspace ws;
  REQUIRE(run(ws.with({"prepare"})).code == 0);
  auto o = run(ws.with({"train"}));
  REQUIRE_MESSAGE(o.code == 0, o.err);
  CHECK(o.out.find("epoch 1/2") != std::string::npos);
  CHECK(o.out.find("epoch 2/2") != std::string::npos);
  const auto log = file_bytes(ws.work() / "loss.csv");
  const auto ckpt = ws.work() / "checkpoints";
  CHECK(fs::is_directory(ckpt / "epoch_00002"));

  SUBCASE("resume reproduces the uninterrupted run") {
    fs::remove_all(ckpt / "epoch_00002");
    o = run(ws.with({"train", "--resume", (ckpt / "epoch_00001").string()}));
    REQUIRE_MESSAGE(o.code == 0, o.err);
    CHECK(o.out.find("epoch 1/2") == std::string::npos);
    CHECK(file_bytes(ws.work() / "loss.csv") == log);
    CHECK(run(ws.with({"train", "--resume", (ws.tmp / "nope").string()})).code == 2);
  }

  SUBCASE("generate writes one image per character and a strip") {
    o = run(ws.with({"generate", "--text", "abcde"}));
    REQUIRE_MESSAGE(o.code == 0, o.err);
    for (const auto* f : {"U+0061.png", "U+0062.png", "U+0063.png", "U+0064.png", "U+0065.png"}) {
      CHECK_MESSAGE(fs::exists(ws.work() / "generated" / f), f);
    }
    const auto strip = cv::imread((ws.work() / "generated" / "strip.png").string());
    CHECK(strip.rows == 64);
    CHECK(strip.cols == 5 * 64);
    const auto first = file_bytes(ws.work() / "generated" / "U+0061.png");
    REQUIRE(run(ws.with({"generate", "--codepoints", "U+0061"})).code == 0);
    CHECK(file_bytes(ws.work() / "generated" / "U+0061.png") == first);

    o = run(ws.with({"generate", "--text", "a\xe6\xb0\xb8", "--out", (ws.tmp / "partial").string()}));
    CHECK(o.code == 0);
    CHECK(o.err.find("U+6C38") != std::string::npos);
    CHECK(fs::exists(ws.tmp / "partial" / "U+0061.png"));

    o = run(ws.with({"generate", "--text", "\xe6\xb0\xb8", "--out", (ws.tmp / "none").string()}));
    CHECK(o.code == 3);
    CHECK_FALSE(fs::exists(ws.tmp / "none"));
    CHECK(run(ws.with({"generate", "--text", ""})).code == 2);
  }

  SUBCASE("eval requires a recognizer and writes all reports") {
    o = run(ws.with({"eval"}));
    CHECK(o.code == 2);
    CHECK(o.err.find("--train-recognizer") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.work() / "eval"));

    o = run(ws.with({"eval", "--train-recognizer"}));
    REQUIRE_MESSAGE(o.code == 0, o.err);
    for (const auto* f : {"iou.csv", "accuracy.csv", "fid.csv", "summary.json", "grid_style1.png"}) {
      CHECK_MESSAGE(fs::exists(ws.work() / "eval" / f), f);
    }
    CHECK(fs::exists(ws.work() / "recognizer.pt"));
    const auto iou = file_bytes(ws.work() / "eval" / "iou.csv");
    REQUIRE(run(ws.with({"eval", "--out", (ws.tmp / "again").string()})).code == 0);
    CHECK(file_bytes(ws.tmp / "again" / "iou.csv") == iou);
  }

  SUBCASE("attention sheet has four rows") {
    const auto styled = zigan::testing::test_codepoints(1).front();
    o = run(ws.with({"attention", "--codepoints", codepoint_label(styled) + ",U+0061",
                     "--checkpoint", (ckpt / "epoch_00001").string()}));
    REQUIRE_MESSAGE(o.code == 0, o.err);
    const auto sheet = cv::imread((ws.work() / "attention" / "sheet.png").string());
    CHECK(sheet.rows == 4 * 64);
    CHECK(sheet.cols == 2 * 64);
    CHECK(fs::exists(ws.work() / "attention" / "heat_U+0061.png"));
  }
}
