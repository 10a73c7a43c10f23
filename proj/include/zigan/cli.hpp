#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "zigan/training.hpp"

namespace zigan {

/// Everything one run needs: the training hyperparameters plus data paths and
/// where outputs go. Derived output paths all live under work_dir.
struct RunConfig {
  TrainConfig train;
  std::filesystem::path font;
  std::filesystem::path style_dir;
  int style_id = 1;
  int pool_size = 6000;
  std::string pool_universe = "U+4E00-U+9FA5";
  std::filesystem::path work_dir = "zigan-run";
  std::filesystem::path checkpoint_dir;  // empty: <work_dir>/checkpoints
  int workers = 1;
  int recognizer_epochs = 30;
  double threshold = 0.0;

  /// Throws Error(Config) naming the key for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  void validate() const;

  std::filesystem::path split_manifest() const { return work_dir / "split.txt"; }
  std::filesystem::path pool_manifest() const { return work_dir / "pool.txt"; }
  std::filesystem::path checkpoints() const {
    return checkpoint_dir.empty() ? work_dir / "checkpoints" : checkpoint_dir;
  }
  std::filesystem::path loss_log() const { return work_dir / "loss.csv"; }
  std::filesystem::path eval_dir() const { return work_dir / "eval"; }
  std::filesystem::path recognizer_path() const { return work_dir / "recognizer.pt"; }
  std::filesystem::path generated_dir() const { return work_dir / "generated"; }
  std::filesystem::path attention_dir() const { return work_dir / "attention"; }
};

struct ConfigKeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
};

/// Every accepted key, in the order --help lists them.
std::vector<ConfigKeyDoc> config_key_docs();

/// `key = value` lines, `#` starts a comment, blank lines ignored. Later
/// lines win. Errors name `origin` and the line number.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin = "config");
RunConfig parse_config_text(std::string_view text, const std::string& origin = "config");

/// "U+4E00-U+9FA5,U+3400" style lists of single codepoints and inclusive ranges.
std::vector<char32_t> parse_codepoint_ranges(std::string_view text);

/// Runs the command-line tool. Returns the process exit status:
/// 0 success, 2 config/usage, 3 data, 4 numeric, 5 I/O.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace zigan
