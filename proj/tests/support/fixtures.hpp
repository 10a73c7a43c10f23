#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace zigan::testing {

inline const std::filesystem::path kFont = ZIGAN_TEST_FONT;
inline const std::filesystem::path kFontAlt = ZIGAN_TEST_FONT_ALT;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Latin, Greek and Cyrillic letters plus digits: all present in the test font.
std::vector<char32_t> test_codepoints(std::size_t count);

/// The "calligraphy" style used by synthetic corpora: the standard render
/// dilated (heavier strokes) and sheared to the right.
torch::Tensor distort_glyph(const torch::Tensor& gray);

/// Writes `U+XXXX.png` scans of the distorted style for every codepoint.
void write_synthetic_style(const std::filesystem::path& dir, const std::filesystem::path& font,
                           const std::vector<char32_t>& codepoints, int canvas);

bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace zigan::testing
