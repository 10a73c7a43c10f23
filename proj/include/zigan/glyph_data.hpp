#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace zigan {

/// Square H×W×3 float image in [-1, 1]. style_id 0 is the standard source
/// font; 1..S are target calligraphy styles.
struct GlyphImage {
  torch::Tensor pixels;
  char32_t codepoint = 0;
  int style_id = 0;

  int size() const { return pixels.defined() ? static_cast<int>(pixels.size(0)) : 0; }
};

struct PairedSample {
  GlyphImage source;
  GlyphImage target;
};

/// A paired sample before its images are loaded: the codepoint plus the scan
/// that provides the target side.
struct PairRef {
  char32_t codepoint = 0;
  std::filesystem::path target_path;

  bool operator==(const PairRef&) const = default;
};

struct ShotSplit {
  int style_id = 1;
  int shots = 0;
  std::uint64_t seed = 0;
  std::vector<PairRef> train;
  std::vector<PairRef> test;
};

struct UnpairedPool {
  std::vector<char32_t> codepoints;
  std::vector<GlyphImage> images;

  std::size_t size() const { return codepoints.size(); }
};

/// TrueType/OpenType face used for source glyph rendering. Glyph coverage is
/// answered from the font's own cmap table; rasterization goes through
/// FreeType. Not safe for concurrent use; give each worker its own face.
class FontFace {
 public:
  static FontFace open(const std::filesystem::path& path);

  FontFace(FontFace&&) noexcept;
  FontFace& operator=(FontFace&&) noexcept;
  ~FontFace();

  bool has_glyph(char32_t cp) const;
  std::uint32_t glyph_index(char32_t cp) const;

  /// Black ink on white, glyph box centered with a 10% margin on each side.
  /// Returns a canvas×canvas single-channel uint8 tensor.
  torch::Tensor render_gray(char32_t cp, int canvas);
  GlyphImage render(char32_t cp, int canvas);

  const std::filesystem::path& path() const { return path_; }

 private:
  struct Impl;
  explicit FontFace(std::unique_ptr<Impl> impl, std::filesystem::path path);
  std::unique_ptr<Impl> impl_;
  std::filesystem::path path_;
};

GlyphImage render_source_glyph(const std::filesystem::path& font_path, char32_t codepoint, int canvas);

/// raw: integer-valued H×W or H×W×C (C in {1,3}) with values in [0,255].
/// Returns H×W×3 float32 = raw/127.5 - 1, grayscale replicated to 3 channels.
torch::Tensor normalize_image(const torch::Tensor& raw);

/// Inverse of normalize_image: round((p+1)·127.5) clipped to [0,255], uint8.
torch::Tensor denormalize_image(const torch::Tensor& pixels);

/// Ink mask: true where the channel mean is below threshold.
torch::Tensor binarize(const GlyphImage& img, double threshold = 0.0);
torch::Tensor binarize(const torch::Tensor& pixels, double threshold = 0.0);

/// Loads a scan (PNG or any format OpenCV reads), composites alpha on white,
/// pads to square with white and resizes to canvas×canvas.
GlyphImage load_style_image(const std::filesystem::path& path, int canvas, char32_t codepoint, int style_id);

/// Files named `U+XXXX.png` in a style directory, keyed by codepoint.
std::map<char32_t, std::filesystem::path> scan_style_dir(const std::filesystem::path& dir);

struct CodepointSplit {
  std::vector<char32_t> train;
  std::vector<char32_t> test;
};

/// Seeded uniform selection of `shots` training codepoints; both halves sorted.
CodepointSplit split_codepoints(std::vector<char32_t> corpus, int shots, std::uint64_t seed);

ShotSplit build_shot_split(const std::filesystem::path& style_dir, const std::filesystem::path& font_path, int shots,
                           std::uint64_t seed, int style_id = 1);

/// Seeded draw of `count` distinct codepoints renderable by the font, in draw order.
std::vector<char32_t> sample_pool_codepoints(FontFace& font, int count, std::uint64_t seed,
                                             const std::vector<char32_t>& universe);

UnpairedPool build_unpaired_pool(const std::filesystem::path& font_path, int count, std::uint64_t seed,
                                 const std::vector<char32_t>& universe, int canvas);

/// Renders sources and loads scans for the given refs. `workers` > 1 spreads
/// the work over threads; output order always follows `refs`.
std::vector<PairedSample> load_pairs(const std::vector<PairRef>& refs, const std::filesystem::path& font_path, int canvas,
                                     int style_id, int workers = 1);

std::string format_split_manifest(const ShotSplit& split);
void write_split_manifest(const ShotSplit& split, const std::filesystem::path& path);
/// Reads a manifest written by write_split_manifest; scans resolve against style_dir.
ShotSplit read_split_manifest(const std::filesystem::path& path, const std::filesystem::path& style_dir);

std::string format_pool_manifest(const std::vector<char32_t>& codepoints, std::uint64_t seed);
std::vector<char32_t> read_pool_manifest(const std::filesystem::path& path);

/// Stacks H×W×3 images into an N×3×H×W batch.
torch::Tensor to_batch(const std::vector<GlyphImage>& images);
/// One N×3×H×W batch item back to H×W×3.
torch::Tensor from_batch(const torch::Tensor& batch, int64_t index);

void save_png(const torch::Tensor& pixels, const std::filesystem::path& path);

}  // namespace zigan
