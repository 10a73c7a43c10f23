#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zigan/glyph_data.hpp"
#include "zigan/networks.hpp"

namespace zigan {

/// |g ∧ t| / |g ∨ t| over ink masks; 1.0 when both masks are empty.
/// Inputs are H×W×C images in [-1,1]. Throws ShapeMismatch.
double iou(const torch::Tensor& generated, const torch::Tensor& truth, double threshold = 0.0);
double iou(const GlyphImage& generated, const GlyphImage& truth, double threshold = 0.0);

// ---------------------------------------------------------------- recognizer

struct RecognizerOptions {
  int epochs = 30;
  double lr = 1e-3;
  int batch_size = 16;
  /// Side length images are resized to before the network sees them.
  int input_size = 64;
  std::uint64_t seed = 0;
};

/// 18-layer residual classifier (7×7 stem, four stages of two basic blocks,
/// 64/128/256/512 channels, global pooling, linear head).
class RecognizerNetImpl : public torch::nn::Module {
 public:
  RecognizerNetImpl(int num_classes, int input_size);

  torch::Tensor forward(const torch::Tensor& x);
  /// 512-d penultimate activations.
  torch::Tensor features(const torch::Tensor& x);

  int input_size() const { return input_size_; }
  int num_classes() const { return num_classes_; }

 private:
  struct Block {
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, down{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, down_bn{nullptr};
  };
  torch::Tensor run_block(Block& b, const torch::Tensor& x);
  torch::Tensor prepare(const torch::Tensor& x) const;

  int num_classes_;
  int input_size_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  std::vector<Block> blocks_;
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(RecognizerNet);

/// Trained classifier plus the codepoint of each class index.
struct Recognizer {
  RecognizerNet net{nullptr};
  std::vector<char32_t> classes;  // sorted
  std::uint64_t seed = 0;
  std::string source;             // where it was loaded from, for reports

  /// Class index of a codepoint, or -1 when it is not a class.
  int64_t class_of(char32_t cp) const;
};

/// Cross-entropy + Adam on every style's ground truth; each epoch draws the
/// same number of samples from every style. Deterministic per seed.
/// Throws EmptyClass for fewer than two distinct codepoints.
Recognizer train_recognizer(const std::vector<GlyphImage>& corpus, const RecognizerOptions& options);

/// Argmax class indices for an N×3×H×W batch (eval mode).
torch::Tensor predict(Recognizer& rec, const torch::Tensor& batch);
/// N×512 float64 penultimate features (eval mode).
torch::Tensor recognizer_features(Recognizer& rec, const torch::Tensor& batch);

void save_recognizer(const Recognizer& rec, const std::filesystem::path& path);
Recognizer load_recognizer(const std::filesystem::path& path);

/// Fraction of images whose predicted codepoint equals their label.
double top1_accuracy(Recognizer& rec, const std::vector<GlyphImage>& images);

// ---------------------------------------------------------------- Fréchet

/// ‖μ1−μ2‖² + tr(Σ1 + Σ2 − 2(Σ1Σ2)^{1/2}) with float64 inputs (D, D×D).
/// Throws DimensionMismatch, NonPSD (eigenvalue below −1e-6).
double frechet_distance(const torch::Tensor& mu1, const torch::Tensor& cov1, const torch::Tensor& mu2,
                        const torch::Tensor& cov2);

struct GaussianFit {
  torch::Tensor mean;  // D, float64
  torch::Tensor cov;   // D×D, float64
  /// Fewer than D+1 samples: covariance regularized with +1e-6·I.
  bool too_few_samples = false;
};

/// Row order does not affect the result (rows are canonically sorted first).
GaussianFit fit_gaussian(const torch::Tensor& features);

struct FidResult {
  double value = 0.0;
  bool too_few_samples = false;
};

FidResult fid_from_features(const torch::Tensor& real, const torch::Tensor& fake);
FidResult fid_over_sets(Recognizer& rec, const torch::Tensor& real, const torch::Tensor& fake);

// ---------------------------------------------------------------- reports

struct IouReport {
  std::map<int, double> per_style;
  double overall = 0.0;
  bool empty = true;
};

struct AccuracyReport {
  std::map<int, double> per_style;
  double overall = 0.0;
  std::string recognizer;
  bool empty = true;
};

struct FidReport {
  std::map<int, double> per_style;
  std::map<int, bool> too_few_samples;
  double overall = 0.0;
  std::string extractor;
  bool empty = true;
};

struct StyleTestSet {
  int style_id = 1;
  std::vector<PairedSample> pairs;
};

struct SuiteResult {
  IouReport iou;
  std::optional<AccuracyReport> accuracy;  // needs a recognizer
  std::optional<FidReport> fid;
  std::vector<std::filesystem::path> grids;
  bool empty = true;
};

/// Generator outputs in eval mode for an N×3×H×W batch, processed in chunks.
torch::Tensor translate_batch(Generator& gen, const torch::Tensor& sources, int chunk = 16);

/// Tiles rows of H×W×3 images into one image; short rows are padded white.
torch::Tensor compose_grid(const std::vector<std::vector<torch::Tensor>>& rows);

/// Colorized heatmap (values in [0,1]) as an H×W×3 image in [-1,1].
torch::Tensor colorize_heatmap(const torch::Tensor& heat);

/// Generates ŷ for every test pair, computes IOU (and accuracy/FID when a
/// recognizer is given), and writes iou.csv, accuracy.csv, fid.csv,
/// summary.json and one grid_style<N>.png per style (source / generated /
/// truth rows, at most 50 columns) into out_dir when it is non-empty.
SuiteResult evaluate_suite(Generator& gen, const std::vector<StyleTestSet>& sets, Recognizer* recognizer,
                           const std::filesystem::path& out_dir, double threshold = 0.0);

/// Test pairs of one style, loaded on demand by index range so large test
/// sets never sit in memory at once.
struct StyleTestSource {
  int style_id = 1;
  std::size_t size = 0;
  std::function<std::vector<PairedSample>(std::size_t begin, std::size_t end)> load;
};

SuiteResult evaluate_suite(Generator& gen, const std::vector<StyleTestSource>& sources, Recognizer* recognizer,
                           const std::filesystem::path& out_dir, double threshold = 0.0, std::size_t chunk = 64);

}  // namespace zigan
