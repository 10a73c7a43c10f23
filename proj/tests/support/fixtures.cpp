#include "fixtures.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <atomic>
#include <unistd.h>

#include "zigan/glyph_data.hpp"
#include "zigan/util.hpp"

namespace zigan::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("zigan-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<char32_t> test_codepoints(std::size_t count) {
  std::vector<char32_t> out;
  auto add_range = [&](char32_t lo, char32_t hi) {
    for (char32_t c = lo; c <= hi && out.size() < count; ++c) out.push_back(c);
  };
  add_range(U'A', U'Z');
  add_range(U'a', U'z');
  add_range(U'0', U'9');
  add_range(0x0391, 0x03A1);  // Greek capitals, skipping the reserved U+03A2
  add_range(0x03A3, 0x03A9);
  add_range(0x03B1, 0x03C9);
  add_range(0x0410, 0x044F);  // Cyrillic
  return out;
}

torch::Tensor distort_glyph(const torch::Tensor& gray) {
  auto contiguous = gray.contiguous();
  const int n = static_cast<int>(contiguous.size(0));
  cv::Mat src(n, n, CV_8UC1, contiguous.data_ptr<std::uint8_t>());
  cv::Mat eroded;
  const int k = std::max(3, n / 20) | 1;
  // Erosion of white background == dilation of black ink.
  cv::erode(src, eroded, cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(k, k)));
  cv::Mat shear = (cv::Mat_<double>(2, 3) << 1.0, -0.25, 0.125 * n, 0.0, 1.0, 0.0);
  cv::Mat out;
  cv::warpAffine(eroded, out, shear, cv::Size(n, n), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(255));
  return torch::from_blob(out.data, {n, n}, torch::kUInt8).clone();
}

void write_synthetic_style(const std::filesystem::path& dir, const std::filesystem::path& font,
                           const std::vector<char32_t>& codepoints, int canvas) {
  std::filesystem::create_directories(dir);
  auto face = FontFace::open(font);
  for (auto cp : codepoints) {
    auto styled = distort_glyph(face.render_gray(cp, canvas)).contiguous();
    cv::Mat mat(canvas, canvas, CV_8UC1, styled.data_ptr<std::uint8_t>());
    cv::imwrite((dir / (codepoint_label(cp) + ".png")).string(), mat);
  }
}

bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.scalar_type() != b.scalar_type()) return false;
  auto ca = a.contiguous(), cb = b.contiguous();
  return std::memcmp(ca.data_ptr(), cb.data_ptr(), ca.nbytes()) == 0;
}

}  // namespace zigan::testing
