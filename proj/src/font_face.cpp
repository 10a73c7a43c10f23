#include <opencv2/core.hpp>
#include <opencv2/freetype.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "zigan/errors.hpp"
#include "zigan/glyph_data.hpp"
#include "zigan/util.hpp"

namespace zigan {
namespace {

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint16_t u16(std::size_t at) const {
    check(at, 2);
    return static_cast<std::uint16_t>((bytes_[at] << 8) | bytes_[at + 1]);
  }
  std::int16_t i16(std::size_t at) const { return static_cast<std::int16_t>(u16(at)); }
  std::uint32_t u32(std::size_t at) const {
    check(at, 4);
    return (static_cast<std::uint32_t>(bytes_[at]) << 24) | (static_cast<std::uint32_t>(bytes_[at + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes_[at + 2]) << 8) | bytes_[at + 3];
  }
  void check(std::size_t at, std::size_t len) const {
    if (at + len > bytes_.size()) throw Error(ErrorCode::BadFontFile, "table read past end of file");
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
};

constexpr std::uint32_t tag(const char (&t)[5]) {
  return (static_cast<std::uint32_t>(t[0]) << 24) | (static_cast<std::uint32_t>(t[1]) << 16) |
         (static_cast<std::uint32_t>(t[2]) << 8) | static_cast<std::uint32_t>(t[3]);
}

// Character-to-glyph lookup over one cmap subtable (formats 4 and 12).
class CharMap {
 public:
  CharMap() = default;
  CharMap(const std::vector<std::uint8_t>& bytes, std::size_t offset) : bytes_(&bytes), offset_(offset) {
    ByteReader r(bytes);
    format_ = r.u16(offset);
    if (format_ == 4) {
      r.check(offset, r.u16(offset + 2));
    } else if (format_ == 12) {
      r.check(offset, r.u32(offset + 4));
    } else {
      throw Error(ErrorCode::BadFontFile, "unsupported cmap format " + std::to_string(format_));
    }
  }

  std::uint32_t lookup(char32_t cp) const {
    ByteReader r(*bytes_);
    const auto c = static_cast<std::uint32_t>(cp);
    if (format_ == 12) {
      const std::uint32_t groups = r.u32(offset_ + 12);
      std::size_t lo = 0, hi = groups;
      while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        const std::size_t g = offset_ + 16 + mid * 12;
        const std::uint32_t start = r.u32(g), end = r.u32(g + 4);
        if (c < start) {
          hi = mid;
        } else if (c > end) {
          lo = mid + 1;
        } else {
          return r.u32(g + 8) + (c - start);
        }
      }
      return 0;
    }
    if (c > 0xFFFF) return 0;
    const std::size_t segs = r.u16(offset_ + 6) / 2;
    const std::size_t ends = offset_ + 14;
    const std::size_t starts = ends + segs * 2 + 2;
    const std::size_t deltas = starts + segs * 2;
    const std::size_t range_offsets = deltas + segs * 2;
    for (std::size_t s = 0; s < segs; ++s) {
      if (c > r.u16(ends + 2 * s)) continue;
      const std::uint32_t start = r.u16(starts + 2 * s);
      if (c < start) return 0;
      const auto delta = static_cast<std::uint16_t>(r.i16(deltas + 2 * s));
      const std::uint16_t ro = r.u16(range_offsets + 2 * s);
      if (ro == 0) return static_cast<std::uint16_t>(c + delta);
      const std::size_t at = range_offsets + 2 * s + ro + 2 * (c - start);
      const std::uint16_t g = r.u16(at);
      return g == 0 ? 0 : static_cast<std::uint16_t>(g + delta);
    }
    return 0;
  }

 private:
  const std::vector<std::uint8_t>* bytes_ = nullptr;
  std::size_t offset_ = 0;
  std::uint16_t format_ = 0;
};

CharMap parse_cmap(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  std::size_t face = 0;
  if (r.u32(0) == tag("ttcf")) face = r.u32(12);
  const std::uint32_t version = r.u32(face);
  if (version != 0x00010000 && version != tag("true") && version != tag("OTTO")) {
    throw Error(ErrorCode::BadFontFile, "not an sfnt font");
  }
  const std::uint16_t tables = r.u16(face + 4);
  std::size_t cmap = 0;
  for (std::uint16_t t = 0; t < tables; ++t) {
    const std::size_t rec = face + 12 + 16 * static_cast<std::size_t>(t);
    if (r.u32(rec) == tag("cmap")) cmap = r.u32(rec + 8);
  }
  if (cmap == 0) throw Error(ErrorCode::BadFontFile, "font has no cmap table");

  // Prefer full-repertoire subtables, then BMP Unicode ones.
  int best_rank = 0;
  std::size_t best = 0;
  const std::uint16_t subtables = r.u16(cmap + 2);
  for (std::uint16_t s = 0; s < subtables; ++s) {
    const std::size_t rec = cmap + 4 + 8 * static_cast<std::size_t>(s);
    const std::uint16_t platform = r.u16(rec), encoding = r.u16(rec + 2);
    const std::size_t at = cmap + r.u32(rec + 4);
    const std::uint16_t format = r.u16(at);
    int rank = 0;
    if (format == 12 && ((platform == 3 && encoding == 10) || platform == 0)) rank = 2;
    if (format == 4 && ((platform == 3 && encoding == 1) || platform == 0)) rank = 1;
    if (rank > best_rank) {
      best_rank = rank;
      best = at;
    }
  }
  if (best_rank == 0) throw Error(ErrorCode::BadFontFile, "no Unicode cmap subtable");
  return CharMap(bytes, best);
}

}  // namespace

struct FontFace::Impl {
  std::vector<std::uint8_t> bytes;
  CharMap cmap;
  cv::Ptr<cv::freetype::FreeType2> ft;
};

FontFace::FontFace(std::unique_ptr<Impl> impl, std::filesystem::path path)
    : impl_(std::move(impl)), path_(std::move(path)) {}
FontFace::FontFace(FontFace&&) noexcept = default;
FontFace& FontFace::operator=(FontFace&&) noexcept = default;
FontFace::~FontFace() = default;

FontFace FontFace::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadFontFile, "cannot open font " + path.string());
  auto impl = std::make_unique<Impl>();
  impl->bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  impl->cmap = parse_cmap(impl->bytes);
  try {
    impl->ft = cv::freetype::createFreeType2();
    impl->ft->loadFontData(path.string(), 0);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::BadFontFile, path.string() + ": " + e.what());
  }
  return FontFace(std::move(impl), path);
}

std::uint32_t FontFace::glyph_index(char32_t cp) const { return impl_->cmap.lookup(cp); }

bool FontFace::has_glyph(char32_t cp) const { return glyph_index(cp) != 0; }

torch::Tensor FontFace::render_gray(char32_t cp, int canvas) {
  if (canvas < 32) throw Error(ErrorCode::BadResolution, "canvas must be at least 32 pixels");
  if (!has_glyph(cp)) throw Error(ErrorCode::MissingGlyph, codepoint_label(cp) + " not in " + path_.string());

  // Rasterize large, then fit the ink box into the canvas.
  const int height = 2 * canvas;
  const int board = 4 * canvas;
  cv::Mat board_rgb(board, board, CV_8UC3, cv::Scalar::all(255));
  impl_->ft->putText(board_rgb, utf8_encode(cp), cv::Point(canvas, 3 * canvas), height, cv::Scalar::all(0), -1,
                     cv::LINE_AA, true);
  cv::Mat big;
  cv::extractChannel(board_rgb, big, 0);

  cv::Mat ink;
  cv::compare(big, 255, ink, cv::CMP_LT);
  const cv::Rect box = cv::boundingRect(ink);
  if (box.area() == 0) throw Error(ErrorCode::MissingGlyph, codepoint_label(cp) + " renders without ink");

  const double inner = 0.8 * canvas;
  const double scale = inner / std::max(box.width, box.height);
  const int w = std::max(1, static_cast<int>(std::lround(box.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(box.height * scale)));
  cv::Mat glyph;
  cv::resize(big(box), glyph, cv::Size(w, h), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);

  cv::Mat out(canvas, canvas, CV_8UC1, cv::Scalar(255));
  glyph.copyTo(out(cv::Rect((canvas - w) / 2, (canvas - h) / 2, w, h)));
  return torch::from_blob(out.data, {canvas, canvas}, torch::kUInt8).clone();
}

GlyphImage FontFace::render(char32_t cp, int canvas) {
  return GlyphImage{normalize_image(render_gray(cp, canvas)), cp, 0};
}

GlyphImage render_source_glyph(const std::filesystem::path& font_path, char32_t codepoint, int canvas) {
  auto font = FontFace::open(font_path);
  return font.render(codepoint, canvas);
}

}  // namespace zigan
