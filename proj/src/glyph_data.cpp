#include "zigan/glyph_data.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "zigan/errors.hpp"
#include "zigan/util.hpp"

namespace zigan {
namespace {

constexpr std::uint64_t kSplitStream = 0x5350'4C49;  // "SPLI"
constexpr std::uint64_t kPoolStream = 0x504F'4F4C;   // "POOL"

}  // namespace

torch::Tensor normalize_image(const torch::Tensor& raw) {
  if (raw.dim() != 2 && raw.dim() != 3) throw Error(ErrorCode::ShapeMismatch, "expected H×W or H×W×C image");
  auto img = raw.dim() == 2 ? raw.unsqueeze(2) : raw;
  const auto channels = img.size(2);
  if (channels != 1 && channels != 3) throw Error(ErrorCode::ShapeMismatch, "channel count must be 1 or 3");
  auto values = img.to(torch::kFloat64);
  if (values.numel() > 0) {
    const double lo = values.min().item<double>();
    const double hi = values.max().item<double>();
    if (lo < 0.0 || hi > 255.0) throw Error(ErrorCode::BadRange, "pixel values must lie in [0,255]");
  }
  auto out = (img.to(torch::kFloat32) / 127.5f - 1.0f);
  if (channels == 1) out = out.expand({img.size(0), img.size(1), 3});
  return out.contiguous();
}

torch::Tensor denormalize_image(const torch::Tensor& pixels) {
  return ((pixels.to(torch::kFloat32) + 1.0f) * 127.5f).round().clamp(0.0, 255.0).to(torch::kUInt8);
}

torch::Tensor binarize(const torch::Tensor& pixels, double threshold) {
  if (pixels.dim() != 3) throw Error(ErrorCode::ShapeMismatch, "expected H×W×C pixels");
  return pixels.mean(2) < threshold;
}

torch::Tensor binarize(const GlyphImage& img, double threshold) { return binarize(img.pixels, threshold); }

GlyphImage load_style_image(const std::filesystem::path& path, int canvas, char32_t codepoint, int style_id) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw Error(ErrorCode::Io, "cannot decode image " + path.string());
  if (img.depth() == CV_16U) img.convertTo(img, CV_8U, 1.0 / 257.0);
  if (img.depth() != CV_8U) throw Error(ErrorCode::BadRange, path.string() + ": unsupported pixel depth");

  if (img.channels() == 4) {
    std::vector<cv::Mat> planes;
    cv::split(img, planes);
    cv::Mat alpha;
    planes[3].convertTo(alpha, CV_32F, 1.0 / 255.0);
    cv::Mat composite;
    cv::merge(std::vector<cv::Mat>{planes[0], planes[1], planes[2]}, composite);
    composite.convertTo(composite, CV_32FC3);
    cv::Mat alpha3;
    cv::merge(std::vector<cv::Mat>{alpha, alpha, alpha}, alpha3);
    composite = composite.mul(alpha3) + (cv::Scalar::all(1.0) - alpha3) * 255.0;
    composite.convertTo(img, CV_8UC3);
  }
  if (img.channels() == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  const cv::Scalar white = img.channels() == 1 ? cv::Scalar(255) : cv::Scalar(255, 255, 255);

  const int side = std::max(img.rows, img.cols);
  if (img.rows != img.cols) {
    cv::Mat square(side, side, img.type(), white);
    img.copyTo(square(cv::Rect((side - img.cols) / 2, (side - img.rows) / 2, img.cols, img.rows)));
    img = square;
  }
  if (side != canvas) {
    cv::resize(img, img, cv::Size(canvas, canvas), 0, 0, side > canvas ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  img = img.clone();
  auto raw = torch::from_blob(img.data, {canvas, canvas, img.channels()}, torch::kUInt8).clone();
  return GlyphImage{normalize_image(raw), codepoint, style_id};
}

std::map<char32_t, std::filesystem::path> scan_style_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "style directory not found: " + dir.string());
  static const std::regex name(R"(^[Uu]\+([0-9A-Fa-f]{4,6})\.png$)");
  std::map<char32_t, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto filename = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(filename, m, name)) continue;
    files[static_cast<char32_t>(std::stoul(m[1].str(), nullptr, 16))] = entry.path();
  }
  return files;
}

CodepointSplit split_codepoints(std::vector<char32_t> corpus, int shots, std::uint64_t seed) {
  if (shots <= 0) throw Error(ErrorCode::Config, "shots must be positive");
  std::sort(corpus.begin(), corpus.end());
  corpus.erase(std::unique(corpus.begin(), corpus.end()), corpus.end());
  if (corpus.size() < static_cast<std::size_t>(shots)) {
    throw Error(ErrorCode::InsufficientCorpus, "corpus has " + std::to_string(corpus.size()) + " characters, need " +
                                                   std::to_string(shots));
  }
  auto rng = derive_rng(seed, kSplitStream);
  shuffle_in_place(corpus, rng);
  CodepointSplit split;
  split.train.assign(corpus.begin(), corpus.begin() + shots);
  split.test.assign(corpus.begin() + shots, corpus.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

ShotSplit build_shot_split(const std::filesystem::path& style_dir, const std::filesystem::path& font_path, int shots,
                           std::uint64_t seed, int style_id) {
  if (style_id <= 0) throw Error(ErrorCode::Config, "target style ids start at 1");
  const auto files = scan_style_dir(style_dir);
  auto font = FontFace::open(font_path);
  std::vector<char32_t> corpus;
  corpus.reserve(files.size());
  for (const auto& [cp, path] : files) {
    if (!font.has_glyph(cp)) {
      throw Error(ErrorCode::MissingGlyph, codepoint_label(cp) + " (" + path.string() + ") has no glyph in " +
                                               font_path.string());
    }
    corpus.push_back(cp);
  }
  const auto parts = split_codepoints(corpus, shots, seed);
  ShotSplit split{style_id, shots, seed, {}, {}};
  for (auto cp : parts.train) split.train.push_back({cp, files.at(cp)});
  for (auto cp : parts.test) split.test.push_back({cp, files.at(cp)});
  return split;
}

std::vector<char32_t> sample_pool_codepoints(FontFace& font, int count, std::uint64_t seed,
                                             const std::vector<char32_t>& universe) {
  if (count < 0) throw Error(ErrorCode::Config, "pool size must be nonnegative");
  std::vector<char32_t> candidates;
  std::set<char32_t> seen;
  for (auto cp : universe) {
    if (seen.insert(cp).second && font.has_glyph(cp)) candidates.push_back(cp);
  }
  if (candidates.size() < static_cast<std::size_t>(count)) {
    throw Error(ErrorCode::InsufficientCorpus, "only " + std::to_string(candidates.size()) +
                                                   " renderable codepoints for a pool of " + std::to_string(count));
  }
  auto rng = derive_rng(seed, kPoolStream);
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(static_cast<std::size_t>(count));
  return candidates;
}

UnpairedPool build_unpaired_pool(const std::filesystem::path& font_path, int count, std::uint64_t seed,
                                 const std::vector<char32_t>& universe, int canvas) {
  auto font = FontFace::open(font_path);
  UnpairedPool pool;
  pool.codepoints = sample_pool_codepoints(font, count, seed, universe);
  pool.images.reserve(pool.codepoints.size());
  for (auto cp : pool.codepoints) pool.images.push_back(font.render(cp, canvas));
  return pool;
}

std::vector<PairedSample> load_pairs(const std::vector<PairRef>& refs, const std::filesystem::path& font_path, int canvas,
                                     int style_id, int workers) {
  std::vector<PairedSample> out(refs.size());
  const auto run = [&](std::size_t begin, std::size_t end) {
    auto font = FontFace::open(font_path);
    for (std::size_t i = begin; i < end; ++i) {
      out[i].source = font.render(refs[i].codepoint, canvas);
      out[i].target = load_style_image(refs[i].target_path, canvas, refs[i].codepoint, style_id);
    }
  };
  const std::size_t n = refs.size();
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    run(0, n);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        run(std::min(n, t * chunk), std::min(n, (t + 1) * chunk));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::string format_split_manifest(const ShotSplit& split) {
  std::vector<std::pair<char32_t, const char*>> rows;
  for (const auto& r : split.train) rows.emplace_back(r.codepoint, "train");
  for (const auto& r : split.test) rows.emplace_back(r.codepoint, "test");
  std::sort(rows.begin(), rows.end());
  std::ostringstream out;
  out << split.style_id << ',' << split.shots << ',' << split.seed << '\n';
  for (const auto& [cp, kind] : rows) out << codepoint_label(cp) << ',' << kind << '\n';
  return out.str();
}

void write_split_manifest(const ShotSplit& split, const std::filesystem::path& path) {
  write_file_atomic(path, format_split_manifest(split));
}

ShotSplit read_split_manifest(const std::filesystem::path& path, const std::filesystem::path& style_dir) {
  std::istringstream in(read_text_file(path));
  std::string line;
  ShotSplit split;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, path.string() + ": empty manifest");
  {
    std::istringstream header(line);
    std::string a, b, c;
    if (!std::getline(header, a, ',') || !std::getline(header, b, ',') || !std::getline(header, c)) {
      throw Error(ErrorCode::Io, path.string() + ": malformed manifest header");
    }
    split.style_id = std::stoi(a);
    split.shots = std::stoi(b);
    split.seed = std::stoull(c);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const auto cp = parse_codepoint(line.substr(0, comma));
    if (comma == std::string::npos || !cp) throw Error(ErrorCode::Io, path.string() + ": bad line '" + line + "'");
    const auto kind = line.substr(comma + 1);
    PairRef ref{*cp, style_dir / (codepoint_label(*cp) + ".png")};
    if (kind == "train") {
      split.train.push_back(ref);
    } else if (kind == "test") {
      split.test.push_back(ref);
    } else {
      throw Error(ErrorCode::Io, path.string() + ": unknown split '" + kind + "'");
    }
  }
  if (static_cast<int>(split.train.size()) != split.shots) {
    throw Error(ErrorCode::Io, path.string() + ": train count does not match shots");
  }
  return split;
}

std::string format_pool_manifest(const std::vector<char32_t>& codepoints, std::uint64_t seed) {
  std::ostringstream out;
  out << codepoints.size() << ',' << seed << '\n';
  for (auto cp : codepoints) out << codepoint_label(cp) << '\n';
  return out.str();
}

std::vector<char32_t> read_pool_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, path.string() + ": empty pool manifest");
  const auto count = std::stoul(line.substr(0, line.find(',')));
  std::vector<char32_t> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cp = parse_codepoint(line);
    if (!cp) throw Error(ErrorCode::Io, path.string() + ": bad line '" + line + "'");
    out.push_back(*cp);
  }
  if (out.size() != count) throw Error(ErrorCode::Io, path.string() + ": pool count mismatch");
  return out;
}

torch::Tensor to_batch(const std::vector<GlyphImage>& images) {
  if (images.empty()) throw Error(ErrorCode::EmptyBatch, "cannot batch zero images");
  std::vector<torch::Tensor> items;
  items.reserve(images.size());
  for (const auto& img : images) items.push_back(img.pixels.permute({2, 0, 1}));
  return torch::stack(items).contiguous();
}

torch::Tensor from_batch(const torch::Tensor& batch, int64_t index) {
  return batch[index].detach().permute({1, 2, 0}).contiguous();
}

void save_png(const torch::Tensor& pixels, const std::filesystem::path& path) {
  auto bytes = pixels.dim() == 2 ? denormalize_image(pixels.unsqueeze(2)) : denormalize_image(pixels);
  bytes = bytes.contiguous();
  const int h = static_cast<int>(bytes.size(0)), w = static_cast<int>(bytes.size(1));
  const int c = static_cast<int>(bytes.size(2));
  cv::Mat mat(h, w, c == 1 ? CV_8UC1 : CV_8UC3, bytes.data_ptr<std::uint8_t>());
  cv::Mat out;
  if (c == 3) {
    cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
  } else {
    out = mat;
  }
  std::vector<std::uint8_t> encoded;
  if (!cv::imencode(".png", out, encoded)) throw Error(ErrorCode::Io, "PNG encoding failed for " + path.string());
  write_file_atomic(path, encoded);
}

}  // namespace zigan
