#include "zigan/evaluation.hpp"

#include <Eigen/Dense>
#include "json.hpp"
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "zigan/errors.hpp"
#include "zigan/util.hpp"

namespace zigan {
namespace fs = std::filesystem;

double iou(const torch::Tensor& generated, const torch::Tensor& truth, double threshold) {
  if (generated.sizes() != truth.sizes()) {
    throw Error(ErrorCode::ShapeMismatch, "iou: images have shapes " + c10::str(generated.sizes()) + " and " +
                                              c10::str(truth.sizes()));
  }
  const auto g = binarize(generated, threshold);
  const auto t = binarize(truth, threshold);
  const auto uni = (g | t).sum().item<int64_t>();
  if (uni == 0) return 1.0;
  const auto inter = (g & t).sum().item<int64_t>();
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double iou(const GlyphImage& generated, const GlyphImage& truth, double threshold) {
  return iou(generated.pixels, truth.pixels, threshold);
}

// ---------------------------------------------------------------- recognizer

namespace {

constexpr std::uint64_t kRecognizerInitStream = 0x5245'4349;  // "RECI"
constexpr std::uint64_t kRecognizerDataStream = 0x5245'4344;  // "RECD"

torch::nn::Conv2d conv(int in, int out, int k, int stride, int pad) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(false));
}

}  // namespace

RecognizerNetImpl::RecognizerNetImpl(int num_classes, int input_size) : num_classes_(num_classes), input_size_(input_size) {
  stem_ = register_module("stem", conv(3, 64, 7, 2, 3));
  stem_bn_ = register_module("stem_bn", torch::nn::BatchNorm2d(64));
  int in = 64;
  int idx = 0;
  for (int stage = 0; stage < 4; ++stage) {
    const int out = 64 << stage;
    for (int b = 0; b < 2; ++b, ++idx) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      const auto p = "block" + std::to_string(idx) + "_";
      Block blk;
      blk.conv1 = register_module(p + "conv1", conv(in, out, 3, stride, 1));
      blk.bn1 = register_module(p + "bn1", torch::nn::BatchNorm2d(out));
      blk.conv2 = register_module(p + "conv2", conv(out, out, 3, 1, 1));
      blk.bn2 = register_module(p + "bn2", torch::nn::BatchNorm2d(out));
      if (stride != 1 || in != out) {
        blk.down = register_module(p + "down", conv(in, out, 1, stride, 0));
        blk.down_bn = register_module(p + "down_bn", torch::nn::BatchNorm2d(out));
      }
      blocks_.push_back(blk);
      in = out;
    }
  }
  fc_ = register_module("fc", torch::nn::Linear(512, num_classes));
}

torch::Tensor RecognizerNetImpl::run_block(Block& b, const torch::Tensor& x) {
  auto y = torch::relu(b.bn1->forward(b.conv1->forward(x)));
  y = b.bn2->forward(b.conv2->forward(y));
  const auto shortcut = b.down ? b.down_bn->forward(b.down->forward(x)) : x;
  return torch::relu(y + shortcut);
}

torch::Tensor RecognizerNetImpl::prepare(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3) throw Error(ErrorCode::ShapeMismatch, "recognizer expects N×3×H×W input");
  if (x.size(2) == input_size_ && x.size(3) == input_size_) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{input_size_, input_size_})
                               .mode(torch::kBilinear)
                               .align_corners(false)
                               .antialias(x.size(2) > input_size_));
}

torch::Tensor RecognizerNetImpl::features(const torch::Tensor& x) {
  auto y = torch::relu(stem_bn_->forward(stem_->forward(prepare(x))));
  y = torch::max_pool2d(y, 3, 2, 1);
  for (auto& b : blocks_) y = run_block(b, y);
  return torch::adaptive_avg_pool2d(y, {1, 1}).flatten(1);
}

torch::Tensor RecognizerNetImpl::forward(const torch::Tensor& x) { return fc_->forward(features(x)); }

int64_t Recognizer::class_of(char32_t cp) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), cp);
  if (it == classes.end() || *it != cp) return -1;
  return it - classes.begin();
}

namespace {

void init_recognizer(RecognizerNetImpl& net, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(derive_rng(seed, kRecognizerInitStream)());
  torch::NoGradGuard no_grad;
  for (auto& m : net.modules(/*include_self=*/false)) {
    if (auto* c = m->as<torch::nn::Conv2dImpl>()) {
      const auto& k = c->options.kernel_size();
      const double fan_out = static_cast<double>(c->options.out_channels() * (*k)[0] * (*k)[1]);
      c->weight.normal_(0.0, std::sqrt(2.0 / fan_out), gen);
    } else if (auto* bn = m->as<torch::nn::BatchNorm2dImpl>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    } else if (auto* l = m->as<torch::nn::LinearImpl>()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l->options.in_features()));
      l->weight.uniform_(-bound, bound, gen);
      l->bias.uniform_(-bound, bound, gen);
    }
  }
}

}  // namespace

Recognizer train_recognizer(const std::vector<GlyphImage>& corpus, const RecognizerOptions& options) {
  if (options.epochs < 0 || options.batch_size < 1 || options.input_size < 32 || !(options.lr > 0.0)) {
    throw Error(ErrorCode::Config, "invalid recognizer options");
  }
  std::set<char32_t> unique;
  for (const auto& img : corpus) unique.insert(img.codepoint);
  if (unique.size() < 2) {
    throw Error(ErrorCode::EmptyClass, "recognizer needs at least two classes, got " + std::to_string(unique.size()));
  }

  Recognizer rec;
  rec.classes.assign(unique.begin(), unique.end());
  rec.seed = options.seed;
  rec.source = "trained in-process";
  rec.net = RecognizerNet(static_cast<int>(rec.classes.size()), options.input_size);
  init_recognizer(*rec.net, options.seed);

  std::vector<GlyphImage> images = corpus;
  const auto batch_all = to_batch(images);
  std::vector<int64_t> labels;
  std::map<int, std::vector<std::size_t>> by_style;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    labels.push_back(rec.class_of(corpus[i].codepoint));
    by_style[corpus[i].style_id].push_back(i);
  }
  const auto label_tensor = torch::tensor(labels, torch::kInt64);
  std::size_t per_style = 0;
  for (const auto& [style, idx] : by_style) per_style = std::max(per_style, idx.size());

  torch::optim::Adam opt(rec.net->parameters(), torch::optim::AdamOptions(options.lr));
  auto rng = derive_rng(options.seed, kRecognizerDataStream);
  rec.net->train();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    // Every style contributes per_style samples; smaller styles are cycled.
    std::vector<int64_t> order;
    for (auto& [style, idx] : by_style) {
      auto shuffled = idx;
      shuffle_in_place(shuffled, rng);
      for (std::size_t k = 0; k < per_style; ++k) order.push_back(static_cast<int64_t>(shuffled[k % shuffled.size()]));
    }
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      const auto index = torch::tensor(std::vector<int64_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                            order.begin() + static_cast<std::ptrdiff_t>(end)),
                                       torch::kInt64);
      opt.zero_grad();
      const auto logits = rec.net->forward(batch_all.index_select(0, index));
      const auto loss = torch::nn::functional::cross_entropy(logits, label_tensor.index_select(0, index));
      if (!std::isfinite(loss.item<double>())) throw Error(ErrorCode::NonFiniteLoss, "recognizer loss is non-finite");
      loss.backward();
      opt.step();
    }
  }
  rec.net->eval();
  return rec;
}

namespace {

template <typename Fn>
torch::Tensor chunked(const torch::Tensor& batch, int64_t chunk, Fn&& fn) {
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < batch.size(0); i += chunk) parts.push_back(fn(batch.slice(0, i, std::min(batch.size(0), i + chunk))));
  return torch::cat(parts);
}

}  // namespace

torch::Tensor predict(Recognizer& rec, const torch::Tensor& batch) {
  torch::NoGradGuard no_grad;
  rec.net->eval();
  if (batch.size(0) == 0) return torch::zeros({0}, torch::kInt64);
  return chunked(batch, 64, [&](const torch::Tensor& b) { return rec.net->forward(b).argmax(1); });
}

torch::Tensor recognizer_features(Recognizer& rec, const torch::Tensor& batch) {
  torch::NoGradGuard no_grad;
  rec.net->eval();
  if (batch.size(0) == 0) return torch::zeros({0, 512}, torch::kFloat64);
  return chunked(batch, 64, [&](const torch::Tensor& b) { return rec.net->features(b); }).to(torch::kFloat64);
}

double top1_accuracy(Recognizer& rec, const std::vector<GlyphImage>& images) {
  if (images.empty()) throw Error(ErrorCode::EmptySet, "no images to classify");
  const auto pred = predict(rec, to_batch(images));
  int64_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    correct += pred[static_cast<int64_t>(i)].item<int64_t>() == rec.class_of(images[i].codepoint);
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

void save_recognizer(const Recognizer& rec, const fs::path& path) {
  torch::serialize::OutputArchive archive;
  for (const auto& p : rec.net->named_parameters()) archive.write(p.key(), p.value());
  for (const auto& b : rec.net->named_buffers()) archive.write(b.key(), b.value(), /*is_buffer=*/true);
  std::vector<int64_t> classes(rec.classes.begin(), rec.classes.end());
  archive.write("meta.classes", torch::tensor(classes, torch::kInt64), true);
  archive.write("meta.input_size", torch::tensor({static_cast<int64_t>(rec.net->input_size())}), true);
  archive.write("meta.seed", torch::tensor({static_cast<int64_t>(rec.seed)}), true);
  std::ostringstream bytes;
  archive.save_to(bytes);
  write_file_atomic(path, std::string_view(bytes.str()));
}

Recognizer load_recognizer(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "recognizer file " + path.string() + " does not exist");
  Recognizer rec;
  try {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    torch::Tensor classes, input_size, seed;
    archive.read("meta.classes", classes, true);
    archive.read("meta.input_size", input_size, true);
    archive.read("meta.seed", seed, true);
    for (int64_t i = 0; i < classes.numel(); ++i) rec.classes.push_back(static_cast<char32_t>(classes[i].item<int64_t>()));
    rec.seed = static_cast<std::uint64_t>(seed.item<int64_t>());
    rec.net = RecognizerNet(static_cast<int>(rec.classes.size()), static_cast<int>(input_size.item<int64_t>()));
    torch::NoGradGuard no_grad;
    for (auto& p : rec.net->named_parameters()) {
      torch::Tensor t;
      archive.read(p.key(), t);
      p.value().copy_(t);
    }
    for (auto& b : rec.net->named_buffers()) {
      torch::Tensor t;
      archive.read(b.key(), t, true);
      b.value().copy_(t);
    }
  } catch (const c10::Error& e) {
    throw Error(ErrorCode::CorruptCheckpoint, "cannot load recognizer " + path.string() + ": " + e.what_without_backtrace());
  }
  rec.source = path.string();
  rec.net->eval();
  return rec;
}

// ---------------------------------------------------------------- Fréchet

namespace {

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous();
  const auto rows = c.dim() == 1 ? c.size(0) : c.size(0);
  const auto cols = c.dim() == 1 ? 1 : c.size(1);
  Eigen::MatrixXd m(rows, cols);
  const double* data = c.data_ptr<double>();
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) m(i, j) = data[i * cols + j];
  return m;
}

constexpr double kPsdTolerance = -1e-6;

}  // namespace

double frechet_distance(const torch::Tensor& mu1, const torch::Tensor& cov1, const torch::Tensor& mu2,
                        const torch::Tensor& cov2) {
  if (mu1.dim() != 1 || mu2.dim() != 1 || cov1.dim() != 2 || cov2.dim() != 2) {
    throw Error(ErrorCode::DimensionMismatch, "expected vector means and matrix covariances");
  }
  const auto d = mu1.size(0);
  if (mu2.size(0) != d || cov1.size(0) != d || cov1.size(1) != d || cov2.size(0) != d || cov2.size(1) != d) {
    throw Error(ErrorCode::DimensionMismatch, "Gaussian dimensions disagree");
  }
  const Eigen::VectorXd m1 = to_eigen(mu1), m2 = to_eigen(mu2);
  const Eigen::MatrixXd s1_raw = to_eigen(cov1), s2_raw = to_eigen(cov2);
  const Eigen::MatrixXd s1 = 0.5 * (s1_raw + s1_raw.transpose());
  const Eigen::MatrixXd s2 = 0.5 * (s2_raw + s2_raw.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(s2, Eigen::EigenvaluesOnly);
  if (e1.eigenvalues().minCoeff() < kPsdTolerance || e2.eigenvalues().minCoeff() < kPsdTolerance) {
    throw Error(ErrorCode::NonPSD, "covariance has an eigenvalue below -1e-6");
  }
  // tr (Σ1Σ2)^{1/2} = tr (Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2}; the inner product is symmetric.
  const Eigen::VectorXd root = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd a = e1.eigenvectors() * root.asDiagonal() * e1.eigenvectors().transpose();
  Eigen::MatrixXd inner = a * s2 * a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double value = (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);  // only rounding can push it below zero
}

GaussianFit fit_gaussian(const torch::Tensor& features) {
  if (features.dim() != 2) throw Error(ErrorCode::DimensionMismatch, "features must be N×D");
  const auto n = features.size(0);
  const auto d = features.size(1);
  if (n == 0) throw Error(ErrorCode::EmptySet, "cannot fit a Gaussian to zero samples");

  // Canonical row order so the moments are bitwise independent of input order.
  const auto f = features.to(torch::kFloat64).contiguous();
  std::vector<int64_t> order(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  const double* data = f.data_ptr<double>();
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return std::lexicographical_compare(data + a * d, data + (a + 1) * d, data + b * d, data + (b + 1) * d);
  });
  const auto x = f.index_select(0, torch::tensor(order, torch::kInt64));

  GaussianFit fit;
  fit.mean = x.mean(0);
  const auto centered = x - fit.mean;
  fit.cov = n > 1 ? centered.t().matmul(centered) / static_cast<double>(n - 1) : torch::zeros({d, d}, torch::kFloat64);
  if (n < d + 1) {
    fit.too_few_samples = true;
    fit.cov = fit.cov + 1e-6 * torch::eye(d, torch::kFloat64);
  }
  return fit;
}

FidResult fid_from_features(const torch::Tensor& real, const torch::Tensor& fake) {
  const auto a = fit_gaussian(real);
  const auto b = fit_gaussian(fake);
  return {frechet_distance(a.mean, a.cov, b.mean, b.cov), a.too_few_samples || b.too_few_samples};
}

FidResult fid_over_sets(Recognizer& rec, const torch::Tensor& real, const torch::Tensor& fake) {
  return fid_from_features(recognizer_features(rec, real), recognizer_features(rec, fake));
}

// ---------------------------------------------------------------- suite

torch::Tensor translate_batch(Generator& gen, const torch::Tensor& sources, int chunk) {
  torch::NoGradGuard no_grad;
  const bool was_training = gen->is_training();
  gen->eval();
  auto out = sources.size(0) == 0 ? sources.clone()
                                  : chunked(sources, chunk, [&](const torch::Tensor& b) { return gen->forward(b); });
  gen->train(was_training);
  return out;
}

torch::Tensor compose_grid(const std::vector<std::vector<torch::Tensor>>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptySet, "grid has no rows");
  int64_t h = 0, w = 0;
  std::size_t cols = 0;
  for (const auto& r : rows) {
    cols = std::max(cols, r.size());
    for (const auto& cell : r) {
      h = std::max(h, cell.size(0));
      w = std::max(w, cell.size(1));
    }
  }
  if (cols == 0) throw Error(ErrorCode::EmptySet, "grid has no columns");
  auto grid = torch::ones({h * static_cast<int64_t>(rows.size()), w * static_cast<int64_t>(cols), 3});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      auto cell = rows[r][c];
      if (cell.dim() == 2) cell = cell.unsqueeze(2);
      if (cell.size(2) == 1) cell = cell.expand({cell.size(0), cell.size(1), 3});
      const auto y = static_cast<int64_t>(r) * h, x = static_cast<int64_t>(c) * w;
      grid.slice(0, y, y + cell.size(0)).slice(1, x, x + cell.size(1)).copy_(cell);
    }
  }
  return grid;
}

torch::Tensor colorize_heatmap(const torch::Tensor& heat) {
  const auto bytes = (heat.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
  cv::Mat gray(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1, bytes.data_ptr<std::uint8_t>());
  cv::Mat bgr, rgb;
  cv::applyColorMap(gray, bgr, cv::COLORMAP_JET);
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return normalize_image(t);
}

namespace {

void write_metric_csv(const fs::path& path, const std::string& metric, const std::map<int, double>& values) {
  std::ostringstream out;
  out.precision(10);
  out << "style_id,metric,value\n";
  for (const auto& [style, v] : values) out << style << "," << metric << "," << v << "\n";
  write_file_atomic(path, out.str());
}

double mean_of(const std::map<int, double>& values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [k, v] : values) s += v;
  return s / static_cast<double>(values.size());
}

nlohmann::json per_style_json(const std::map<int, double>& values) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values) j[std::to_string(k)] = v;
  return j;
}

}  // namespace

SuiteResult evaluate_suite(Generator& gen, const std::vector<StyleTestSet>& sets, Recognizer* recognizer,
                           const fs::path& out_dir, double threshold) {
  std::vector<StyleTestSource> sources;
  for (const auto& set : sets) {
    sources.push_back({set.style_id, set.pairs.size(), [&set](std::size_t b, std::size_t e) {
                         return std::vector<PairedSample>(set.pairs.begin() + static_cast<std::ptrdiff_t>(b),
                                                          set.pairs.begin() + static_cast<std::ptrdiff_t>(e));
                       }});
  }
  return evaluate_suite(gen, sources, recognizer, out_dir, threshold, 64);
}

SuiteResult evaluate_suite(Generator& gen, const std::vector<StyleTestSource>& sources, Recognizer* recognizer,
                           const fs::path& out_dir, double threshold, std::size_t chunk) {
  if (chunk == 0) throw Error(ErrorCode::Config, "evaluation chunk size must be positive");
  SuiteResult result;
  AccuracyReport accuracy;
  FidReport fid;
  if (recognizer) {
    accuracy.recognizer = recognizer->source;
    fid.extractor = "recognizer-penultimate-512:" + recognizer->source;
  }

  if (!out_dir.empty()) fs::create_directories(out_dir);
  for (const auto& src : sources) {
    if (src.size == 0) continue;
    double iou_sum = 0.0;
    int64_t correct = 0;
    std::vector<torch::Tensor> real_features, fake_features;
    std::vector<std::vector<torch::Tensor>> rows(3);
    const std::size_t cols = std::min<std::size_t>(50, src.size);

    for (std::size_t begin = 0; begin < src.size; begin += chunk) {
      const auto end = std::min(src.size, begin + chunk);
      const auto pairs = src.load(begin, end);
      if (pairs.size() != end - begin) throw Error(ErrorCode::EmptySet, "test loader returned the wrong count");
      std::vector<GlyphImage> inputs, truths;
      for (const auto& p : pairs) {
        inputs.push_back(p.source);
        truths.push_back(p.target);
      }
      const auto fakes = translate_batch(gen, to_batch(inputs));
      std::vector<GlyphImage> generated;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        GlyphImage g{from_batch(fakes, static_cast<int64_t>(i)), pairs[i].target.codepoint, src.style_id};
        iou_sum += iou(g, truths[i], threshold);
        generated.push_back(std::move(g));
      }
      if (recognizer) {
        const auto pred = predict(*recognizer, fakes);
        for (std::size_t i = 0; i < generated.size(); ++i) {
          correct += pred[static_cast<int64_t>(i)].item<int64_t>() == recognizer->class_of(generated[i].codepoint);
        }
        real_features.push_back(recognizer_features(*recognizer, to_batch(truths)));
        fake_features.push_back(recognizer_features(*recognizer, fakes));
      }
      for (std::size_t i = 0; i < pairs.size() && begin + i < cols; ++i) {
        rows[0].push_back(inputs[i].pixels);
        rows[1].push_back(generated[i].pixels);
        rows[2].push_back(truths[i].pixels);
      }
    }

    const auto n = static_cast<double>(src.size);
    result.iou.per_style[src.style_id] = iou_sum / n;
    if (recognizer) {
      accuracy.per_style[src.style_id] = static_cast<double>(correct) / n;
      const auto f = fid_from_features(torch::cat(real_features), torch::cat(fake_features));
      fid.per_style[src.style_id] = f.value;
      fid.too_few_samples[src.style_id] = f.too_few_samples;
    }
    if (!out_dir.empty()) {
      const auto path = out_dir / ("grid_style" + std::to_string(src.style_id) + ".png");
      save_png(compose_grid(rows), path);
      result.grids.push_back(path);
    }
  }

  result.empty = result.iou.per_style.empty();
  result.iou.empty = result.empty;
  result.iou.overall = mean_of(result.iou.per_style);
  if (recognizer) {
    accuracy.empty = fid.empty = result.empty;
    accuracy.overall = mean_of(accuracy.per_style);
    fid.overall = mean_of(fid.per_style);
    result.accuracy = accuracy;
    result.fid = fid;
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_metric_csv(out_dir / "iou.csv", "iou", result.iou.per_style);
    nlohmann::json summary;
    summary["empty"] = result.empty;
    summary["iou"] = {{"per_style", per_style_json(result.iou.per_style)}, {"overall", result.iou.overall}};
    if (result.accuracy) {
      write_metric_csv(out_dir / "accuracy.csv", "top1_accuracy", accuracy.per_style);
      summary["accuracy"] = {{"per_style", per_style_json(accuracy.per_style)},
                             {"overall", accuracy.overall},
                             {"recognizer", accuracy.recognizer}};
    }
    if (result.fid) {
      write_metric_csv(out_dir / "fid.csv", "fid", fid.per_style);
      nlohmann::json flags = nlohmann::json::object();
      for (const auto& [k, v] : fid.too_few_samples) flags[std::to_string(k)] = v;
      summary["fid"] = {{"per_style", per_style_json(fid.per_style)},
                        {"overall", fid.overall},
                        {"extractor", fid.extractor},
                        {"too_few_samples", flags}};
    }
    write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  }
  return result;
}

}  // namespace zigan
