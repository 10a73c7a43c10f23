#include "zigan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "zigan/errors.hpp"
#include "zigan/evaluation.hpp"
#include "zigan/glyph_data.hpp"
#include "zigan/util.hpp"

namespace zigan {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

long long to_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw Error(ErrorCode::Config, key + ": expected an integer, got '" + value + "'");
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Config, key + ": expected a number, got '" + value + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "font") {
    font = value;
  } else if (key == "style_dir") {
    style_dir = value;
  } else if (key == "style_id") {
    style_id = static_cast<int>(to_int(key, value));
  } else if (key == "pool_size") {
    pool_size = static_cast<int>(to_int(key, value));
  } else if (key == "pool_universe") {
    parse_codepoint_ranges(value);
    pool_universe = value;
  } else if (key == "work_dir") {
    work_dir = value;
  } else if (key == "checkpoint_dir") {
    checkpoint_dir = value;
  } else if (key == "workers") {
    workers = static_cast<int>(to_int(key, value));
  } else if (key == "recognizer_epochs") {
    recognizer_epochs = static_cast<int>(to_int(key, value));
  } else if (key == "threshold") {
    threshold = to_double(key, value);
  } else {
    const auto unknown = train.apply({{key, value}});
    if (!unknown.empty()) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
  }
}

std::map<std::string, std::string> RunConfig::to_map() const {
  auto m = train.to_map();
  m["font"] = font.string();
  m["style_dir"] = style_dir.string();
  m["style_id"] = std::to_string(style_id);
  m["pool_size"] = std::to_string(pool_size);
  m["pool_universe"] = pool_universe;
  m["work_dir"] = work_dir.string();
  m["checkpoint_dir"] = checkpoint_dir.string();
  m["workers"] = std::to_string(workers);
  m["recognizer_epochs"] = std::to_string(recognizer_epochs);
  m["threshold"] = fmt(threshold);
  return m;
}

void RunConfig::validate() const {
  train.validate();
  if (style_id < 1) throw Error(ErrorCode::Config, "style_id must be at least 1");
  if (pool_size < 1) throw Error(ErrorCode::Config, "pool_size must be positive");
  if (workers < 1) throw Error(ErrorCode::Config, "workers must be at least 1");
  if (recognizer_epochs < 1) throw Error(ErrorCode::Config, "recognizer_epochs must be positive");
  if (threshold < -1.0 || threshold > 1.0) throw Error(ErrorCode::Config, "threshold must lie in [-1, 1]");
  if (work_dir.empty()) throw Error(ErrorCode::Config, "work_dir must not be empty");
}

std::vector<ConfigKeyDoc> config_key_docs() {
  const RunConfig d;
  const auto m = d.to_map();
  std::vector<ConfigKeyDoc> docs = {
      {"font", "", "standard source font (TTF/OTF) used to render input glyphs"},
      {"style_dir", "", "directory of target-style scans named U+XXXX.png"},
      {"style_id", "", "numeric id of the target style in reports"},
      {"shots", "", "number of paired training glyphs drawn from the style"},
      {"pool_size", "", "number of unpaired source glyphs rendered from the font"},
      {"pool_universe", "", "codepoint ranges the unpaired pool is drawn from"},
      {"seed", "", "seed for splits, pools, initialization and batching"},
      {"resolution", "", "glyph canvas side in pixels (power of two, >= 64)"},
      {"epochs", "", "training epochs"},
      {"batch_size", "", "items per batch (>= 2)"},
      {"lr", "", "initial Adam learning rate"},
      {"halve_every", "", "epochs between learning-rate halvings"},
      {"beta1", "", "Adam first-moment decay"},
      {"beta2", "", "Adam second-moment decay"},
      {"lambda1", "", "weight of the adversarial + CAM terms"},
      {"lambda2", "", "weight of the consistency terms (cycle + identity)"},
      {"lambda3", "", "weight of the alignment terms (paired batches)"},
      {"lambda4", "", "weight of the style MMD term (unpaired batches)"},
      {"alpha", "", "weight of L1 inside the alignment terms"},
      {"kernel_bank", "", "'median' for the median-heuristic bank, or comma-separated Gaussian widths"},
      {"mmd_estimator", "", "biased or unbiased MMD estimate"},
      {"width_divisor", "", "divides every network channel count (1 = full size)"},
      {"skip_connections", "", "U-Net skip connections in the generators"},
      {"local_global", "", "add a shallower local discriminator per domain"},
      {"checkpoint_every", "", "epochs between checkpoints"},
      {"work_dir", "", "directory for manifests, logs, reports and outputs"},
      {"checkpoint_dir", "", "checkpoint directory (empty: <work_dir>/checkpoints)"},
      {"workers", "", "threads for image loading; never changes results"},
      {"recognizer_epochs", "", "epochs for the evaluation recognizer"},
      {"threshold", "", "ink threshold for IOU masks, in [-1, 1]"},
  };
  for (auto& doc : docs) doc.default_value = m.at(doc.key);
  return docs;
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const auto content = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    const auto where = origin + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw Error(ErrorCode::Config, where + "expected 'key = value'");
    const auto key = trim(content.substr(0, eq));
    const auto value = trim(content.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::Config, where + "missing key");
    try {
      config.set(key, value);
    } catch (const Error& e) {
      throw Error(e.code(), where + e.what());
    }
  }
}

RunConfig parse_config_text(std::string_view text, const std::string& origin) {
  RunConfig config;
  apply_config_text(config, text, origin);
  return config;
}

std::vector<char32_t> parse_codepoint_ranges(std::string_view text) {
  std::vector<char32_t> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-');
    const auto first = parse_codepoint(trim(item.substr(0, dash)));
    const auto last = dash == std::string::npos ? first : parse_codepoint(trim(item.substr(dash + 1)));
    if (!first || !last || *last < *first) throw Error(ErrorCode::Config, "bad codepoint range '" + item + "'");
    for (char32_t cp = *first; cp <= *last; ++cp) out.push_back(cp);
  }
  return out;
}

// ---------------------------------------------------------------- commands

namespace {

void require_file(const std::string& key, const fs::path& p) {
  if (p.empty()) throw Error(ErrorCode::Config, key + " is not set");
  if (!fs::is_regular_file(p)) throw Error(ErrorCode::Config, key + ": no such file: " + p.string());
}

void require_dir(const std::string& key, const fs::path& p) {
  if (p.empty()) throw Error(ErrorCode::Config, key + " is not set");
  if (!fs::is_directory(p)) throw Error(ErrorCode::Config, key + ": no such directory: " + p.string());
}

void require_manifests(const RunConfig& c) {
  for (const auto& p : {c.split_manifest(), c.pool_manifest()}) {
    if (!fs::is_regular_file(p)) {
      throw Error(ErrorCode::Config, "missing " + p.string() + "; run `zigan-forge prepare` with this config first");
    }
  }
}

ShotSplit read_matching_split(const RunConfig& c) {
  auto split = read_split_manifest(c.split_manifest(), c.style_dir);
  if (split.shots != c.train.shots || split.seed != c.train.seed || split.style_id != c.style_id) {
    throw Error(ErrorCode::Config, "split manifest was prepared with shots=" + std::to_string(split.shots) +
                                       " seed=" + std::to_string(split.seed) + " style_id=" +
                                       std::to_string(split.style_id) + "; rerun `zigan-forge prepare`");
  }
  return split;
}

fs::path resolve_checkpoint(const RunConfig& c, const std::string& given) {
  if (!given.empty()) {
    require_dir("--checkpoint", given);
    return given;
  }
  const auto latest = c.checkpoints() / "latest";
  if (!fs::is_regular_file(latest)) {
    throw Error(ErrorCode::Config, "no checkpoint in " + c.checkpoints().string() + "; train first or pass --checkpoint");
  }
  const auto dir = c.checkpoints() / trim(read_text_file(latest));
  require_dir("checkpoint", dir);
  return dir;
}

bool is_blank(char32_t cp) { return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == 0x3000; }

std::vector<char32_t> requested_codepoints(const std::string& text, const std::string& codepoints) {
  std::vector<char32_t> out;
  for (char32_t cp : utf8_decode(text)) {
    if (!is_blank(cp)) out.push_back(cp);
  }
  for (char32_t cp : parse_codepoint_ranges(codepoints)) out.push_back(cp);
  if (out.empty()) throw Error(ErrorCode::Config, "no characters given; pass --text or --codepoints");
  return out;
}

/// Renders the requested characters the font covers; warns about the rest.
std::vector<GlyphImage> render_requested(const RunConfig& c, const std::vector<char32_t>& cps, int canvas,
                                         std::ostream& err) {
  auto face = FontFace::open(c.font);
  std::vector<GlyphImage> out;
  for (char32_t cp : cps) {
    if (!face.has_glyph(cp)) {
      err << "warning: " << codepoint_label(cp) << " is not in the font; skipped\n";
      continue;
    }
    out.push_back(face.render(cp, canvas));
  }
  if (out.empty()) throw Error(ErrorCode::MissingGlyph, "none of the requested characters are in the font");
  return out;
}

int cmd_prepare(const RunConfig& c, std::ostream& out) {
  require_file("font", c.font);
  require_dir("style_dir", c.style_dir);
  const auto split = build_shot_split(c.style_dir, c.font, c.train.shots, c.train.seed, c.style_id);

  // Test characters stay out of the pool so evaluation glyphs are never seen in training.
  std::set<char32_t> held_out;
  for (const auto& ref : split.test) held_out.insert(ref.codepoint);
  std::vector<char32_t> universe;
  for (char32_t cp : parse_codepoint_ranges(c.pool_universe)) {
    if (!held_out.count(cp)) universe.push_back(cp);
  }
  auto face = FontFace::open(c.font);
  const auto pool = sample_pool_codepoints(face, c.pool_size, c.train.seed, universe);

  const auto split_text = format_split_manifest(split);
  const auto pool_text = format_pool_manifest(pool, c.train.seed);
  fs::create_directories(c.work_dir);
  write_file_atomic(c.split_manifest(), split_text);
  write_file_atomic(c.pool_manifest(), pool_text);
  out << "prepared " << split.train.size() << " train / " << split.test.size() << " test pairs and " << pool.size()
      << " pool glyphs\n  " << c.split_manifest().string() << "\n  " << c.pool_manifest().string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, const std::string& resume, std::ostream& out) {
  require_file("font", c.font);
  require_dir("style_dir", c.style_dir);
  require_manifests(c);
  if (!resume.empty()) require_dir("--resume", resume);

  const auto split = read_matching_split(c);
  auto pool = read_pool_manifest(c.pool_manifest());
  auto pairs = load_pairs(split.train, c.font, c.train.resolution, c.style_id, c.workers);
  TrainingData data(std::move(pairs), c.font, std::move(pool), c.train.resolution);

  RunOptions options;
  options.checkpoint_dir = c.checkpoints();
  options.loss_log = c.loss_log();
  if (!resume.empty()) options.resume_from = fs::path(resume);
  const auto& tc = c.train;
  options.on_epoch = [&](int epoch, const LossReport& last, double mean_total) {
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %d/%d  lr %.3g  mean_total %.6f  last_total %.6f  disc %.6f\n", epoch + 1,
                  tc.epochs, lr_at(tc, epoch), mean_total, last.total, last.discriminator);
    out << line << std::flush;
  };
  const auto run = run_training(c.train, data, options);
  out << "checkpoint: " << run.final_dir.string() << "\nloss log: " << c.loss_log().string() << "\n";
  return 0;
}

int cmd_generate(const RunConfig& c, const std::string& checkpoint, const std::string& text,
                 const std::string& codepoints, fs::path out_dir, std::ostream& out, std::ostream& err) {
  const auto cps = requested_codepoints(text, codepoints);
  require_file("font", c.font);
  const auto ckpt_dir = resolve_checkpoint(c, checkpoint);
  if (out_dir.empty()) out_dir = c.generated_dir();

  const auto ckpt = load_checkpoint(ckpt_dir);
  auto model = model_from_checkpoint(ckpt);
  const auto sources = render_requested(c, cps, ckpt.config.resolution, err);
  const auto fakes = translate_batch(model.gen_s, to_batch(sources));

  std::vector<std::vector<torch::Tensor>> strip(1);
  for (std::size_t i = 0; i < sources.size(); ++i) strip[0].push_back(from_batch(fakes, static_cast<int64_t>(i)));
  const auto strip_image = compose_grid(strip);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    save_png(strip[0][i], out_dir / (codepoint_label(sources[i].codepoint) + ".png"));
  }
  save_png(strip_image, out_dir / "strip.png");
  out << "generated " << sources.size() << " glyphs into " << out_dir.string() << "\n";
  return 0;
}

Recognizer obtain_recognizer(const RunConfig& c, bool train_new, std::ostream& out) {
  if (!train_new) return load_recognizer(c.recognizer_path());
  RecognizerOptions opts;
  opts.epochs = c.recognizer_epochs;
  opts.seed = c.train.seed;
  // Ground truth of every scanned character in the style plus its standard render.
  auto face = FontFace::open(c.font);
  std::vector<GlyphImage> corpus;
  for (const auto& [cp, path] : scan_style_dir(c.style_dir)) {
    corpus.push_back(load_style_image(path, opts.input_size, cp, c.style_id));
    if (face.has_glyph(cp)) corpus.push_back(face.render(cp, opts.input_size));
  }
  out << "training recognizer on " << corpus.size() << " images\n" << std::flush;
  auto rec = train_recognizer(corpus, opts);
  save_recognizer(rec, c.recognizer_path());
  rec.source = c.recognizer_path().string();
  return rec;
}

int cmd_eval(const RunConfig& c, const std::string& checkpoint, bool train_new, fs::path out_dir, std::ostream& out) {
  require_file("font", c.font);
  require_dir("style_dir", c.style_dir);
  require_manifests(c);
  const auto ckpt_dir = resolve_checkpoint(c, checkpoint);
  if (!train_new && !fs::is_regular_file(c.recognizer_path())) {
    throw Error(ErrorCode::Config, "no trained recognizer at " + c.recognizer_path().string() +
                                       "; rerun eval with --train-recognizer");
  }
  if (out_dir.empty()) out_dir = c.eval_dir();

  const auto split = read_matching_split(c);
  const auto ckpt = load_checkpoint(ckpt_dir);
  auto model = model_from_checkpoint(ckpt);
  auto rec = obtain_recognizer(c, train_new, out);

  const int canvas = ckpt.config.resolution;
  StyleTestSource source{c.style_id, split.test.size(), [&](std::size_t b, std::size_t e) {
                           const std::vector<PairRef> refs(split.test.begin() + static_cast<std::ptrdiff_t>(b),
                                                           split.test.begin() + static_cast<std::ptrdiff_t>(e));
                           return load_pairs(refs, c.font, canvas, c.style_id, c.workers);
                         }};
  const auto result = evaluate_suite(model.gen_s, std::vector<StyleTestSource>{source}, &rec, out_dir, c.threshold);
  char line[200];
  std::snprintf(line, sizeof(line), "iou %.6f  top1_accuracy %.6f  fid %.6f  (%zu test glyphs)\n", result.iou.overall,
                result.accuracy->overall, result.fid->overall, split.test.size());
  out << line << "reports: " << out_dir.string() << "\n";
  return 0;
}

int cmd_attention(const RunConfig& c, const std::string& checkpoint, const std::string& text,
                  const std::string& codepoints, fs::path out_dir, std::ostream& out, std::ostream& err) {
  const auto cps = requested_codepoints(text, codepoints);
  require_file("font", c.font);
  const auto ckpt_dir = resolve_checkpoint(c, checkpoint);
  if (out_dir.empty()) out_dir = c.attention_dir();

  const auto ckpt = load_checkpoint(ckpt_dir);
  const int canvas = ckpt.config.resolution;
  auto model = model_from_checkpoint(ckpt);
  const auto sources = render_requested(c, cps, canvas, err);
  const auto fakes = translate_batch(model.gen_s, to_batch(sources));
  DiscriminatorOutput judged;
  {
    torch::NoGradGuard no_grad;
    judged = discriminator_forward(model.disc_t.front(), fakes);
  }
  std::map<char32_t, fs::path> scans;
  if (!c.style_dir.empty() && fs::is_directory(c.style_dir)) scans = scan_style_dir(c.style_dir);

  // Rows: source, generated, heatmap, ground truth (white when no scan exists).
  std::vector<std::vector<torch::Tensor>> rows(4);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto cp = sources[i].codepoint;
    rows[0].push_back(sources[i].pixels);
    rows[1].push_back(from_batch(fakes, static_cast<int64_t>(i)));
    rows[2].push_back(
        colorize_heatmap(export_attention_heatmap(judged.attention, canvas, static_cast<int64_t>(i)).heat));
    const auto scan = scans.find(cp);
    rows[3].push_back(scan == scans.end() ? torch::ones({canvas, canvas, 3})
                                          : load_style_image(scan->second, canvas, cp, c.style_id).pixels);
  }
  const auto sheet = compose_grid(rows);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    save_png(rows[2][i], out_dir / ("heat_" + codepoint_label(sources[i].codepoint) + ".png"));
  }
  save_png(sheet, out_dir / "sheet.png");
  out << "attention sheet for " << sources.size() << " glyphs: " << (out_dir / "sheet.png").string() << "\n";
  return 0;
}

std::string key_help() {
  std::string text = "Config keys (config file lines `key = value`, or --set key=value):\n";
  for (const auto& d : config_key_docs()) {
    std::string shown = d.default_value.empty() ? "unset" : d.default_value;
    if (d.default_value.find('.') != std::string::npos) {
      char number[32];
      std::snprintf(number, sizeof(number), "%g", std::stod(d.default_value));
      shown = number;
    }
    char line[256];
    std::snprintf(line, sizeof(line), "  %-18s %s [default: %s]\n", d.key.c_str(), d.description.c_str(),
                  shown.c_str());
    text += line;
  }
  return text;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"zigan-forge: few-shot calligraphy font style transfer"};
  app.name("zigan-forge");
  app.require_subcommand(1);
  const auto footer = key_help();
  app.footer(footer);

  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "config file of `key = value` lines");
  auto* seed_opt = app.add_option("--seed", seed, "overrides the seed key");
  app.add_option("--set", sets, "override one key (repeatable): --set key=value")->allow_extra_args(false);

  std::string checkpoint, text, codepoints, resume, out_dir;
  bool train_recognizer_flag = false;
  auto* prepare = app.add_subcommand("prepare", "select the few-shot split and the unpaired pool; write manifests");
  auto* train = app.add_subcommand("train", "train on the prepared manifests");
  train->add_option("--resume", resume, "checkpoint directory to continue from");
  auto* generate = app.add_subcommand("generate", "stylize characters with a trained checkpoint");
  auto* eval = app.add_subcommand("eval", "IOU, recognizer accuracy and FID on the held-out split");
  eval->add_flag("--train-recognizer", train_recognizer_flag, "train (and save) the evaluation recognizer first");
  auto* attention = app.add_subcommand("attention", "source / generated / heatmap / truth sheet");
  for (auto* sub : {generate, attention}) {
    sub->add_option("--text", text, "UTF-8 characters to process");
    sub->add_option("--codepoints", codepoints, "codepoints or ranges, e.g. U+6C38,U+4E00-U+4E0F");
  }
  for (auto* sub : {generate, eval, attention}) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint directory (default: the latest one)");
    sub->add_option("--out", out_dir, "output directory (default: under work_dir)");
  }
  for (auto* sub : {prepare, train, generate, eval, attention}) {
    sub->fallthrough();
    sub->footer(footer);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) {
      if (!fs::is_regular_file(config_path)) throw Error(ErrorCode::Config, "no such config file: " + config_path);
      apply_config_text(config, read_text_file(config_path), config_path);
    }
    if (seed_opt->count() > 0) config.train.seed = seed;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::Config, "--set expects key=value, got '" + kv + "'");
      config.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    config.validate();

    if (prepare->parsed()) return cmd_prepare(config, out);
    if (train->parsed()) return cmd_train(config, resume, out);
    if (generate->parsed()) return cmd_generate(config, checkpoint, text, codepoints, out_dir, out, err);
    if (eval->parsed()) return cmd_eval(config, checkpoint, train_recognizer_flag, out_dir, out);
    if (attention->parsed()) return cmd_attention(config, checkpoint, text, codepoints, out_dir, out, err);
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace zigan
