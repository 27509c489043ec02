#include "avatarcraft/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "avatarcraft/io.hpp"
#include "avatarcraft/rng.hpp"

namespace avatarcraft::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

double luminance(const ImageBuffer& img, int x, int y) {
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

ImageBuffer sketch(const ImageBuffer& img) {
  const int w = img.width(), h = img.height();
  std::vector<double> lum(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lum[static_cast<std::size_t>(y) * w + x] = luminance(img, x, y);
  auto L = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return lum[static_cast<std::size_t>(y) * w + x];
  };
  ImageBuffer out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (L(x + 1, y - 1) + 2 * L(x + 1, y) + L(x + 1, y + 1)) -
                        (L(x - 1, y - 1) + 2 * L(x - 1, y) + L(x - 1, y + 1));
      const double gy = (L(x - 1, y + 1) + 2 * L(x, y + 1) + L(x + 1, y + 1)) -
                        (L(x - 1, y - 1) + 2 * L(x, y - 1) + L(x + 1, y - 1));
      const std::uint8_t v = clamp_byte(255.0 - 1.5 * std::sqrt(gx * gx + gy * gy));
      out.set(x, y, {v, v, v});
    }
  return out;
}

ImageBuffer posterize(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<std::uint8_t>((out.data()[i] >> 6) * 85);
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0;
  if (d <= 0) {
    h = 0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1 - std::fabs(std::fmod(hp, 2.0) - 1));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r1 = c, g1 = x; break;
    case 1: r1 = x, g1 = c; break;
    case 2: g1 = c, b1 = x; break;
    case 3: g1 = x, b1 = c; break;
    case 4: r1 = x, b1 = c; break;
    default: r1 = c, b1 = x; break;
  }
  const double m = v - c;
  r = r1 + m, g = g1 + m, b = b1 + m;
}

ImageBuffer hue_shift(const ImageBuffer& img, double degrees) {
  ImageBuffer out = img;
  for (std::size_t i = 0; i < out.size(); i += 3) {
    double h, s, v, r, g, b;
    rgb_to_hsv(img.data()[i], img.data()[i + 1], img.data()[i + 2], h, s, v);
    h = std::fmod(h + degrees + 360.0, 360.0);
    hsv_to_rgb(h, s, v, r, g, b);
    out.data()[i] = clamp_byte(r);
    out.data()[i + 1] = clamp_byte(g);
    out.data()[i + 2] = clamp_byte(b);
  }
  return out;
}

ImageBuffer vignette(const ImageBuffer& img) {
  ImageBuffer out = img;
  const double cx = (img.width() - 1) / 2.0, cy = (img.height() - 1) / 2.0;
  const double r2max = cx * cx + cy * cy;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double f = 1.0 - 0.45 * ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / r2max;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = clamp_byte(img.at(x, y, c) * f);
    }
  return out;
}

double sample_channel(const ImageBuffer& img, double x, double y, int c) {
  // Bilinear with edge clamping; (x, y) in pixel-centre coordinates.
  x = std::clamp(x, 0.0, img.width() - 1.0);
  y = std::clamp(y, 0.0, img.height() - 1.0);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width() - 1), y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = img.at(x0, y0, c) * (1 - fx) + img.at(x1, y0, c) * fx;
  const double bot = img.at(x0, y1, c) * (1 - fx) + img.at(x1, y1, c) * fx;
  return top * (1 - fy) + bot * fy;
}

json read_json(const fs::path& p) { return json::parse(io::read_text(p)); }

}  // namespace

std::string_view style_name(StyleTag style) {
  switch (style) {
    case StyleTag::kEngine: return "engine";
    case StyleTag::kSketch: return "sketch";
    case StyleTag::kPosterize: return "posterize";
    case StyleTag::kHueShift: return "hue_shift";
    case StyleTag::kSoftBlur: return "soft_blur";
  }
  throw std::invalid_argument("unknown style");
}

StyleTag style_from_name(std::string_view name) {
  for (auto s : kAllStyles)
    if (style_name(s) == name) return s;
  throw std::invalid_argument("unknown style '" + std::string(name) + "'");
}

ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma) {
  if (sigma <= 1e-3) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int w = img.width(), h = img.height();
  std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y, c);
        tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
      }
  ImageBuffer out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp[(static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x) * 3 + c];
        out.at(x, y, c) = clamp_byte(acc);
      }
  return out;
}

ImageBuffer stylize(const ImageBuffer& img, StyleTag style, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(style)));
  switch (style) {
    case StyleTag::kEngine: return img;
    case StyleTag::kSketch: return sketch(img);
    case StyleTag::kPosterize: return posterize(img);
    case StyleTag::kHueShift: {
      const double magnitude = rng.uniform(30.0, 90.0);
      return hue_shift(img, rng.bernoulli(0.5) ? magnitude : -magnitude);
    }
    case StyleTag::kSoftBlur: return vignette(gaussian_blur(img, rng.uniform(1.0, 2.0)));
  }
  throw std::invalid_argument("unknown style");
}

AugmentDraw draw_augment(std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0xa06));
  AugmentDraw d{};
  d.crop_scale = rng.uniform(0.8, 1.0);
  const double side = ImageBuffer::kCanvas * std::sqrt(d.crop_scale);
  d.crop_x0 = rng.uniform(0.0, ImageBuffer::kCanvas - side);
  d.crop_y0 = rng.uniform(0.0, ImageBuffer::kCanvas - side);
  d.rotation_deg = rng.uniform(-15.0, 15.0);
  d.brightness = rng.uniform(0.8, 1.2);
  d.contrast = rng.uniform(0.8, 1.2);
  d.saturation = rng.uniform(0.8, 1.2);
  d.blur = rng.bernoulli(0.5);
  d.blur_sigma = rng.uniform(0.0, 1.5);
  return d;
}

ImageBuffer apply_augment(const ImageBuffer& img, const AugmentDraw& d) {
  img.require_canvas();
  const int n = ImageBuffer::kCanvas;
  const double side = n * std::sqrt(d.crop_scale);
  const double zoom = side / n;
  const double theta = d.rotation_deg * M_PI / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double c = (n - 1) / 2.0;

  ImageBuffer out(n, n);
  double mean_lum = 0;
  std::vector<double> px(static_cast<std::size_t>(n) * n * 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      // Undo the rotation about the output centre, then map into the crop window.
      const double rx = ct * (x - c) + st * (y - c) + c;
      const double ry = -st * (x - c) + ct * (y - c) + c;
      const double sx = d.crop_x0 + (rx + 0.5) * zoom - 0.5;
      const double sy = d.crop_y0 + (ry + 0.5) * zoom - 0.5;
      double rgb[3];
      for (int ch = 0; ch < 3; ++ch) rgb[ch] = sample_channel(img, sx, sy, ch) * d.brightness;
      const double gray = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
      for (int ch = 0; ch < 3; ++ch) {
        rgb[ch] = gray + d.saturation * (rgb[ch] - gray);
        px[(static_cast<std::size_t>(y) * n + x) * 3 + ch] = rgb[ch];
      }
      mean_lum += gray;
    }
  mean_lum /= static_cast<double>(n) * n;
  for (std::size_t i = 0; i < px.size(); ++i)
    out.data()[i] = clamp_byte(mean_lum + d.contrast * (px[i] - mean_lum));
  if (d.blur) out = gaussian_blur(out, d.blur_sigma);
  return out;
}

ImageBuffer augment(const ImageBuffer& img, std::uint64_t seed) {
  return apply_augment(img, draw_augment(seed));
}

// --- pair datasets -------------------------------------------------------------

std::uint64_t pair_seed(std::uint64_t dataset_seed, std::uint64_t id) {
  return Rng::derive(dataset_seed, id);
}

fs::path PairDataset::image_path(std::uint64_t id) const {
  char name[32];
  std::snprintf(name, sizeof name, "%06llu.png", static_cast<unsigned long long>(id));
  return dir / "images" / name;
}

ImageBuffer PairDataset::load_image(std::uint64_t id) const {
  auto img = io::read_png(image_path(id));
  img.require_canvas();
  return img;
}

std::string hash_pairs(const fs::path& dir) {
  const std::string params = io::read_text(dir / "params.jsonl");
  std::string acc = io::sha256_hex(params);
  std::istringstream lines(params);
  std::string line;
  PairDataset probe;
  probe.dir = dir;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto id = json::parse(line).at("id").get<std::uint64_t>();
    acc += probe.load_image(id).sha256();
  }
  return io::sha256_hex(acc);
}

PairDataset generate_pairs(std::size_t n, std::uint64_t seed, const fs::path& out_dir) {
  if (n < 1) throw std::invalid_argument("generate_pairs: n must be >= 1");
  fs::path staging = out_dir;
  staging += ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    fs::create_directories(staging / "images");
    PairDataset ds;
    ds.dir = staging;
    ds.version = std::string(kDatasetVersion);
    ds.schema_hash = engine::schema().hash;
    ds.seed = seed;
    std::ostringstream jsonl;
    for (std::uint64_t id = 0; id < n; ++id) {
      const auto params = engine::sample_params(pair_seed(seed, id));
      io::write_png(ds.image_path(id), engine::render(params));
      json rec = engine::params_to_json(params);
      rec["id"] = id;
      jsonl << rec.dump() << '\n';
      ds.records.push_back({id, params});
    }
    io::write_text(staging / "params.jsonl", jsonl.str());
    ds.dataset_hash = hash_pairs(staging);
    json manifest = {{"version", ds.version},       {"schema_hash", ds.schema_hash},
                     {"count", n},                  {"resolution", ds.resolution},
                     {"seed", seed},                {"dataset_hash", ds.dataset_hash},
                     {"heldout_from_id", ds.train_count()}};
    io::write_text(staging / "manifest.json", manifest.dump(2) + "\n");
    fs::remove_all(out_dir);
    fs::rename(staging, out_dir);
    ds.dir = out_dir;
    return ds;
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

PairDataset load_pairs(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  PairDataset ds;
  ds.dir = dir;
  ds.version = manifest.at("version").get<std::string>();
  ds.schema_hash = manifest.at("schema_hash").get<std::string>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.resolution = manifest.at("resolution").get<int>();
  ds.dataset_hash = manifest.at("dataset_hash").get<std::string>();
  if (ds.schema_hash != engine::schema().hash)
    throw std::runtime_error("dataset " + dir.string() + " was generated for schema " +
                             ds.schema_hash + ", engine schema is " + engine::schema().hash);
  std::ifstream in(dir / "params.jsonl");
  if (!in) throw std::runtime_error("missing params.jsonl in " + dir.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    auto params = engine::params_from_json(rec);
    engine::require_valid(params);
    const auto id = rec.at("id").get<std::uint64_t>();
    if (!fs::exists(ds.image_path(id)))
      throw std::runtime_error("record " + std::to_string(id) + " has no image in " + dir.string());
    ds.records.push_back({id, params});
  }
  if (ds.records.size() != manifest.at("count").get<std::size_t>())
    throw std::runtime_error("params.jsonl record count disagrees with manifest");
  return ds;
}

// --- pretraining corpus ----------------------------------------------------------

PretrainCorpus build_pretrain_corpus(const PairDataset& pairs, std::size_t per_style,
                                     std::uint64_t seed, const std::optional<fs::path>& out_dir) {
  if (pairs.records.empty()) throw std::invalid_argument("build_pretrain_corpus: empty pair dataset");
  const std::size_t ntrain = std::max<std::size_t>(1, pairs.train_count());
  Rng rng(Rng::derive(seed, 0xc0));
  PretrainCorpus corpus;
  std::vector<std::optional<ImageBuffer>> cache(ntrain);
  auto source = [&](std::size_t k) -> const ImageBuffer& {
    if (!cache[k]) cache[k] = pairs.load_image(pairs.records[k].id);
    return *cache[k];
  };
  for (StyleTag style : kAllStyles) {
    for (std::size_t j = 0; j < per_style; ++j) {
      const std::size_t k = style == StyleTag::kEngine ? j % ntrain : rng.below(ntrain);
      const std::size_t index = corpus.entries.size();
      corpus.entries.push_back({index, pairs.records[k].id, style});
      corpus.images.push_back(stylize(source(k), style, Rng::derive(seed, index)));
    }
  }
  std::string acc;
  for (std::size_t i = 0; i < corpus.entries.size(); ++i)
    acc += std::string(style_name(corpus.entries[i].style)) + corpus.images[i].sha256();
  corpus.corpus_hash = io::sha256_hex(acc);

  if (out_dir) {
    fs::create_directories(*out_dir / "images");
    std::ostringstream styles;
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
      const auto& e = corpus.entries[i];
      char name[32];
      std::snprintf(name, sizeof name, "%06zu.png", e.index);
      io::write_png(*out_dir / "images" / name, corpus.images[i]);
      styles << json{{"index", e.index}, {"source_id", e.source_id}, {"style", style_name(e.style)}}.dump()
             << '\n';
    }
    io::write_text(*out_dir / "styles.jsonl", styles.str());
    json manifest = {{"version", "avatarcraft-corpus/1"}, {"count", corpus.entries.size()},
                     {"per_style", per_style},            {"seed", seed},
                     {"pairs_hash", pairs.dataset_hash},  {"corpus_hash", corpus.corpus_hash}};
    io::write_text(*out_dir / "manifest.json", manifest.dump(2) + "\n");
    corpus.dir = *out_dir;
  }
  return corpus;
}

PretrainCorpus load_corpus(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  PretrainCorpus corpus;
  corpus.dir = dir;
  corpus.corpus_hash = manifest.at("corpus_hash").get<std::string>();
  std::ifstream in(dir / "styles.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    CorpusEntry e{rec.at("index").get<std::size_t>(), rec.at("source_id").get<std::uint64_t>(),
                  style_from_name(rec.at("style").get<std::string>())};
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", e.index);
    corpus.images.push_back(io::read_png(dir / "images" / name));
    corpus.entries.push_back(e);
  }
  if (corpus.entries.size() != manifest.at("count").get<std::size_t>())
    throw std::runtime_error("styles.jsonl count disagrees with corpus manifest");
  return corpus;
}

}  // namespace avatarcraft::corpus
