#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avatarcraft/engine.hpp"
#include "avatarcraft/image.hpp"

namespace avatarcraft::corpus {

enum class StyleTag { kEngine, kSketch, kPosterize, kHueShift, kSoftBlur };

inline constexpr std::array<StyleTag, 5> kAllStyles = {
    StyleTag::kEngine, StyleTag::kSketch, StyleTag::kPosterize, StyleTag::kHueShift,
    StyleTag::kSoftBlur};

std::string_view style_name(StyleTag style);
/// Throws std::invalid_argument for names outside the enumeration.
StyleTag style_from_name(std::string_view name);

/// Deterministic given (img, style, seed). kEngine returns img unchanged.
ImageBuffer stylize(const ImageBuffer& img, StyleTag style, std::uint64_t seed);

/// Draws for one augmentation, exposed so tests can audit the sampling.
struct AugmentDraw {
  double crop_scale;  // area fraction in [0.8, 1]
  double crop_x0, crop_y0;
  double rotation_deg;  // [-15, 15]
  double brightness, contrast, saturation;  // [0.8, 1.2]
  bool blur;
  double blur_sigma;  // [0, 1.5]
};

AugmentDraw draw_augment(std::uint64_t seed);
ImageBuffer augment(const ImageBuffer& img, std::uint64_t seed);
ImageBuffer apply_augment(const ImageBuffer& img, const AugmentDraw& draw);

/// Separable Gaussian blur with edge clamping; sigma <= 0 returns the input.
ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma);

// --- pair datasets -----------------------------------------------------------

struct PairRecord {
  std::uint64_t id;
  engine::CraftingParams params;
};

struct PairDataset {
  std::filesystem::path dir;
  std::string version;
  std::string schema_hash;
  std::uint64_t seed = 0;
  int resolution = ImageBuffer::kCanvas;
  std::string dataset_hash;
  std::vector<PairRecord> records;

  std::size_t size() const { return records.size(); }
  /// Records [0, train_count) train; the last 10% of ids are held out.
  std::size_t train_count() const { return records.size() - records.size() / 10; }
  std::filesystem::path image_path(std::uint64_t id) const;
  ImageBuffer load_image(std::uint64_t id) const;
};

inline constexpr std::string_view kDatasetVersion = "avatarcraft-pairs/1";

/// Per-id parameter seed; ids are sampled independently.
std::uint64_t pair_seed(std::uint64_t dataset_seed, std::uint64_t id);

/// Writes manifest.json, params.jsonl and images/{id}.png under out_dir.
/// Output is staged in a sibling directory and renamed into place after the
/// manifest is written; on failure the staging directory is removed.
PairDataset generate_pairs(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir);

/// Reads the manifest and params; validates every record and the schema hash.
PairDataset load_pairs(const std::filesystem::path& dir);

/// SHA-256 over params.jsonl text and the pixel hash of every image, in id order.
std::string hash_pairs(const std::filesystem::path& dir);

// --- pretraining corpus -------------------------------------------------------

struct CorpusEntry {
  std::size_t index;
  std::uint64_t source_id;
  StyleTag style;
};

struct PretrainCorpus {
  std::filesystem::path dir;
  std::string corpus_hash;
  std::vector<CorpusEntry> entries;
  std::vector<ImageBuffer> images;  // parallel to entries
};

/// per_style engine images plus per_style stylized images for each other style,
/// all drawn from the training split of pairs. Writes manifest.json,
/// styles.jsonl and images/{index}.png when out_dir is given.
PretrainCorpus build_pretrain_corpus(const PairDataset& pairs, std::size_t per_style,
                                     std::uint64_t seed,
                                     const std::optional<std::filesystem::path>& out_dir);

PretrainCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace avatarcraft::corpus
