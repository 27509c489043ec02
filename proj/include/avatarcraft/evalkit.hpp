#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "avatarcraft/corpus.hpp"
#include "avatarcraft/encoder.hpp"
#include "avatarcraft/engine.hpp"
#include "avatarcraft/translator.hpp"

namespace avatarcraft::evalkit {

struct RecoveryMetrics {
  std::size_t n = 0;
  double structure_mae = 0.0;
  std::array<double, engine::kNumStructure> structure_mae_per_dim{};
  std::array<double, engine::kNumGroups> texture_accuracy{};
  /// Mean |a - a_hat| over entries valid under the ground-truth mask.
  double attribute_mae = 0.0;
  std::size_t attribute_count = 0;
};

RecoveryMetrics recovery_metrics(std::span<const engine::CraftingParams> predicted,
                                 std::span<const engine::CraftingParams> truth);

double cosine(const nn::Vec& a, const nn::Vec& b);

/// Cosine between the [CLS] embeddings of two images.
double identity_surrogate(const ImageBuffer& a, const ImageBuffer& b,
                          const encoder::EncoderModel& encoder);

class InsufficientSamples : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rows are samples. Each set needs at least 2 * dim rows.
/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), unbiased covariances.
double frechet_surrogate(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// [CLS] embeddings, one row per image.
Eigen::MatrixXd embed_all(const encoder::EncoderModel& encoder, std::span<const ImageBuffer> images);

struct StyleRow {
  corpus::StyleTag style;
  double structure_mae = 0.0;
  std::array<double, engine::kNumGroups> texture_accuracy{};
  double attribute_mae = 0.0;
};

/// Predicts on stylize(image, style) for each held-out sample. Stylization
/// seeds derive from (seed, sample index).
std::vector<StyleRow> style_robustness(const translator::TranslatorModel& model,
                                       const translator::PairSamples& heldout,
                                       std::span<const corpus::StyleTag> styles, std::uint64_t seed);

struct EvalConfig {
  std::uint64_t seed = 7;
  std::vector<corpus::StyleTag> styles{corpus::kAllStyles.begin(), corpus::kAllStyles.end()};
  bool surrogates = true;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

struct EvalReport {
  RecoveryMetrics recovery;
  /// Mean cosine of (input, render(prediction)) and of mismatched pairs.
  std::optional<double> identity_matched;
  std::optional<double> identity_mismatched;
  /// Ground-truth inputs vs renders of predictions / of random params.
  /// Absent when the held-out set is smaller than 2 * embed_dim.
  std::optional<double> frechet_predicted;
  std::optional<double> frechet_random;
  std::vector<StyleRow> styles;
  nlohmann::json config;
  std::string dataset_hash;
  std::string schema_hash;
  std::string model_checksum;

  nlohmann::json to_json() const;
  std::string table() const;
};

EvalReport evaluate(const translator::TranslatorModel& model, const translator::PairSamples& heldout,
                    const EvalConfig& config);

struct AblationConfig {
  translator::TrainConfig train;
  EvalConfig eval;

  nlohmann::json to_json() const;
};

struct AblationVariant {
  std::string name;
  EvalReport report;
  std::string train_dataset_hash;
};

struct AblationReport {
  std::vector<AblationVariant> variants;  // frozen-pretrained, w/o-pretrain
  double engine_relative_gap = 0.0;       // |a - b| / min(a, b)
  bool engine_within_20pct = false;
  /// Per non-engine style: frozen-pretrained MAE strictly below w/o-pretrain.
  std::vector<std::pair<corpus::StyleTag, bool>> stylized_favors_pretrained;

  nlohmann::json to_json() const;
  std::string table() const;
};

/// Trains the frozen-pretrained and w/o-pretrain translators with identical
/// data, seeds and budgets, then evaluates both.
AblationReport ablation_harness(const translator::PairSamples& train,
                                const translator::PairSamples& heldout,
                                const encoder::EncoderModel& pretrained, const AblationConfig& config,
                                const translator::EpochFn& on_epoch = {});

AblationReport compare_variants(AblationVariant pretrained, AblationVariant scratch);

}  // namespace avatarcraft::evalkit
