#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avatarcraft/corpus.hpp"
#include "avatarcraft/encoder.hpp"
#include "avatarcraft/engine.hpp"
#include "avatarcraft/nn.hpp"

namespace avatarcraft::translator {

using engine::kNumAttributes;
using engine::kNumGroups;
using engine::kNumStructure;
using engine::kTextureWidth;

struct LossWeights {
  double alpha = 5.0;   // structure L1
  double gamma = 1.0;   // masked attribute L1
  double lambda = 0.1;  // texture cross-entropy
};

/// Raw head outputs. s_hat and a_hat are post-sigmoid; t_logits holds the
/// per-group logit vectors concatenated in group order.
struct HeadOutputs {
  std::array<double, kNumStructure> s_hat{};
  std::array<double, kTextureWidth> t_logits{};
  std::array<double, kNumAttributes> a_hat{};

  std::span<const double> logits(int group) const;
};

/// Unweighted terms; total = alpha*structure + gamma*attribute + lambda*texture.
struct LossBreakdown {
  double total = 0.0;
  double structure = 0.0;
  double attribute = 0.0;
  double texture = 0.0;
};

struct LossGradient {
  std::array<double, kNumStructure> s_hat{};
  std::array<double, kTextureWidth> t_logits{};
  std::array<double, kNumAttributes> a_hat{};
};

/// structure = mean_i |s_i - s_hat_i|
/// attribute = sum_j m_j |a_j - a_hat_j| / max(1, sum_j m_j)
/// texture   = mean over groups of -log softmax(logits_g)[t_g]
/// The L1 subgradient at zero difference is taken as 0.
LossBreakdown composite_loss(const HeadOutputs& pred, const engine::CraftingParams& gt,
                             const engine::ConditionMask& mask, const LossWeights& w,
                             LossGradient* grad = nullptr);

/// Argmax with ties broken by the lowest index.
int argmax_lowest(std::span<const double> values);

/// Three parallel two-layer MLPs (embed -> hidden -> out) reading the [CLS] embedding.
class Heads {
 public:
  static constexpr int kHidden = 128;

  Heads(int embed_dim, std::uint64_t seed);
  Heads(const Heads& other);
  Heads& operator=(const Heads&) = delete;

  struct Cache {
    nn::Mat input;
    std::array<nn::Mat, 3> pre;  // fc1 outputs
    std::array<nn::Mat, 3> act;  // GELU outputs
    HeadOutputs out;
  };

  int embed_dim() const { return embed_dim_; }
  HeadOutputs forward(const nn::Vec& cls, Cache* cache = nullptr) const;
  /// Accumulates head gradients; returns dL/dcls.
  nn::Vec backward(const Cache& cache, const LossGradient& grad);

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

 private:
  struct Mlp {
    nn::Linear fc1, fc2;
  };
  void build(std::uint64_t seed);

  int embed_dim_;
  nn::ParamStore store_;
  std::array<Mlp, 3> mlps_;  // structure, texture, attribute
};

class SchemaMismatch : public std::runtime_error {
 public:
  SchemaMismatch(const std::string& model_hash, const std::string& engine_hash);
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 0.05;
  int warmup_steps = 100;
  std::uint64_t seed = 1;
  /// Probability that a training sample is augmented on a given step.
  double augment_prob = 0.5;
  LossWeights weights{};

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
  int epoch;
  double total, structure, attribute, texture;
};

class TranslatorModel {
 public:
  TranslatorModel(encoder::EncoderModel encoder, LossWeights weights, bool encoder_frozen,
                  std::uint64_t head_seed);

  const encoder::EncoderModel& encoder() const { return encoder_; }
  encoder::EncoderModel& encoder() { return encoder_; }
  const Heads& heads() const { return heads_; }
  Heads& heads() { return heads_; }
  const LossWeights& weights() const { return weights_; }
  bool encoder_frozen() const { return frozen_; }
  const std::string& schema_hash() const { return schema_hash_; }
  void set_schema_hash(std::string h) { schema_hash_ = std::move(h); }
  nlohmann::json& provenance() { return provenance_; }
  const nlohmann::json& provenance() const { return provenance_; }

  HeadOutputs heads_forward(const nn::Vec& cls) const { return heads_.forward(cls); }
  HeadOutputs forward(const ImageBuffer& img) const;
  /// Throws SchemaMismatch if the model was trained for a different engine schema.
  engine::CraftingParams predict(const ImageBuffer& img) const;
  void require_current_schema() const;

  void save(const std::filesystem::path& path) const;
  static TranslatorModel load(const std::filesystem::path& path);

 private:
  encoder::EncoderModel encoder_;
  Heads heads_;
  LossWeights weights_;
  bool frozen_;
  std::string schema_hash_;
  nlohmann::json provenance_ = nlohmann::json::object();
};

/// Clamp + per-group argmax.
engine::CraftingParams decode_outputs(const HeadOutputs& out);

/// In-memory training split.
struct PairSamples {
  std::vector<ImageBuffer> images;
  std::vector<engine::CraftingParams> params;
  std::string dataset_hash;
  std::string schema_hash;
};

/// Records [begin, end) of a dataset, images loaded from disk.
PairSamples load_samples(const corpus::PairDataset& ds, std::size_t begin, std::size_t end);

using EpochFn = std::function<void(const EpochStats&)>;

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::vector<encoder::LossPoint> curve;  // per step
};

/// Frozen-encoder training: only head weights change.
TranslatorModel train_translator(const PairSamples& data, const encoder::EncoderModel& encoder,
                                 const TrainConfig& config, TrainResult* result = nullptr,
                                 const EpochFn& on_epoch = {});

/// Ablation: randomly initialised encoder, every weight trainable.
TranslatorModel train_translator_unfrozen(const PairSamples& data,
                                          const encoder::EncoderConfig& encoder_config,
                                          const TrainConfig& config, TrainResult* result = nullptr,
                                          const EpochFn& on_epoch = {});

}  // namespace avatarcraft::translator
