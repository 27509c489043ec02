#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avatarcraft/image.hpp"
#include "avatarcraft/nn.hpp"

namespace avatarcraft::encoder {

using nn::Mat;
using nn::Vec;

struct EncoderConfig {
  int patch_size = 16;
  int image_size = 128;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  bool cls_token = true;
  double mask_ratio = 0.75;
  int decoder_dim = 32;
  int decoder_depth = 2;
  int decoder_heads = 4;
  /// When true the decoder reconstructs from the [CLS] token plus mask
  /// tokens only; visible patch tokens are not forwarded to it.
  bool decoder_from_cls = true;
  /// Reconstruction target: per-patch standardized pixels instead of raw [0,1].
  bool normalized_target = true;
  std::uint64_t init_seed = 0;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * 3; }
  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

/// Patches in raster order, each flattened row-major as (py, px, channel),
/// scaled to [0,1].
Mat patchify(const ImageBuffer& img, int patch_size = 16);
ImageBuffer unpatchify(const Mat& patches, int image_size = 128, int patch_size = 16);

struct MaskSplit {
  std::vector<int> kept;    // ascending
  std::vector<int> masked;  // ascending
};

/// Exactly round(num_patches * mask_ratio) indices masked; deterministic per seed.
MaskSplit random_mask(int num_patches, double mask_ratio, std::uint64_t seed);

/// Mean squared error over the pixels of masked patches only. When grad is
/// non-null it receives dLoss/dReconstruction (zero on visible patches).
template <typename Derived>
double mae_loss(const Eigen::MatrixBase<Derived>& reconstruction,
                const Eigen::MatrixBase<Derived>& target, std::span<const int> masked,
                Eigen::MatrixBase<Derived>* grad = nullptr) {
  using Scalar = typename Derived::Scalar;
  if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols())
    throw std::invalid_argument("mae_loss: reconstruction and target shapes differ");
  if (grad) grad->derived().setZero(reconstruction.rows(), reconstruction.cols());
  if (masked.empty()) return 0.0;
  const double count = static_cast<double>(masked.size()) * static_cast<double>(reconstruction.cols());
  double sum = 0.0;
  for (int r : masked) {
    for (Eigen::Index c = 0; c < reconstruction.cols(); ++c) {
      const double d = static_cast<double>(reconstruction(r, c)) - static_cast<double>(target(r, c));
      sum += d * d;
      if (grad) (*grad)(r, c) = static_cast<Scalar>(2.0 * d / count);
    }
  }
  return sum / count;
}

/// Per-patch standardization used for normalized reconstruction targets.
Mat normalize_patches(const Mat& patches);

struct Embedding {
  Vec cls;     // embed_dim
  Mat tokens;  // num_patches x embed_dim
};

struct LossPoint {
  std::int64_t step;
  double loss;
};

struct Provenance {
  std::string corpus_hash;
  std::int64_t steps = 0;
  int epochs = 0;
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
  double final_train_loss = 0.0;
  nlohmann::json train_config;
};

/// ViT encoder with its MAE decoder. Inference methods are const and safe to
/// call concurrently.
class EncoderModel {
 public:
  explicit EncoderModel(EncoderConfig config);
  EncoderModel(const EncoderModel& other);
  EncoderModel& operator=(const EncoderModel&) = delete;

  const EncoderConfig& config() const { return config_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  Provenance& provenance() { return provenance_; }
  const Provenance& provenance() const { return provenance_; }

  /// Checksum of the encoder half only (decoder excluded).
  std::string encoder_checksum() const;
  void set_encoder_trainable(bool trainable);

  Embedding encode(const ImageBuffer& img) const;
  Embedding encode_patches(const Mat& patches) const;

  // --- training interface -----------------------------------------------------
  struct EncodeCache {
    std::vector<int> kept;
    Mat input;  // kept patches
    std::vector<nn::Block::Cache> blocks;
    nn::LayerNorm::Cache norm;
  };
  struct DecodeCache {
    Mat latent;  // encoder output fed to decoder
    Mat embedded;
    std::vector<nn::Block::Cache> blocks;
    nn::LayerNorm::Cache norm;
    Mat normed;
  };

  /// Encoder over the kept patches (all patches when kept is empty); returns
  /// (1 + kept) x embed_dim, row 0 is [CLS].
  Mat encode_train(const Mat& patches, std::span<const int> kept, EncodeCache* cache) const;
  /// Accumulates encoder gradients from dL/d(encoder output).
  void encode_backward(const EncodeCache& cache, const Mat& dout);

  /// Decoder reconstruction for every patch position (num_patches x patch_dim).
  Mat decode_train(const Mat& latent, std::span<const int> kept, DecodeCache* cache) const;
  Mat decode_backward(const DecodeCache& cache, std::span<const int> kept, const Mat& drecon);

  /// One MAE sample: forward, loss on masked patches, and (if train) backward.
  double mae_step(const Mat& patches, const MaskSplit& split, bool train);

  void save(const std::filesystem::path& path) const;
  static EncoderModel load(const std::filesystem::path& path);

  nlohmann::json meta_json() const;
  static EncoderModel from_archive_meta(const nlohmann::json& meta);

 private:
  void build();

  EncoderConfig config_;
  nn::ParamStore store_;
  Provenance provenance_;
  Mat pos_;
  Mat dec_pos_;
  nn::Linear patch_embed_;
  nn::Param* cls_ = nullptr;
  std::vector<nn::Block> blocks_;
  nn::LayerNorm norm_;
  nn::Linear dec_embed_;
  nn::Param* mask_token_ = nullptr;
  std::vector<nn::Block> dec_blocks_;
  nn::LayerNorm dec_norm_;
  nn::Linear dec_pred_;
};

struct PretrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.05;
  int warmup_steps = 200;
  std::uint64_t seed = 1;
  int eval_samples = 256;
  /// Stop after this many optimizer steps (0 = run all epochs). The learning
  /// rate schedule still spans all epochs, so a truncated run is a prefix.
  std::int64_t max_steps = 0;

  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct PretrainResult {
  std::vector<LossPoint> curve;
};

using ProgressFn = std::function<void(int epoch, double mean_loss)>;

/// Held-out style evaluation: mean masked loss over the first eval_samples
/// images with masks fixed by seed.
double eval_mae(const EncoderModel& model, std::span<const ImageBuffer> images, int samples,
                std::uint64_t seed);

/// MAE pretraining. Aborts with std::runtime_error if the loss becomes non-finite.
PretrainResult pretrain(EncoderModel& model, std::span<const ImageBuffer> images,
                        const std::string& corpus_hash, const PretrainConfig& config,
                        const ProgressFn& progress = {});

std::string curve_csv(const std::vector<LossPoint>& curve);

}  // namespace avatarcraft::encoder
