#include "avatarcraft/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "avatarcraft/checkpoint.hpp"
#include "avatarcraft/io.hpp"
#include "avatarcraft/rng.hpp"

namespace avatarcraft::encoder {

using nlohmann::json;

// --- config ---------------------------------------------------------------------

void EncoderConfig::validate() const {
  if (patch_size <= 0 || image_size % patch_size != 0)
    throw std::invalid_argument("image_size must be divisible by patch_size");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw std::invalid_argument("mask_ratio must lie in (0,1)");
  if (heads <= 0 || embed_dim % heads != 0) throw std::invalid_argument("heads must divide embed_dim");
  if (decoder_heads <= 0 || decoder_dim % decoder_heads != 0)
    throw std::invalid_argument("decoder_heads must divide decoder_dim");
  if (embed_dim % 4 != 0 || decoder_dim % 4 != 0)
    throw std::invalid_argument("embedding widths must be divisible by 4 for 2-D sin-cos positions");
  if (!cls_token) throw std::invalid_argument("the translator heads require a [CLS] token");
  if (depth < 1 || decoder_depth < 1 || mlp_ratio < 1) throw std::invalid_argument("depths must be positive");
}

json EncoderConfig::to_json() const {
  return {{"patch_size", patch_size},         {"image_size", image_size},
          {"embed_dim", embed_dim},           {"depth", depth},
          {"heads", heads},                   {"mlp_ratio", mlp_ratio},
          {"cls_token", cls_token},           {"mask_ratio", mask_ratio},
          {"decoder_dim", decoder_dim},       {"decoder_depth", decoder_depth},
          {"decoder_heads", decoder_heads},   {"decoder_from_cls", decoder_from_cls},
          {"normalized_target", normalized_target}, {"init_seed", init_seed},
          {"positional_encoding", "sincos-2d"}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  EncoderConfig c;
  c.patch_size = j.value("patch_size", c.patch_size);
  c.image_size = j.value("image_size", c.image_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.cls_token = j.value("cls_token", c.cls_token);
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
  c.decoder_dim = j.value("decoder_dim", c.decoder_dim);
  c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
  c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
  c.decoder_from_cls = j.value("decoder_from_cls", c.decoder_from_cls);
  c.normalized_target = j.value("normalized_target", c.normalized_target);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

json PretrainConfig::to_json() const {
  return {{"epochs", epochs},   {"batch_size", batch_size},     {"lr", lr},
          {"weight_decay", weight_decay}, {"warmup_steps", warmup_steps}, {"seed", seed},
          {"eval_samples", eval_samples}, {"max_steps", max_steps}};
}

PretrainConfig PretrainConfig::from_json(const json& j) {
  PretrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.seed = j.value("seed", c.seed);
  c.eval_samples = j.value("eval_samples", c.eval_samples);
  c.max_steps = j.value("max_steps", c.max_steps);
  return c;
}

// --- patches and masks -----------------------------------------------------------

Mat patchify(const ImageBuffer& img, int patch_size) {
  if (img.width() != img.height() || img.width() % patch_size != 0)
    throw std::invalid_argument("patchify: image size " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()) + " is not a square multiple of " +
                                std::to_string(patch_size));
  const int grid = img.width() / patch_size;
  Mat out(grid * grid, patch_size * patch_size * 3);
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      float* row = out.row(gy * grid + gx).data();
      int k = 0;
      for (int py = 0; py < patch_size; ++py)
        for (int px = 0; px < patch_size; ++px)
          for (int c = 0; c < 3; ++c)
            row[k++] = img.at(gx * patch_size + px, gy * patch_size + py, c) / 255.0f;
    }
  return out;
}

ImageBuffer unpatchify(const Mat& patches, int image_size, int patch_size) {
  const int grid = image_size / patch_size;
  if (patches.rows() != grid * grid || patches.cols() != patch_size * patch_size * 3)
    throw std::invalid_argument("unpatchify: patch matrix has the wrong shape");
  ImageBuffer img(image_size, image_size);
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const float* row = patches.row(gy * grid + gx).data();
      int k = 0;
      for (int py = 0; py < patch_size; ++py)
        for (int px = 0; px < patch_size; ++px)
          for (int c = 0; c < 3; ++c) {
            const long v = std::lround(std::clamp(row[k++], 0.0f, 1.0f) * 255.0f);
            img.at(gx * patch_size + px, gy * patch_size + py, c) = static_cast<std::uint8_t>(v);
          }
    }
  return img;
}

MaskSplit random_mask(int num_patches, double mask_ratio, std::uint64_t seed) {
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw std::invalid_argument("mask_ratio must lie in (0,1)");
  const int n_masked = static_cast<int>(std::lround(num_patches * mask_ratio));
  std::vector<int> order(static_cast<std::size_t>(num_patches));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (int i = num_patches - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  MaskSplit split;
  split.masked.assign(order.begin(), order.begin() + n_masked);
  split.kept.assign(order.begin() + n_masked, order.end());
  std::sort(split.masked.begin(), split.masked.end());
  std::sort(split.kept.begin(), split.kept.end());
  return split;
}

Mat normalize_patches(const Mat& patches) {
  Mat out(patches.rows(), patches.cols());
  for (Eigen::Index r = 0; r < patches.rows(); ++r) {
    const float mean = patches.row(r).mean();
    const float var = (patches.row(r).array() - mean).square().sum() / static_cast<float>(patches.cols() - 1);
    out.row(r) = (patches.row(r).array() - mean) / std::sqrt(var + 1e-6f);
  }
  return out;
}

// --- model -----------------------------------------------------------------------

EncoderModel::EncoderModel(EncoderConfig config) : config_(config) {
  config_.validate();
  build();
}

EncoderModel::EncoderModel(const EncoderModel& other)
    : config_(other.config_), provenance_(other.provenance_) {
  build();
  for (std::size_t i = 0; i < store_.params().size(); ++i)
    store_.params()[i]->value = other.store_.params()[i]->value;
}

void EncoderModel::build() {
  const auto seed = config_.init_seed;
  const int d = config_.embed_dim;
  const int dd = config_.decoder_dim;
  patch_embed_ = nn::Linear::create(store_, "patch_embed", config_.patch_dim(), d, Rng::derive(seed, 1));
  cls_ = &store_.add("cls_token", 1, d, false);
  nn::init_normal(*cls_, 0.02, Rng::derive(seed, 2));
  for (int i = 0; i < config_.depth; ++i)
    blocks_.push_back(nn::Block::create(store_, "blocks." + std::to_string(i), d, config_.heads,
                                        config_.mlp_ratio, Rng::derive(seed, 100 + i)));
  norm_ = nn::LayerNorm::create(store_, "norm", d);
  dec_embed_ = nn::Linear::create(store_, "decoder.embed", d, dd, Rng::derive(seed, 3));
  mask_token_ = &store_.add("decoder.mask_token", 1, dd, false);
  nn::init_normal(*mask_token_, 0.02, Rng::derive(seed, 4));
  for (int i = 0; i < config_.decoder_depth; ++i)
    dec_blocks_.push_back(nn::Block::create(store_, "decoder.blocks." + std::to_string(i), dd,
                                            config_.decoder_heads, config_.mlp_ratio,
                                            Rng::derive(seed, 200 + i)));
  dec_norm_ = nn::LayerNorm::create(store_, "decoder.norm", dd);
  dec_pred_ = nn::Linear::create(store_, "decoder.pred", dd, config_.patch_dim(), Rng::derive(seed, 5));
  pos_ = nn::sincos_2d(config_.grid(), d);
  dec_pos_ = nn::sincos_2d(config_.grid(), dd);
}

std::string EncoderModel::encoder_checksum() const {
  std::string acc;
  for (const auto& p : store_.params()) {
    if (p->name.rfind("decoder.", 0) == 0) continue;
    acc += p->name + io::sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(p->value.data()),
                                              static_cast<std::size_t>(p->value.size()) * sizeof(float)));
  }
  return io::sha256_hex(acc);
}

void EncoderModel::set_encoder_trainable(bool trainable) {
  for (auto& p : store_.params())
    if (p->name.rfind("decoder.", 0) != 0) p->trainable = trainable;
}

Mat EncoderModel::encode_train(const Mat& patches, std::span<const int> kept, EncodeCache* cache) const {
  if (patches.rows() != config_.num_patches() || patches.cols() != config_.patch_dim())
    throw std::invalid_argument("encoder input must be " + std::to_string(config_.num_patches()) + "x" +
                                std::to_string(config_.patch_dim()) + " patches");
  const int d = config_.embed_dim;
  std::vector<int> rows;
  if (kept.empty()) {
    rows.resize(static_cast<std::size_t>(config_.num_patches()));
    std::iota(rows.begin(), rows.end(), 0);
  } else {
    rows.assign(kept.begin(), kept.end());
  }
  const auto k = static_cast<Eigen::Index>(rows.size());
  Mat input(k, patches.cols());
  Mat pos(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    input.row(i) = patches.row(rows[static_cast<std::size_t>(i)]);
    pos.row(i) = pos_.row(rows[static_cast<std::size_t>(i)]);
  }
  Mat x(k + 1, d);
  x.row(0) = cls_->value.row(0);
  x.bottomRows(k) = patch_embed_.forward(input) + pos;
  if (cache) {
    cache->blocks.resize(blocks_.size());
    for (std::size_t b = 0; b < blocks_.size(); ++b) x = blocks_[b].forward(x, &cache->blocks[b]);
    cache->kept = std::move(rows);
    cache->input = std::move(input);
    return norm_.forward(x, &cache->norm);
  }
  for (const auto& block : blocks_) x = block.forward(x, nullptr);
  return norm_.forward(x, nullptr);
}

void EncoderModel::encode_backward(const EncodeCache& cache, const Mat& dout) {
  Mat dx = norm_.backward(cache.norm, dout);
  for (std::size_t b = blocks_.size(); b-- > 0;) dx = blocks_[b].backward(cache.blocks[b], dx);
  if (cls_->trainable) cls_->grad.row(0) += dx.row(0);
  patch_embed_.backward(cache.input, dx.bottomRows(dx.rows() - 1));
}

Mat EncoderModel::decode_train(const Mat& latent, std::span<const int> kept, DecodeCache* cache) const {
  const int n = config_.num_patches();
  const Mat z = dec_embed_.forward(latent);
  Mat y(n + 1, config_.decoder_dim);
  y.row(0) = z.row(0);
  y.bottomRows(n) = dec_pos_;
  y.bottomRows(n).rowwise() += mask_token_->value.row(0);
  if (!config_.decoder_from_cls) {
    for (std::size_t i = 0; i < kept.size(); ++i)
      y.row(1 + kept[i]) = z.row(static_cast<Eigen::Index>(1 + i)) + dec_pos_.row(kept[i]);
  }
  if (cache) {
    cache->latent = latent;
    cache->embedded = y;
    cache->blocks.resize(dec_blocks_.size());
    for (std::size_t b = 0; b < dec_blocks_.size(); ++b) y = dec_blocks_[b].forward(y, &cache->blocks[b]);
    cache->normed = dec_norm_.forward(y, &cache->norm);
    return dec_pred_.forward(cache->normed.bottomRows(n));
  }
  for (const auto& block : dec_blocks_) y = block.forward(y, nullptr);
  const Mat normed = dec_norm_.forward(y, nullptr);
  return dec_pred_.forward(normed.bottomRows(n));
}

Mat EncoderModel::decode_backward(const DecodeCache& cache, std::span<const int> kept, const Mat& drecon) {
  const int n = config_.num_patches();
  Mat dnormed = Mat::Zero(n + 1, config_.decoder_dim);
  dnormed.bottomRows(n) = dec_pred_.backward(cache.normed.bottomRows(n), drecon);
  Mat dy = dec_norm_.backward(cache.norm, dnormed);
  for (std::size_t b = dec_blocks_.size(); b-- > 0;) dy = dec_blocks_[b].backward(cache.blocks[b], dy);
  Mat dz = Mat::Zero(cache.latent.rows(), config_.decoder_dim);
  dz.row(0) = dy.row(0);
  std::vector<char> visible(static_cast<std::size_t>(n), 0);
  if (!config_.decoder_from_cls) {
    for (std::size_t i = 0; i < kept.size(); ++i) {
      dz.row(static_cast<Eigen::Index>(1 + i)) = dy.row(1 + kept[i]);
      visible[static_cast<std::size_t>(kept[i])] = 1;
    }
  }
  if (mask_token_->trainable)
    for (int r = 0; r < n; ++r)
      if (!visible[static_cast<std::size_t>(r)]) mask_token_->grad.row(0) += dy.row(1 + r);
  return dec_embed_.backward(cache.latent, dz);
}

double EncoderModel::mae_step(const Mat& patches, const MaskSplit& split, bool train) {
  const Mat target = config_.normalized_target ? normalize_patches(patches) : patches;
  if (!train) {
    const Mat latent = encode_train(patches, split.kept, nullptr);
    const Mat recon = decode_train(latent, split.kept, nullptr);
    return mae_loss(recon, target, split.masked);
  }
  EncodeCache ecache;
  DecodeCache dcache;
  const Mat latent = encode_train(patches, split.kept, &ecache);
  const Mat recon = decode_train(latent, split.kept, &dcache);
  Mat grad;
  const double loss = mae_loss<Mat>(recon, target, split.masked, &grad);
  encode_backward(ecache, decode_backward(dcache, split.kept, grad));
  return loss;
}

Embedding EncoderModel::encode_patches(const Mat& patches) const {
  const Mat out = encode_train(patches, {}, nullptr);
  return {out.row(0), out.bottomRows(out.rows() - 1)};
}

Embedding EncoderModel::encode(const ImageBuffer& img) const {
  if (img.width() != config_.image_size || img.height() != config_.image_size)
    throw std::invalid_argument("encode: expected a " + std::to_string(config_.image_size) + "x" +
                                std::to_string(config_.image_size) + " image, got " +
                                std::to_string(img.width()) + "x" + std::to_string(img.height()));
  return encode_patches(patchify(img, config_.patch_size));
}

json EncoderModel::meta_json() const {
  return {{"kind", "encoder"},
          {"config", config_.to_json()},
          {"provenance",
           {{"corpus_hash", provenance_.corpus_hash},
            {"steps", provenance_.steps},
            {"epochs", provenance_.epochs},
            {"initial_eval_loss", provenance_.initial_eval_loss},
            {"final_eval_loss", provenance_.final_eval_loss},
            {"final_train_loss", provenance_.final_train_loss},
            {"train_config", provenance_.train_config}}}};
}

EncoderModel EncoderModel::from_archive_meta(const json& meta) {
  EncoderModel model(EncoderConfig::from_json(meta.at("config")));
  const auto& p = meta.at("provenance");
  model.provenance_.corpus_hash = p.value("corpus_hash", "");
  model.provenance_.steps = p.value("steps", std::int64_t{0});
  model.provenance_.epochs = p.value("epochs", 0);
  model.provenance_.initial_eval_loss = p.value("initial_eval_loss", 0.0);
  model.provenance_.final_eval_loss = p.value("final_eval_loss", 0.0);
  model.provenance_.final_train_loss = p.value("final_train_loss", 0.0);
  model.provenance_.train_config = p.value("train_config", json::object());
  return model;
}

void EncoderModel::save(const std::filesystem::path& path) const {
  checkpoint::Archive archive;
  archive.meta = meta_json();
  checkpoint::export_params(store_, "", archive);
  checkpoint::save(path, archive);
}

EncoderModel EncoderModel::load(const std::filesystem::path& path) {
  const auto archive = checkpoint::load(path);
  if (archive.meta.value("kind", "") != "encoder")
    throw std::runtime_error(path.string() + " is not an encoder checkpoint");
  EncoderModel model = from_archive_meta(archive.meta);
  checkpoint::import_params(archive, "", model.store_);
  return model;
}

// --- pretraining ---------------------------------------------------------------------

double eval_mae(const EncoderModel& model, std::span<const ImageBuffer> images, int samples,
                std::uint64_t seed) {
  if (images.empty()) return 0.0;
  const auto n = std::min<std::size_t>(images.size(), static_cast<std::size_t>(std::max(1, samples)));
  auto& mutable_model = const_cast<EncoderModel&>(model);  // mae_step(train=false) does not mutate
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = i * images.size() / n;  // strided, covers every style block
    const auto split = random_mask(model.config().num_patches(), model.config().mask_ratio,
                                   Rng::derive(seed, 0xe7a1 + i));
    total += mutable_model.mae_step(patchify(images[idx], model.config().patch_size), split, false);
  }
  return total / static_cast<double>(n);
}

PretrainResult pretrain(EncoderModel& model, std::span<const ImageBuffer> images,
                        const std::string& corpus_hash, const PretrainConfig& config,
                        const ProgressFn& progress) {
  if (images.empty()) throw std::invalid_argument("pretrain: corpus is empty");
  if (config.batch_size < 1) throw std::invalid_argument("pretrain: batch_size must be >= 1");
  const auto& cfg = model.config();
  const std::size_t n = images.size();
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + config.batch_size - 1) / config.batch_size);
  const std::int64_t schedule_steps = steps_per_epoch * config.epochs;
  std::int64_t total_steps = schedule_steps;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  auto& prov = model.provenance();
  prov.corpus_hash = corpus_hash;
  prov.train_config = config.to_json();
  prov.initial_eval_loss = eval_mae(model, images, config.eval_samples, config.seed);

  model.params().set_trainable("", true);
  nn::AdamW opt(model.params().pointers(), {config.lr, 0.9, 0.95, 1e-8, config.weight_decay});
  PretrainResult result;
  Rng order_rng(Rng::derive(config.seed, 0x5e));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  std::uint64_t sample_counter = 0;
  int epoch = 0;
  for (; epoch < config.epochs && step < total_steps; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;
    for (std::size_t start = 0; start < n && step < total_steps; start += config.batch_size) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const auto split = random_mask(cfg.num_patches(), cfg.mask_ratio,
                                       Rng::derive(config.seed, sample_counter++));
        batch_loss += model.mae_step(patchify(images[order[b]], cfg.patch_size), split, true);
      }
      batch_loss /= static_cast<double>(end - start);
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "MAE pretraining diverged at step " << step << " (epoch " << epoch
           << "): loss is " << batch_loss << "; try a lower learning rate";
        throw std::runtime_error(os.str());
      }
      opt.step(nn::cosine_lr(config.lr, step, schedule_steps, config.warmup_steps),
               1.0f / static_cast<float>(end - start));
      result.curve.push_back({step, batch_loss});
      epoch_loss += batch_loss;
      ++epoch_steps;
      ++step;
    }
    if (progress && epoch_steps > 0) progress(epoch, epoch_loss / static_cast<double>(epoch_steps));
  }
  prov.steps += step;
  prov.epochs += epoch;
  prov.final_train_loss = result.curve.empty() ? prov.initial_eval_loss : result.curve.back().loss;
  prov.final_eval_loss = eval_mae(model, images, config.eval_samples, config.seed);
  return result;
}

std::string curve_csv(const std::vector<LossPoint>& curve) {
  std::ostringstream os;
  os.precision(10);
  os << "step,loss\n";
  for (const auto& p : curve) os << p.step << ',' << p.loss << '\n';
  return os.str();
}

}  // namespace avatarcraft::encoder
