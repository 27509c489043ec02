#include "avatarcraft/translator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "avatarcraft/checkpoint.hpp"
#include "avatarcraft/rng.hpp"

namespace avatarcraft::translator {

using engine::kGroupSizes;
using json = nlohmann::json;
using nn::Mat;
using nn::Vec;

namespace {

constexpr std::array<int, kNumGroups> group_offsets() {
  std::array<int, kNumGroups> off{};
  int acc = 0;
  for (int g = 0; g < kNumGroups; ++g) {
    off[g] = acc;
    acc += kGroupSizes[g];
  }
  return off;
}
constexpr auto kGroupOffset = group_offsets();

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

std::span<const double> HeadOutputs::logits(int group) const {
  return std::span<const double>(t_logits).subspan(kGroupOffset[group], kGroupSizes[group]);
}

LossBreakdown composite_loss(const HeadOutputs& pred, const engine::CraftingParams& gt,
                             const engine::ConditionMask& mask, const LossWeights& w,
                             LossGradient* grad) {
  LossBreakdown out;
  if (grad) *grad = LossGradient{};

  for (int i = 0; i < kNumStructure; ++i) {
    const double d = pred.s_hat[i] - gt.s[i];
    out.structure += std::abs(d);
    if (grad) grad->s_hat[i] = w.alpha * sign0(d) / kNumStructure;
  }
  out.structure /= kNumStructure;

  double valid = 0.0;
  for (int j = 0; j < kNumAttributes; ++j) valid += mask[j] ? 1.0 : 0.0;
  const double denom = std::max(1.0, valid);
  for (int j = 0; j < kNumAttributes; ++j) {
    if (!mask[j]) continue;
    const double d = pred.a_hat[j] - gt.a[j];
    out.attribute += std::abs(d);
    if (grad) grad->a_hat[j] = w.gamma * sign0(d) / denom;
  }
  out.attribute /= denom;

  for (int g = 0; g < kNumGroups; ++g) {
    const int label = gt.t[g];
    if (label < 0 || label >= kGroupSizes[g])
      throw std::invalid_argument("composite_loss: t[" + std::to_string(g) + "] out of range");
    const auto z = pred.logits(g);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);
    out.texture += lse - z[label];
    if (grad) {
      for (int k = 0; k < kGroupSizes[g]; ++k) {
        const double p = std::exp(z[k] - lse);
        grad->t_logits[kGroupOffset[g] + k] =
            w.lambda * (p - (k == label ? 1.0 : 0.0)) / kNumGroups;
      }
    }
  }
  out.texture /= kNumGroups;

  out.total = w.alpha * out.structure + w.gamma * out.attribute + w.lambda * out.texture;
  return out;
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty span");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

// --- heads -------------------------------------------------------------------------

Heads::Heads(int embed_dim, std::uint64_t seed) : embed_dim_(embed_dim) { build(seed); }

Heads::Heads(const Heads& other) : embed_dim_(other.embed_dim_) {
  build(0);
  auto& dst = store_.params();
  const auto& src = other.store_.params();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i]->value = src[i]->value;
    dst[i]->trainable = src[i]->trainable;
  }
}

void Heads::build(std::uint64_t seed) {
  static constexpr const char* kNames[3] = {"structure", "texture", "attribute"};
  static constexpr int kOut[3] = {kNumStructure, kTextureWidth, kNumAttributes};
  for (int h = 0; h < 3; ++h) {
    const std::string base = std::string("heads.") + kNames[h];
    mlps_[h].fc1 = nn::Linear::create(store_, base + ".fc1", embed_dim_, kHidden,
                                      Rng::derive(seed, 10 + 2 * h));
    mlps_[h].fc2 = nn::Linear::create(store_, base + ".fc2", kHidden, kOut[h],
                                      Rng::derive(seed, 11 + 2 * h));
  }
}

HeadOutputs Heads::forward(const Vec& cls, Cache* cache) const {
  if (cls.size() != embed_dim_)
    throw std::invalid_argument("heads: embedding width " + std::to_string(cls.size()) +
                                " != " + std::to_string(embed_dim_));
  Mat x = cls;
  HeadOutputs out;
  std::array<Mat, 3> y;
  for (int h = 0; h < 3; ++h) {
    Mat pre = mlps_[h].fc1.forward(x);
    Mat act = nn::gelu(pre);
    y[h] = mlps_[h].fc2.forward(act);
    if (cache) {
      cache->pre[h] = std::move(pre);
      cache->act[h] = std::move(act);
    }
  }
  for (int i = 0; i < kNumStructure; ++i) out.s_hat[i] = sigmoidf(y[0](0, i));
  for (int i = 0; i < kTextureWidth; ++i) out.t_logits[i] = y[1](0, i);
  for (int i = 0; i < kNumAttributes; ++i) out.a_hat[i] = sigmoidf(y[2](0, i));
  if (cache) {
    cache->input = std::move(x);
    cache->out = out;
  }
  return out;
}

Vec Heads::backward(const Cache& cache, const LossGradient& grad) {
  std::array<Mat, 3> dy{Mat(1, kNumStructure), Mat(1, kTextureWidth), Mat(1, kNumAttributes)};
  for (int i = 0; i < kNumStructure; ++i) {
    const double s = cache.out.s_hat[i];
    dy[0](0, i) = static_cast<float>(grad.s_hat[i] * s * (1.0 - s));
  }
  for (int i = 0; i < kTextureWidth; ++i) dy[1](0, i) = static_cast<float>(grad.t_logits[i]);
  for (int i = 0; i < kNumAttributes; ++i) {
    const double a = cache.out.a_hat[i];
    dy[2](0, i) = static_cast<float>(grad.a_hat[i] * a * (1.0 - a));
  }
  Mat dx = Mat::Zero(1, embed_dim_);
  for (int h = 0; h < 3; ++h) {
    const Mat dact = mlps_[h].fc2.backward(cache.act[h], dy[h]);
    const Mat dpre = nn::gelu_backward(cache.pre[h], dact);
    dx += mlps_[h].fc1.backward(cache.input, dpre);
  }
  return dx;
}

// --- model -------------------------------------------------------------------------

SchemaMismatch::SchemaMismatch(const std::string& model_hash, const std::string& engine_hash)
    : std::runtime_error("translator was trained against engine schema " + model_hash +
                         " but the running engine is " + engine_hash) {}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"warmup_steps", warmup_steps},
          {"seed", seed},
          {"augment_prob", augment_prob},
          {"weights", {{"alpha", weights.alpha}, {"gamma", weights.gamma}, {"lambda", weights.lambda}}}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.seed = j.value("seed", c.seed);
  c.augment_prob = j.value("augment_prob", c.augment_prob);
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights.alpha = w.value("alpha", c.weights.alpha);
    c.weights.gamma = w.value("gamma", c.weights.gamma);
    c.weights.lambda = w.value("lambda", c.weights.lambda);
  }
  return c;
}

TranslatorModel::TranslatorModel(encoder::EncoderModel encoder, LossWeights weights,
                                 bool encoder_frozen, std::uint64_t head_seed)
    : encoder_(std::move(encoder)),
      heads_(encoder_.config().embed_dim, head_seed),
      weights_(weights),
      frozen_(encoder_frozen),
      schema_hash_(engine::schema().hash) {}

HeadOutputs TranslatorModel::forward(const ImageBuffer& img) const {
  return heads_.forward(encoder_.encode(img).cls);
}

engine::CraftingParams decode_outputs(const HeadOutputs& out) {
  engine::CraftingParams p;
  for (int i = 0; i < kNumStructure; ++i) p.s[i] = std::clamp(out.s_hat[i], 0.0, 1.0);
  for (int g = 0; g < kNumGroups; ++g) p.t[g] = argmax_lowest(out.logits(g));
  for (int i = 0; i < kNumAttributes; ++i) p.a[i] = std::clamp(out.a_hat[i], 0.0, 1.0);
  return p;
}

void TranslatorModel::require_current_schema() const {
  const auto& current = engine::schema().hash;
  if (schema_hash_ != current) throw SchemaMismatch(schema_hash_, current);
}

engine::CraftingParams TranslatorModel::predict(const ImageBuffer& img) const {
  require_current_schema();
  img.require_canvas();
  return decode_outputs(forward(img));
}

void TranslatorModel::save(const std::filesystem::path& path) const {
  checkpoint::Archive archive;
  archive.meta = {{"kind", "translator"},
                  {"schema_hash", schema_hash_},
                  {"encoder_frozen", frozen_},
                  {"weights", {{"alpha", weights_.alpha}, {"gamma", weights_.gamma}, {"lambda", weights_.lambda}}},
                  {"encoder", encoder_.meta_json()},
                  {"provenance", provenance_}};
  checkpoint::export_params(encoder_.params(), "encoder.", archive);
  checkpoint::export_params(heads_.params(), "", archive);
  checkpoint::save(path, archive);
}

TranslatorModel TranslatorModel::load(const std::filesystem::path& path) {
  const auto archive = checkpoint::load(path);
  const auto& meta = archive.meta;
  if (meta.value("kind", "") != "translator")
    throw std::runtime_error(path.string() + " is not a translator checkpoint");
  LossWeights w;
  const auto& jw = meta.at("weights");
  w.alpha = jw.at("alpha");
  w.gamma = jw.at("gamma");
  w.lambda = jw.at("lambda");
  auto enc = encoder::EncoderModel::from_archive_meta(meta.at("encoder"));
  checkpoint::import_params(archive, "encoder.", enc.params());
  TranslatorModel model(std::move(enc), w, meta.at("encoder_frozen").get<bool>(), 0);
  checkpoint::import_params(archive, "", model.heads_.params());
  model.schema_hash_ = meta.at("schema_hash").get<std::string>();
  model.provenance_ = meta.value("provenance", json::object());
  return model;
}

// --- training ----------------------------------------------------------------------

PairSamples load_samples(const corpus::PairDataset& ds, std::size_t begin, std::size_t end) {
  end = std::min(end, ds.size());
  PairSamples out;
  out.dataset_hash = ds.dataset_hash;
  out.schema_hash = ds.schema_hash;
  for (std::size_t i = begin; i < end; ++i) {
    out.images.push_back(ds.load_image(ds.records[i].id));
    out.params.push_back(ds.records[i].params);
  }
  return out;
}

namespace {

TranslatorModel run_training(TranslatorModel model, const PairSamples& data,
                             const TrainConfig& config, TrainResult* result,
                             const EpochFn& on_epoch) {
  if (data.images.empty()) throw std::invalid_argument("train: no training pairs");
  if (data.images.size() != data.params.size())
    throw std::invalid_argument("train: images and params differ in length");
  if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!data.schema_hash.empty() && data.schema_hash != engine::schema().hash)
    throw SchemaMismatch(data.schema_hash, engine::schema().hash);

  const bool frozen = model.encoder_frozen();
  auto& enc = model.encoder();
  const auto& ecfg = enc.config();
  enc.set_encoder_trainable(!frozen);
  enc.params().set_trainable("decoder.", false);

  std::vector<nn::Param*> params = model.heads().params().pointers();
  if (!frozen) {
    for (auto* p : enc.params().pointers())
      if (p->trainable) params.push_back(p);
  }
  nn::AdamW opt(params, {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});

  const std::size_t n = data.images.size();
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((n + config.batch_size - 1) / config.batch_size);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  Rng order_rng(Rng::derive(config.seed, 0x7a));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> all_kept;  // empty: encoder sees every patch

  TrainResult local;
  TrainResult& res = result ? *result : local;
  std::int64_t step = 0;
  std::uint64_t sample_counter = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
    EpochStats stats{epoch, 0, 0, 0, 0};
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      model.heads().params().zero_grad();
      if (!frozen) enc.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const std::uint64_t sample_seed = Rng::derive(config.seed, sample_counter++);
        Rng coin(sample_seed);
        const ImageBuffer& src = data.images[idx];
        const bool aug = config.augment_prob > 0.0 && coin.uniform() < config.augment_prob;
        const Mat patches = encoder::patchify(
            aug ? corpus::augment(src, Rng::derive(sample_seed, 1)) : src, ecfg.patch_size);
        const auto& gt = data.params[idx];
        const auto mask = engine::condition_mask(gt.t);

        Heads::Cache hc;
        LossGradient g;
        if (frozen) {
          const Vec cls = enc.encode_patches(patches).cls;
          const auto out = model.heads().forward(cls, &hc);
          const auto loss = composite_loss(out, gt, mask, config.weights, &g);
          model.heads().backward(hc, g);
          batch_loss += loss.total;
          stats.structure += loss.structure;
          stats.attribute += loss.attribute;
          stats.texture += loss.texture;
        } else {
          encoder::EncoderModel::EncodeCache ec;
          const Mat latent = enc.encode_train(patches, all_kept, &ec);
          const Vec cls = latent.row(0);
          const auto out = model.heads().forward(cls, &hc);
          const auto loss = composite_loss(out, gt, mask, config.weights, &g);
          const Vec dcls = model.heads().backward(hc, g);
          Mat dlatent = Mat::Zero(latent.rows(), latent.cols());
          dlatent.row(0) = dcls;
          enc.encode_backward(ec, dlatent);
          batch_loss += loss.total;
          stats.structure += loss.structure;
          stats.attribute += loss.attribute;
          stats.texture += loss.texture;
        }
      }
      const double mean = batch_loss / static_cast<double>(end - start);
      if (!std::isfinite(mean)) {
        std::ostringstream os;
        os << "translator training diverged at step " << step << " (epoch " << epoch
           << "); try a lower learning rate";
        throw std::runtime_error(os.str());
      }
      opt.step(nn::cosine_lr(config.lr, step, total_steps, config.warmup_steps),
               1.0f / static_cast<float>(end - start));
      res.curve.push_back({step, mean});
      stats.total += batch_loss;
      ++step;
    }
    const double dn = static_cast<double>(n);
    stats.total /= dn;
    stats.structure /= dn;
    stats.attribute /= dn;
    stats.texture /= dn;
    res.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  enc.params().set_trainable("", true);

  auto& prov = model.provenance();
  prov["dataset_hash"] = data.dataset_hash;
  prov["train_config"] = config.to_json();
  prov["steps"] = step;
  prov["train_samples"] = n;
  if (!res.epochs.empty()) prov["final_epoch_loss"] = res.epochs.back().total;
  return model;
}

}  // namespace

TranslatorModel train_translator(const PairSamples& data, const encoder::EncoderModel& encoder,
                                 const TrainConfig& config, TrainResult* result,
                                 const EpochFn& on_epoch) {
  const std::string before = encoder.encoder_checksum();
  TranslatorModel model = run_training(
      TranslatorModel(encoder::EncoderModel(encoder), config.weights, true,
                      Rng::derive(config.seed, 0x4ead)),
      data, config, result, on_epoch);
  if (model.encoder().encoder_checksum() != before)
    throw std::logic_error("frozen encoder weights changed during training");
  model.provenance()["encoder_checksum"] = before;
  model.provenance()["encoder_corpus_hash"] = encoder.provenance().corpus_hash;
  return model;
}

TranslatorModel train_translator_unfrozen(const PairSamples& data,
                                          const encoder::EncoderConfig& encoder_config,
                                          const TrainConfig& config, TrainResult* result,
                                          const EpochFn& on_epoch) {
  return run_training(TranslatorModel(encoder::EncoderModel(encoder_config), config.weights,
                                      false, Rng::derive(config.seed, 0x4ead)),
                      data, config, result, on_epoch);
}

}  // namespace avatarcraft::translator
