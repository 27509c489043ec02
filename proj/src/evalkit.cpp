#include "avatarcraft/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "avatarcraft/io.hpp"
#include "avatarcraft/rng.hpp"

namespace avatarcraft::evalkit {

using corpus::StyleTag;
using engine::CraftingParams;
using json = nlohmann::json;

namespace {

// Results are written by index, so output does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string model_checksum(const translator::TranslatorModel& model) {
  return io::sha256_hex(model.encoder().params().checksum() + model.heads().params().checksum());
}

}  // namespace

RecoveryMetrics recovery_metrics(std::span<const CraftingParams> predicted,
                                 std::span<const CraftingParams> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("recovery_metrics: prediction and truth counts differ");
  RecoveryMetrics m;
  m.n = truth.size();
  if (m.n == 0) return m;
  double attr_sum = 0.0;
  for (std::size_t k = 0; k < m.n; ++k) {
    const auto& p = predicted[k];
    const auto& g = truth[k];
    for (int i = 0; i < engine::kNumStructure; ++i)
      m.structure_mae_per_dim[i] += std::abs(p.s[i] - g.s[i]);
    for (int gi = 0; gi < engine::kNumGroups; ++gi)
      m.texture_accuracy[gi] += p.t[gi] == g.t[gi] ? 1.0 : 0.0;
    const auto mask = engine::condition_mask(g.t);
    for (int j = 0; j < engine::kNumAttributes; ++j) {
      if (!mask[j]) continue;
      attr_sum += std::abs(p.a[j] - g.a[j]);
      ++m.attribute_count;
    }
  }
  const double n = static_cast<double>(m.n);
  for (auto& v : m.structure_mae_per_dim) {
    v /= n;
    m.structure_mae += v;
  }
  m.structure_mae /= engine::kNumStructure;
  for (auto& v : m.texture_accuracy) v /= n;
  m.attribute_mae = m.attribute_count ? attr_sum / static_cast<double>(m.attribute_count) : 0.0;
  return m;
}

double cosine(const nn::Vec& a, const nn::Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double identity_surrogate(const ImageBuffer& a, const ImageBuffer& b,
                          const encoder::EncoderModel& encoder) {
  if (a == b) return 1.0;
  return cosine(encoder.encode(a).cls, encoder.encode(b).cls);
}

double frechet_surrogate(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("frechet_surrogate: dimension mismatch");
  const Eigen::Index d = a.cols();
  if (d == 0) throw std::invalid_argument("frechet_surrogate: zero-dimensional embeddings");
  for (const auto* m : {&a, &b}) {
    if (m->rows() < 2 * d) {
      throw InsufficientSamples("frechet_surrogate: " + std::to_string(m->rows()) +
                                " samples, need at least " + std::to_string(2 * d));
    }
  }
  auto moments = [](const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);

  constexpr double kTol = 1e-8;
  auto psd_sqrt = [&](const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev[i] < -kTol * scale)
        throw std::domain_error("frechet_surrogate: covariance is not positive semidefinite");
      ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  };
  // Tr((S_a S_b)^1/2) = Tr((S_a^1/2 S_b S_a^1/2)^1/2), and the inner matrix is symmetric.
  const Eigen::MatrixXd ra = psd_sqrt(cov_a);
  const Eigen::MatrixXd cross = psd_sqrt(ra * cov_b * ra);
  const double value =
      (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);
}

Eigen::MatrixXd embed_all(const encoder::EncoderModel& encoder, std::span<const ImageBuffer> images) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), encoder.config().embed_dim);
  parallel_for(images.size(), [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = encoder.encode(images[i]).cls.cast<double>();
  });
  return out;
}

std::vector<StyleRow> style_robustness(const translator::TranslatorModel& model,
                                       const translator::PairSamples& heldout,
                                       std::span<const StyleTag> styles, std::uint64_t seed) {
  std::vector<StyleRow> rows;
  const std::size_t n = heldout.images.size();
  for (StyleTag style : styles) {
    std::vector<CraftingParams> preds(n);
    parallel_for(n, [&](std::size_t i) {
      const auto img = corpus::stylize(heldout.images[i], style, Rng::derive(seed, i));
      preds[i] = model.predict(img);
    });
    const auto m = recovery_metrics(preds, heldout.params);
    rows.push_back({style, m.structure_mae, m.texture_accuracy, m.attribute_mae});
  }
  return rows;
}

json EvalConfig::to_json() const {
  json s = json::array();
  for (auto st : styles) s.push_back(std::string(corpus::style_name(st)));
  return {{"seed", seed}, {"styles", s}, {"surrogates", surrogates}};
}

EvalConfig EvalConfig::from_json(const json& j) {
  EvalConfig c;
  c.seed = j.value("seed", c.seed);
  c.surrogates = j.value("surrogates", c.surrogates);
  if (j.contains("styles")) {
    c.styles.clear();
    for (const auto& s : j.at("styles")) c.styles.push_back(corpus::style_from_name(s.get<std::string>()));
  }
  return c;
}

json EvalReport::to_json() const {
  const auto& r = recovery;
  json styles_json = json::array();
  for (const auto& row : styles) {
    styles_json.push_back({{"style", corpus::style_name(row.style)},
                           {"structure_mae", row.structure_mae},
                           {"texture_accuracy", row.texture_accuracy},
                           {"attribute_mae", row.attribute_mae}});
  }
  return {{"n", r.n},
          {"structure_mae", r.structure_mae},
          {"structure_mae_per_dim", r.structure_mae_per_dim},
          {"texture_accuracy", r.texture_accuracy},
          {"attribute_mae", r.attribute_mae},
          {"attribute_count", r.attribute_count},
          {"identity_matched", opt_json(identity_matched)},
          {"identity_mismatched", opt_json(identity_mismatched)},
          {"frechet_predicted", opt_json(frechet_predicted)},
          {"frechet_random", opt_json(frechet_random)},
          {"styles", styles_json},
          {"config", config},
          {"dataset_hash", dataset_hash},
          {"schema_hash", schema_hash},
          {"model_checksum", model_checksum}};
}

std::string EvalReport::table() const {
  const auto& s = engine::schema();
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "held-out samples      %zu\n", recovery.n);
  os << buf;
  std::snprintf(buf, sizeof buf, "structure MAE         %.4f\n", recovery.structure_mae);
  os << buf;
  for (int g = 0; g < engine::kNumGroups; ++g) {
    std::snprintf(buf, sizeof buf, "texture acc %-10s%.4f\n", s.groups[g].name.c_str(),
                  recovery.texture_accuracy[g]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "valid-attr MAE        %.4f  (%zu entries)\n", recovery.attribute_mae,
                recovery.attribute_count);
  os << buf;
  auto line = [&](const char* label, const std::optional<double>& v) {
    if (v) std::snprintf(buf, sizeof buf, "%-22s%.4f\n", label, *v);
    else std::snprintf(buf, sizeof buf, "%-22sn/a\n", label);
    os << buf;
  };
  line("identity (matched)", identity_matched);
  line("identity (mismatched)", identity_mismatched);
  line("frechet (predicted)", frechet_predicted);
  line("frechet (random)", frechet_random);
  if (!styles.empty()) {
    os << "style        sMAE    acc(brow/shadow/lip/blush)      aMAE\n";
    for (const auto& row : styles) {
      std::snprintf(buf, sizeof buf, "%-11s  %.4f  %.3f %.3f %.3f %.3f  %.4f\n",
                    std::string(corpus::style_name(row.style)).c_str(), row.structure_mae,
                    row.texture_accuracy[0], row.texture_accuracy[1], row.texture_accuracy[2],
                    row.texture_accuracy[3], row.attribute_mae);
      os << buf;
    }
  }
  return os.str();
}

EvalReport evaluate(const translator::TranslatorModel& model, const translator::PairSamples& heldout,
                    const EvalConfig& config) {
  model.require_current_schema();
  if (!heldout.schema_hash.empty() && heldout.schema_hash != engine::schema().hash)
    throw translator::SchemaMismatch(heldout.schema_hash, engine::schema().hash);
  const std::size_t n = heldout.images.size();
  EvalReport report;
  report.config = config.to_json();
  report.dataset_hash = heldout.dataset_hash;
  report.schema_hash = model.schema_hash();
  report.model_checksum = model_checksum(model);

  std::vector<CraftingParams> preds(n);
  parallel_for(n, [&](std::size_t i) { preds[i] = model.predict(heldout.images[i]); });
  report.recovery = recovery_metrics(preds, heldout.params);

  if (config.surrogates && n >= 2) {
    const auto& enc = model.encoder();
    std::vector<ImageBuffer> rendered(n), random(n);
    parallel_for(n, [&](std::size_t i) {
      rendered[i] = engine::render(preds[i]);
      random[i] = engine::render(engine::sample_params(Rng::derive(config.seed, 0xf00d0000ULL + i)));
    });
    const auto e_in = embed_all(enc, heldout.images);
    const auto e_pred = embed_all(enc, rendered);
    const auto e_rand = embed_all(enc, random);
    double matched = 0.0, mismatched = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = [](const Eigen::MatrixXd& m, std::size_t k) {
        return nn::Vec(m.row(static_cast<Eigen::Index>(k)).cast<float>());
      };
      matched += heldout.images[i] == rendered[i] ? 1.0 : cosine(row(e_in, i), row(e_pred, i));
      mismatched += cosine(row(e_in, i), row(e_pred, (i + 1) % n));
    }
    report.identity_matched = matched / static_cast<double>(n);
    report.identity_mismatched = mismatched / static_cast<double>(n);
    if (static_cast<Eigen::Index>(n) >= 2 * e_in.cols()) {
      report.frechet_predicted = frechet_surrogate(e_in, e_pred);
      report.frechet_random = frechet_surrogate(e_in, e_rand);
    }
  }
  report.styles = style_robustness(model, heldout, config.styles, config.seed);
  return report;
}

json AblationConfig::to_json() const { return {{"train", train.to_json()}, {"eval", eval.to_json()}}; }

AblationReport compare_variants(AblationVariant pretrained, AblationVariant scratch) {
  AblationReport rep;
  const double a = pretrained.report.recovery.structure_mae;
  const double b = scratch.report.recovery.structure_mae;
  rep.engine_relative_gap = std::abs(a - b) / std::max(1e-12, std::min(a, b));
  rep.engine_within_20pct = rep.engine_relative_gap <= 0.20;
  for (const auto& row : pretrained.report.styles) {
    if (row.style == StyleTag::kEngine) continue;
    for (const auto& other : scratch.report.styles) {
      if (other.style == row.style) {
        rep.stylized_favors_pretrained.emplace_back(row.style, row.structure_mae < other.structure_mae);
      }
    }
  }
  rep.variants.push_back(std::move(pretrained));
  rep.variants.push_back(std::move(scratch));
  return rep;
}

AblationReport ablation_harness(const translator::PairSamples& train,
                                const translator::PairSamples& heldout,
                                const encoder::EncoderModel& pretrained, const AblationConfig& config,
                                const translator::EpochFn& on_epoch) {
  auto frozen = translator::train_translator(train, pretrained, config.train, nullptr, on_epoch);
  AblationVariant v1{"frozen-pretrained", evaluate(frozen, heldout, config.eval), train.dataset_hash};
  auto scratch = translator::train_translator_unfrozen(train, pretrained.config(), config.train,
                                                       nullptr, on_epoch);
  AblationVariant v2{"w/o-pretrain", evaluate(scratch, heldout, config.eval), train.dataset_hash};
  return compare_variants(std::move(v1), std::move(v2));
}

json AblationReport::to_json() const {
  json vs = json::array();
  for (const auto& v : variants)
    vs.push_back({{"name", v.name}, {"train_dataset_hash", v.train_dataset_hash}, {"report", v.report.to_json()}});
  json styl = json::object();
  for (const auto& [style, ok] : stylized_favors_pretrained) styl[std::string(corpus::style_name(style))] = ok;
  return {{"variants", vs},
          {"verdict",
           {{"engine_relative_gap", engine_relative_gap},
            {"engine_within_20pct", engine_within_20pct},
            {"stylized_favors_pretrained", styl}}}};
}

std::string AblationReport::table() const {
  std::ostringstream os;
  char buf[160];
  os << "style        ";
  for (const auto& v : variants) {
    std::snprintf(buf, sizeof buf, "%-20s", v.name.c_str());
    os << buf;
  }
  os << '\n';
  if (variants.empty()) return os.str();
  for (std::size_t r = 0; r < variants[0].report.styles.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-13s",
                  std::string(corpus::style_name(variants[0].report.styles[r].style)).c_str());
    os << buf;
    for (const auto& v : variants) {
      std::snprintf(buf, sizeof buf, "%-20.4f", v.report.styles.at(r).structure_mae);
      os << buf;
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "engine-style gap %.1f%% (%s 20%%)\n", 100.0 * engine_relative_gap,
                engine_within_20pct ? "within" : "outside");
  os << buf;
  for (const auto& [style, ok] : stylized_favors_pretrained) {
    std::snprintf(buf, sizeof buf, "%-11s  pretrained %s\n", std::string(corpus::style_name(style)).c_str(),
                  ok ? "better" : "not better");
    os << buf;
  }
  return os.str();
}

}  // namespace avatarcraft::evalkit
