#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "avatarcraft/encoder.hpp"
#include "avatarcraft/evalkit.hpp"
#include "avatarcraft/translator.hpp"

namespace avatarcraft::service {

/// Every knob of a pipeline run. Paths left empty resolve under home.
struct RunConfig {
  std::filesystem::path home;

  std::size_t n = 5000;
  std::uint64_t seed = 1;
  std::size_t per_style = 1000;
  std::uint64_t corpus_seed = 2;

  encoder::EncoderConfig encoder;
  encoder::PretrainConfig pretrain;
  translator::TrainConfig train;
  evalkit::EvalConfig eval;

  std::filesystem::path pairs_dir;
  std::filesystem::path corpus_dir;
  std::filesystem::path encoder_path;
  std::filesystem::path translator_path;
  std::filesystem::path reports_dir;

  std::string host = "127.0.0.1";
  int port = 8080;

  /// home from $AVATARCRAFT_HOME, else ./avatarcraft-home; then fills paths.
  static RunConfig defaults();
  /// Fills empty paths from home.
  void resolve();

  nlohmann::json to_json() const;
  /// Overlays the fields present in j onto this config.
  void merge_json(const nlohmann::json& j);
};

void write_run_config(const RunConfig& cfg, const std::filesystem::path& path);

struct GenDataResult {
  std::string dataset_hash;
  std::string corpus_hash;
};
GenDataResult run_gen_data(const RunConfig& cfg);

/// Writes the encoder checkpoint and <stem>_loss.csv next to it.
encoder::PretrainResult run_pretrain(const RunConfig& cfg, const encoder::ProgressFn& progress = {});

translator::TrainResult run_train(const RunConfig& cfg, const translator::EpochFn& on_epoch = {});

/// Held-out split of the configured pair dataset.
evalkit::EvalReport run_evaluate(const RunConfig& cfg);

evalkit::AblationReport run_ablate(const RunConfig& cfg, const translator::EpochFn& on_epoch = {});

struct CraftResult {
  engine::CraftingParams params;
  engine::ConditionMask mask;
  ImageBuffer avatar;
  double identity = 0.0;
};
CraftResult craft(const translator::TranslatorModel& model, const ImageBuffer& photo);
nlohmann::json craft_json(const CraftResult& r, bool include_image);

// --- HTTP -------------------------------------------------------------------------

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Stateless request handler behind the /v1 API. Models are read-only after
/// construction, so handle() may run concurrently.
class Api {
 public:
  explicit Api(std::shared_ptr<const translator::TranslatorModel> model = nullptr);

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::string& body) const;
  bool translator_loaded() const { return model_ != nullptr; }

 private:
  HttpResponse schema() const;
  HttpResponse health() const;
  HttpResponse render(const std::string& body) const;
  HttpResponse predict(const std::string& body, bool with_render) const;

  std::shared_ptr<const translator::TranslatorModel> model_;
  std::string schema_body_;
};

/// Blocks serving api on host:port until stop() is called from another thread.
class Server {
 public:
  explicit Server(std::shared_ptr<const Api> api);
  ~Server();
  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace avatarcraft::service
