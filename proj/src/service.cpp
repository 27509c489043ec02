#include "avatarcraft/service.hpp"

#include <cstdlib>
#include <iostream>

#include <httplib.h>

#include "avatarcraft/corpus.hpp"
#include "avatarcraft/io.hpp"

namespace avatarcraft::service {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- config ------------------------------------------------------------------------

RunConfig RunConfig::defaults() {
  RunConfig c;
  const char* env = std::getenv("AVATARCRAFT_HOME");
  c.home = env && *env ? fs::path(env) : fs::path("avatarcraft-home");
  c.resolve();
  return c;
}

void RunConfig::resolve() {
  if (pairs_dir.empty()) pairs_dir = home / "data" / "pairs";
  if (corpus_dir.empty()) corpus_dir = home / "data" / "corpus";
  if (encoder_path.empty()) encoder_path = home / "models" / "encoder.ckpt";
  if (translator_path.empty()) translator_path = home / "models" / "translator.ckpt";
  if (reports_dir.empty()) reports_dir = home / "reports";
}

json RunConfig::to_json() const {
  return {{"home", home.string()},
          {"n", n},
          {"seed", seed},
          {"per_style", per_style},
          {"corpus_seed", corpus_seed},
          {"encoder", encoder.to_json()},
          {"pretrain", pretrain.to_json()},
          {"train", train.to_json()},
          {"eval", eval.to_json()},
          {"pairs_dir", pairs_dir.string()},
          {"corpus_dir", corpus_dir.string()},
          {"encoder_path", encoder_path.string()},
          {"translator_path", translator_path.string()},
          {"reports_dir", reports_dir.string()},
          {"host", host},
          {"port", port}};
}

void RunConfig::merge_json(const json& j) {
  auto path = [&](const char* key, fs::path& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
  };
  path("home", home);
  n = j.value("n", n);
  seed = j.value("seed", seed);
  per_style = j.value("per_style", per_style);
  corpus_seed = j.value("corpus_seed", corpus_seed);
  auto overlay = [&](const char* key, auto to, auto from) {
    if (!j.contains(key)) return;
    json merged = to();
    merged.merge_patch(j.at(key));
    from(merged);
  };
  overlay("encoder", [&] { return encoder.to_json(); },
          [&](const json& m) { encoder = encoder::EncoderConfig::from_json(m); });
  overlay("pretrain", [&] { return pretrain.to_json(); },
          [&](const json& m) { pretrain = encoder::PretrainConfig::from_json(m); });
  overlay("train", [&] { return train.to_json(); },
          [&](const json& m) { train = translator::TrainConfig::from_json(m); });
  overlay("eval", [&] { return eval.to_json(); },
          [&](const json& m) { eval = evalkit::EvalConfig::from_json(m); });
  path("pairs_dir", pairs_dir);
  path("corpus_dir", corpus_dir);
  path("encoder_path", encoder_path);
  path("translator_path", translator_path);
  path("reports_dir", reports_dir);
  host = j.value("host", host);
  port = j.value("port", port);
}

void write_run_config(const RunConfig& cfg, const fs::path& path) {
  io::write_text(path, cfg.to_json().dump(2) + "\n");
}

// --- pipeline ----------------------------------------------------------------------

namespace {

void require_exists(const fs::path& p, const char* what, const char* hint) {
  if (!fs::exists(p))
    throw std::runtime_error(std::string(what) + " not found at " + p.string() + " (run `" + hint + "` first)");
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

}  // namespace

GenDataResult run_gen_data(const RunConfig& cfg) {
  const auto pairs = corpus::generate_pairs(cfg.n, cfg.seed, cfg.pairs_dir);
  const auto corp = corpus::build_pretrain_corpus(pairs, cfg.per_style, cfg.corpus_seed, cfg.corpus_dir);
  write_run_config(cfg, cfg.pairs_dir.parent_path() / "gen-data.config.json");
  return {pairs.dataset_hash, corp.corpus_hash};
}

encoder::PretrainResult run_pretrain(const RunConfig& cfg, const encoder::ProgressFn& progress) {
  require_exists(cfg.corpus_dir / "manifest.json", "pretraining corpus", "gen-data");
  const auto corp = corpus::load_corpus(cfg.corpus_dir);
  encoder::EncoderModel model(cfg.encoder);
  auto result = encoder::pretrain(model, corp.images, corp.corpus_hash, cfg.pretrain, progress);
  fs::create_directories(cfg.encoder_path.parent_path());
  model.save(cfg.encoder_path);
  io::write_text(sibling(cfg.encoder_path, "_loss.csv"), encoder::curve_csv(result.curve));
  write_run_config(cfg, sibling(cfg.encoder_path, ".config.json"));
  return result;
}

translator::TrainResult run_train(const RunConfig& cfg, const translator::EpochFn& on_epoch) {
  require_exists(cfg.pairs_dir / "manifest.json", "pair dataset", "gen-data");
  require_exists(cfg.encoder_path, "encoder checkpoint", "pretrain");
  const auto pairs = corpus::load_pairs(cfg.pairs_dir);
  const auto data = translator::load_samples(pairs, 0, pairs.train_count());
  const auto enc = encoder::EncoderModel::load(cfg.encoder_path);
  translator::TrainResult result;
  auto model = translator::train_translator(data, enc, cfg.train, &result, on_epoch);
  fs::create_directories(cfg.translator_path.parent_path());
  model.save(cfg.translator_path);
  io::write_text(sibling(cfg.translator_path, "_loss.csv"), encoder::curve_csv(result.curve));
  write_run_config(cfg, sibling(cfg.translator_path, ".config.json"));
  return result;
}

evalkit::EvalReport run_evaluate(const RunConfig& cfg) {
  require_exists(cfg.pairs_dir / "manifest.json", "pair dataset", "gen-data");
  require_exists(cfg.translator_path, "translator checkpoint", "train");
  const auto pairs = corpus::load_pairs(cfg.pairs_dir);
  const auto model = translator::TranslatorModel::load(cfg.translator_path);
  const auto heldout = translator::load_samples(pairs, pairs.train_count(), pairs.size());
  auto report = evalkit::evaluate(model, heldout, cfg.eval);
  fs::create_directories(cfg.reports_dir);
  io::write_text(cfg.reports_dir / "eval.json", report.to_json().dump(2) + "\n");
  write_run_config(cfg, cfg.reports_dir / "evaluate.config.json");
  return report;
}

evalkit::AblationReport run_ablate(const RunConfig& cfg, const translator::EpochFn& on_epoch) {
  require_exists(cfg.pairs_dir / "manifest.json", "pair dataset", "gen-data");
  require_exists(cfg.encoder_path, "encoder checkpoint", "pretrain");
  const auto pairs = corpus::load_pairs(cfg.pairs_dir);
  const auto train = translator::load_samples(pairs, 0, pairs.train_count());
  const auto heldout = translator::load_samples(pairs, pairs.train_count(), pairs.size());
  const auto enc = encoder::EncoderModel::load(cfg.encoder_path);
  auto report = evalkit::ablation_harness(train, heldout, enc, {cfg.train, cfg.eval}, on_epoch);
  fs::create_directories(cfg.reports_dir);
  io::write_text(cfg.reports_dir / "ablation.json", report.to_json().dump(2) + "\n");
  write_run_config(cfg, cfg.reports_dir / "ablate.config.json");
  return report;
}

CraftResult craft(const translator::TranslatorModel& model, const ImageBuffer& photo) {
  CraftResult r;
  r.params = model.predict(photo);
  r.mask = engine::condition_mask(r.params.t);
  r.avatar = engine::render(r.params);
  r.identity = evalkit::identity_surrogate(photo, r.avatar, model.encoder());
  return r;
}

json craft_json(const CraftResult& r, bool include_image) {
  json j = engine::params_to_json(r.params);
  j["mask"] = r.mask;
  if (include_image) {
    j["image_b64"] = io::base64_encode(io::encode_png(r.avatar));
    j["identity"] = r.identity;
  }
  return j;
}

// --- HTTP API ----------------------------------------------------------------------

namespace {

HttpResponse json_response(int status, const json& j) { return {status, "application/json", j.dump()}; }

HttpResponse error_response(int status, const std::string& message, const std::string& field = {}) {
  json j = {{"error", message}};
  if (!field.empty()) j["field"] = field;
  return json_response(status, j);
}

HttpResponse validation_response(const engine::ValidationError& e) {
  json issues = json::array();
  for (const auto& i : e.issues()) issues.push_back({{"field", i.field}, {"message", i.message}});
  json j = {{"error", e.what()}, {"issues", issues}};
  if (!e.issues().empty()) j["field"] = e.issues().front().field;
  return json_response(400, j);
}

}  // namespace

Api::Api(std::shared_ptr<const translator::TranslatorModel> model)
    : model_(std::move(model)), schema_body_(engine::schema_json(engine::schema()).dump()) {}

HttpResponse Api::handle(const std::string& method, const std::string& path,
                         const std::string& body) const {
  struct Route {
    const char* path;
    const char* method;
  };
  static constexpr Route kRoutes[] = {{"/v1/schema", "GET"},   {"/v1/health", "GET"},
                                      {"/v1/render", "POST"},  {"/v1/predict", "POST"},
                                      {"/v1/craft", "POST"}};
  bool known = false;
  for (const auto& r : kRoutes) {
    if (path != r.path) continue;
    known = true;
    if (method != r.method) return error_response(405, "method " + method + " not allowed on " + path);
  }
  if (!known) return error_response(404, "no such endpoint: " + path);
  try {
    if (path == "/v1/schema") return schema();
    if (path == "/v1/health") return health();
    if (path == "/v1/render") return render(body);
    if (path == "/v1/predict") return predict(body, false);
    return predict(body, true);
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

HttpResponse Api::schema() const { return {200, "application/json", schema_body_}; }

HttpResponse Api::health() const {
  json j = {{"status", "ok"},
            {"schema_hash", engine::schema().hash},
            {"translator_loaded", translator_loaded()}};
  if (model_) j["translator_schema_hash"] = model_->schema_hash();
  return json_response(200, j);
}

HttpResponse Api::render(const std::string& body) const {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return error_response(400, "request body is not valid JSON");
  engine::CraftingParams p;
  try {
    p = engine::params_from_json(j);
    engine::require_valid(p);
  } catch (const engine::ValidationError& e) {
    return validation_response(e);
  }
  const auto png = io::encode_png(engine::render(p));
  return {200, "image/png", std::string(png.begin(), png.end())};
}

HttpResponse Api::predict(const std::string& body, bool with_render) const {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return error_response(400, "request body is not valid JSON");
  if (!j.is_object() || !j.contains("image_b64") || !j.at("image_b64").is_string())
    return error_response(400, "missing string field image_b64", "image_b64");
  ImageBuffer img;
  try {
    const auto bytes = io::base64_decode(j.at("image_b64").get<std::string>());
    img = io::decode_png(bytes);
    img.require_canvas();
  } catch (const std::invalid_argument& e) {
    return error_response(400, std::string("image_b64: ") + e.what(), "image_b64");
  }
  if (!model_) return error_response(503, "translator not loaded; start the server with a translator checkpoint");
  if (model_->schema_hash() != engine::schema().hash) {
    return error_response(409, translator::SchemaMismatch(model_->schema_hash(), engine::schema().hash).what());
  }
  return json_response(200, craft_json(craft(*model_, img), with_render));
}

// --- server ------------------------------------------------------------------------

struct Server::Impl {
  std::shared_ptr<const Api> api;
  httplib::Server http;
};

Server::Server(std::shared_ptr<const Api> api) : impl_(std::make_unique<Impl>()) {
  impl_->api = std::move(api);
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = impl_->api->handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  for (const char* path : {"/v1/schema", "/v1/health", "/v1/render", "/v1/predict", "/v1/craft"}) {
    impl_->http.Get(path, handler);
    impl_->http.Post(path, handler);
  }
  impl_->http.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const auto r = impl_->api->handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("could not bind " + host);
    return bound;
  }
  if (!impl_->http.bind_to_port(host, port))
    throw std::runtime_error("could not bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace avatarcraft::service
