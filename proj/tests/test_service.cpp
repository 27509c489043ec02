#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <thread>

#include "avatarcraft/io.hpp"
#include "avatarcraft/rng.hpp"
#include "avatarcraft/service.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a _res macro.
#include <httplib.h>

using namespace avatarcraft;
using namespace avatarcraft::service;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = AVATARCRAFT_SOURCE_DIR;
const fs::path kCli = AVATARCRAFT_CLI;

std::shared_ptr<const translator::TranslatorModel> small_model() {
  return std::make_shared<const translator::TranslatorModel>(
      encoder::EncoderModel(encoder::EncoderConfig{}), translator::LossWeights{}, true, 5);
}

std::string b64_png(const ImageBuffer& img) { return io::base64_encode(io::encode_png(img)); }

json parse(const HttpResponse& r) { return json::parse(r.body); }

std::string golden_hash() {
  const auto text = io::read_text(kSource / "golden" / "neutral_render.sha256");
  return text.substr(0, text.find_first_of(" \n"));
}

RunConfig tiny_config(const fs::path& home) {
  RunConfig cfg;
  cfg.home = home;
  cfg.n = 30;
  cfg.per_style = 6;
  cfg.pretrain.epochs = 1;
  cfg.pretrain.batch_size = 10;
  cfg.pretrain.eval_samples = 8;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 9;
  cfg.resolve();
  return cfg;
}

int run_cli(const std::string& args) {
  const int rc = std::system((kCli.string() + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("schema and health") {
  const Api api;
  const auto s = api.handle("GET", "/v1/schema", "");
  CHECK(s.status == 200);
  CHECK(parse(s)["hash"] == engine::schema().hash);
  CHECK(parse(s) == json::parse(io::read_text(kSource / "schema.json")));
  const auto h = parse(api.handle("GET", "/v1/health", ""));
  CHECK(h["status"] == "ok");
  CHECK(h["translator_loaded"] == false);
  CHECK(api.handle("GET", "/v1/nope", "").status == 404);
  CHECK(api.handle("POST", "/v1/schema", "").status == 405);
  CHECK(api.handle("GET", "/v1/render", "").status == 405);
}

TEST_CASE("render endpoint") {
  const Api api;
  const auto neutral = engine::params_to_json(engine::CraftingParams::neutral()).dump();
  const auto r = api.handle("POST", "/v1/render", neutral);
  REQUIRE(r.status == 200);
  CHECK(r.content_type == "image/png");
  const auto img = io::decode_png(std::span(reinterpret_cast<const std::uint8_t*>(r.body.data()), r.body.size()));
  CHECK(img.sha256() == golden_hash());
  CHECK(io::sha256_hex(r.body) == io::sha256_hex(io::read_file(kSource / "golden" / "neutral.png")));

  auto bad = engine::params_to_json(engine::CraftingParams::neutral());
  bad["s"][0] = 1.5;
  const auto e = api.handle("POST", "/v1/render", bad.dump());
  CHECK(e.status == 400);
  CHECK(parse(e)["field"] == "s[0]");
  CHECK(e.body.find("s[0]") != std::string::npos);

  bad = engine::params_to_json(engine::CraftingParams::neutral());
  bad["t"][3] = 3;
  CHECK(parse(api.handle("POST", "/v1/render", bad.dump()))["field"] == "t[3]");
  bad.erase("t");
  CHECK(parse(api.handle("POST", "/v1/render", bad.dump()))["field"] == "t");
  CHECK(api.handle("POST", "/v1/render", "{not json").status == 400);
  CHECK(api.handle("POST", "/v1/render", "[1,2]").status == 400);
}

TEST_CASE("predict and craft endpoints") {
  const auto img = engine::render(engine::sample_params(4));
  const json body = {{"image_b64", b64_png(img)}};

  SUBCASE("no translator") {
    const Api api;
    CHECK(api.handle("POST", "/v1/predict", body.dump()).status == 503);
    CHECK(api.handle("POST", "/v1/craft", body.dump()).status == 503);
    CHECK(api.handle("POST", "/v1/render", engine::params_to_json(engine::CraftingParams::neutral()).dump()).status == 200);
  }
  SUBCASE("schema mismatch") {
    auto stale = std::make_shared<translator::TranslatorModel>(*small_model());
    stale->set_schema_hash("feed");
    const Api api(stale);
    const auto r = api.handle("POST", "/v1/predict", body.dump());
    CHECK(r.status == 409);
    CHECK(r.body.find("feed") != std::string::npos);
  }
  SUBCASE("composition") {
    const Api api(small_model());
    const auto pr = api.handle("POST", "/v1/predict", body.dump());
    REQUIRE(pr.status == 200);
    const auto pj = parse(pr);
    const auto params = engine::params_from_json(pj);
    CHECK(engine::validate(params).empty());
    CHECK(pj["mask"] == json(engine::condition_mask(params.t)));

    const auto rr = api.handle("POST", "/v1/render", pr.body);
    REQUIRE(rr.status == 200);
    const auto cr = parse(api.handle("POST", "/v1/craft", body.dump()));
    CHECK(cr["s"] == pj["s"]);
    CHECK(cr["t"] == pj["t"]);
    CHECK(io::base64_decode(cr["image_b64"].get<std::string>()) ==
          std::vector<std::uint8_t>(rr.body.begin(), rr.body.end()));
    CHECK(cr["identity"].get<double>() <= 1.0);
  }
  SUBCASE("bad images") {
    const Api api(small_model());
    CHECK(parse(api.handle("POST", "/v1/predict", "{}"))["field"] == "image_b64");
    CHECK(parse(api.handle("POST", "/v1/predict", R"({"image_b64": 5})"))["field"] == "image_b64");
    CHECK(api.handle("POST", "/v1/predict", R"({"image_b64": "!!!"})").status == 400);
    CHECK(api.handle("POST", "/v1/predict", json{{"image_b64", io::base64_encode(std::vector<std::uint8_t>{1, 2, 3})}}.dump()).status == 400);
    const auto small = parse(api.handle("POST", "/v1/craft", json{{"image_b64", b64_png(ImageBuffer(64, 64))}}.dump()));
    CHECK(small["field"] == "image_b64");
  }
}

TEST_CASE("HTTP server round trip and concurrency") {
  auto api = std::make_shared<const Api>(small_model());
  Server server(api);
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.listen(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);
  for (int i = 0; i < 50 && !cli.Get("/v1/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));

  const auto neutral = engine::params_to_json(engine::CraftingParams::neutral()).dump();
  auto r = cli.Post("/v1/render", neutral, "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");

  auto bad = engine::params_to_json(engine::CraftingParams::neutral());
  bad["s"][0] = 1.5;
  r = cli.Post("/v1/render", bad.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["field"] == "s[0]");

  r = cli.Get("/v1/missing");
  REQUIRE(r);
  CHECK(r->status == 404);

  const json body = {{"image_b64", b64_png(engine::render(engine::sample_params(8)))}};
  std::vector<std::string> bodies(4);
  std::vector<std::thread> workers;
  for (int k = 0; k < 4; ++k) {
    workers.emplace_back([&, k] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(30, 0);
      if (auto res = c.Post("/v1/craft", body.dump(), "application/json")) bodies[k] = res->body;
    });
  }
  for (auto& w : workers) w.join();
  CHECK_FALSE(bodies[0].empty());
  for (int k = 1; k < 4; ++k) CHECK(bodies[k] == bodies[0]);

  server.stop();
  th.join();
}

TEST_CASE("run config serialisation") {
  auto cfg = RunConfig::defaults();
  CHECK_FALSE(cfg.pairs_dir.empty());
  cfg.train.lr = 0.5;
  RunConfig back;
  back.merge_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  RunConfig partial = cfg;
  partial.merge_json(json{{"train", {{"epochs", 3}}}, {"n", 7}});
  CHECK(partial.train.epochs == 3);
  CHECK(partial.train.lr == 0.5);
  CHECK(partial.n == 7);

  ::setenv("AVATARCRAFT_HOME", "/tmp/somewhere", 1);
  CHECK(RunConfig::defaults().translator_path == fs::path("/tmp/somewhere/models/translator.ckpt"));
  ::unsetenv("AVATARCRAFT_HOME");
}

TEST_CASE("tiny pipeline is deterministic end to end") {
  const auto base = fs::temp_directory_path() / ("avatarcraft_pipe_" + std::to_string(::getpid()));
  fs::remove_all(base);
  std::vector<std::string> hashes, curves, reports;
  for (const char* run : {"a", "b"}) {
    auto cfg = tiny_config(base / run);
    cfg.eval.surrogates = true;
    const auto g = run_gen_data(cfg);
    run_pretrain(cfg);
    run_train(cfg);
    const auto report = run_evaluate(cfg);
    hashes.push_back(g.dataset_hash + g.corpus_hash);
    curves.push_back(io::read_text(cfg.home / "models" / "encoder_loss.csv") +
                     io::read_text(cfg.home / "models" / "translator_loss.csv"));
    json j = json::parse(io::read_text(cfg.reports_dir / "eval.json"));
    j.erase("config");
    reports.push_back(j.dump());
    CHECK(fs::exists(cfg.home / "data" / "gen-data.config.json"));
    CHECK(fs::exists(cfg.home / "models" / "encoder.config.json"));
    CHECK(fs::exists(cfg.home / "models" / "translator.config.json"));
    CHECK(fs::exists(cfg.reports_dir / "evaluate.config.json"));
    CHECK(report.recovery.n == 3);
  }
  CHECK(hashes[0] == hashes[1]);
  CHECK(curves[0] == curves[1]);
  CHECK(reports[0] == reports[1]);

  SUBCASE("missing prerequisites are reported") {
    auto cfg = tiny_config(base / "empty");
    CHECK_THROWS_WITH(run_train(cfg), doctest::Contains("gen-data"));
    CHECK_THROWS_WITH(run_evaluate(cfg), doctest::Contains("gen-data"));
  }
  fs::remove_all(base);
}

TEST_CASE("cli") {
  const auto home = fs::temp_directory_path() / ("avatarcraft_cli_" + std::to_string(::getpid()));
  fs::remove_all(home);
  CHECK(run_cli("schema") == 0);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") != 0);
  CHECK(run_cli("--home " + home.string() + " render --out " + (home / "n.png").string()) == 0);
  CHECK(io::read_png(home / "n.png").sha256() == golden_hash());

  // craft refuses a translator trained for another schema
  auto stale = *small_model();
  stale.set_schema_hash("0123");
  fs::create_directories(home / "models");
  stale.save(home / "models" / "translator.ckpt");
  io::write_png(home / "face.png", engine::render(engine::sample_params(2)));
  CHECK(run_cli("--home " + home.string() + " craft --image " + (home / "face.png").string()) == 3);

  small_model()->save(home / "models" / "translator.ckpt");
  CHECK(run_cli("--home " + home.string() + " craft --image " + (home / "face.png").string() + " --out " +
                (home / "out").string()) == 0);
  CHECK(fs::exists(home / "out" / "avatar.png"));
  const auto params = engine::params_from_json(json::parse(io::read_text(home / "out" / "params.json")));
  CHECK(engine::render(params) == io::read_png(home / "out" / "avatar.png"));
  CHECK(run_cli("--home " + home.string() + " train") != 0);
  fs::remove_all(home);
}
