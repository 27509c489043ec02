// avatarcraft: data generation, training, evaluation, crafting and serving.

#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "avatarcraft/engine.hpp"
#include "avatarcraft/io.hpp"
#include "avatarcraft/service.hpp"

namespace fs = std::filesystem;
using namespace avatarcraft;
using json = nlohmann::json;

namespace {

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

// "train.lr=3e-4" -> {"train": {"lr": 3e-4}}; values parse as JSON, else as strings.
json parse_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got " + kv);
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::string ptr = "/" + key;
  for (auto& c : ptr)
    if (c == '.') c = '/';
  json out;
  out[json::json_pointer(ptr)] = value;
  return out;
}

void print_epoch(const translator::EpochStats& e) {
  std::fprintf(stderr, "epoch %3d  loss %.5f  (s %.4f  a %.4f  t %.4f)\n", e.epoch, e.total, e.structure,
               e.attribute, e.texture);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avatarcraft: photo-to-avatar parameter toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, home;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "RunConfig JSON to start from")->check(CLI::ExistingFile);
  app.add_option("--home", home, "artifact directory (default $AVATARCRAFT_HOME or ./avatarcraft-home)");
  app.add_option("--set", overrides, "override any RunConfig field, e.g. --set train.lr=3e-4");

  // Flag values land in a JSON patch so only flags actually given override the config.
  json patch = json::object();
  auto opt = [&](CLI::App* sub, const std::string& flag, const std::string& pointer, auto type_tag,
                 const std::string& help) {
    using T = decltype(type_tag);
    sub->add_option_function<T>(
        flag, [&patch, pointer](const T& v) { patch[json::json_pointer(pointer)] = v; }, help);
  };
  auto path_opt = [&](CLI::App* sub, const std::string& flag, const std::string& key) {
    opt(sub, flag, "/" + key, std::string{}, "override " + key);
  };

  auto* gen = app.add_subcommand("gen-data", "render the pair dataset and the multi-style pretraining corpus");
  opt(gen, "--n", "/n", std::size_t{}, "number of (params, image) pairs");
  opt(gen, "--seed", "/seed", std::uint64_t{}, "dataset seed");
  opt(gen, "--per-style", "/per_style", std::size_t{}, "pretraining images per style");
  opt(gen, "--corpus-seed", "/corpus_seed", std::uint64_t{}, "corpus seed");
  path_opt(gen, "--pairs-dir", "pairs_dir");
  path_opt(gen, "--corpus-dir", "corpus_dir");

  auto* pre = app.add_subcommand("pretrain", "masked-autoencoder pretraining of the image encoder");
  opt(pre, "--epochs", "/pretrain/epochs", int{}, "epochs");
  opt(pre, "--batch-size", "/pretrain/batch_size", int{}, "batch size");
  opt(pre, "--lr", "/pretrain/lr", double{}, "peak learning rate");
  opt(pre, "--seed", "/pretrain/seed", std::uint64_t{}, "mask and order seed");
  opt(pre, "--max-steps", "/pretrain/max_steps", std::int64_t{}, "stop after this many steps");
  path_opt(pre, "--corpus-dir", "corpus_dir");
  path_opt(pre, "--encoder-path", "encoder_path");

  auto add_train_opts = [&](CLI::App* sub) {
    opt(sub, "--epochs", "/train/epochs", int{}, "epochs");
    opt(sub, "--batch-size", "/train/batch_size", int{}, "batch size");
    opt(sub, "--lr", "/train/lr", double{}, "peak learning rate");
    opt(sub, "--seed", "/train/seed", std::uint64_t{}, "order, augmentation and head-init seed");
    opt(sub, "--augment-prob", "/train/augment_prob", double{}, "per-sample augmentation probability");
    path_opt(sub, "--pairs-dir", "pairs_dir");
    path_opt(sub, "--encoder-path", "encoder_path");
  };
  auto* train = app.add_subcommand("train", "train the translator heads on a frozen encoder");
  add_train_opts(train);
  path_opt(train, "--translator-path", "translator_path");

  auto* eval = app.add_subcommand("evaluate", "score the translator on the held-out split");
  opt(eval, "--seed", "/eval/seed", std::uint64_t{}, "stylization and random-render seed");
  path_opt(eval, "--pairs-dir", "pairs_dir");
  path_opt(eval, "--translator-path", "translator_path");
  path_opt(eval, "--reports-dir", "reports_dir");

  auto* abl = app.add_subcommand("ablate", "frozen-pretrained vs w/o-pretrain comparison");
  add_train_opts(abl);
  path_opt(abl, "--reports-dir", "reports_dir");

  std::string image_path, out_dir = ".";
  auto* craft = app.add_subcommand("craft", "predict avatar parameters from an image");
  craft->add_option("--image", image_path, "128x128 PNG")->required()->check(CLI::ExistingFile);
  craft->add_option("--out", out_dir, "directory for params.json and avatar.png");
  path_opt(craft, "--translator-path", "translator_path");

  auto* serve = app.add_subcommand("serve", "HTTP API under /v1");
  opt(serve, "--host", "/host", std::string{}, "bind address");
  opt(serve, "--port", "/port", int{}, "port (0 picks a free one)");
  path_opt(serve, "--translator-path", "translator_path");

  std::string params_path, render_out = "render.png";
  auto* render = app.add_subcommand("render", "render a params JSON file (neutral if omitted)");
  render->add_option("--params", params_path, "{s,t,a} JSON")->check(CLI::ExistingFile);
  render->add_option("--out", render_out, "output PNG");

  app.add_subcommand("schema", "print the engine schema JSON");
  auto* show = app.add_subcommand("config", "print the resolved RunConfig");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = service::RunConfig::defaults();
    if (!config_path.empty()) cfg.merge_json(json::parse(io::read_text(config_path)));
    json merged = cfg.to_json();
    merged.merge_patch(patch);
    for (const auto& kv : overrides) merged.merge_patch(parse_override(kv));
    if (!home.empty()) {
      // A new home re-derives every path not given explicitly.
      const auto base = service::RunConfig::defaults().to_json();
      for (const char* key : {"pairs_dir", "corpus_dir", "encoder_path", "translator_path", "reports_dir"}) {
        if (!patch.contains(key) && merged[key] == base[key]) merged[key] = "";
      }
      merged["home"] = home;
    }
    cfg = service::RunConfig{};
    cfg.merge_json(merged);
    cfg.resolve();
    cfg.encoder.validate();

    if (*gen) {
      const auto r = service::run_gen_data(cfg);
      std::cout << json{{"dataset_hash", r.dataset_hash}, {"corpus_hash", r.corpus_hash},
                        {"pairs_dir", cfg.pairs_dir.string()}, {"corpus_dir", cfg.corpus_dir.string()}}
                       .dump(2)
                << "\n";
    } else if (*pre) {
      const auto r = service::run_pretrain(cfg, [](int epoch, double loss) {
        std::fprintf(stderr, "epoch %3d  masked-patch loss %.5f\n", epoch, loss);
      });
      std::cout << json{{"encoder_path", cfg.encoder_path.string()}, {"steps", r.curve.size()},
                        {"final_loss", r.curve.empty() ? 0.0 : r.curve.back().loss}}
                       .dump(2)
                << "\n";
    } else if (*train) {
      const auto r = service::run_train(cfg, print_epoch);
      std::cout << json{{"translator_path", cfg.translator_path.string()}, {"steps", r.curve.size()},
                        {"final_epoch_loss", r.epochs.empty() ? 0.0 : r.epochs.back().total}}
                       .dump(2)
                << "\n";
    } else if (*eval) {
      const auto report = service::run_evaluate(cfg);
      std::cout << report.table();
      std::cout << "report: " << (cfg.reports_dir / "eval.json").string() << "\n";
    } else if (*abl) {
      const auto report = service::run_ablate(cfg, print_epoch);
      std::cout << report.table();
      std::cout << "report: " << (cfg.reports_dir / "ablation.json").string() << "\n";
    } else if (*craft) {
      if (!fs::exists(cfg.translator_path))
        throw std::runtime_error("translator checkpoint not found at " + cfg.translator_path.string() +
                                 " (run `train` first)");
      const auto model = translator::TranslatorModel::load(cfg.translator_path);
      const auto result = service::craft(model, io::read_png(image_path));
      fs::create_directories(out_dir);
      const json j = service::craft_json(result, false);
      io::write_text(fs::path(out_dir) / "params.json", j.dump(2) + "\n");
      io::write_png(fs::path(out_dir) / "avatar.png", result.avatar);
      write_run_config(cfg, fs::path(out_dir) / "craft.config.json");
      json printed = j;
      printed["identity"] = result.identity;
      std::cout << printed.dump(2) << "\n";
    } else if (*serve) {
      std::shared_ptr<const translator::TranslatorModel> model;
      if (fs::exists(cfg.translator_path)) {
        model = std::make_shared<const translator::TranslatorModel>(
            translator::TranslatorModel::load(cfg.translator_path));
        if (model->schema_hash() != engine::schema().hash)
          std::cerr << "warning: translator schema differs from the engine; /predict and /craft return 409\n";
      } else {
        std::cerr << "warning: no translator at " << cfg.translator_path
                  << "; /predict and /craft return 503\n";
      }
      service::Server server(std::make_shared<const service::Api>(model));
      const int port = server.bind(cfg.host, cfg.port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << cfg.host << ":" << port << "/v1" << std::endl;
      server.listen();
      g_server = nullptr;
    } else if (*render) {
      auto p = engine::CraftingParams::neutral();
      if (!params_path.empty()) {
        p = engine::params_from_json(json::parse(io::read_text(params_path)));
        engine::require_valid(p);
      }
      const auto img = engine::render(p);
      io::write_png(render_out, img);
      std::cout << img.sha256() << "\n";
    } else if (app.got_subcommand("schema")) {
      std::cout << engine::schema_json(engine::schema()).dump(2) << "\n";
    } else if (*show) {
      std::cout << cfg.to_json().dump(2) << "\n";
    }
  } catch (const engine::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& i : e.issues()) std::cerr << "  " << i.field << ": " << i.message << "\n";
    return 1;
  } catch (const translator::SchemaMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
