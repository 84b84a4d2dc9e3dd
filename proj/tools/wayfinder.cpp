#include "wayfinder/config.hpp"
#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"
#include "wayfinder/pipeline.hpp"
#include "wayfinder/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace wayfinder;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kRemote = 3 };

// Flags shared by the batch subcommands. Unset flags fall back to --config,
// then to the built-in defaults.
struct Flags {
  std::string config;
  std::optional<std::string> maps, corpus, out, cache, script, translator, endpoint, model, actor;
  std::optional<std::uint64_t> seed;
  std::optional<int> attempts, parallelism, samples, fov, budget, max_replans;
  std::optional<double> temperature, alpha, beta, gamma, delta, lambda, rho;
  bool compiler_sees_map = false;

  void add(CLI::App* app, bool batch) {
    app->add_option("--config", config, "JSON run config")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Base seed");
    app->add_option("--translator", translator, "oracle | keyword | remote | scripted");
    app->add_option("--script", script, "Scripted translator fixture")->check(CLI::ExistingFile);
    app->add_option("--endpoint", endpoint, "Chat-completion endpoint URL");
    app->add_option("--model", model, "Remote model name");
    app->add_option("--temperature", temperature);
    app->add_option("--samples", samples, "Compilation samples per explanation (K)");
    app->add_option("--cache", cache, "Response cache directory");
    app->add_flag("--compiler-sees-map", compiler_sees_map, "Include the map layout in prompts");
    app->add_option("--fov", fov, "Field-of-view radius");
    app->add_option("--budget", budget, "Step budget (0: per-map default)");
    app->add_option("--max-replans", max_replans);
    app->add_option("--rho", rho, "Revisit penalty");
    app->add_option("--out", out, "Output directory");
    if (!batch) return;
    app->add_option("--maps", maps, "Maps directory")->check(CLI::ExistingDirectory);
    app->add_option("--corpus", corpus, "Explanation corpus (JSONL)")->check(CLI::ExistingFile);
    app->add_option("-n,--attempts", attempts, "Episodes per explanation (N)");
    app->add_option("--parallelism", parallelism, "Worker threads");
    app->add_option("--actor", actor, "Direct-model actor: keyword | oracle | remote");
    app->add_option("--alpha", alpha);
    app->add_option("--beta", beta);
    app->add_option("--gamma", gamma);
    app->add_option("--delta", delta);
    app->add_option("--lambda", lambda);
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config.empty()) c = load_run_config(config);
    auto set = [](const auto& flag, auto& field) {
      if (flag) field = *flag;
    };
    set(maps, c.maps_dir);
    set(corpus, c.corpus);
    set(out, c.out_dir);
    set(cache, c.cache_dir);
    set(script, c.script);
    set(seed, c.episode.rng_seed);
    set(attempts, c.attempts);
    set(parallelism, c.parallelism);
    set(fov, c.episode.fov_radius);
    set(budget, c.episode.budget);
    set(max_replans, c.episode.max_replans);
    set(rho, c.episode.rho);
    set(alpha, c.utility.alpha);
    set(gamma, c.utility.gamma);
    set(delta, c.utility.delta);
    set(lambda, c.speaker.lambda);
    if (beta) c.utility.beta = *beta;
    if (translator) {
      const auto kind = parse_translator_kind(*translator);
      if (!kind) throw std::invalid_argument("unknown translator '" + *translator + "'");
      c.translator.kind = *kind;
    }
    if (endpoint) c.translator.endpoint_url = *endpoint;
    if (model) c.translator.model_name = *model;
    set(temperature, c.translator.temperature);
    set(samples, c.translator.max_samples);
    if (compiler_sees_map) c.translator.compiler_sees_map = true;
    if (actor) {
      c.direct_actor = parse_actor_kind(*actor);
      if (!c.direct_actor) throw std::invalid_argument("unknown actor '" + *actor + "'");
    }
    if (const char* key = std::getenv("WAYFINDER_API_KEY")) c.translator.api_key = key;
    c.check();
    return c;
  }
};

std::string attempt_line(const Attempt& a) {
  return "S=" + std::to_string(a.success ? 1 : 0) + " L=" + std::to_string(a.length) +
         " R=" + std::to_string(a.replans);
}

int simulate(const Flags& flags, const std::string& map_path, const std::string& text,
             const std::string& explanation_id) {
  const RunConfig config = flags.resolve();
  const GridMap world = load_map_file(map_path);
  const Explanation expl{explanation_id, world.id(), text};
  auto translator = make_translator(
      [&] {
        auto t = config.translator;
        if (!config.cache_dir.empty()) t.cache_dir = config.cache_dir;
        return t;
      }(),
      config.script);
  const Attempt attempt = run_episode(world, expl, *translator, config.episode);
  std::cout << attempt_line(attempt) << "\n";
  std::string actions;
  for (const auto& s : attempt.trajectory) {
    actions += (actions.empty() ? "" : " ") + std::string(to_token(s.action));
    if (s.replanned) actions += "*";
  }
  std::cout << "actions: " << actions << "\n";
  if (!config.out_dir.empty()) {
    const auto dir = fs::path(config.out_dir) / "trajectories";
    fs::create_directories(dir);
    const auto path = dir / (world.id() + "__" + explanation_id + "__" +
                             std::to_string(config.episode.rng_seed) + ".jsonl");
    write_file_atomic(path.string(), trajectory_jsonl(attempt, world, config.episode));
    write_file_atomic((fs::path(config.out_dir) / "run-config.json").string(),
                      to_json(config).dump(2) + "\n");
    std::cout << "trajectory: " << path.string() << "\n";
  }
  return kOk;
}

int score(const Flags& flags) {
  const RunConfig config = flags.resolve();
  const auto run = run_score(config);
  std::cout << "scored " << run.computed << " tuples, " << run.skipped << " already present; "
            << run.records.size() << " rows in " << (fs::path(config.out_dir) / "scores.csv").string()
            << "\n";
  return kOk;
}

std::vector<ScoreRecord> results_from(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw Error("results file not found: " + path);
  return load_results(path);
}

int rank(const Flags& flags, const std::string& results) {
  const RunConfig config = flags.resolve();
  const auto rows = run_rank(config, results_from(results));
  for (const auto& row : rows) {
    if (row.bins.empty()) {
      std::cout << row.map_id << ": fewer than 3 explanations, not binned\n";
      continue;
    }
    std::cout << row.map_id << ":";
    for (const auto& b : row.bins) std::cout << " " << to_string(b.label) << "=" << b.selected_explanation_id;
    std::cout << "\n";
  }
  return kOk;
}

int analyze(const Flags& flags, const std::string& results) {
  const RunConfig config = flags.resolve();
  const auto run = run_analysis(config, results_from(results));
  if (config.out_dir.empty()) {
    std::cout << run.csv;
  } else {
    std::cout << "analysis of " << run.report.total << " explanations written to "
              << (fs::path(config.out_dir) / "analysis.csv").string() << "\n";
  }
  return kOk;
}

int replay(const std::string& path) {
  std::cout << replay_frames(parse_trajectory_jsonl(read_file(path)));
  return kOk;
}

int validate_maps(const std::string& dir) {
  int bad = 0;
  std::set<std::string> ids;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".map") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      const GridMap m = load_map_file(f.string());
      if (!ids.insert(m.id()).second) throw MalformedMap("duplicate map id '" + m.id() + "'");
      const auto metrics = graph_metrics(m);
      std::cout << "ok    " << f.filename().string() << " id=" << m.id() << " "
                << m.width() << "x" << m.height() << " sp=" << metrics.shortest_path << "\n";
    } catch (const Error& e) {
      ++bad;
      std::cout << "error " << f.filename().string() << ": " << e.what() << "\n";
    }
  }
  std::cout << files.size() - bad << "/" << files.size() << " maps valid\n";
  return bad == 0 ? kOk : kData;
}

Service* g_service = nullptr;

int serve(ServiceConfig sc, const std::string& host, int port) {
  if (const char* t = std::getenv("WAYFINDER_ADMIN_TOKEN")) sc.admin_token = t;
  if (sc.admin_token.empty()) {
    std::cerr << "warning: WAYFINDER_ADMIN_TOKEN unset; admin endpoints are disabled\n";
  }
  Service service(std::move(sc));
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cout << "listening on " << host << ":" << port << std::endl;
  const bool ok = service.listen(host, port);
  g_service = nullptr;
  if (!ok) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return kData;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scores navigation explanations by simulating a partially informed listener."};
  app.require_subcommand(1);

  Flags flags;
  std::string map_path, text, explanation_id = "cli", results, replay_path, maps_dir;

  auto* sim = app.add_subcommand("simulate", "Run one episode and print S, L, R");
  flags.add(sim, false);
  sim->add_option("--map", map_path, "Map file")->required()->check(CLI::ExistingFile);
  sim->add_option("--text", text, "Explanation text");
  sim->add_option("--id", explanation_id, "Explanation id");

  auto* sc = app.add_subcommand("score", "Score a corpus with all three models");
  flags.add(sc, true);

  auto* rk = app.add_subcommand("rank", "Quality bins and speaker distribution per map");
  flags.add(rk, true);
  rk->add_option("--results", results, "results.jsonl from score; missing tuples are simulated");

  auto* an = app.add_subcommand("analyze", "Corpus statistics and failure modes");
  flags.add(an, true);
  an->add_option("--results", results, "results.jsonl from score; missing tuples are simulated");

  auto* rp = app.add_subcommand("replay", "Render a trajectory log as ASCII frames");
  rp->add_option("trajectory", replay_path, "Trajectory file")->required()->check(CLI::ExistingFile);

  ServiceConfig svc;
  std::string host = "127.0.0.1";
  int port = 8080;
  int idle_minutes = 30;
  auto* sv = app.add_subcommand("serve", "Start the HTTP service");
  sv->add_option("--maps", svc.maps_dir, "Maps directory")->required()->check(CLI::ExistingDirectory);
  sv->add_option("--corpus", svc.corpus_path, "Explanations for rate and navigate sessions");
  sv->add_option("--bins", svc.bins_path, "bins.csv from rank");
  sv->add_option("--store", svc.store_dir, "Session log directory")->required();
  sv->add_option("--static", svc.static_dir, "Web UI bundle");
  sv->add_option("--fov", svc.fov_radius);
  sv->add_option("--budget", svc.budget);
  sv->add_option("--idle-minutes", idle_minutes);
  sv->add_option("--host", host);
  sv->add_option("--port", port);

  auto* vm = app.add_subcommand("validate-maps", "Lint a maps directory");
  vm->add_option("maps", maps_dir, "Maps directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (sim->parsed()) return simulate(flags, map_path, text, explanation_id);
    if (sc->parsed()) return score(flags);
    if (rk->parsed()) return rank(flags, results);
    if (an->parsed()) return analyze(flags, results);
    if (rp->parsed()) return replay(replay_path);
    if (vm->parsed()) return validate_maps(maps_dir);
    if (sv->parsed()) {
      if (idle_minutes < 1) throw std::invalid_argument("--idle-minutes must be >= 1");
      svc.idle_timeout = std::chrono::minutes(idle_minutes);
      return serve(std::move(svc), host, port);
    }
  } catch (const RemoteUnavailable& e) {
    std::cerr << "error: remote unavailable: " << e.what() << "\n";
    return kRemote;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
