#include "wayfinder/pipeline.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"
#include "wayfinder/seed.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace wayfinder {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kModels[] = {"utility", "length", "direct"};

std::string num(double x) { return format_real(x); }

std::string file_safe(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out;
}

using TupleKey = std::tuple<std::string, std::string, std::string, std::uint64_t>;

TupleKey key_of(const ScoreRecord& r) { return {r.explanation_id, r.map_id, r.model, r.seed}; }

bool record_less(const ScoreRecord& a, const ScoreRecord& b) {
  return std::tie(a.map_id, a.model, a.seed, a.explanation_id) <
         std::tie(b.map_id, b.model, b.seed, b.explanation_id);
}

std::map<std::string, GridMap> maps_by_id(const std::string& dir) {
  if (dir.empty()) throw std::invalid_argument("a maps directory is required");
  std::map<std::string, GridMap> out;
  for (auto& m : load_map_dir(dir)) out.emplace(m.id(), std::move(m));
  return out;
}

std::vector<CorpusEntry> checked_corpus(const RunConfig& config,
                                        const std::map<std::string, GridMap>& maps) {
  if (config.corpus.empty()) throw std::invalid_argument("a corpus file is required");
  auto corpus = load_corpus(config.corpus);
  for (const auto& e : corpus) {
    if (!maps.contains(e.explanation.map_id)) {
      throw UnknownMapReference("explanation '" + e.explanation.id + "' names unknown map '" +
                                e.explanation.map_id + "'");
    }
  }
  std::stable_sort(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) {
    return std::tie(a.explanation.map_id, a.explanation.id) <
           std::tie(b.explanation.map_id, b.explanation.id);
  });
  return corpus;
}

TranslatorConfig translator_config(const RunConfig& config) {
  TranslatorConfig t = config.translator;
  if (!config.cache_dir.empty()) t.cache_dir = config.cache_dir;
  return t;
}

std::shared_ptr<ChatClient> client_for(const RunConfig& config, std::shared_ptr<ChatClient> client) {
  if (client) return client;
  const auto& t = config.translator;
  if (!t.endpoint_url) return nullptr;
  return std::make_shared<HttpChatClient>(*t.endpoint_url, t.api_key, t.retry, t.max_in_flight);
}

std::unique_ptr<DirectActor> make_actor(ActorKind kind, const GridMap& world,
                                        const RunConfig& config,
                                        const std::shared_ptr<ChatClient>& client) {
  switch (kind) {
    case ActorKind::Keyword: return std::make_unique<KeywordActor>(world);
    case ActorKind::Oracle: return std::make_unique<OracleActor>(world);
    case ActorKind::Remote:
      if (!client || !config.translator.model_name) {
        throw std::invalid_argument("the remote actor needs endpoint_url and model_name");
      }
      return std::make_unique<RemoteActor>(client, *config.translator.model_name,
                                           config.translator.temperature);
  }
  throw std::invalid_argument("unknown actor");
}

ScoreRecord record_from(const EvaluationResult& r, std::string model, std::uint64_t seed,
                        int words) {
  ScoreRecord s;
  s.explanation_id = r.explanation_id;
  s.map_id = r.map_id;
  s.model = std::move(model);
  s.seed = seed;
  s.n = r.n;
  s.budget = r.budget;
  s.replan_mean = r.replan_mean;
  s.len_min = r.len_min;
  s.succ = r.succ;
  s.mean_length = r.mean_length;
  s.words = words;
  return s;
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out << line << '\n';
  out.flush();
  if (!out) throw Error("cannot append to " + path);
}

void write_out(const std::string& dir, const std::string& name, const std::string& content) {
  write_file_atomic((fs::path(dir) / name).string(), content);
}

}  // namespace

double ScoreRecord::raw(const UtilityParams& p) const {
  if (model == "length") return -static_cast<double>(words);
  if (model == "direct") return p.delta * succ - p.alpha * mean_length;
  return -p.alpha * replan_mean - p.beta_for(budget) * len_min + p.gamma * succ;
}

ordered_json to_json(const ScoreRecord& r) {
  ordered_json j;
  j["explanation_id"] = r.explanation_id;
  j["map_id"] = r.map_id;
  j["model"] = r.model;
  j["seed"] = r.seed;
  j["n"] = r.n;
  j["budget"] = r.budget;
  j["replan_mean"] = r.replan_mean;
  j["len_min"] = r.len_min;
  j["succ"] = r.succ;
  j["mean_length"] = r.mean_length;
  j["words"] = r.words;
  return j;
}

ScoreRecord score_record_from_json(const json& j) {
  ScoreRecord r;
  r.explanation_id = j.at("explanation_id").get<std::string>();
  r.map_id = j.at("map_id").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.n = j.at("n").get<int>();
  r.budget = j.at("budget").get<int>();
  r.replan_mean = j.at("replan_mean").get<double>();
  r.len_min = j.at("len_min").get<int>();
  r.succ = j.at("succ").get<double>();
  r.mean_length = j.at("mean_length").get<double>();
  r.words = j.at("words").get<int>();
  return r;
}

std::vector<ScoreRecord> load_results(const std::string& path) {
  std::vector<ScoreRecord> out;
  if (!fs::exists(path)) return out;
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const bool last = in.peek() == std::char_traits<char>::eof();
    const auto j = json::parse(line, nullptr, false);
    try {
      if (j.is_discarded()) throw Error("not JSON");
      out.push_back(score_record_from_json(j));
    } catch (const std::exception& e) {
      if (last) break;
      throw Error(path + ":" + std::to_string(lineno) + ": bad result record: " + e.what());
    }
  }
  return out;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string scores_csv(const std::vector<ScoreRecord>& records, const RunConfig& config) {
  std::vector<ScoreRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), record_less);

  // Normalization and bins run within (map, model, seed).
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    groups[{sorted[i].map_id, sorted[i].model, sorted[i].seed}].push_back(i);
  }
  std::vector<double> raw(sorted.size()), norm(sorted.size());
  std::vector<std::string> bin(sorted.size());
  for (const auto& [key, idx] : groups) {
    std::vector<double> xs;
    std::vector<MapScore> ms;
    for (auto i : idx) {
      raw[i] = sorted[i].raw(config.utility);
      xs.push_back(raw[i]);
      ms.push_back({sorted[i].explanation_id, sorted[i].map_id, raw[i]});
    }
    const auto n = normalize_scores(xs);
    for (std::size_t k = 0; k < idx.size(); ++k) norm[idx[k]] = n[k];
    if (idx.size() >= 3) {
      std::map<std::string, std::string> label;
      for (const auto& b : bin_quality(ms)) {
        for (const auto& m : b.members) label[m] = std::string(to_string(b.label));
      }
      for (auto i : idx) bin[i] = label[sorted[i].explanation_id];
    }
  }

  const auto& u = config.utility;
  std::string out =
      "explanation_id,map_id,model,seed,n,raw_score,normalized_score,bin,replan_mean,len_min,"
      "succ,mean_length,words,budget,alpha,beta,gamma,delta,lambda,fov_radius,max_replans,"
      "translator\n";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& r = sorted[i];
    out += csv_field(r.explanation_id) + ',' + csv_field(r.map_id) + ',' + r.model + ',' +
           std::to_string(r.seed) + ',' + std::to_string(r.n) + ',' + num(raw[i]) + ',' +
           num(norm[i]) + ',' + bin[i] + ',' + num(r.replan_mean) + ',' +
           std::to_string(r.len_min) + ',' + num(r.succ) + ',' + num(r.mean_length) + ',' +
           std::to_string(r.words) + ',' + std::to_string(r.budget) + ',' + num(u.alpha) + ',' +
           num(u.beta_for(r.budget)) + ',' + num(u.gamma) + ',' + num(u.delta) + ',' +
           num(config.speaker.lambda) + ',' + std::to_string(config.episode.fov_radius) + ',' +
           std::to_string(config.episode.max_replans) + ',' +
           std::string(to_string(config.translator.kind)) + '\n';
  }
  return out;
}

namespace {

std::string scores_jsonl(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string h;
    while (std::getline(ss, h, ',')) header.push_back(h);
  }
  std::string out;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cols.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    cols.push_back(std::move(cur));
    ordered_json j;
    for (std::size_t k = 0; k < header.size() && k < cols.size(); ++k) j[header[k]] = cols[k];
    out += j.dump() + '\n';
  }
  return out;
}

struct Job {
  const CorpusEntry* entry;
  const GridMap* world;
  std::string model;
  std::vector<Attempt> attempts;
  std::atomic<int> remaining{0};
};

}  // namespace

ScoreRun run_score(const RunConfig& config, std::shared_ptr<ChatClient> client) {
  config.check();
  if (config.out_dir.empty()) throw std::invalid_argument("score needs an output directory");
  const auto maps = maps_by_id(config.maps_dir);
  const auto corpus = checked_corpus(config, maps);
  fs::create_directories(fs::path(config.out_dir) / "trajectories");
  write_out(config.out_dir, "run-config.json", to_json(config).dump(2) + "\n");

  const std::string results_path = (fs::path(config.out_dir) / "results.jsonl").string();
  ScoreRun run;
  auto done = load_results(results_path);
  std::set<TupleKey> have;
  for (const auto& r : done) have.insert(key_of(r));

  const std::uint64_t seed = config.episode.rng_seed;
  const int n = config.attempts;
  const ActorKind actor_kind = config.effective_actor();
  const bool needs_client =
      config.translator.kind == TranslatorKind::Remote || actor_kind == ActorKind::Remote;
  if (needs_client) client = client_for(config, client);
  std::unique_ptr<Translator> translator;

  std::deque<Job> jobs;
  for (const auto& e : corpus) {
    const GridMap& world = maps.at(e.explanation.map_id);
    for (const char* model : kModels) {
      if (have.contains(TupleKey{e.explanation.id, world.id(), model, seed})) {
        ++run.skipped;
        continue;
      }
      if (std::string_view(model) == "length") {
        ScoreRecord r;
        r.explanation_id = e.explanation.id;
        r.map_id = world.id();
        r.model = model;
        r.seed = seed;
        r.budget = effective_budget(config.episode, world);
        r.words = e.explanation.word_count();
        append_line(results_path, to_json(r).dump());
        done.push_back(r);
        ++run.computed;
        continue;
      }
      auto& job = jobs.emplace_back();
      job.entry = &e;
      job.world = &world;
      job.model = model;
      job.attempts.resize(n);
      job.remaining = n;
    }
  }
  if (!jobs.empty()) {
    translator = make_translator(translator_config(config), config.script, client);
  }

  // Attempt-level pool; the calling thread is the single writer.
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::size_t> finished;
  std::exception_ptr error;
  std::atomic<std::size_t> next{0};
  const std::size_t total = jobs.size() * static_cast<std::size_t>(n);
  const int workers =
      std::clamp<int>(config.parallelism, 1, static_cast<int>(std::max<std::size_t>(total, 1)));
  int live = workers;
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t item = next++; item < total; item = next++) {
        Job& job = jobs[item / n];
        const int i = static_cast<int>(item % n);
        try {
          EpisodeParams p = config.episode;
          p.rng_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
          if (job.model == "utility") {
            job.attempts[i] = run_episode(*job.world, job.entry->explanation, *translator, p);
          } else {
            auto actor = make_actor(actor_kind, *job.world, config, client);
            job.attempts[i] = direct_episode(*job.world, job.entry->explanation, *actor, p);
          }
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          next = total;
          continue;
        }
        if (--job.remaining == 0) {
          std::lock_guard lock(mu);
          finished.push_back(item / n);
          cv.notify_one();
        }
      }
      std::lock_guard lock(mu);
      --live;
      cv.notify_one();
    });
  }

  for (;;) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return !finished.empty() || live == 0; });
    if (finished.empty()) break;
    const std::size_t idx = finished.front();
    finished.pop_front();
    lock.unlock();

    Job& job = jobs[idx];
    const auto& expl = job.entry->explanation;
    auto result = aggregate(expl.id, job.world->id(), effective_budget(config.episode, *job.world),
                            job.attempts);
    if (job.model == "utility") {
      for (int i = 0; i < n; ++i) {
        EpisodeParams p = config.episode;
        p.rng_seed = job.attempts[i].seed;
        const auto name = file_safe(job.world->id()) + "__" + file_safe(expl.id) + "__" +
                          std::to_string(seed) + "__" + std::to_string(i) + ".jsonl";
        write_out((fs::path(config.out_dir) / "trajectories").string(), name,
                  trajectory_jsonl(job.attempts[i], *job.world, p));
      }
    }
    auto rec = record_from(result, job.model, seed, expl.word_count());
    append_line(results_path, to_json(rec).dump());
    done.push_back(std::move(rec));
    ++run.computed;
  }
  for (auto& th : pool) th.join();

  std::sort(done.begin(), done.end(), record_less);
  const auto csv = scores_csv(done, config);
  write_out(config.out_dir, "scores.csv", csv);
  write_out(config.out_dir, "scores.jsonl", scores_jsonl(csv));
  run.records = std::move(done);
  if (error) std::rethrow_exception(error);
  return run;
}

std::vector<RankRow> run_rank(const RunConfig& config, const std::vector<ScoreRecord>& results,
                              std::shared_ptr<ChatClient> client) {
  config.check();
  const auto maps = maps_by_id(config.maps_dir);
  const auto corpus = checked_corpus(config, maps);
  const std::uint64_t seed = config.episode.rng_seed;

  std::map<std::pair<std::string, std::string>, const ScoreRecord*> known;
  for (const auto& r : results) {
    if (r.model == "utility" && r.seed == seed) known[{r.map_id, r.explanation_id}] = &r;
  }
  std::unique_ptr<Translator> translator;

  std::map<std::string, RankRow> rows;
  for (const auto& e : corpus) {
    const auto& expl = e.explanation;
    const GridMap& world = maps.at(expl.map_id);
    double u = 0.0;
    if (auto it = known.find({expl.map_id, expl.id}); it != known.end()) {
      u = it->second->raw(config.utility);
    } else {
      if (!translator) {
        if (config.translator.kind == TranslatorKind::Remote) client = client_for(config, client);
        translator = make_translator(translator_config(config), config.script, client);
      }
      const auto r = evaluate(expl, world, *translator, config.episode, config.attempts,
                              config.parallelism);
      u = utility(r, config.utility);
    }
    auto& row = rows[expl.map_id];
    row.map_id = expl.map_id;
    row.explanation_ids.push_back(expl.id);
    row.utilities.push_back(u);
  }

  std::vector<RankRow> out;
  for (auto& [id, row] : rows) {
    if (row.utilities.size() >= 3) {
      std::vector<MapScore> ms;
      for (std::size_t i = 0; i < row.utilities.size(); ++i) {
        ms.push_back({row.explanation_ids[i], row.map_id, row.utilities[i]});
      }
      row.bins = bin_quality(ms);
    }
    const auto p = speaker_distribution(
        Eigen::Map<const Eigen::VectorXd>(row.utilities.data(), static_cast<Eigen::Index>(row.utilities.size())),
        config.speaker);
    row.speaker.assign(p.data(), p.data() + p.size());
    out.push_back(std::move(row));
  }

  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    write_out(config.out_dir, "bins.csv", bins_csv(out));
    write_out(config.out_dir, "speaker.csv", speaker_csv(out, config.speaker));
  }
  return out;
}

std::string bins_csv(const std::vector<RankRow>& rows) {
  std::string out = "map_id,bin,selected_explanation_id,size,members\n";
  for (const auto& row : rows) {
    for (const auto& b : row.bins) {
      std::string members;
      for (const auto& m : b.members) members += (members.empty() ? "" : ";") + m;
      out += csv_field(row.map_id) + ',' + std::string(to_string(b.label)) + ',' +
             csv_field(b.selected_explanation_id) + ',' + std::to_string(b.members.size()) + ',' +
             csv_field(members) + '\n';
    }
  }
  return out;
}

std::string speaker_csv(const std::vector<RankRow>& rows, const SpeakerParams& sp) {
  std::string out = "map_id,explanation_id,utility,probability,lambda\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.explanation_ids.size(); ++i) {
      out += csv_field(row.map_id) + ',' + csv_field(row.explanation_ids[i]) + ',' +
             num(row.utilities[i]) + ',' + num(row.speaker[i]) + ',' + num(sp.lambda) + '\n';
    }
  }
  return out;
}

namespace {

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : "NA"; }

}  // namespace

AnalysisRun run_analysis(const RunConfig& config, const std::vector<ScoreRecord>& results,
                         std::shared_ptr<ChatClient> client) {
  config.check();
  const auto maps = maps_by_id(config.maps_dir);
  const auto corpus = checked_corpus(config, maps);
  std::vector<GridMap> map_list;
  for (const auto& [id, m] : maps) map_list.push_back(m);
  const Lexicon& lex = default_lexicon();

  AnalysisRun run;
  run.report = corpus_stats(corpus, map_list, lex);

  const std::uint64_t seed = config.episode.rng_seed;
  std::map<std::pair<std::string, std::string>, double> known;
  for (const auto& r : results) {
    if (r.model == "utility" && r.seed == seed) known[{r.map_id, r.explanation_id}] = r.succ;
  }
  std::unique_ptr<Translator> translator;
  std::vector<double> succ;
  for (const auto& e : corpus) {
    const auto& expl = e.explanation;
    double s = 0.0;
    if (auto it = known.find({expl.map_id, expl.id}); it != known.end()) {
      s = it->second;
    } else {
      if (!translator) {
        if (config.translator.kind == TranslatorKind::Remote) client = client_for(config, client);
        translator = make_translator(translator_config(config), config.script, client);
      }
      s = evaluate(expl, maps.at(expl.map_id), *translator, config.episode, config.attempts,
                   config.parallelism)
              .succ;
    }
    succ.push_back(s);
    run.failures.emplace_back(e, classify_failures(expl, s, lex));
  }

  const auto& th = lex.thresholds;
  std::string& out = run.csv;
  out += "# lexicon_version=" + lex.version + "\n";
  out += "# lexicon_sha256=" + lex.hash + "\n";
  out += "# direction_overload_min_directions=" +
         std::to_string(th.direction_overload_min_directions) + "\n";
  out += "# overcomplicated_min_words=" + std::to_string(th.overcomplicated_min_words) + "\n";
  out += "# compressed_max_words=" + std::to_string(th.compressed_max_words) + "\n";
  out += "# failure_success_below=" + num(th.failure_success_below) + "\n";
  out += "# seed=" + std::to_string(seed) + " n=" + std::to_string(config.attempts) + "\n";
  out += "section,map_id,explanation_id,metric,value\n";

  auto row = [&](std::string_view section, std::string_view map, std::string_view expl,
                 std::string_view metric, const std::string& value) {
    out += std::string(section) + ',' + csv_field(map) + ',' + csv_field(expl) + ',' +
           std::string(metric) + ',' + value + '\n';
  };
  const auto& rep = run.report;
  for (const auto& m : rep.maps) {
    row("map", m.map_id, "", "explanations", std::to_string(m.explanations));
    row("map", m.map_id, "", "mean_words", num(m.mean_words));
    row("map", m.map_id, "", "shortest_path", std::to_string(m.metrics.shortest_path));
    row("map", m.map_id, "", "brittleness", num(m.metrics.brittleness));
    row("map", m.map_id, "", "openness", num(m.metrics.openness));
  }
  row("correlation", "", "", "rho_length_shortest_path", opt_num(rep.rho_length_shortest_path));
  row("correlation", "", "", "rho_length_brittleness", opt_num(rep.rho_length_brittleness));
  row("correlation", "", "", "rho_length_openness", opt_num(rep.rho_length_openness));
  row("strategy", "", "", "total", std::to_string(rep.total));
  row("strategy", "", "", "prop_value", num(rep.prop_value));
  row("strategy", "", "", "prop_low_policy", num(rep.prop_low_policy));
  row("strategy", "", "", "prop_high_policy", num(rep.prop_high_policy));
  row("strategy", "", "", "prop_mixed", num(rep.prop_mixed));
  for (const auto& [cond, mean] : rep.mean_path_length) {
    const std::string c(to_string(cond));
    row("condition", "", "", "mean_path_length_" + c, num(mean));
    row("condition", "", "", "n_" + c, std::to_string(rep.path_length_n.at(cond)));
  }
  for (std::size_t i = 0; i < run.failures.size(); ++i) {
    const auto& [entry, modes] = run.failures[i];
    const auto& ex = entry.explanation;
    row("explanation", ex.map_id, ex.id, "succ", num(succ[i]));
    row("explanation", ex.map_id, ex.id, "words", std::to_string(ex.word_count()));
    row("explanation", ex.map_id, ex.id, "direction_words",
        std::to_string(direction_word_count(ex, lex)));
    const auto code = code_keywords(ex, lex);
    row("explanation", ex.map_id, ex.id, "value", code.has_value ? "1" : "0");
    row("explanation", ex.map_id, ex.id, "low_policy", code.has_low_policy ? "1" : "0");
    row("explanation", ex.map_id, ex.id, "high_policy", code.has_high_policy ? "1" : "0");
    for (auto mode : modes) row("failure", ex.map_id, ex.id, to_string(mode), "1");
  }

  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    write_out(config.out_dir, "analysis.csv", out);
  }
  return run;
}

}  // namespace wayfinder
