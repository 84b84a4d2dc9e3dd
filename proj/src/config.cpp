#include "wayfinder/config.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"

#include <chrono>
#include <cmath>
#include <set>

namespace wayfinder {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(ActorKind kind) {
  switch (kind) {
    case ActorKind::Keyword: return "keyword";
    case ActorKind::Oracle: return "oracle";
    case ActorKind::Remote: return "remote";
  }
  return "?";
}

std::optional<ActorKind> parse_actor_kind(std::string_view name) {
  for (auto k : {ActorKind::Keyword, ActorKind::Oracle, ActorKind::Remote}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

ActorKind RunConfig::effective_actor() const {
  if (direct_actor) return *direct_actor;
  return translator.kind == TranslatorKind::Remote ? ActorKind::Remote : ActorKind::Keyword;
}

void RunConfig::check() const {
  episode.check();
  utility.check();
  translator.check();
  if (attempts < 1) throw std::invalid_argument("attempts (N) must be >= 1");
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  if (!std::isfinite(speaker.lambda) || speaker.lambda < 0) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  if (effective_actor() == ActorKind::Remote && (!translator.endpoint_url || !translator.model_name)) {
    throw std::invalid_argument("the remote actor needs endpoint_url and model_name");
  }
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["maps_dir"] = c.maps_dir;
  j["corpus"] = c.corpus;
  j["cache_dir"] = c.cache_dir;
  j["out_dir"] = c.out_dir;
  j["script"] = c.script;
  j["attempts"] = c.attempts;
  j["parallelism"] = c.parallelism;

  const auto& e = c.episode;
  j["episode"] = {{"budget", e.budget},
                  {"fov_radius", e.fov_radius},
                  {"max_replans", e.max_replans},
                  {"revisit_limit", e.revisit_limit},
                  {"stall_limit", e.stall_limit},
                  {"rho", e.rho},
                  {"seed", e.rng_seed},
                  {"epsilon", e.grounding.epsilon},
                  {"kappa", e.grounding.kappa},
                  {"goto_value", e.grounding.goto_value}};
  j["utility"] = {{"alpha", c.utility.alpha},
                  {"beta", c.utility.beta ? ordered_json(*c.utility.beta) : ordered_json()},
                  {"gamma", c.utility.gamma},
                  {"delta", c.utility.delta}};
  j["speaker"] = {{"lambda", c.speaker.lambda}};

  const auto& t = c.translator;
  ordered_json tj;
  tj["kind"] = to_string(t.kind);
  tj["endpoint_url"] = t.endpoint_url ? ordered_json(*t.endpoint_url) : ordered_json();
  tj["model"] = t.model_name ? ordered_json(*t.model_name) : ordered_json();
  tj["temperature"] = t.temperature;
  tj["max_samples"] = t.max_samples;
  tj["compiler_sees_map"] = t.compiler_sees_map;
  tj["max_in_flight"] = t.max_in_flight;
  tj["retry_attempts"] = t.retry.attempts;
  tj["retry_backoff_ms"] = t.retry.initial_backoff.count();
  j["translator"] = tj;
  j["direct_actor"] = c.direct_actor ? ordered_json(to_string(*c.direct_actor)) : ordered_json();
  return j;
}

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                    const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected an object");
  const std::set<std::string_view> known(keys);
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw Error(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j[key].is_null()) {
    out.reset();
  } else {
    out = j[key].get<T>();
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j, RunConfig c) {
  try {
    reject_unknown(j,
                   {"maps_dir", "corpus", "cache_dir", "out_dir", "script", "attempts",
                    "parallelism", "episode", "utility", "speaker", "translator", "direct_actor"},
                   "config");
    read(j, "maps_dir", c.maps_dir);
    read(j, "corpus", c.corpus);
    read(j, "cache_dir", c.cache_dir);
    read(j, "out_dir", c.out_dir);
    read(j, "script", c.script);
    read(j, "attempts", c.attempts);
    read(j, "parallelism", c.parallelism);

    if (j.contains("episode")) {
      const auto& e = j["episode"];
      reject_unknown(e,
                     {"budget", "fov_radius", "max_replans", "revisit_limit", "stall_limit", "rho",
                      "seed", "epsilon", "kappa", "goto_value"},
                     "config.episode");
      read(e, "budget", c.episode.budget);
      read(e, "fov_radius", c.episode.fov_radius);
      read(e, "max_replans", c.episode.max_replans);
      read(e, "revisit_limit", c.episode.revisit_limit);
      read(e, "stall_limit", c.episode.stall_limit);
      read(e, "rho", c.episode.rho);
      read(e, "seed", c.episode.rng_seed);
      read(e, "epsilon", c.episode.grounding.epsilon);
      read(e, "kappa", c.episode.grounding.kappa);
      read(e, "goto_value", c.episode.grounding.goto_value);
    }
    if (j.contains("utility")) {
      const auto& u = j["utility"];
      reject_unknown(u, {"alpha", "beta", "gamma", "delta"}, "config.utility");
      read(u, "alpha", c.utility.alpha);
      read_optional(u, "beta", c.utility.beta);
      read(u, "gamma", c.utility.gamma);
      read(u, "delta", c.utility.delta);
    }
    if (j.contains("speaker")) {
      reject_unknown(j["speaker"], {"lambda"}, "config.speaker");
      read(j["speaker"], "lambda", c.speaker.lambda);
    }
    if (j.contains("translator")) {
      const auto& t = j["translator"];
      reject_unknown(t,
                     {"kind", "endpoint_url", "model", "temperature", "max_samples",
                      "compiler_sees_map", "max_in_flight", "retry_attempts", "retry_backoff_ms"},
                     "config.translator");
      if (t.contains("kind")) {
        const auto kind = parse_translator_kind(t["kind"].get<std::string>());
        if (!kind) throw Error("config.translator.kind: unknown translator");
        c.translator.kind = *kind;
      }
      read_optional(t, "endpoint_url", c.translator.endpoint_url);
      read_optional(t, "model", c.translator.model_name);
      read(t, "temperature", c.translator.temperature);
      read(t, "max_samples", c.translator.max_samples);
      read(t, "compiler_sees_map", c.translator.compiler_sees_map);
      read(t, "max_in_flight", c.translator.max_in_flight);
      read(t, "retry_attempts", c.translator.retry.attempts);
      if (t.contains("retry_backoff_ms")) {
        c.translator.retry.initial_backoff =
            std::chrono::milliseconds(t["retry_backoff_ms"].get<long>());
      }
    }
    if (j.contains("direct_actor")) {
      if (j["direct_actor"].is_null()) {
        c.direct_actor.reset();
      } else {
        c.direct_actor = parse_actor_kind(j["direct_actor"].get<std::string>());
        if (!c.direct_actor) throw Error("config.direct_actor: unknown actor");
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  const auto j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error("config file is not valid JSON: " + path);
  return run_config_from_json(j, std::move(base));
}

}  // namespace wayfinder
