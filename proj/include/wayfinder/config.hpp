#pragma once

#include "wayfinder/planner.hpp"
#include "wayfinder/scoring.hpp"
#include "wayfinder/translator.hpp"

#include <json.hpp>

#include <string>

namespace wayfinder {

enum class ActorKind { Keyword, Oracle, Remote };

std::string_view to_string(ActorKind kind);
std::optional<ActorKind> parse_actor_kind(std::string_view name);

/// Everything a batch run depends on. Serialized as JSON.
struct RunConfig {
  std::string maps_dir;
  std::string corpus;
  std::string cache_dir;
  std::string out_dir;
  std::string script;  // scripted translator fixture
  EpisodeParams episode;
  UtilityParams utility;
  SpeakerParams speaker;
  TranslatorConfig translator;
  std::optional<ActorKind> direct_actor;  // unset: remote for a remote translator, else keyword
  int attempts = 10;                      // N
  int parallelism = 1;

  ActorKind effective_actor() const;
  /// Throws std::invalid_argument on a violated invariant.
  void check() const;
};

/// The API key is never written out.
nlohmann::ordered_json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});

}  // namespace wayfinder
