#pragma once

#include "wayfinder/gridworld.hpp"
#include "wayfinder/guidance.hpp"
#include "wayfinder/translator.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace wayfinder {

/// The listener's accumulated knowledge of the world.
struct PlannerState {
  Position position;
  Grid<Seen> known;
  Grid<int> visit_counts;
  int steps_taken = 0;
  int fov_radius = 2;

  int width() const { return static_cast<int>(known.cols()); }
  int height() const { return static_cast<int>(known.rows()); }
  Seen at(Position p) const { return in_bounds(known, p) ? known(p.row, p.col) : Seen::Wall; }
  /// Out-of-bounds cells count as walls.
  bool known_wall(Position p) const { return at(p) == Seen::Wall; }
  std::optional<Position> known_goal() const;
  int visits(Position p) const { return in_bounds(visit_counts, p) ? visit_counts(p.row, p.col) : 0; }
};

/// Nothing known yet.
PlannerState initial_state(int width, int height, int fov_radius);

/// Merges an observation into `previous` and counts a visit at its center.
/// Throws InconsistentObservation when a resolved cell changes state.
PlannerState ground_state(const Observation& observation, PlannerState previous);

struct EpisodeParams {
  int budget = 0;  // 0 selects max(50, 4 * shortest path)
  int fov_radius = 2;
  int max_replans = 3;
  int revisit_limit = 3;  // M
  int stall_limit = 10;   // T
  double rho = 0.5;       // visit penalty
  std::uint64_t rng_seed = 0;
  GroundingParams grounding;

  void check() const;
};

int effective_budget(const EpisodeParams& params, const GridMap& world);

struct TrajectoryStep {
  Position position;  // before the action
  Action action = Action::Up;
  bool blocked = false;
  bool replanned = false;  // a recompilation happened just before this step
};

struct Attempt {
  std::string explanation_id;
  std::string map_id;
  int replans = 0;
  int length = 0;
  bool success = false;
  std::vector<TrajectoryStep> trajectory;
  std::uint64_t seed = 0;
  std::vector<CompilationRecord> compilations;
};

/// Where the action came from, in precedence order.
enum class ActionSource { Rule, Policy, Value };

/// Per-compilation bookkeeping consulted by plan and fail. Reset on every
/// recompilation; the PlannerState is not.
struct GuidanceRun {
  CompiledGuidance guidance;
  bool invalid = false;  // parse failure, empty program or validation error
  Grid<int> visits;      // visits since this compilation
  int stall_steps = 0;
  double best_value = 0.0;
  std::optional<MoveStep> burst;  // remaining moves of a multi-step rule response
};

/// Grounds a compilation record against the map; invalid records yield an
/// empty guidance with `invalid` set.
GuidanceRun start_run(const CompilationRecord& record, const GridMap& world,
                      const PlannerState& state, const GroundingParams& params);

struct Decision {
  Action action = Action::Up;
  ActionSource source = ActionSource::Value;
};

/// Action selection: first applicable rule, then the policy cursor when the
/// listener stands where the program expects, then value-greedy search with
/// a visit penalty. `value_only` restricts selection to the last tier.
/// Advances the cursor when the policy tier is used.
Decision plan(GuidanceRun& run, const PlannerState& state, double rho, bool value_only = false);

/// True when the current guidance should be abandoned.
bool fail(const GuidanceRun& run, const PlannerState& state, const EpisodeParams& params);

/// Called after every step with the post-step state.
using StepObserver = std::function<void(const PlannerState&, const TrajectoryStep&)>;

/// Simulates one attempt with replanning. Only RemoteUnavailable escapes.
Attempt run_episode(const GridMap& world, const Explanation& explanation, Translator& translator,
                    const EpisodeParams& params, const StepObserver& on_step = {});

/// Emits the next action token from the explanation and what the listener
/// currently sees.
class DirectActor {
 public:
  virtual ~DirectActor() = default;
  virtual std::string next_action(const Explanation& explanation, const Observation& observation,
                                  const std::vector<TrajectoryStep>& so_far) = 0;
};

/// Replays fixed tokens; past the end it emits "".
class ScriptedActor final : public DirectActor {
 public:
  explicit ScriptedActor(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {}
  std::string next_action(const Explanation&, const Observation&,
                          const std::vector<TrajectoryStep>& so_far) override;

 private:
  std::vector<std::string> tokens_;
};

/// Follows the BFS path from wherever it stands.
class OracleActor final : public DirectActor {
 public:
  explicit OracleActor(const GridMap& world) : world_(world) {}
  std::string next_action(const Explanation&, const Observation& observation,
                          const std::vector<TrajectoryStep>&) override;

 private:
  const GridMap& world_;
};

/// Reads the explanation's MOVE sequence out with the keyword extractor and
/// plays it blind.
class KeywordActor final : public DirectActor {
 public:
  KeywordActor(const GridMap& world, const Lexicon& lexicon = default_lexicon())
      : world_(world), lexicon_(lexicon) {}
  std::string next_action(const Explanation& explanation, const Observation&,
                          const std::vector<TrajectoryStep>& so_far) override;

 private:
  const GridMap& world_;
  const Lexicon& lexicon_;
  std::optional<std::vector<Action>> moves_;
};

/// Asks a chat model for the next action token.
class RemoteActor final : public DirectActor {
 public:
  RemoteActor(std::shared_ptr<ChatClient> client, std::string model, double temperature)
      : client_(std::move(client)), model_(std::move(model)), temperature_(temperature) {}
  std::string next_action(const Explanation& explanation, const Observation& observation,
                          const std::vector<TrajectoryStep>& so_far) override;

 private:
  std::shared_ptr<ChatClient> client_;
  std::string model_;
  double temperature_;
};

/// Episode without guidance programs or replanning: the actor picks every
/// action; unparseable tokens are no-op steps.
Attempt direct_episode(const GridMap& world, const Explanation& explanation, DirectActor& actor,
                       const EpisodeParams& params);

/// Window text: `@` listener, `G` goal, `#` wall, `.` floor, `?` unknown.
std::string render_observation(const Observation& observation);

/// Full-map frame: cells the listener has seen are drawn, the rest is `~`.
std::string render_frame(const GridMap& world, const PlannerState& state);

/// Line-delimited trajectory log: a header record carrying the map, one
/// record per step, and a closing result record.
std::string trajectory_jsonl(const Attempt& attempt, const GridMap& world,
                             const EpisodeParams& params);

struct TrajectoryLog {
  GridMap world;
  std::string explanation_id;
  int fov_radius = 2;
  int budget = 0;
  std::vector<TrajectoryStep> steps;
  std::optional<Attempt> result;
};

/// Throws Error on malformed input.
TrajectoryLog parse_trajectory_jsonl(std::string_view text);

/// ASCII frames, one per state from the start to the final position.
std::string replay_frames(const TrajectoryLog& log);

}  // namespace wayfinder
