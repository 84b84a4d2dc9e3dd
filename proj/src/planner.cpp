#include "wayfinder/planner.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/seed.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <deque>
#include <limits>
#include <sstream>

namespace wayfinder {

std::optional<Position> PlannerState::known_goal() const {
  for (int r = 0; r < height(); ++r) {
    for (int c = 0; c < width(); ++c) {
      if (known(r, c) == Seen::Goal) return Position{r, c};
    }
  }
  return std::nullopt;
}

PlannerState initial_state(int width, int height, int fov_radius) {
  PlannerState s;
  s.known = Grid<Seen>::Constant(height, width, Seen::Unknown);
  s.visit_counts = Grid<int>::Zero(height, width);
  s.fov_radius = fov_radius;
  return s;
}

PlannerState ground_state(const Observation& observation, PlannerState previous) {
  if (!in_bounds(previous.known, observation.center)) {
    throw InconsistentObservation("observation centered outside the map");
  }
  const int size = static_cast<int>(observation.window.rows());
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const Seen seen = observation.window(r, c);
      if (seen == Seen::Unknown) continue;
      const Position p{observation.center.row + r - observation.radius,
                       observation.center.col + c - observation.radius};
      if (!in_bounds(previous.known, p)) continue;
      Seen& cell = previous.known(p.row, p.col);
      if (cell != Seen::Unknown && cell != seen) {
        throw InconsistentObservation("cell (" + std::to_string(p.row) + ", " +
                                      std::to_string(p.col) + ") changed state");
      }
      cell = seen;
    }
  }
  previous.position = observation.center;
  previous.steps_taken = observation.steps_taken;
  ++previous.visit_counts(observation.center.row, observation.center.col);
  return previous;
}

void EpisodeParams::check() const {
  if (budget < 0) throw std::invalid_argument("budget must be >= 1 (or 0 for the default)");
  if (fov_radius < 1) throw std::invalid_argument("fov_radius must be >= 1");
  if (max_replans < 0) throw std::invalid_argument("max_replans must be >= 0");
  if (revisit_limit < 1 || stall_limit < 1) {
    throw std::invalid_argument("revisit and stall limits must be >= 1");
  }
  if (rho < 0.0) throw std::invalid_argument("rho must be >= 0");
}

int effective_budget(const EpisodeParams& params, const GridMap& world) {
  if (params.budget > 0) return params.budget;
  const int sp = shortest_path_length(world, world.start(), world.goal()).value_or(0);
  return std::max(50, 4 * sp);
}

GuidanceRun start_run(const CompilationRecord& record, const GridMap& world,
                      const PlannerState& state, const GroundingParams& params) {
  GuidanceRun run;
  run.visits = Grid<int>::Zero(world.height(), world.width());
  const GuidanceProgram empty;
  const GuidanceProgram* program = record.ok() ? &record.guidance() : &empty;
  if (!record.ok() || has_errors(validate(*program, world))) {
    run.invalid = true;
    program = &empty;
  }
  run.guidance = ground(*program, world.width(), world.height(), world.start(), params);
  run.best_value = run.guidance.value(state.position);
  return run;
}

namespace {

bool condition_holds(const Condition& condition, const PlannerState& state) {
  if (std::holds_alternative<SeeGoal>(condition)) {
    const auto goal = state.known_goal();
    return goal && std::max(std::abs(goal->row - state.position.row),
                            std::abs(goal->col - state.position.col)) <= state.fov_radius;
  }
  if (const auto* wall = std::get_if<SeeWall>(&condition)) {
    return state.known_wall(offset(state.position, wall->direction));
  }
  return std::get<AtRegion>(condition).region.contains(state.position);
}

std::optional<Action> toward(Position from, Position target, const PlannerState& state) {
  if (from == target) return std::nullopt;
  std::optional<Action> best;
  int best_dist = manhattan(from, target);
  for (Action a : kActions) {
    const Position next = offset(from, a);
    if (state.known_wall(next)) continue;
    const int d = manhattan(next, target);
    if (d < best_dist) {
      best_dist = d;
      best = a;
    }
  }
  return best;
}

/// Once the goal has been seen the listener heads for it along the shortest
/// route through cells not known to be walls.
std::optional<Action> toward_known_goal(const PlannerState& state) {
  const auto goal = state.known_goal();
  if (!goal) return std::nullopt;
  Grid<int> dist = Grid<int>::Constant(state.height(), state.width(), -1);
  std::deque<Position> queue{*goal};
  dist(goal->row, goal->col) = 0;
  while (!queue.empty()) {
    const Position p = queue.front();
    queue.pop_front();
    for (Action a : kActions) {
      const Position q = offset(p, a);
      if (state.known_wall(q) || dist(q.row, q.col) >= 0) continue;
      dist(q.row, q.col) = dist(p.row, p.col) + 1;
      queue.push_back(q);
    }
  }
  std::optional<Action> best;
  int best_dist = 0;
  for (Action a : kActions) {
    const Position q = offset(state.position, a);
    if (state.known_wall(q) || dist(q.row, q.col) < 0) continue;
    if (!best || dist(q.row, q.col) < best_dist) {
      best = a;
      best_dist = dist(q.row, q.col);
    }
  }
  return best;
}

Action value_greedy(const GuidanceRun& run, const PlannerState& state, double rho) {
  if (auto a = toward_known_goal(state)) return *a;
  std::optional<Action> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Action a : kActions) {
    const Position next = offset(state.position, a);
    if (state.known_wall(next)) continue;
    const double score = run.guidance.value(next) - rho * state.visits(next);
    if (!best || score > best_score) {
      best = a;
      best_score = score;
    }
  }
  if (!best) throw NoLegalAction("every neighbour of the listener is a known wall");
  return *best;
}

bool on_track(const GuidanceRun& run, const PlannerState& state) {
  return !run.guidance.cursor_exhausted() && run.guidance.expected().cell == state.position;
}

}  // namespace

Decision plan(GuidanceRun& run, const PlannerState& state, double rho, bool value_only) {
  if (!value_only) {
    if (run.burst) {
      const Action d = run.burst->direction;
      if (!state.known_wall(offset(state.position, d))) {
        if (--run.burst->count == 0) run.burst.reset();
        return {d, ActionSource::Rule};
      }
      run.burst.reset();
    }
    for (const auto& rule : run.guidance.rules()) {
      if (!condition_holds(rule.condition, state)) continue;
      if (const auto* move = std::get_if<MoveStep>(&rule.response)) {
        if (state.known_wall(offset(state.position, move->direction))) continue;
        if (move->count > 1) run.burst = MoveStep{move->direction, move->count - 1};
        return {move->direction, ActionSource::Rule};
      }
      if (auto a = toward(state.position, std::get<GotoStep>(rule.response).target, state)) {
        return {*a, ActionSource::Rule};
      }
    }
    if (on_track(run, state)) {
      const Action d = run.guidance.expected().action;
      if (!state.known_wall(offset(state.position, d))) {
        run.guidance.advance();
        return {d, ActionSource::Policy};
      }
    }
  }
  return {value_greedy(run, state, rho), ActionSource::Value};
}

bool fail(const GuidanceRun& run, const PlannerState& state, const EpisodeParams& params) {
  if (run.invalid) return true;
  const auto& g = run.guidance;
  if (on_track(run, state) && state.known_wall(offset(state.position, g.expected().action))) {
    return true;
  }
  if (run.visits(state.position.row, state.position.col) > params.revisit_limit) return true;
  if (run.stall_steps >= params.stall_limit) return true;
  const bool at_goal = state.known_goal() == state.position;
  return g.cursor_exhausted() && !at_goal && !g.has_value_guidance() && g.rules().empty();
}

Attempt run_episode(const GridMap& world, const Explanation& explanation, Translator& translator,
                    const EpisodeParams& params, const StepObserver& on_step) {
  params.check();
  const int budget = effective_budget(params, world);
  Attempt attempt;
  attempt.explanation_id = explanation.id;
  attempt.map_id = world.id();
  attempt.seed = params.rng_seed;

  PlannerState state = ground_state(observe(world, world.start(), params.fov_radius, 0),
                                    initial_state(world.width(), world.height(), params.fov_radius));

  auto compile_next = [&](int sequence) {
    attempt.compilations.push_back(translator.compile(
        explanation, world, derive_seed(params.rng_seed, static_cast<std::uint64_t>(sequence)),
        sequence));
    return start_run(attempt.compilations.back(), world, state, params.grounding);
  };

  GuidanceRun run = compile_next(0);
  bool value_only = false;
  while (state.position != world.goal() && attempt.length < budget) {
    bool replanned = false;
    while (!value_only && fail(run, state, params)) {
      if (attempt.replans >= params.max_replans) {
        value_only = true;
        break;
      }
      ++attempt.replans;
      run = compile_next(attempt.replans);
      replanned = true;
    }

    const Decision decision = plan(run, state, params.rho, value_only);
    const Position next = step(world, state.position, decision.action);
    TrajectoryStep record{state.position, decision.action, next == state.position, replanned};
    attempt.trajectory.push_back(record);
    ++attempt.length;

    state = ground_state(observe(world, next, params.fov_radius, attempt.length), std::move(state));
    ++run.visits(next.row, next.col);
    const double v = run.guidance.value(next);
    if (v > run.best_value) {
      run.best_value = v;
      run.stall_steps = 0;
    } else if (decision.source == ActionSource::Policy) {
      run.stall_steps = 0;
    } else {
      ++run.stall_steps;
    }
    if (on_step) on_step(state, record);
  }
  attempt.success = state.position == world.goal();
  return attempt;
}

std::string ScriptedActor::next_action(const Explanation&, const Observation&,
                                       const std::vector<TrajectoryStep>& so_far) {
  return so_far.size() < tokens_.size() ? tokens_[so_far.size()] : std::string();
}

std::string OracleActor::next_action(const Explanation&, const Observation& observation,
                                     const std::vector<TrajectoryStep>&) {
  const auto path = shortest_path_actions(world_, observation.center, world_.goal());
  return path.empty() ? std::string() : std::string(to_token(path.front()));
}

std::string KeywordActor::next_action(const Explanation& explanation, const Observation&,
                                      const std::vector<TrajectoryStep>& so_far) {
  if (!moves_) {
    moves_.emplace();
    try {
      const auto program = keyword_translate(explanation, world_, lexicon_);
      for (const auto& s : program.policy_steps) {
        if (const auto* m = std::get_if<MoveStep>(&s)) moves_->insert(moves_->end(), m->count, m->direction);
      }
    } catch (const EmptyProgram&) {
    }
  }
  return so_far.size() < moves_->size() ? std::string(to_token((*moves_)[so_far.size()]))
                                        : std::string();
}

std::string RemoteActor::next_action(const Explanation& explanation,
                                     const Observation& observation,
                                     const std::vector<TrajectoryStep>& so_far) {
  std::ostringstream user;
  user << "Message from your partner:\n" << explanation.text << "\n\n";
  user << "What you see (@ you, G treasure, # wall, . floor, ? unknown):\n"
       << render_observation(observation) << "\n";
  user << "Steps taken: " << so_far.size();
  if (!so_far.empty()) {
    user << " (";
    const std::size_t from = so_far.size() > 10 ? so_far.size() - 10 : 0;
    if (from > 0) user << "..., ";
    for (std::size_t i = from; i < so_far.size(); ++i) {
      user << to_token(so_far[i].action) << (so_far[i].blocked ? " [blocked]" : "")
           << (i + 1 < so_far.size() ? ", " : "");
    }
    user << ")";
  }
  user << "\nReply with exactly one word: UP, DOWN, LEFT or RIGHT.";
  ChatRequest request{model_,
                      {{"system",
                        "You are navigating a maze to find a treasure. You only see a small area "
                        "around you."},
                       {"user", user.str()}},
                      temperature_,
                      std::nullopt};
  std::string reply = client_->complete(request);
  while (!reply.empty() && std::ispunct(static_cast<unsigned char>(reply.back()))) reply.pop_back();
  return reply;
}

Attempt direct_episode(const GridMap& world, const Explanation& explanation, DirectActor& actor,
                       const EpisodeParams& params) {
  params.check();
  const int budget = effective_budget(params, world);
  Attempt attempt;
  attempt.explanation_id = explanation.id;
  attempt.map_id = world.id();
  attempt.seed = params.rng_seed;
  Position pos = world.start();
  while (pos != world.goal() && attempt.length < budget) {
    const Observation obs = observe(world, pos, params.fov_radius, attempt.length);
    const auto action = parse_action(actor.next_action(explanation, obs, attempt.trajectory));
    const Position next = action ? step(world, pos, *action) : pos;
    // A rejected token is recorded as a blocked step in the default direction.
    attempt.trajectory.push_back({pos, action.value_or(Action::Up), next == pos, false});
    ++attempt.length;
    pos = next;
  }
  attempt.success = pos == world.goal();
  return attempt;
}

namespace {

char seen_char(Seen s) {
  switch (s) {
    case Seen::Wall: return '#';
    case Seen::Floor: return '.';
    case Seen::Goal: return 'G';
    case Seen::Unknown: break;
  }
  return '?';
}

}  // namespace

std::string render_observation(const Observation& observation) {
  std::string out;
  const int size = static_cast<int>(observation.window.rows());
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      out += (r == observation.radius && c == observation.radius)
                 ? '@'
                 : seen_char(observation.window(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string render_frame(const GridMap& world, const PlannerState& state) {
  std::string out;
  for (int r = 0; r < world.height(); ++r) {
    for (int c = 0; c < world.width(); ++c) {
      const Position p{r, c};
      if (p == state.position) {
        out += '@';
      } else if (state.at(p) == Seen::Unknown) {
        out += '~';
      } else {
        out += seen_char(state.at(p));
      }
    }
    out += '\n';
  }
  return out;
}

std::string trajectory_jsonl(const Attempt& attempt, const GridMap& world,
                             const EpisodeParams& params) {
  std::string out;
  nlohmann::ordered_json header;
  header["type"] = "header";
  header["map_id"] = attempt.map_id;
  header["explanation_id"] = attempt.explanation_id;
  header["seed"] = attempt.seed;
  header["fov_radius"] = params.fov_radius;
  header["budget"] = effective_budget(params, world);
  header["map"] = serialize_map(world);
  out += header.dump() + "\n";
  for (std::size_t i = 0; i < attempt.trajectory.size(); ++i) {
    const auto& s = attempt.trajectory[i];
    nlohmann::ordered_json j;
    j["type"] = "step";
    j["index"] = i;
    j["row"] = s.position.row;
    j["col"] = s.position.col;
    j["action"] = to_token(s.action);
    j["blocked"] = s.blocked;
    j["replanned"] = s.replanned;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json result;
  result["type"] = "result";
  result["success"] = attempt.success;
  result["length"] = attempt.length;
  result["replans"] = attempt.replans;
  out += result.dump() + "\n";
  return out;
}

TrajectoryLog parse_trajectory_jsonl(std::string_view text) {
  std::optional<TrajectoryLog> log;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type")) {
      throw Error("trajectory line " + std::to_string(line_no) + ": not a record");
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        if (log) throw Error("duplicate header");
        GridMap world = parse_map(j.at("map").get<std::string>());
        log.emplace(TrajectoryLog{std::move(world), j.at("explanation_id").get<std::string>(),
                                  j.at("fov_radius").get<int>(), j.at("budget").get<int>(), {},
                                  std::nullopt});
        continue;
      }
      if (!log) throw Error("missing header");
      if (type == "step") {
        const auto action = parse_action(j.at("action").get<std::string>());
        if (!action) throw Error("bad action");
        log->steps.push_back({Position{j.at("row").get<int>(), j.at("col").get<int>()}, *action,
                              j.at("blocked").get<bool>(), j.at("replanned").get<bool>()});
      } else if (type == "result") {
        Attempt a;
        a.map_id = log->world.id();
        a.explanation_id = log->explanation_id;
        a.success = j.at("success").get<bool>();
        a.length = j.at("length").get<int>();
        a.replans = j.at("replans").get<int>();
        a.trajectory = log->steps;
        log->result = std::move(a);
      } else {
        throw Error("unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error("trajectory line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("trajectory line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!log) throw Error("trajectory has no header record");
  return std::move(*log);
}

std::string replay_frames(const TrajectoryLog& log) {
  const GridMap& world = log.world;
  PlannerState state = ground_state(observe(world, world.start(), log.fov_radius, 0),
                                    initial_state(world.width(), world.height(), log.fov_radius));
  std::ostringstream out;
  out << "step 0 at (" << state.position.row << ", " << state.position.col << ")\n"
      << render_frame(world, state) << "\n";
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const auto& s = log.steps[i];
    if (s.position != state.position) {
      throw Error("trajectory step " + std::to_string(i) + " does not start where the previous "
                  "one ended");
    }
    const Position next = step(world, state.position, s.action);
    state = ground_state(observe(world, next, log.fov_radius, static_cast<int>(i) + 1),
                         std::move(state));
    out << "step " << i + 1 << ": " << to_token(s.action) << (s.blocked ? " (blocked)" : "")
        << (s.replanned ? " [replanned]" : "") << " -> (" << next.row << ", " << next.col
        << ")\n"
        << render_frame(world, state) << "\n";
  }
  if (log.result) {
    out << (log.result->success ? "reached the goal" : "did not reach the goal") << " in "
        << log.result->length << " steps, " << log.result->replans << " replans\n";
  }
  return out.str();
}

}  // namespace wayfinder
