#include "support.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/planner.hpp"

#include <gtest/gtest.h>

using namespace wayfinder;
using wayfinder::test::fixture_map;

namespace {

PlannerState first_look(const GridMap& m, int fov = 2) {
  return ground_state(observe(m, m.start(), fov), initial_state(m.width(), m.height(), fov));
}

CompilationRecord scripted(const GridMap& m, const std::string& text) {
  return ScriptedTranslator({text}).compile({"x", m.id(), ""}, m, 0);
}

EpisodeParams with_budget(int budget) {
  EpisodeParams p;
  p.budget = budget;
  return p;
}

}  // namespace

TEST(GroundState, FirstObservationResolvesWindowOnly) {
  const auto m = fixture_map("rooms");
  const auto obs = observe(m, m.start(), 2);
  const auto s = ground_state(obs, initial_state(m.width(), m.height(), 2));
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      EXPECT_EQ(s.known(r, c), obs.at({r, c})) << r << "," << c;
    }
  }
  EXPECT_EQ(s.visits(m.start()), 1);
}

TEST(GroundState, UnionOfOverlappingWindows) {
  const auto m = fixture_map("long-corridor");
  auto s = first_look(m);
  const Position next = step(m, m.start(), Action::Right);
  const auto o2 = observe(m, next, 2, 1);
  s = ground_state(o2, s);
  const auto o1 = observe(m, m.start(), 2);
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      const Seen expect = o2.at({r, c}) != Seen::Unknown ? o2.at({r, c}) : o1.at({r, c});
      EXPECT_EQ(s.known(r, c), expect);
    }
  }
}

TEST(GroundState, GoalStaysKnown) {
  const auto m = fixture_map("corridor5");
  auto s = ground_state(observe(m, {3, 2}, 1), initial_state(5, 5, 1));
  ASSERT_EQ(s.known_goal(), m.goal());
  s = ground_state(observe(m, {1, 3}, 1), s);
  EXPECT_EQ(s.known_goal(), m.goal());
}

TEST(GroundState, ContradictionThrows) {
  const auto a = fixture_map("corridor5");
  const auto b = fixture_map("open-room");
  const auto s = first_look(a, 1);
  EXPECT_THROW(ground_state(observe(b, {1, 1}, 1), s), InconsistentObservation);
}

TEST(Plan, OracleStartsRight) {
  const auto m = fixture_map("corridor5");
  const auto s = first_look(m);
  auto run = start_run(OracleTranslator().compile({"o", m.id(), ""}, m, 0), m, s, {});
  const auto d = plan(run, s, 0.5);
  EXPECT_EQ(d.action, Action::Right);
  EXPECT_EQ(d.source, ActionSource::Policy);
}

TEST(Plan, BlockedCursorFallsBackToValueTier) {
  const auto m = fixture_map("corridor5");
  const auto s = first_look(m);
  auto run = start_run(scripted(m, "MOVE UP 1\n"), m, s, {});
  const auto d = plan(run, s, 0.5);
  EXPECT_EQ(d.action, Action::Right);
  EXPECT_EQ(d.source, ActionSource::Value);
}

TEST(Plan, RulesPreemptTheCursor) {
  const auto m = fixture_map("corridor5");
  PlannerState s = ground_state(observe(m, {3, 2}, 2), initial_state(5, 5, 2));
  auto run = start_run(scripted(m, "POLICY\nMOVE RIGHT 1\nRULES\nIF SEE GOAL THEN MOVE LEFT 1\n"), m, s, {});
  const auto d = plan(run, s, 0.5);
  EXPECT_EQ(d.action, Action::Left);
  EXPECT_EQ(d.source, ActionSource::Rule);
}

TEST(Fail, ParseFailureFailsImmediately) {
  const auto m = fixture_map("corridor5");
  const auto s = first_look(m);
  const auto run = start_run(scripted(m, "gibberish"), m, s, {});
  EXPECT_TRUE(run.invalid);
  EXPECT_TRUE(fail(run, s, {}));
}

TEST(Fail, PrescribedWallFails) {
  const auto m = fixture_map("corridor5");
  const auto s = first_look(m);
  const auto run = start_run(scripted(m, "MOVE UP 3\n"), m, s, {});
  EXPECT_TRUE(fail(run, s, {}));
}

TEST(Fail, OracleNeverFails) {
  for (const char* id : {"corridor5", "open-room", "spiral", "rooms", "trap"}) {
    const auto m = fixture_map(id);
    EpisodeParams params;
    auto s = first_look(m);
    auto run = start_run(OracleTranslator().compile({"o", m.id(), ""}, m, 0), m, s, {});
    int guard = 0;
    while (s.position != m.goal() && guard++ < 200) {
      ASSERT_FALSE(fail(run, s, params)) << id << " at step " << s.steps_taken;
      const auto d = plan(run, s, params.rho);
      const Position next = step(m, s.position, d.action);
      s.position = next;
      ++s.steps_taken;
      s = ground_state(observe(m, next, 2, s.steps_taken), s);
    }
    EXPECT_EQ(s.position, m.goal()) << id;
  }
}

TEST(RunEpisode, OracleCorridor) {
  const auto m = fixture_map("corridor5");
  OracleTranslator t;
  const auto a = run_episode(m, {"o", m.id(), ""}, t, with_budget(50));
  EXPECT_TRUE(a.success);
  EXPECT_EQ(a.length, 6);
  EXPECT_EQ(a.replans, 0);
  EXPECT_EQ(a.trajectory.size(), 6u);
  EXPECT_EQ(a.compilations.size(), 1u);
}

TEST(RunEpisode, OneBadCompilationThenOracle) {
  const auto m = fixture_map("corridor5");
  ScriptedTranslator t({"MOVE UP 3\n", serialize_program(oracle_translate(m))});
  const auto a = run_episode(m, {"s", m.id(), ""}, t, with_budget(50));
  EXPECT_TRUE(a.success);
  EXPECT_EQ(a.replans, 1);
  EXPECT_LE(a.length, 8);
  EXPECT_TRUE(a.trajectory.front().replanned);
}

TEST(RunEpisode, EmptyProgramsExhaustReplans) {
  const auto m = fixture_map("corridor5");
  ScriptedTranslator t({""});
  EpisodeParams p = with_budget(10);
  p.max_replans = 2;
  const auto a = run_episode(m, {"s", m.id(), ""}, t, p);
  EXPECT_EQ(a.replans, 2);
  EXPECT_LE(a.length, 10);
  EXPECT_EQ(a.compilations.size(), 3u);
  // The goal is inside the first window, so the fallback walks the corridor.
  EXPECT_TRUE(a.success);
  EXPECT_EQ(a.length, 6);
}

TEST(RunEpisode, DefaultBudget) {
  EXPECT_EQ(effective_budget({}, fixture_map("corridor5")), 50);
  EXPECT_EQ(effective_budget({}, fixture_map("spiral")), 88);
  EXPECT_EQ(effective_budget(with_budget(7), fixture_map("spiral")), 7);
}

TEST(RunEpisode, StepObserverSeesEveryStep) {
  const auto m = fixture_map("zigzag");
  OracleTranslator t;
  int calls = 0;
  const auto a = run_episode(m, {"o", m.id(), ""}, t, {},
                             [&](const PlannerState& s, const TrajectoryStep&) {
                               ++calls;
                               EXPECT_EQ(s.steps_taken, calls);
                             });
  EXPECT_EQ(calls, a.length);
}

TEST(RunEpisode, Deterministic) {
  const auto m = fixture_map("rooms");
  KeywordTranslator t;
  const Explanation e{"k", m.id(), "go down 3 then right 4, the treasure is in the bottom right"};
  EpisodeParams p;
  p.rng_seed = 11;
  const auto a = run_episode(m, e, t, p);
  const auto b = run_episode(m, e, t, p);
  EXPECT_EQ(trajectory_jsonl(a, m, p), trajectory_jsonl(b, m, p));
}

TEST(DirectEpisode, ScriptedActor) {
  const auto m = fixture_map("corridor5");
  ScriptedActor actor({"RIGHT", "RIGHT", "DOWN", "DOWN", "LEFT", "LEFT"});
  const auto a = direct_episode(m, {"d", m.id(), ""}, actor, with_budget(50));
  EXPECT_TRUE(a.success);
  EXPECT_EQ(a.length, 6);
  EXPECT_EQ(a.replans, 0);
}

TEST(DirectEpisode, GarbageIsNoOp) {
  const auto m = fixture_map("corridor5");
  ScriptedActor actor(std::vector<std::string>(100, "jump"));
  const auto a = direct_episode(m, {"d", m.id(), ""}, actor, with_budget(20));
  EXPECT_FALSE(a.success);
  EXPECT_EQ(a.length, 20);
  for (const auto& s : a.trajectory) EXPECT_EQ(s.position, m.start());
}

TEST(DirectEpisode, OracleActorOpenRoom) {
  const auto m = fixture_map("open-room");
  OracleActor actor(m);
  const auto a = direct_episode(m, {"d", m.id(), ""}, actor, {});
  EXPECT_TRUE(a.success);
  EXPECT_EQ(a.length, 4);
}

TEST(DirectEpisode, KeywordActorPlaysMoves) {
  const auto m = fixture_map("corridor5");
  KeywordActor actor(m);
  const auto a = direct_episode(m, {"d", m.id(), "right 2, down 2, left 2"}, actor, {});
  EXPECT_TRUE(a.success);
  EXPECT_EQ(a.length, 6);
}

TEST(Trajectory, RoundTripAndReplay) {
  const auto m = fixture_map("corridor5");
  OracleTranslator t;
  EpisodeParams p;
  p.rng_seed = 5;
  const auto a = run_episode(m, {"o", m.id(), ""}, t, p);
  const auto log = parse_trajectory_jsonl(trajectory_jsonl(a, m, p));
  EXPECT_EQ(log.world, m);
  EXPECT_EQ(log.steps.size(), 6u);
  ASSERT_TRUE(log.result);
  EXPECT_EQ(log.result->length, 6);
  EXPECT_TRUE(log.result->success);

  const std::string frames = replay_frames(log);
  std::size_t count = 0;
  for (std::size_t at = frames.find("step "); at != std::string::npos; at = frames.find("step ", at + 1)) ++count;
  EXPECT_EQ(count, 7u);
  EXPECT_NE(frames.find('~'), std::string::npos);
  EXPECT_NE(frames.find('@'), std::string::npos);
}

TEST(Trajectory, MalformedInputThrows) {
  EXPECT_THROW(parse_trajectory_jsonl(""), Error);
  EXPECT_THROW(parse_trajectory_jsonl("{not json}\n"), Error);
}

TEST(Render, FogShowsOnlySeenCells) {
  const auto m = fixture_map("spiral");
  const auto s = first_look(m);
  const std::string frame = render_frame(m, s);
  EXPECT_NE(frame.find('~'), std::string::npos);
  EXPECT_EQ(frame.find('G'), std::string::npos);
}
