#include "support.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/guidance.hpp"
#include "wayfinder/hashing.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace wayfinder;
using wayfinder::test::fixture_map;

namespace {

bool has_code(const std::vector<Diagnostic>& ds, DiagnosticCode code) {
  for (const auto& d : ds) {
    if (d.code == code) return true;
  }
  return false;
}

}  // namespace

TEST(ParseProgram, PolicyAndValue) {
  const auto p = parse_program("POLICY\nMOVE RIGHT 2\nMOVE DOWN 2\nVALUE\nREGION 3 1 3 1 10");
  ASSERT_EQ(p.policy_steps.size(), 2u);
  ASSERT_EQ(p.value_annotations.size(), 1u);
  EXPECT_EQ(std::get<MoveStep>(p.policy_steps[0]), (MoveStep{Action::Right, 2}));
  EXPECT_EQ(p.value_annotations[0].region, (Region{3, 1, 3, 1}));
  EXPECT_EQ(p.value_annotations[0].value, 10.0);
}

TEST(ParseProgram, UnknownDirectionIsPositioned) {
  try {
    parse_program("MOVE SIDEWAYS 1");
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 1);
    EXPECT_EQ(e.col(), 6);
  }
}

TEST(ParseProgram, EmptyTextIsEmptyProgram) {
  EXPECT_THROW(parse_program(""), EmptyProgram);
  EXPECT_THROW(parse_program("# only a comment\n\n"), EmptyProgram);
}

TEST(ParseProgram, ErrorsCarryLineAndColumn) {
  try {
    parse_program("POLICY\nMOVE UP 1\nMOVE UP x\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.col(), 9);
  }
  try {
    parse_program("VALUE\nREGION 1 2 3\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(ParseProgram, KeywordsAreCaseSensitive) {
  EXPECT_THROW(parse_program("POLICY\nmove UP 1\n"), SyntaxError);
}

TEST(ParseProgram, CommentsAndRules) {
  const auto p = parse_program(
      "RULES # contingencies\nIF SEE GOAL THEN MOVE LEFT 1\nIF SEE WALL UP THEN GOTO 2 3\n"
      "IF AT 0 0 1 1 THEN MOVE DOWN 2\n");
  ASSERT_EQ(p.rules.size(), 3u);
  EXPECT_TRUE(std::holds_alternative<SeeGoal>(p.rules[0].condition));
  EXPECT_EQ(std::get<SeeWall>(p.rules[1].condition).direction, Action::Up);
  EXPECT_EQ(std::get<GotoStep>(p.rules[1].response).target, (Position{2, 3}));
  EXPECT_EQ(std::get<AtRegion>(p.rules[2].condition).region, (Region{0, 0, 1, 1}));
}

TEST(ParseProgram, SectionWithoutStatementsIsAnError) {
  EXPECT_THROW(parse_program("POLICY\nVALUE\nREGION 0 0 0 0 1\n"), SyntaxError);
}

TEST(Serialize, GoldenCorpusRoundTrips) {
  int n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(wayfinder::test::fixture("programs"))) {
    const std::string text = read_file(entry.path().string());
    const auto p = parse_program(text);
    EXPECT_EQ(serialize_program(p), text) << entry.path();
    EXPECT_EQ(parse_program(serialize_program(p)), p) << entry.path();
    ++n;
  }
  EXPECT_EQ(n, 30);
}

TEST(Serialize, RealLiteralsRoundTripExactly) {
  GuidanceProgram p;
  p.value_annotations.push_back({{0, 0, 0, 0}, 0.1});
  p.value_annotations.push_back({{1, 1, 2, 2}, -1e-7});
  EXPECT_EQ(parse_program(serialize_program(p)), p);
}

TEST(Validate, CorridorOracleIsClean) {
  const auto m = fixture_map("corridor5");
  EXPECT_TRUE(validate(parse_program("MOVE RIGHT 2\nMOVE DOWN 2\nMOVE LEFT 2\n"), m).empty());
}

TEST(Validate, Displacement) {
  const auto ds = validate(parse_program("MOVE RIGHT 10\n"), fixture_map("corridor5"));
  EXPECT_TRUE(has_code(ds, DiagnosticCode::OutOfBoundsDisplacement));
  EXPECT_TRUE(has_errors(ds));
}

TEST(Validate, RegionOutOfBounds) {
  const auto ds = validate(parse_program("VALUE\nREGION 9 9 9 9 1\n"), fixture_map("corridor5"));
  EXPECT_TRUE(has_code(ds, DiagnosticCode::RegionOutOfBounds));
  EXPECT_TRUE(has_errors(ds));
}

TEST(Ground, PolicyPriorEpsilonRule) {
  const auto m = fixture_map("corridor5");
  const auto g = ground(parse_program("MOVE RIGHT 2\n"), m.width(), m.height(), m.start());
  for (Position p : {Position{1, 1}, Position{1, 2}}) {
    const auto pi = g.policy_prior(p);
    EXPECT_NEAR(pi(index_of(Action::Right)), 0.925, 1e-12);
    EXPECT_NEAR(pi(index_of(Action::Up)), 0.025, 1e-12);
    EXPECT_NEAR(pi(index_of(Action::Down)), 0.025, 1e-12);
    EXPECT_NEAR(pi(index_of(Action::Left)), 0.025, 1e-12);
  }
  const auto pi = g.policy_prior({3, 3});
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(pi(k), 0.25);
}

TEST(Ground, ValueFalloff) {
  const auto m = fixture_map("corridor5");
  const auto g = ground(parse_program("VALUE\nREGION 3 1 3 1 10\n"), m.width(), m.height(), m.start());
  EXPECT_DOUBLE_EQ(g.value({3, 1}), 10.0);
  EXPECT_DOUBLE_EQ(g.value({3, 3}), 8.0);
  EXPECT_DOUBLE_EQ(g.value({1, 1}), 8.0);
  EXPECT_TRUE(g.has_value_guidance());
}

TEST(Ground, NoValueSectionMeansZeroValue) {
  const auto m = fixture_map("corridor5");
  const auto g = ground(parse_program("MOVE RIGHT 1\n"), m.width(), m.height(), m.start());
  EXPECT_TRUE((g.value_map() == 0.0).all());
  EXPECT_FALSE(g.has_value_guidance());
}

TEST(Ground, GotoBecomesGoalValue) {
  const auto m = fixture_map("corridor5");
  const auto g = ground(parse_program("GOTO 3 3\n"), m.width(), m.height(), m.start());
  EXPECT_DOUBLE_EQ(g.value({3, 3}), 10.0);
  EXPECT_TRUE(g.trace().empty());
}

TEST(Ground, IsDeterministic) {
  const auto m = fixture_map("rooms");
  const auto p = parse_program("MOVE DOWN 3\nMOVE RIGHT 2\nVALUE\nREGION 8 8 9 9 5\n");
  EXPECT_EQ(ground(p, m.width(), m.height(), m.start()), ground(p, m.width(), m.height(), m.start()));
}

TEST(Ground, CursorTracksSteps) {
  const auto m = fixture_map("corridor5");
  auto g = ground(parse_program("MOVE RIGHT 2\nMOVE DOWN 1\n"), m.width(), m.height(), m.start());
  ASSERT_EQ(g.trace().size(), 3u);
  EXPECT_EQ(g.current_step(), 0u);
  EXPECT_EQ(g.remaining_in_step(), 2);
  g.advance();
  g.advance();
  EXPECT_EQ(g.current_step(), 1u);
  EXPECT_EQ(g.expected().cell, (Position{1, 3}));
  g.advance();
  EXPECT_TRUE(g.cursor_exhausted());
  g.reset_cursor();
  EXPECT_EQ(g.cursor(), 0u);
}
