#pragma once

#include "wayfinder/grid.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace wayfinder {

/// Inclusive cell rectangle.
struct Region {
  int r0 = 0;
  int c0 = 0;
  int r1 = 0;
  int c1 = 0;

  bool contains(Position p) const { return p.row >= r0 && p.row <= r1 && p.col >= c0 && p.col <= c1; }
  /// Manhattan distance from p to the nearest cell of the rectangle.
  int distance(Position p) const;

  friend bool operator==(const Region&, const Region&) = default;
};

struct MoveStep {
  Action direction = Action::Up;
  int count = 1;
  friend bool operator==(const MoveStep&, const MoveStep&) = default;
};

/// `GOTO r c`: becomes a single-cell value annotation at grounding time.
struct GotoStep {
  Position target;
  friend bool operator==(const GotoStep&, const GotoStep&) = default;
};

using PolicyStep = std::variant<MoveStep, GotoStep>;

struct ValueAnnotation {
  Region region;
  double value = 0.0;
  friend bool operator==(const ValueAnnotation&, const ValueAnnotation&) = default;
};

struct SeeGoal {
  friend bool operator==(const SeeGoal&, const SeeGoal&) = default;
};
struct SeeWall {
  Action direction = Action::Up;
  friend bool operator==(const SeeWall&, const SeeWall&) = default;
};
struct AtRegion {
  Region region;
  friend bool operator==(const AtRegion&, const AtRegion&) = default;
};

using Condition = std::variant<SeeGoal, SeeWall, AtRegion>;

struct ConditionalRule {
  Condition condition;
  PolicyStep response;
  friend bool operator==(const ConditionalRule&, const ConditionalRule&) = default;
};

/// Symbolic guidance as emitted by a translator, before grounding.
struct GuidanceProgram {
  std::vector<PolicyStep> policy_steps;
  std::vector<ValueAnnotation> value_annotations;
  std::vector<ConditionalRule> rules;
  std::string source_text;

  bool empty() const {
    return policy_steps.empty() && value_annotations.empty() && rules.empty();
  }

  /// Structural equality; source_text is provenance and not compared.
  friend bool operator==(const GuidanceProgram& a, const GuidanceProgram& b) {
    return a.policy_steps == b.policy_steps && a.value_annotations == b.value_annotations &&
           a.rules == b.rules;
  }
};

/// Throws SyntaxError (with 1-based line/col) or EmptyProgram.
GuidanceProgram parse_program(std::string_view text);

/// Canonical text: POLICY, VALUE, RULES sections in that order, empty
/// sections omitted, one statement per line, LF-terminated.
std::string serialize_program(const GuidanceProgram& program);

/// Shortest round-trippable decimal form used for REAL literals.
std::string format_real(double value);

enum class Severity { Warning, Error };

enum class DiagnosticCode {
  RegionOutOfBounds,
  OutOfBoundsDisplacement,
  GotoOutOfBounds,
  RegionAllWalls,
  GotoTargetWall,
};

struct Diagnostic {
  Severity severity = Severity::Error;
  DiagnosticCode code = DiagnosticCode::RegionOutOfBounds;
  std::string message;
};

std::string_view to_string(DiagnosticCode code);

class GridMap;

std::vector<Diagnostic> validate(const GuidanceProgram& program, const GridMap& map);

bool has_errors(const std::vector<Diagnostic>& diagnostics);

struct GroundingParams {
  double epsilon = 0.1;  // policy smoothing
  double kappa = 1.0;    // value falloff per cell
  double goto_value = 10.0;
};

/// One unrolled MOVE unit on the obstacle-free trace from the start.
struct TracedMove {
  Position cell;
  Action action = Action::Up;
  std::size_t step_index = 0;
};

/// Grounded guidance: policy prior, value map, runtime rules and the policy
/// cursor. The cursor is the only mutable part; episodes own a copy.
class CompiledGuidance {
 public:
  CompiledGuidance() = default;

  /// pi(a | p) for the four actions in canonical order.
  Eigen::Vector4d policy_prior(Position p) const;
  double value(Position p) const { return value_map_(p.row, p.col); }
  const Grid<double>& value_map() const { return value_map_; }
  const std::array<Grid<double>, 4>& policy_planes() const { return policy_; }
  const std::vector<ConditionalRule>& rules() const { return rules_; }
  const std::vector<TracedMove>& trace() const { return trace_; }
  bool has_value_guidance() const { return has_value_; }

  bool cursor_exhausted() const { return cursor_ >= trace_.size(); }
  /// The move the program expects next, including where it expects the
  /// listener to stand. Precondition: !cursor_exhausted().
  const TracedMove& expected() const { return trace_[cursor_]; }
  std::size_t cursor() const { return cursor_; }
  /// Index of the current POLICY step and how many of its moves remain.
  std::size_t current_step() const;
  int remaining_in_step() const;
  void advance() { ++cursor_; }
  void reset_cursor() { cursor_ = 0; }

  friend bool operator==(const CompiledGuidance& a, const CompiledGuidance& b);

 private:
  friend CompiledGuidance ground(const GuidanceProgram&, int, int, Position,
                                 const GroundingParams&);

  std::array<Grid<double>, 4> policy_;
  Grid<double> value_map_;
  std::vector<ConditionalRule> rules_;
  std::vector<TracedMove> trace_;
  std::size_t cursor_ = 0;
  bool has_value_ = false;
};

/// Precondition: validate(program, map) reported no errors.
CompiledGuidance ground(const GuidanceProgram& program, int width, int height, Position start,
                        const GroundingParams& params = {});

}  // namespace wayfinder
