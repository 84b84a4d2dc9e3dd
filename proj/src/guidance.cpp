#include "wayfinder/guidance.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/gridworld.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

namespace wayfinder {

int Region::distance(Position p) const {
  const int dr = p.row < r0 ? r0 - p.row : (p.row > r1 ? p.row - r1 : 0);
  const int dc = p.col < c0 ? c0 - p.col : (p.col > c1 ? p.col - c1 : 0);
  return dr + dc;
}

namespace {

constexpr int kMaxInt = 1'000'000;

struct Token {
  std::string_view text;
  int col = 1;
};

enum class Section { None, Policy, Value, Rules };

std::string_view section_name(Section s) {
  switch (s) {
    case Section::Policy: return "POLICY";
    case Section::Value: return "VALUE";
    case Section::Rules: return "RULES";
    case Section::None: break;
  }
  return "";
}

std::vector<Token> tokenize(std::string_view line) {
  if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    const char ch = line[i];
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      ++i;
      continue;
    }
    const std::size_t begin = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    tokens.push_back({line.substr(begin, i - begin), static_cast<int>(begin) + 1});
  }
  return tokens;
}

bool is_real_literal(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  const std::size_t int_begin = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == int_begin) return false;
  if (i < s.size() && s[i] == '.') {
    ++i;
    const std::size_t frac_begin = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == frac_begin) return false;
  }
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    ++i;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    const std::size_t exp_begin = i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == exp_begin) return false;
  }
  return i == s.size();
}

/// Cursor over one line's tokens with positioned expectations.
class LineReader {
 public:
  LineReader(int line_no, int line_len, const std::vector<Token>& tokens)
      : line_no_(line_no), line_len_(line_len), tokens_(tokens) {}

  [[noreturn]] void fail_here(const std::string& message) const {
    const int col = pos_ < tokens_.size() ? tokens_[pos_].col : line_len_ + 1;
    throw SyntaxError(line_no_, col, message);
  }

  bool at_end() const { return pos_ >= tokens_.size(); }
  std::string_view peek() const { return at_end() ? std::string_view{} : tokens_[pos_].text; }

  void keyword(std::string_view kw) {
    if (at_end()) fail_here("expected '" + std::string(kw) + "' before end of line");
    if (peek() != kw) {
      fail_here("expected '" + std::string(kw) + "', found '" + std::string(peek()) + "'");
    }
    ++pos_;
  }

  Action direction() {
    if (at_end()) fail_here("expected direction before end of line");
    for (Action a : kActions) {
      if (peek() == to_token(a)) {
        ++pos_;
        return a;
      }
    }
    fail_here("expected direction UP|DOWN|LEFT|RIGHT, found '" + std::string(peek()) + "'");
  }

  int integer(int min_value) {
    if (at_end()) fail_here("expected integer before end of line");
    const std::string_view t = peek();
    int value = 0;
    const bool digits_only =
        std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; });
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (!digits_only || ec != std::errc{} || ptr != t.data() + t.size()) {
      if (digits_only) fail_here("integer out of range");
      fail_here("expected integer, found '" + std::string(t) + "'");
    }
    if (value > kMaxInt) fail_here("integer out of range");
    if (value < min_value) fail_here("expected integer >= " + std::to_string(min_value));
    ++pos_;
    return value;
  }

  double real() {
    if (at_end()) fail_here("expected number before end of line");
    const std::string_view t = peek();
    double value = 0.0;
    if (!is_real_literal(t)) fail_here("expected number, found '" + std::string(t) + "'");
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(value)) {
      fail_here("number out of range");
    }
    ++pos_;
    return value;
  }

  Region region() {
    Region r;
    r.r0 = integer(0);
    r.c0 = integer(0);
    const std::size_t r1_pos = pos_;
    r.r1 = integer(0);
    r.c1 = integer(0);
    if (r.r1 < r.r0 || r.c1 < r.c0) {
      pos_ = r1_pos;
      fail_here("region corners inverted (need r0 <= r1 and c0 <= c1)");
    }
    return r;
  }

  PolicyStep step() {
    if (peek() == "MOVE") {
      ++pos_;
      MoveStep m;
      m.direction = direction();
      m.count = integer(1);
      return m;
    }
    if (peek() == "GOTO") {
      ++pos_;
      GotoStep g;
      g.target.row = integer(0);
      g.target.col = integer(0);
      return g;
    }
    if (at_end()) fail_here("expected MOVE or GOTO before end of line");
    fail_here("expected MOVE or GOTO, found '" + std::string(peek()) + "'");
  }

  Condition condition() {
    if (peek() == "SEE") {
      ++pos_;
      if (peek() == "GOAL") {
        ++pos_;
        return SeeGoal{};
      }
      if (peek() == "WALL") {
        ++pos_;
        return SeeWall{direction()};
      }
      if (at_end()) fail_here("expected GOAL or WALL before end of line");
      fail_here("expected GOAL or WALL, found '" + std::string(peek()) + "'");
    }
    if (peek() == "AT") {
      ++pos_;
      return AtRegion{region()};
    }
    if (at_end()) fail_here("expected condition before end of line");
    fail_here("expected condition SEE|AT, found '" + std::string(peek()) + "'");
  }

  void end() {
    if (!at_end()) fail_here("unexpected token '" + std::string(peek()) + "'");
  }

 private:
  int line_no_;
  int line_len_;
  const std::vector<Token>& tokens_;
  std::size_t pos_ = 0;
};

std::string format_step(const PolicyStep& step) {
  if (const auto* m = std::get_if<MoveStep>(&step)) {
    return "MOVE " + std::string(to_token(m->direction)) + " " + std::to_string(m->count);
  }
  const auto& g = std::get<GotoStep>(step);
  return "GOTO " + std::to_string(g.target.row) + " " + std::to_string(g.target.col);
}

std::string format_region(const Region& r) {
  return std::to_string(r.r0) + " " + std::to_string(r.c0) + " " + std::to_string(r.r1) + " " +
         std::to_string(r.c1);
}

bool region_in_bounds(const Region& r, int width, int height) {
  return r.r1 < height && r.c1 < width;
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

GuidanceProgram parse_program(std::string_view text) {
  GuidanceProgram program;
  program.source_text = std::string(text);

  Section section = Section::None;
  bool explicit_section = false;
  int statements_in_section = 0;
  int line_no = 0;
  int header_line = 0;

  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(begin, end - begin);
    ++line_no;
    begin = end + 1;

    const std::vector<Token> tokens = tokenize(line);
    if (tokens.empty()) {
      if (end == text.size()) break;
      continue;
    }
    LineReader reader(line_no, static_cast<int>(line.size()), tokens);
    const std::string_view head = tokens.front().text;

    Section header = Section::None;
    if (head == "POLICY") header = Section::Policy;
    if (head == "VALUE") header = Section::Value;
    if (head == "RULES") header = Section::Rules;
    if (header != Section::None) {
      if (explicit_section && statements_in_section == 0) {
        throw SyntaxError(line_no, tokens.front().col,
                          "section " + std::string(section_name(section)) + " (line " +
                              std::to_string(header_line) + ") has no statements");
      }
      reader.keyword(head);
      reader.end();
      section = header;
      explicit_section = true;
      statements_in_section = 0;
      header_line = line_no;
      if (end == text.size()) break;
      continue;
    }

    Section kind = Section::None;
    if (head == "MOVE" || head == "GOTO") kind = Section::Policy;
    if (head == "REGION") kind = Section::Value;
    if (head == "IF") kind = Section::Rules;
    if (kind == Section::None) {
      reader.fail_here("unknown statement '" + std::string(head) + "'");
    }
    if (explicit_section && kind != section) {
      reader.fail_here("'" + std::string(head) + "' is not allowed in section " +
                       std::string(section_name(section)));
    }

    switch (kind) {
      case Section::Policy:
        program.policy_steps.push_back(reader.step());
        break;
      case Section::Value: {
        reader.keyword("REGION");
        ValueAnnotation annot;
        annot.region = reader.region();
        annot.value = reader.real();
        program.value_annotations.push_back(annot);
        break;
      }
      case Section::Rules: {
        reader.keyword("IF");
        ConditionalRule rule;
        rule.condition = reader.condition();
        reader.keyword("THEN");
        rule.response = reader.step();
        program.rules.push_back(rule);
        break;
      }
      case Section::None: break;
    }
    reader.end();
    ++statements_in_section;
    if (end == text.size()) break;
  }

  if (explicit_section && statements_in_section == 0) {
    throw SyntaxError(line_no + 1, 1,
                      "section " + std::string(section_name(section)) + " (line " +
                          std::to_string(header_line) + ") has no statements");
  }
  if (program.empty()) throw EmptyProgram();
  return program;
}

std::string serialize_program(const GuidanceProgram& program) {
  std::string out;
  if (!program.policy_steps.empty()) {
    out += "POLICY\n";
    for (const auto& step : program.policy_steps) out += format_step(step) + "\n";
  }
  if (!program.value_annotations.empty()) {
    out += "VALUE\n";
    for (const auto& a : program.value_annotations) {
      out += "REGION " + format_region(a.region) + " " + format_real(a.value) + "\n";
    }
  }
  if (!program.rules.empty()) {
    out += "RULES\n";
    for (const auto& rule : program.rules) {
      out += "IF ";
      std::visit(
          [&out](const auto& cond) {
            using T = std::decay_t<decltype(cond)>;
            if constexpr (std::is_same_v<T, SeeGoal>) {
              out += "SEE GOAL";
            } else if constexpr (std::is_same_v<T, SeeWall>) {
              out += "SEE WALL " + std::string(to_token(cond.direction));
            } else {
              out += "AT " + format_region(cond.region);
            }
          },
          rule.condition);
      out += " THEN " + format_step(rule.response) + "\n";
    }
  }
  return out;
}

std::string_view to_string(DiagnosticCode code) {
  switch (code) {
    case DiagnosticCode::RegionOutOfBounds: return "RegionOutOfBounds";
    case DiagnosticCode::OutOfBoundsDisplacement: return "OutOfBoundsDisplacement";
    case DiagnosticCode::GotoOutOfBounds: return "GotoOutOfBounds";
    case DiagnosticCode::RegionAllWalls: return "RegionAllWalls";
    case DiagnosticCode::GotoTargetWall: return "GotoTargetWall";
  }
  return "Unknown";
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

std::vector<Diagnostic> validate(const GuidanceProgram& program, const GridMap& map) {
  std::vector<Diagnostic> out;
  const int width = map.width();
  const int height = map.height();

  auto check_goto = [&](const GotoStep& g, const std::string& where) {
    if (!map.contains(g.target)) {
      out.push_back({Severity::Error, DiagnosticCode::GotoOutOfBounds,
                     where + ": GOTO target outside the map"});
    } else if (!map.is_floor(g.target)) {
      out.push_back({Severity::Warning, DiagnosticCode::GotoTargetWall,
                     where + ": GOTO target is a wall"});
    }
  };

  Position p = map.start();
  bool displacement_reported = false;
  for (std::size_t i = 0; i < program.policy_steps.size(); ++i) {
    const std::string where = "policy step " + std::to_string(i + 1);
    if (const auto* g = std::get_if<GotoStep>(&program.policy_steps[i])) {
      check_goto(*g, where);
      continue;
    }
    const auto& m = std::get<MoveStep>(program.policy_steps[i]);
    for (int k = 0; k < m.count && !displacement_reported; ++k) {
      p = offset(p, m.direction);
      if (!map.contains(p)) {
        out.push_back({Severity::Error, DiagnosticCode::OutOfBoundsDisplacement,
                       where + ": trace from start leaves the map"});
        displacement_reported = true;
      }
    }
  }

  for (std::size_t i = 0; i < program.value_annotations.size(); ++i) {
    const Region& r = program.value_annotations[i].region;
    const std::string where = "value annotation " + std::to_string(i + 1);
    if (!region_in_bounds(r, width, height)) {
      out.push_back({Severity::Error, DiagnosticCode::RegionOutOfBounds,
                     where + ": region outside the map"});
      continue;
    }
    const auto block = map.cells().block(r.r0, r.c0, r.r1 - r.r0 + 1, r.c1 - r.c0 + 1);
    if ((block != Cell::Floor).all()) {
      out.push_back({Severity::Warning, DiagnosticCode::RegionAllWalls,
                     where + ": region contains no floor cell"});
    }
  }

  for (std::size_t i = 0; i < program.rules.size(); ++i) {
    const std::string where = "rule " + std::to_string(i + 1);
    if (const auto* at = std::get_if<AtRegion>(&program.rules[i].condition)) {
      if (!region_in_bounds(at->region, width, height)) {
        out.push_back({Severity::Error, DiagnosticCode::RegionOutOfBounds,
                       where + ": AT region outside the map"});
      }
    }
    if (const auto* g = std::get_if<GotoStep>(&program.rules[i].response)) check_goto(*g, where);
  }
  return out;
}

Eigen::Vector4d CompiledGuidance::policy_prior(Position p) const {
  Eigen::Vector4d out;
  for (int a = 0; a < 4; ++a) out(a) = policy_[a](p.row, p.col);
  return out;
}

std::size_t CompiledGuidance::current_step() const {
  return cursor_exhausted() ? (trace_.empty() ? 0 : trace_.back().step_index + 1)
                            : trace_[cursor_].step_index;
}

int CompiledGuidance::remaining_in_step() const {
  if (cursor_exhausted()) return 0;
  int n = 0;
  for (std::size_t i = cursor_; i < trace_.size() && trace_[i].step_index == trace_[cursor_].step_index;
       ++i) {
    ++n;
  }
  return n;
}

bool operator==(const CompiledGuidance& a, const CompiledGuidance& b) {
  auto same = [](const Grid<double>& x, const Grid<double>& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && (x == y).all();
  };
  for (int i = 0; i < 4; ++i) {
    if (!same(a.policy_[i], b.policy_[i])) return false;
  }
  if (a.trace_.size() != b.trace_.size()) return false;
  for (std::size_t i = 0; i < a.trace_.size(); ++i) {
    if (a.trace_[i].cell != b.trace_[i].cell || a.trace_[i].action != b.trace_[i].action ||
        a.trace_[i].step_index != b.trace_[i].step_index) {
      return false;
    }
  }
  return same(a.value_map_, b.value_map_) && a.rules_ == b.rules_ && a.cursor_ == b.cursor_ &&
         a.has_value_ == b.has_value_;
}

CompiledGuidance ground(const GuidanceProgram& program, int width, int height, Position start,
                        const GroundingParams& params) {
  CompiledGuidance g;
  for (auto& plane : g.policy_) plane = Grid<double>::Constant(height, width, 0.25);

  std::vector<ValueAnnotation> annotations = program.value_annotations;
  Position p = start;
  for (std::size_t i = 0; i < program.policy_steps.size(); ++i) {
    if (const auto* go = std::get_if<GotoStep>(&program.policy_steps[i])) {
      annotations.push_back({Region{go->target.row, go->target.col, go->target.row, go->target.col},
                             params.goto_value});
      continue;
    }
    const auto& m = std::get<MoveStep>(program.policy_steps[i]);
    for (int k = 0; k < m.count; ++k) {
      const Position next = offset(p, m.direction);
      if (next.row < 0 || next.col < 0 || next.row >= height || next.col >= width) break;
      g.trace_.push_back({p, m.direction, i});
      for (Action a : kActions) {
        g.policy_[index_of(a)](p.row, p.col) =
            (a == m.direction ? 1.0 - params.epsilon : 0.0) + params.epsilon / 4.0;
      }
      p = next;
    }
  }

  g.has_value_ = !annotations.empty();
  g.value_map_ = Grid<double>::Zero(height, width);
  if (g.has_value_) {
    g.value_map_.setConstant(-std::numeric_limits<double>::infinity());
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        for (const auto& a : annotations) {
          const double v = a.value - params.kappa * a.region.distance({r, c});
          g.value_map_(r, c) = std::max(g.value_map_(r, c), v);
        }
      }
    }
  }
  g.rules_ = program.rules;
  return g;
}

}  // namespace wayfinder
