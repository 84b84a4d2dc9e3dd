#include "wayfinder/translator.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace wayfinder {

int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

bool operator==(const CompilationRecord& a, const CompilationRecord& b) {
  if (a.explanation_id != b.explanation_id || a.map_id != b.map_id ||
      a.sample_index != b.sample_index || a.raw_output != b.raw_output || a.seed != b.seed ||
      a.program.index() != b.program.index()) {
    return false;
  }
  if (a.ok()) return a.guidance() == b.guidance() && a.guidance().source_text == b.guidance().source_text;
  return std::get<ParseFailure>(a.program) == std::get<ParseFailure>(b.program);
}

std::string save_record(const CompilationRecord& record) {
  nlohmann::ordered_json j;
  j["explanation_id"] = record.explanation_id;
  j["map_id"] = record.map_id;
  j["sample_index"] = record.sample_index;
  j["seed"] = record.seed;
  j["raw_output"] = record.raw_output;
  if (record.ok()) {
    j["status"] = "ok";
    j["program_source"] = record.guidance().source_text;
  } else {
    const auto& f = std::get<ParseFailure>(record.program);
    j["status"] = "parse_failure";
    j["failure"] = {{"message", f.message}, {"line", f.line}, {"col", f.col}};
  }
  return j.dump();
}

CompilationRecord load_record(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  CompilationRecord r;
  r.explanation_id = j.at("explanation_id").get<std::string>();
  r.map_id = j.at("map_id").get<std::string>();
  r.sample_index = j.at("sample_index").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.raw_output = j.at("raw_output").get<std::string>();
  if (j.at("status").get<std::string>() == "ok") {
    r.program = parse_program(j.at("program_source").get<std::string>());
  } else {
    const auto& f = j.at("failure");
    r.program = ParseFailure{f.at("message").get<std::string>(), f.at("line").get<int>(),
                             f.at("col").get<int>()};
  }
  return r;
}

std::variant<GuidanceProgram, ParseFailure> parse_or_failure(std::string_view text) {
  try {
    return parse_program(text);
  } catch (const SyntaxError& e) {
    return ParseFailure{e.detail(), e.line(), e.col()};
  } catch (const EmptyProgram& e) {
    return ParseFailure{e.what(), 0, 0};
  }
}

std::string_view to_string(TranslatorKind kind) {
  switch (kind) {
    case TranslatorKind::Oracle: return "oracle";
    case TranslatorKind::Keyword: return "keyword";
    case TranslatorKind::Remote: return "remote";
    case TranslatorKind::Scripted: return "scripted";
  }
  return "?";
}

std::optional<TranslatorKind> parse_translator_kind(std::string_view name) {
  for (auto k : {TranslatorKind::Oracle, TranslatorKind::Keyword, TranslatorKind::Remote,
                 TranslatorKind::Scripted}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

void TranslatorConfig::check() const {
  if (max_samples < 1) throw std::invalid_argument("max_samples (K) must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (kind == TranslatorKind::Remote && (!endpoint_url || !model_name)) {
    throw std::invalid_argument("remote translator requires endpoint_url and model_name");
  }
}

namespace {

CompilationRecord make_record(const Explanation& e, const GridMap& world, std::uint64_t seed,
                              int sample_index, std::string raw,
                              std::variant<GuidanceProgram, ParseFailure> program) {
  CompilationRecord r;
  r.explanation_id = e.id;
  r.map_id = world.id();
  r.sample_index = sample_index;
  r.seed = seed;
  r.raw_output = std::move(raw);
  r.program = std::move(program);
  return r;
}

GuidanceProgram canonical(GuidanceProgram p) {
  p.source_text = serialize_program(p);
  return p;
}

}  // namespace

GuidanceProgram oracle_translate(const GridMap& world) {
  GuidanceProgram p;
  for (Action a : shortest_path_actions(world, world.start(), world.goal())) {
    if (!p.policy_steps.empty()) {
      auto& last = std::get<MoveStep>(p.policy_steps.back());
      if (last.direction == a) {
        ++last.count;
        continue;
      }
    }
    p.policy_steps.push_back(MoveStep{a, 1});
  }
  const Position g = world.goal();
  p.value_annotations.push_back({Region{g.row, g.col, g.row, g.col}, 10.0});
  return canonical(std::move(p));
}

std::pair<int, int> third_band(int k, int extent) {
  const int begin = std::min(k * extent / 3, extent - 1);
  const int end = std::max((k + 1) * extent / 3, begin + 1);
  return {begin, std::min(end, extent) - 1};
}

namespace {

constexpr double kLandmarkValue = 10.0;

class KeywordExtractor {
 public:
  KeywordExtractor(const std::vector<std::string>& tokens, const GridMap& world,
                   const Lexicon& lex)
      : toks_(tokens), used_(tokens.size(), false), world_(world), lex_(lex) {}

  GuidanceProgram run() {
    find_regions();
    find_rules();
    find_moves();
    GuidanceProgram p;
    p.policy_steps = std::move(moves_);
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      if (!region_is_waypoint_[i]) p.value_annotations.push_back({regions_[i], kLandmarkValue});
    }
    p.rules = std::move(rules_);
    if (p.empty()) throw EmptyProgram();
    return canonical(std::move(p));
  }

 private:
  bool is(std::size_t i, const std::set<std::string, std::less<>>& set) const {
    return i < toks_.size() && set.contains(toks_[i]);
  }

  Region band(int vband, int hband) const {
    Region r{0, 0, world_.height() - 1, world_.width() - 1};
    if (vband >= 0) std::tie(r.r0, r.r1) = third_band(vband, world_.height());
    if (hband >= 0) std::tie(r.c0, r.c1) = third_band(hband, world_.width());
    return r;
  }

  void add_region(Region r, std::initializer_list<std::size_t> indices) {
    for (std::size_t i : indices) {
      used_[i] = true;
      region_of_.emplace(i, regions_.size());
    }
    regions_.push_back(r);
    region_is_waypoint_.push_back(false);
  }

  void find_regions() {
    for (std::size_t i = 0; i < toks_.size(); ++i) {
      if (used_[i]) continue;
      const auto v = lex_.vertical_region_words.find(toks_[i]);
      if (v != lex_.vertical_region_words.end()) {
        const auto h = i + 1 < toks_.size() ? lex_.horizontal_region_words.find(toks_[i + 1])
                                            : lex_.horizontal_region_words.end();
        if (h != lex_.horizontal_region_words.end()) {
          add_region(band(v->second, h->second), {i, i + 1});
          if (is(i + 2, lex_.region_nouns)) add_region_token(i + 2, i);
          ++i;
        } else {
          add_region(band(v->second, -1), {i});
          if (is(i + 1, lex_.region_nouns)) add_region_token(i + 1, i);
        }
        continue;
      }
      if (lex_.center_words.contains(toks_[i])) {
        add_region(band(1, 1), {i});
        if (is(i + 1, lex_.region_nouns)) add_region_token(i + 1, i);
        continue;
      }
      const auto h = lex_.horizontal_region_words.find(toks_[i]);
      if (h != lex_.horizontal_region_words.end() && is(i + 1, lex_.region_nouns)) {
        add_region(band(-1, h->second), {i, i + 1});
        ++i;
      }
    }
  }

  void add_region_token(std::size_t token, std::size_t anchor) {
    used_[token] = true;
    region_of_.emplace(token, region_of_.at(anchor));
  }

  bool is_rule_marker(std::size_t i, std::size_t sentence_begin) const {
    if (lex_.rule_markers.contains(toks_[i])) return true;
    return lex_.clause_initial_rule_markers.contains(toks_[i]) &&
           (i == sentence_begin || toks_[i - 1] == ",");
  }

  std::optional<Action> last_direction_before(std::size_t end) const {
    for (std::size_t i = end; i-- > 0;) {
      if (used_[i] && !region_of_.contains(i)) continue;
      if (auto a = lex_.direction(toks_[i]); a && !used_[i]) return a;
    }
    return std::nullopt;
  }

  void find_rules() {
    std::size_t s = 0;
    while (s < toks_.size()) {
      std::size_t e = s;
      while (e < toks_.size() && toks_[e] != ".") ++e;
      for (std::size_t m = s; m < e; ++m) {
        if (!is_rule_marker(m, s)) continue;
        std::size_t c = m + 1;
        while (c < e && toks_[c] != "," && toks_[c] != "then") ++c;
        std::size_t cons_end = c + 1;
        while (cons_end < e && !is_rule_marker(cons_end, s)) ++cons_end;
        compile_rule(m, c, std::min(c + 1, e), std::min(cons_end, e));
        m = c;
      }
      s = e + 1;
    }
  }

  void compile_rule(std::size_t marker, std::size_t cond_end, std::size_t cons_begin,
                    std::size_t cons_end) {
    bool goal = false;
    bool see = false;
    bool wall = false;
    std::optional<Action> wall_dir;
    std::optional<std::size_t> region;
    for (std::size_t i = marker + 1; i < cond_end; ++i) {
      goal |= lex_.goal_nouns.contains(toks_[i]);
      see |= lex_.see_verbs.contains(toks_[i]);
      wall |= lex_.wall_nouns.contains(toks_[i]);
      if (!used_[i] && !wall_dir) wall_dir = lex_.direction(toks_[i]);
      if (auto it = region_of_.find(i); it != region_of_.end() && !region) region = it->second;
    }

    std::optional<Condition> cond;
    if (goal && see) {
      cond = SeeGoal{};
    } else if (wall) {
      if (!wall_dir) wall_dir = last_direction_before(marker);
      if (wall_dir) cond = SeeWall{*wall_dir};
    } else if (region) {
      cond = AtRegion{regions_[*region]};
    }

    // Condition text never becomes policy, recognised or not.
    for (std::size_t i = marker; i < cond_end; ++i) used_[i] = true;
    if (!cond) return;

    for (std::size_t i = cons_begin; i < cons_end; ++i) {
      if (used_[i]) continue;
      if (auto a = lex_.direction(toks_[i])) {
        used_[i] = true;
        const int n = take_count(i);
        if (region) region_is_waypoint_[*region] = std::holds_alternative<AtRegion>(*cond);
        rules_.push_back({*cond, MoveStep{*a, n}});
        return;
      }
    }
  }

  int take_count(std::size_t i) {
    const std::size_t next = i + 1;
    if (next < toks_.size() && !used_[next]) {
      if (auto n = lex_.count(toks_[next])) {
        used_[next] = true;
        if (is(next + 1, lex_.unit_words)) used_[next + 1] = true;
        return *n;
      }
    }
    if (i >= 1 && !used_[i - 1]) {
      if (lex_.unit_words.contains(toks_[i - 1]) && i >= 2 && !used_[i - 2]) {
        if (auto n = lex_.count(toks_[i - 2])) {
          used_[i - 1] = used_[i - 2] = true;
          return *n;
        }
      }
      if (auto n = lex_.count(toks_[i - 1]); n && toks_[i - 1] != "once") {
        used_[i - 1] = true;
        return *n;
      }
    }
    return 1;
  }

  void find_moves() {
    for (std::size_t i = 0; i < toks_.size(); ++i) {
      if (used_[i]) continue;
      if (auto a = lex_.direction(toks_[i])) {
        used_[i] = true;
        moves_.push_back(MoveStep{*a, take_count(i)});
      }
    }
  }

  const std::vector<std::string>& toks_;
  std::vector<bool> used_;
  const GridMap& world_;
  const Lexicon& lex_;
  std::vector<Region> regions_;
  std::vector<bool> region_is_waypoint_;
  std::map<std::size_t, std::size_t> region_of_;
  std::vector<ConditionalRule> rules_;
  std::vector<PolicyStep> moves_;
};

}  // namespace

GuidanceProgram keyword_translate(const Explanation& explanation, const GridMap& world,
                                  const Lexicon& lexicon) {
  const auto tokens = tokenize_words(explanation.text);
  return KeywordExtractor(tokens, world, lexicon).run();
}

CompilationRecord OracleTranslator::compile(const Explanation& explanation, const GridMap& world,
                                            std::uint64_t seed, int) {
  GuidanceProgram p = oracle_translate(world);
  std::string raw = p.source_text;
  return make_record(explanation, world, seed, 0, std::move(raw), std::move(p));
}

CompilationRecord KeywordTranslator::compile(const Explanation& explanation, const GridMap& world,
                                             std::uint64_t seed, int) {
  try {
    GuidanceProgram p = keyword_translate(explanation, world, lexicon_);
    std::string raw = p.source_text;
    return make_record(explanation, world, seed, 0, std::move(raw), std::move(p));
  } catch (const EmptyProgram& e) {
    return make_record(explanation, world, seed, 0, "", ParseFailure{e.what(), 0, 0});
  }
}

ScriptedTranslator::ScriptedTranslator(std::vector<std::string> outputs)
    : outputs_(std::move(outputs)) {
  if (outputs_.empty()) throw std::invalid_argument("scripted translator needs >= 1 output");
}

CompilationRecord ScriptedTranslator::compile(const Explanation& explanation,
                                              const GridMap& world, std::uint64_t seed,
                                              int sequence) {
  const int index = sequence % static_cast<int>(outputs_.size());
  const std::string& raw = outputs_[index];
  return make_record(explanation, world, seed, index, raw, parse_or_failure(raw));
}

std::vector<std::string> parse_script(std::string_view text) {
  std::vector<std::string> entries;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "---") {
      entries.push_back(std::move(current));
      current.clear();
      any = false;
      continue;
    }
    current += line + "\n";
    any = true;
  }
  if (any || entries.empty()) entries.push_back(std::move(current));
  return entries;
}

ScriptedTranslator load_script(const std::string& path) {
  return ScriptedTranslator(parse_script(read_file(path)));
}

namespace {

constexpr std::string_view kCompilerSystemPrompt =
    R"(You translate a navigation message into a guidance program for a listener in a grid maze.
The listener sees only a small window around their position and follows your program.
Rows are numbered from 0 at the top, columns from 0 at the left.

Write the program in this language (one statement per line, keywords in capitals):
  program := section+
  section := "POLICY" NL step+ | "VALUE" NL annot+ | "RULES" NL rule+
  step    := "MOVE" dir INT NL | "GOTO" INT INT NL
  dir     := "UP" | "DOWN" | "LEFT" | "RIGHT"
  annot   := "REGION" r0 c0 r1 c1 value NL      (inclusive rectangle, real value)
  rule    := "IF" cond "THEN" step
  cond    := "SEE GOAL" | "SEE WALL" dir | "AT" r0 c0 r1 c1

Use POLICY for step-by-step directions, VALUE for described destinations or landmarks
(higher value = more desirable), RULES for contingencies. Encode only what the message says.
Reply with exactly one fenced code block containing the program.)";

}  // namespace

std::vector<ChatMessage> build_compile_prompt(const Explanation& explanation,
                                              const GridMap& world, bool include_layout) {
  std::ostringstream user;
  user << "Map size: " << world.width() << " columns x " << world.height() << " rows.\n";
  user << "Start: row " << world.start().row << ", column " << world.start().col << ".\n";
  if (include_layout) {
    user << "Layout (# wall, . floor, S start, G goal):\n" << serialize_map(world);
  }
  user << "Message:\n" << explanation.text << "\n";
  return {{"system", std::string(kCompilerSystemPrompt)}, {"user", user.str()}};
}

RemoteTranslator::RemoteTranslator(TranslatorConfig config, std::shared_ptr<ChatClient> client)
    : config_(std::move(config)), client_(std::move(client)) {
  config_.check();
  if (!client_) throw std::invalid_argument("remote translator needs a chat client");
  if (config_.cache_dir) cache_ = std::make_unique<ResponseCache>(*config_.cache_dir);
}

std::string RemoteTranslator::cache_key(const std::vector<ChatMessage>& prompt,
                                        std::uint64_t sample_seed) const {
  nlohmann::ordered_json j;
  j["model"] = *config_.model_name;
  j["temperature"] = config_.temperature;
  j["seed"] = sample_seed;
  for (const auto& m : prompt) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  return sha256_hex(j.dump());
}

CompilationRecord RemoteTranslator::compile(const Explanation& explanation, const GridMap& world,
                                            std::uint64_t seed, int) {
  const int slot = static_cast<int>(seed % static_cast<std::uint64_t>(config_.max_samples));
  const auto sample_seed = static_cast<std::uint64_t>(slot);
  const auto prompt = build_compile_prompt(explanation, world, config_.compiler_sees_map);

  auto fetch = [&]() -> std::string {
    ChatRequest request{*config_.model_name, prompt, config_.temperature, sample_seed};
    std::string reply = client_->complete(request);
    std::variant<GuidanceProgram, ParseFailure> program;
    if (reply.size() > kMaxReplyBytes) {
      program = ParseFailure{"reply exceeds 16 KiB", 0, 0};
    } else if (auto block = extract_fenced_block(reply)) {
      program = parse_or_failure(*block);
    } else {
      program = ParseFailure{"reply has no fenced code block", 0, 0};
    }
    return save_record(
        make_record(explanation, world, sample_seed, slot, std::move(reply), std::move(program)));
  };

  const std::string text = cache_ ? cache_->get_or_compute(cache_key(prompt, sample_seed), fetch)
                                  : fetch();
  return load_record(text);
}

CompilationRecord compile(Translator& translator, const Explanation& explanation,
                          const GridMap& world, std::uint64_t seed) {
  if (explanation.map_id != world.id()) {
    throw std::invalid_argument("explanation " + explanation.id + " targets map '" +
                                explanation.map_id + "', not '" + world.id() + "'");
  }
  return translator.compile(explanation, world, seed, 0);
}

std::unique_ptr<Translator> make_translator(const TranslatorConfig& config,
                                            const std::string& script_path,
                                            std::shared_ptr<ChatClient> client) {
  config.check();
  switch (config.kind) {
    case TranslatorKind::Oracle: return std::make_unique<OracleTranslator>();
    case TranslatorKind::Keyword: return std::make_unique<KeywordTranslator>();
    case TranslatorKind::Scripted:
      if (script_path.empty()) throw std::invalid_argument("scripted translator needs a script");
      return std::make_unique<ScriptedTranslator>(load_script(script_path));
    case TranslatorKind::Remote:
      if (!client) {
        client = std::make_shared<HttpChatClient>(*config.endpoint_url, config.api_key,
                                                  config.retry, config.max_in_flight);
      }
      return std::make_unique<RemoteTranslator>(config, std::move(client));
  }
  throw std::invalid_argument("unknown translator kind");
}

}  // namespace wayfinder
