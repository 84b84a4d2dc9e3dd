#include "wayfinder/lexicon.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"

#include <json.hpp>

#include <cctype>
#include <charconv>
#include <cstdlib>

#ifndef WAYFINDER_DEFAULT_DATA_DIR
#define WAYFINDER_DEFAULT_DATA_DIR "data"
#endif

namespace wayfinder {

std::optional<Action> Lexicon::direction(std::string_view word) const {
  const auto it = directions.find(word);
  if (it == directions.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Lexicon::count(std::string_view word) const {
  if (!word.empty() && std::isdigit(static_cast<unsigned char>(word.front()))) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
    if (ec == std::errc{} && ptr == word.data() + word.size() && value > 0 && value <= 1000) {
      return value;
    }
    return std::nullopt;
  }
  const auto it = count_words.find(word);
  if (it == count_words.end()) return std::nullopt;
  return it->second;
}

Lexicon parse_lexicon(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text);
  Lexicon lex;
  lex.version = j.at("version").get<std::string>();
  lex.hash = sha256_hex(json_text);
  for (const auto& [word, token] : j.at("directions").items()) {
    const auto a = parse_action(token.get<std::string>());
    if (!a) throw Error("lexicon: bad direction token for '" + word + "'");
    lex.directions.emplace(word, *a);
  }
  for (const auto& [word, n] : j.at("count_words").items()) lex.count_words.emplace(word, n.get<int>());
  for (const auto& [word, n] : j.at("vertical_region_words").items()) {
    lex.vertical_region_words.emplace(word, n.get<int>());
  }
  for (const auto& [word, n] : j.at("horizontal_region_words").items()) {
    lex.horizontal_region_words.emplace(word, n.get<int>());
  }
  auto set_of = [&j](const char* key) {
    std::set<std::string, std::less<>> out;
    for (const auto& w : j.at(key)) out.insert(w.get<std::string>());
    return out;
  };
  lex.unit_words = set_of("unit_words");
  lex.center_words = set_of("center_words");
  lex.region_nouns = set_of("region_nouns");
  lex.goal_nouns = set_of("goal_nouns");
  lex.wall_nouns = set_of("wall_nouns");
  lex.see_verbs = set_of("see_verbs");
  lex.rule_markers = set_of("rule_markers");
  lex.clause_initial_rule_markers = set_of("clause_initial_rule_markers");
  lex.conditional_markers = set_of("conditional_markers");
  lex.value_terms = set_of("value_terms");
  lex.low_policy_terms = set_of("low_policy_terms");
  lex.concrete_landmarks = set_of("concrete_landmarks");
  for (const auto& phrase : j.at("vague_locatives")) {
    lex.vague_locatives.push_back(tokenize_words(phrase.get<std::string>()));
  }
  const auto& t = j.at("thresholds");
  lex.thresholds.direction_overload_min_directions =
      t.at("direction_overload_min_directions").get<int>();
  lex.thresholds.overcomplicated_min_words = t.at("overcomplicated_min_words").get<int>();
  lex.thresholds.compressed_max_words = t.at("compressed_max_words").get<int>();
  lex.thresholds.failure_success_below = t.at("failure_success_below").get<double>();
  return lex;
}

Lexicon load_lexicon(const std::string& path) { return parse_lexicon(read_file(path)); }

std::string data_dir() {
  if (const char* env = std::getenv("WAYFINDER_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return WAYFINDER_DEFAULT_DATA_DIR;
}

const Lexicon& default_lexicon() {
  static const Lexicon lex = load_lexicon(data_dir() + "/lexicon.json");
  return lex;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isalnum(ch) || ch == '\'' || ch >= 0x80) {
      if (ch != '\'') word += static_cast<char>(std::tolower(ch));
      continue;
    }
    flush();
    if (raw == ',') {
      tokens.emplace_back(",");
    } else if (raw == '.' || raw == ';' || raw == '!' || raw == '?' || raw == '\n' || raw == ':') {
      if (tokens.empty() || tokens.back() != ".") tokens.emplace_back(".");
    }
  }
  flush();
  return tokens;
}

}  // namespace wayfinder
