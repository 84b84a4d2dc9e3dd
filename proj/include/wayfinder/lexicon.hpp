#pragma once

#include "wayfinder/grid.hpp"

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace wayfinder {

struct FailureThresholds {
  int direction_overload_min_directions = 4;
  int overcomplicated_min_words = 30;
  int compressed_max_words = 8;
  double failure_success_below = 0.5;
};

/// Versioned word lists shared by the keyword translator and the strategy
/// coder. Loaded from a data file; `hash` is the SHA-256 of its bytes.
struct Lexicon {
  std::string version;
  std::string hash;
  std::map<std::string, Action, std::less<>> directions;
  std::map<std::string, int, std::less<>> count_words;
  std::set<std::string, std::less<>> unit_words;
  std::map<std::string, int, std::less<>> vertical_region_words;
  std::map<std::string, int, std::less<>> horizontal_region_words;
  std::set<std::string, std::less<>> center_words;
  std::set<std::string, std::less<>> region_nouns;
  std::set<std::string, std::less<>> goal_nouns;
  std::set<std::string, std::less<>> wall_nouns;
  std::set<std::string, std::less<>> see_verbs;
  std::set<std::string, std::less<>> rule_markers;
  std::set<std::string, std::less<>> clause_initial_rule_markers;
  std::set<std::string, std::less<>> conditional_markers;
  std::set<std::string, std::less<>> value_terms;
  std::set<std::string, std::less<>> low_policy_terms;
  std::vector<std::vector<std::string>> vague_locatives;  // token sequences
  std::set<std::string, std::less<>> concrete_landmarks;
  FailureThresholds thresholds;

  std::optional<Action> direction(std::string_view word) const;
  /// Numeral ("3") or count word ("twice"); nullopt otherwise.
  std::optional<int> count(std::string_view word) const;
};

Lexicon parse_lexicon(std::string_view json_text);
Lexicon load_lexicon(const std::string& path);

/// The lexicon shipped in the data directory.
const Lexicon& default_lexicon();

/// Directory holding the shipped data files (lexicon, defaults). Honors the
/// WAYFINDER_DATA_DIR environment variable.
std::string data_dir();

/// Lower-cased word and punctuation tokens. Sentence punctuation becomes
/// ".", commas become ","; hyphens and other symbols split words.
std::vector<std::string> tokenize_words(std::string_view text);

}  // namespace wayfinder
