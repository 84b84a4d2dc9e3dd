#pragma once

#include "wayfinder/gridworld.hpp"
#include "wayfinder/lexicon.hpp"
#include "wayfinder/scoring.hpp"
#include "wayfinder/translator.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace wayfinder {

struct StrategyCode {
  bool has_value = false;
  bool has_low_policy = false;
  bool has_high_policy = false;

  bool mixed() const { return has_value + has_low_policy + has_high_policy >= 2; }
  friend bool operator==(const StrategyCode&, const StrategyCode&) = default;
};

StrategyCode code_keywords(const Explanation& explanation,
                           const Lexicon& lexicon = default_lexicon());

enum class FailureMode { DirectionOverload, Overcomplicated, OverlyCompressed, SpatialAmbiguity };
using FailureModes = std::set<FailureMode>;

std::string_view to_string(FailureMode mode);

int direction_word_count(const Explanation& explanation, const Lexicon& lexicon = default_lexicon());

FailureModes classify_failures(const Explanation& explanation, double succ,
                               const Lexicon& lexicon = default_lexicon());
FailureModes classify_failures(const Explanation& explanation, const EvaluationResult& result,
                               const Lexicon& lexicon = default_lexicon());

/// Rank correlation with average ranks for ties. nullopt when either side is
/// constant. Throws std::invalid_argument on length mismatch or < 3 pairs.
std::optional<double> spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double d = 0.0;  // Cohen's d, pooled SD
};

/// nullopt when both samples have zero variance. Throws std::invalid_argument
/// when either sample has fewer than two values.
std::optional<WelchResult> welch_t(const std::vector<double>& a, const std::vector<double>& b);

enum class StudyCondition { None, Bad, Medium, Good };

struct CorpusEntry {
  Explanation explanation;
  std::optional<double> rating;
  std::optional<StudyCondition> condition;
  std::optional<int> path_length;
};

std::string_view to_string(StudyCondition c);

/// One JSON object per line: {id, map_id, text, rating?, condition?, path_length?}.
/// Throws Error with the offending line number.
std::vector<CorpusEntry> parse_corpus(std::string_view jsonl);
std::vector<CorpusEntry> load_corpus(const std::string& path);
std::string corpus_record(const CorpusEntry& entry);

struct MapRow {
  std::string map_id;
  int explanations = 0;
  double mean_words = 0.0;
  MapMetrics metrics;
};

struct CorpusReport {
  std::vector<MapRow> maps;  // sorted by map id; maps without entries omitted
  std::optional<double> rho_length_shortest_path;
  std::optional<double> rho_length_brittleness;
  std::optional<double> rho_length_openness;
  int total = 0;
  double prop_value = 0.0;
  double prop_low_policy = 0.0;
  double prop_high_policy = 0.0;
  double prop_mixed = 0.0;
  std::map<StudyCondition, double> mean_path_length;  // conditions with data only
  std::map<StudyCondition, int> path_length_n;
};

/// Correlations run across maps on per-map mean word counts. Throws
/// UnknownMapReference for entries naming a map not in `maps`.
CorpusReport corpus_stats(const std::vector<CorpusEntry>& entries,
                          const std::vector<GridMap>& maps,
                          const Lexicon& lexicon = default_lexicon());

}  // namespace wayfinder
