#pragma once

#include "wayfinder/analysis.hpp"
#include "wayfinder/config.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace wayfinder {

/// One scored (explanation, map, model) tuple. `raw` is recomputed from the
/// components for the utility and direct models, so records stay valid when
/// only the weights change.
struct ScoreRecord {
  std::string explanation_id;
  std::string map_id;
  std::string model;  // utility | length | direct
  std::uint64_t seed = 0;
  int n = 0;
  int budget = 0;
  double replan_mean = 0.0;
  int len_min = 0;
  double succ = 0.0;
  double mean_length = 0.0;
  int words = 0;

  double raw(const UtilityParams& p) const;
};

nlohmann::ordered_json to_json(const ScoreRecord& r);
ScoreRecord score_record_from_json(const nlohmann::json& j);

/// Reads results.jsonl. A torn final line is dropped.
std::vector<ScoreRecord> load_results(const std::string& path);

struct ScoreRun {
  std::vector<ScoreRecord> records;  // everything in results.jsonl after the run, sorted
  int computed = 0;
  int skipped = 0;
};

/// Scores every corpus entry with the utility, length and direct models and
/// writes results.jsonl (append-only), scores.csv, scores.jsonl and
/// run-config.json under config.out_dir. Tuples already in results.jsonl are
/// skipped. Outputs depend only on the config, never on parallelism.
/// Remote failures propagate after completed tuples have been written.
ScoreRun run_score(const RunConfig& config, std::shared_ptr<ChatClient> client = nullptr);

/// scores.csv text for the given records.
std::string scores_csv(const std::vector<ScoreRecord>& records, const RunConfig& config);

struct RankRow {
  std::string map_id;
  std::vector<QualityBin> bins;  // empty when the map has < 3 explanations
  std::vector<std::string> explanation_ids;
  std::vector<double> utilities;
  std::vector<double> speaker;
};

/// Utility per explanation (taken from `results` when present, else
/// simulated), then bins and speaker distribution per map. Writes bins.csv
/// and speaker.csv when config.out_dir is set.
std::vector<RankRow> run_rank(const RunConfig& config, const std::vector<ScoreRecord>& results = {},
                              std::shared_ptr<ChatClient> client = nullptr);

std::string bins_csv(const std::vector<RankRow>& rows);
std::string speaker_csv(const std::vector<RankRow>& rows, const SpeakerParams& sp);

struct AnalysisRun {
  CorpusReport report;
  std::vector<std::pair<CorpusEntry, FailureModes>> failures;
  std::string csv;
};

/// corpus_stats plus failure classification (success rates from `results`
/// when present, else simulated). Writes analysis.csv when out_dir is set.
AnalysisRun run_analysis(const RunConfig& config, const std::vector<ScoreRecord>& results = {},
                         std::shared_ptr<ChatClient> client = nullptr);

/// Quotes a CSV field when it contains a separator, quote or newline.
std::string csv_field(std::string_view s);

}  // namespace wayfinder
