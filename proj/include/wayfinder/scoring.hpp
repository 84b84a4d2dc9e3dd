#pragma once

#include "wayfinder/planner.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace wayfinder {

/// Aggregate of N attempts of one explanation on one map.
struct EvaluationResult {
  std::string explanation_id;
  std::string map_id;
  int n = 0;
  int budget = 0;
  std::vector<Attempt> attempts;
  double replan_mean = 0.0;
  int len_min = 0;  // budget when no attempt succeeds
  double succ = 0.0;
  double mean_length = 0.0;
};

/// Symmetric in the attempt order.
EvaluationResult aggregate(std::string explanation_id, std::string map_id, int budget,
                           std::vector<Attempt> attempts);

/// N episodes with seeds derive_seed(params.rng_seed, i), run on up to
/// `parallelism` threads. The result does not depend on `parallelism`.
EvaluationResult evaluate(const Explanation& explanation, const GridMap& world,
                          Translator& translator, const EpisodeParams& params, int n,
                          int parallelism = 1);

using ActorFactory = std::function<std::unique_ptr<DirectActor>()>;

/// Like evaluate, over direct_episode with a fresh actor per attempt.
EvaluationResult evaluate_direct(const Explanation& explanation, const GridMap& world,
                                 const ActorFactory& make_actor, const EpisodeParams& params,
                                 int n);

struct UtilityParams {
  double alpha = 0.5;
  std::optional<double> beta;  // unset: 1 / budget
  double gamma = 1.0;
  double delta = 1.0;

  double beta_for(int budget) const { return beta.value_or(1.0 / budget); }
  void check() const;
};

struct SpeakerParams {
  double lambda = 2.0;
};

double utility(const EvaluationResult& result, const UtilityParams& p);

/// Negative whitespace-token count.
double length_score(const Explanation& explanation);

/// delta * succ - alpha * mean attempt length (failed attempts run to the
/// budget, so they are charged the budget).
double direct_score(const EvaluationResult& result, const UtilityParams& p);

/// Min-max to [0, 1]; all-equal inputs map to 0.5.
std::vector<double> normalize_scores(const std::vector<double>& scores);

struct MapScore {
  std::string explanation_id;
  std::string map_id;
  double score = 0.0;
};

/// normalize_scores applied within each map_id group, preserving input order.
std::vector<double> normalize_per_map(const std::vector<MapScore>& scores);

enum class Quality { Bad, Medium, Good };

std::string_view to_string(Quality q);

struct QualityBin {
  Quality label = Quality::Medium;
  std::string selected_explanation_id;
  std::vector<std::string> members;
  std::vector<double> bin_scores;  // ascending, aligned with members
};

/// Tercile split of one map's scores (min-max normalized first), Bad first.
/// Equal scores are ordered by explanation id. Throws TooFewExplanations
/// below three entries.
std::vector<QualityBin> bin_quality(const std::vector<MapScore>& map_scores);

/// Softmax of lambda * U.
Eigen::VectorXd speaker_distribution(const Eigen::VectorXd& utilities, const SpeakerParams& sp);

}  // namespace wayfinder
