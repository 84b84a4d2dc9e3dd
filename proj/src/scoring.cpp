#include "wayfinder/scoring.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/seed.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace wayfinder {

EvaluationResult aggregate(std::string explanation_id, std::string map_id, int budget,
                           std::vector<Attempt> attempts) {
  EvaluationResult r;
  r.explanation_id = std::move(explanation_id);
  r.map_id = std::move(map_id);
  r.budget = budget;
  r.n = static_cast<int>(attempts.size());
  r.len_min = budget;
  long replans = 0;
  long successes = 0;
  long length = 0;
  for (const auto& a : attempts) {
    replans += a.replans;
    length += a.length;
    if (a.success) {
      ++successes;
      r.len_min = std::min(r.len_min, a.length);
    }
  }
  if (r.n > 0) {
    r.replan_mean = static_cast<double>(replans) / r.n;
    r.succ = static_cast<double>(successes) / r.n;
    r.mean_length = static_cast<double>(length) / r.n;
  }
  r.attempts = std::move(attempts);
  return r;
}

namespace {

/// Runs job(i) for i in [0, n) on up to `threads` workers; rethrows the
/// first exception after all workers stop.
void parallel_for(int n, int threads, const std::function<void(int)>& job) {
  threads = std::clamp(threads, 1, std::max(n, 1));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

EvaluationResult evaluate(const Explanation& explanation, const GridMap& world,
                          Translator& translator, const EpisodeParams& params, int n,
                          int parallelism) {
  if (n < 1) throw std::invalid_argument("N must be >= 1");
  std::vector<Attempt> attempts(n);
  parallel_for(n, parallelism, [&](int i) {
    EpisodeParams p = params;
    p.rng_seed = derive_seed(params.rng_seed, static_cast<std::uint64_t>(i));
    attempts[i] = run_episode(world, explanation, translator, p);
  });
  return aggregate(explanation.id, world.id(), effective_budget(params, world),
                   std::move(attempts));
}

EvaluationResult evaluate_direct(const Explanation& explanation, const GridMap& world,
                                 const ActorFactory& make_actor, const EpisodeParams& params,
                                 int n) {
  if (n < 1) throw std::invalid_argument("N must be >= 1");
  std::vector<Attempt> attempts;
  for (int i = 0; i < n; ++i) {
    EpisodeParams p = params;
    p.rng_seed = derive_seed(params.rng_seed, static_cast<std::uint64_t>(i));
    auto actor = make_actor();
    attempts.push_back(direct_episode(world, explanation, *actor, p));
  }
  return aggregate(explanation.id, world.id(), effective_budget(params, world),
                   std::move(attempts));
}

void UtilityParams::check() const {
  const double b = beta.value_or(0.0);
  if (alpha < 0 || b < 0 || gamma < 0 || delta < 0) {
    throw std::invalid_argument("utility weights must be >= 0");
  }
  if (alpha == 0 && beta && b == 0 && gamma == 0) {
    throw std::invalid_argument("alpha, beta and gamma cannot all be zero");
  }
}

double utility(const EvaluationResult& result, const UtilityParams& p) {
  return -p.alpha * result.replan_mean - p.beta_for(result.budget) * result.len_min +
         p.gamma * result.succ;
}

double length_score(const Explanation& explanation) { return -explanation.word_count(); }

double direct_score(const EvaluationResult& result, const UtilityParams& p) {
  return p.delta * result.succ - p.alpha * result.mean_length;
}

std::vector<double> normalize_scores(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<double> out;
  out.reserve(scores.size());
  for (double x : scores) out.push_back(range > 0 ? (x - min) / range : 0.5);
  return out;
}

std::vector<double> normalize_per_map(const std::vector<MapScore>& scores) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < scores.size(); ++i) groups[scores[i].map_id].push_back(i);
  std::vector<double> out(scores.size());
  for (const auto& [map_id, indices] : groups) {
    std::vector<double> raw;
    for (auto i : indices) raw.push_back(scores[i].score);
    const auto norm = normalize_scores(raw);
    for (std::size_t k = 0; k < indices.size(); ++k) out[indices[k]] = norm[k];
  }
  return out;
}

std::string_view to_string(Quality q) {
  switch (q) {
    case Quality::Bad: return "Bad";
    case Quality::Medium: return "Medium";
    case Quality::Good: return "Good";
  }
  return "?";
}

std::vector<QualityBin> bin_quality(const std::vector<MapScore>& map_scores) {
  const std::size_t n = map_scores.size();
  if (n < 3) {
    throw TooFewExplanations("binning needs >= 3 explanations per map, got " + std::to_string(n));
  }
  std::vector<double> raw;
  for (const auto& s : map_scores) raw.push_back(s.score);
  const auto norm = normalize_scores(raw);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (norm[a] != norm[b]) return norm[a] < norm[b];
    return map_scores[a].explanation_id < map_scores[b].explanation_id;
  });

  std::vector<QualityBin> bins(3);
  for (int k = 0; k < 3; ++k) bins[k].label = static_cast<Quality>(k);
  for (std::size_t rank = 0; rank < n; ++rank) {
    auto& bin = bins[3 * rank / n];
    bin.members.push_back(map_scores[order[rank]].explanation_id);
    bin.bin_scores.push_back(norm[order[rank]]);
  }

  constexpr double kTie = 1e-12;
  auto pick = [&](const QualityBin& bin, auto distance) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < bin.members.size(); ++i) {
      const double d = distance(bin.bin_scores[i]);
      const double best_d = distance(bin.bin_scores[best]);
      if (d < best_d - kTie || (std::abs(d - best_d) <= kTie && bin.members[i] < bin.members[best])) {
        best = i;
      }
    }
    return bin.members[best];
  };
  bins[0].selected_explanation_id = pick(bins[0], [](double x) { return x; });
  bins[2].selected_explanation_id = pick(bins[2], [](double x) { return -x; });
  const auto& mid = bins[1].bin_scores;
  const std::size_t m = mid.size();
  const double median = m % 2 ? mid[m / 2] : (mid[m / 2 - 1] + mid[m / 2]) / 2.0;
  bins[1].selected_explanation_id =
      pick(bins[1], [median](double x) { return std::abs(x - median); });
  return bins;
}

Eigen::VectorXd speaker_distribution(const Eigen::VectorXd& utilities, const SpeakerParams& sp) {
  if (utilities.size() == 0) return utilities;
  const Eigen::ArrayXd scaled = sp.lambda * utilities.array();
  const Eigen::ArrayXd weights = (scaled - scaled.maxCoeff()).exp();
  return (weights / weights.sum()).matrix();
}

}  // namespace wayfinder
