#include "wayfinder/analysis.hpp"

#include "wayfinder/errors.hpp"
#include "wayfinder/hashing.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace wayfinder {

namespace {

bool contains_phrase(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) != tokens.end();
}

bool is_numeral(const std::string& t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

StrategyCode code_keywords(const Explanation& explanation, const Lexicon& lexicon) {
  const auto tokens = tokenize_words(explanation.text);
  StrategyCode code;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (lexicon.value_terms.contains(t)) code.has_value = true;
    if (lexicon.low_policy_terms.contains(t)) code.has_low_policy = true;
    if (lexicon.direction(t)) {
      const bool count_before = i > 0 && lexicon.count(tokens[i - 1]) && tokens[i - 1] != "once";
      const bool count_after = i + 1 < tokens.size() && lexicon.count(tokens[i + 1]);
      if (count_before || count_after) code.has_low_policy = true;
    }
    if (lexicon.conditional_markers.contains(t)) {
      const bool clause_only = lexicon.clause_initial_rule_markers.contains(t) &&
                               !lexicon.rule_markers.contains(t);
      const bool clause_initial = i == 0 || tokens[i - 1] == "," || tokens[i - 1] == ".";
      if (!clause_only || clause_initial) code.has_high_policy = true;
    }
  }
  return code;
}

std::string_view to_string(FailureMode mode) {
  switch (mode) {
    case FailureMode::DirectionOverload: return "DirectionOverload";
    case FailureMode::Overcomplicated: return "Overcomplicated";
    case FailureMode::OverlyCompressed: return "OverlyCompressed";
    case FailureMode::SpatialAmbiguity: return "SpatialAmbiguity";
  }
  return "?";
}

int direction_word_count(const Explanation& explanation, const Lexicon& lexicon) {
  const auto tokens = tokenize_words(explanation.text);
  return static_cast<int>(std::count_if(tokens.begin(), tokens.end(),
                                        [&](const std::string& t) { return lexicon.direction(t); }));
}

FailureModes classify_failures(const Explanation& explanation, double succ,
                               const Lexicon& lexicon) {
  const auto& th = lexicon.thresholds;
  FailureModes modes;
  if (succ >= th.failure_success_below) return modes;

  const auto tokens = tokenize_words(explanation.text);
  const int words = explanation.word_count();
  if (direction_word_count(explanation, lexicon) >= th.direction_overload_min_directions) {
    modes.insert(FailureMode::DirectionOverload);
  }
  const bool conditional =
      std::any_of(tokens.begin(), tokens.end(),
                  [&](const std::string& t) { return lexicon.conditional_markers.contains(t); });
  if (words >= th.overcomplicated_min_words && conditional) {
    modes.insert(FailureMode::Overcomplicated);
  }
  if (words <= th.compressed_max_words) modes.insert(FailureMode::OverlyCompressed);

  const bool vague = std::any_of(lexicon.vague_locatives.begin(), lexicon.vague_locatives.end(),
                                 [&](const auto& phrase) { return contains_phrase(tokens, phrase); });
  const bool concrete = std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
    return lexicon.concrete_landmarks.contains(t) || is_numeral(t);
  });
  if (vague && !concrete) modes.insert(FailureMode::SpatialAmbiguity);
  return modes;
}

FailureModes classify_failures(const Explanation& explanation, const EvaluationResult& result,
                               const Lexicon& lexicon) {
  return classify_failures(explanation, result.succ, lexicon);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double mean(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: length mismatch");
  if (xs.size() < 3) throw std::invalid_argument("spearman: need >= 3 pairs");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<WelchResult> welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t: need >= 2 per sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a);
  const double vb = sample_variance(b);
  if (va == 0.0 && vb == 0.0) return std::nullopt;
  const double diff = mean(a) - mean(b);
  const double qa = va / na;
  const double qb = vb / nb;
  WelchResult r;
  r.t = diff / std::sqrt(qa + qb);
  r.df = (qa + qb) * (qa + qb) / (qa * qa / (na - 1) + qb * qb / (nb - 1));
  r.d = diff / std::sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2));
  return r;
}

std::string_view to_string(StudyCondition c) {
  switch (c) {
    case StudyCondition::None: return "None";
    case StudyCondition::Bad: return "Bad";
    case StudyCondition::Medium: return "Medium";
    case StudyCondition::Good: return "Good";
  }
  return "?";
}

namespace {

std::optional<StudyCondition> parse_condition(std::string_view s) {
  for (auto c : {StudyCondition::None, StudyCondition::Bad, StudyCondition::Medium, StudyCondition::Good}) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

}  // namespace

std::vector<CorpusEntry> parse_corpus(std::string_view jsonl) {
  std::vector<CorpusEntry> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = "corpus line " + std::to_string(line_no) + ": ";
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(where + "not a JSON object");
    try {
      CorpusEntry e;
      e.explanation.id = j.at("id").get<std::string>();
      e.explanation.map_id = j.at("map_id").get<std::string>();
      e.explanation.text = j.at("text").get<std::string>();
      if (j.contains("rating") && !j["rating"].is_null()) {
        e.rating = j["rating"].get<double>();
        if (*e.rating < 0 || *e.rating > 100) throw Error("rating outside [0, 100]");
      }
      if (j.contains("condition") && !j["condition"].is_null()) {
        e.condition = parse_condition(j["condition"].get<std::string>());
        if (!e.condition) throw Error("condition must be None, Bad, Medium or Good");
      }
      if (j.contains("path_length") && !j["path_length"].is_null()) {
        e.path_length = j["path_length"].get<int>();
        if (*e.path_length < 1) throw Error("path_length must be positive");
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(where + ex.what());
    } catch (const Error& ex) {
      throw Error(where + ex.what());
    }
  }
  return out;
}

std::vector<CorpusEntry> load_corpus(const std::string& path) { return parse_corpus(read_file(path)); }

std::string corpus_record(const CorpusEntry& entry) {
  nlohmann::ordered_json j;
  j["id"] = entry.explanation.id;
  j["map_id"] = entry.explanation.map_id;
  j["text"] = entry.explanation.text;
  if (entry.rating) j["rating"] = *entry.rating;
  if (entry.condition) j["condition"] = to_string(*entry.condition);
  if (entry.path_length) j["path_length"] = *entry.path_length;
  return j.dump();
}

CorpusReport corpus_stats(const std::vector<CorpusEntry>& entries,
                          const std::vector<GridMap>& maps, const Lexicon& lexicon) {
  std::map<std::string, const GridMap*> by_id;
  for (const auto& m : maps) by_id.emplace(m.id(), &m);

  CorpusReport report;
  std::map<std::string, std::pair<int, long>> words;  // map -> (n, total words)
  int value = 0;
  int low = 0;
  int high = 0;
  int mixed = 0;
  std::map<StudyCondition, long> path_total;
  for (const auto& e : entries) {
    if (!by_id.contains(e.explanation.map_id)) {
      throw UnknownMapReference("explanation " + e.explanation.id + " references unknown map '" +
                                e.explanation.map_id + "'");
    }
    auto& w = words[e.explanation.map_id];
    ++w.first;
    w.second += e.explanation.word_count();
    const auto code = code_keywords(e.explanation, lexicon);
    value += code.has_value;
    low += code.has_low_policy;
    high += code.has_high_policy;
    mixed += code.mixed();
    if (e.path_length) {
      const auto c = e.condition.value_or(StudyCondition::None);
      path_total[c] += *e.path_length;
      ++report.path_length_n[c];
    }
  }
  report.total = static_cast<int>(entries.size());
  if (report.total > 0) {
    const double n = report.total;
    report.prop_value = value / n;
    report.prop_low_policy = low / n;
    report.prop_high_policy = high / n;
    report.prop_mixed = mixed / n;
  }
  for (const auto& [c, total] : path_total) {
    report.mean_path_length[c] = static_cast<double>(total) / report.path_length_n[c];
  }

  std::vector<double> len, sp, brit, open;
  for (const auto& [id, w] : words) {
    MapRow row;
    row.map_id = id;
    row.explanations = w.first;
    row.mean_words = static_cast<double>(w.second) / w.first;
    row.metrics = graph_metrics(*by_id.at(id));
    len.push_back(row.mean_words);
    sp.push_back(row.metrics.shortest_path);
    brit.push_back(row.metrics.brittleness);
    open.push_back(row.metrics.openness);
    report.maps.push_back(std::move(row));
  }
  if (len.size() >= 3) {
    report.rho_length_shortest_path = spearman(len, sp);
    report.rho_length_brittleness = spearman(len, brit);
    report.rho_length_openness = spearman(len, open);
  }
  return report;
}

}  // namespace wayfinder
