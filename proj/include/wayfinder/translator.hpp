#pragma once

#include "wayfinder/chat.hpp"
#include "wayfinder/gridworld.hpp"
#include "wayfinder/guidance.hpp"
#include "wayfinder/lexicon.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace wayfinder {

/// Number of whitespace-separated tokens.
int count_words(std::string_view text);

struct Explanation {
  std::string id;
  std::string map_id;
  std::string text;

  int word_count() const { return count_words(text); }
};

struct ParseFailure {
  std::string message;
  int line = 0;  // 0 when the failure is not positional
  int col = 0;

  friend bool operator==(const ParseFailure&, const ParseFailure&) = default;
};

/// One draw from the compilation distribution of an (explanation, map) pair.
struct CompilationRecord {
  std::string explanation_id;
  std::string map_id;
  int sample_index = 0;
  std::string raw_output;
  std::variant<GuidanceProgram, ParseFailure> program;
  std::uint64_t seed = 0;

  bool ok() const { return std::holds_alternative<GuidanceProgram>(program); }
  const GuidanceProgram& guidance() const { return std::get<GuidanceProgram>(program); }

  friend bool operator==(const CompilationRecord& a, const CompilationRecord& b);
};

/// JSON object text; load_record(save_record(r)) == r.
std::string save_record(const CompilationRecord& record);
CompilationRecord load_record(std::string_view text);

/// Parses raw translator output; SyntaxError and EmptyProgram become
/// ParseFailure values.
std::variant<GuidanceProgram, ParseFailure> parse_or_failure(std::string_view text);

enum class TranslatorKind { Oracle, Keyword, Remote, Scripted };

std::string_view to_string(TranslatorKind kind);
std::optional<TranslatorKind> parse_translator_kind(std::string_view name);

struct TranslatorConfig {
  TranslatorKind kind = TranslatorKind::Keyword;
  std::optional<std::string> endpoint_url;
  std::optional<std::string> model_name;
  double temperature = 0.7;
  int max_samples = 5;  // K
  std::optional<std::string> cache_dir;
  bool compiler_sees_map = false;
  int max_in_flight = 4;
  RetryPolicy retry;
  std::string api_key;

  /// Throws std::invalid_argument when an invariant is violated.
  void check() const;
};

/// The stochastic compiler from explanation text to guidance programs.
///
/// `sequence` counts the compilations already requested in the current
/// episode (0 for the first one); only the scripted translator uses it.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual TranslatorKind kind() const = 0;
  virtual CompilationRecord compile(const Explanation& explanation, const GridMap& world,
                                    std::uint64_t seed, int sequence = 0) = 0;
};

/// Shortest path start -> goal as maximal same-direction runs plus a goal
/// annotation of value 10.
GuidanceProgram oracle_translate(const GridMap& world);

/// Deterministic pattern extraction. Throws EmptyProgram if nothing is
/// recognised.
GuidanceProgram keyword_translate(const Explanation& explanation, const GridMap& world,
                                  const Lexicon& lexicon = default_lexicon());

/// Row or column band k in {0, 1, 2} of an extent split in thirds.
std::pair<int, int> third_band(int k, int extent);

class OracleTranslator final : public Translator {
 public:
  TranslatorKind kind() const override { return TranslatorKind::Oracle; }
  CompilationRecord compile(const Explanation& explanation, const GridMap& world,
                            std::uint64_t seed, int sequence = 0) override;
};

class KeywordTranslator final : public Translator {
 public:
  explicit KeywordTranslator(const Lexicon& lexicon = default_lexicon()) : lexicon_(lexicon) {}
  TranslatorKind kind() const override { return TranslatorKind::Keyword; }
  CompilationRecord compile(const Explanation& explanation, const GridMap& world,
                            std::uint64_t seed, int sequence = 0) override;

 private:
  const Lexicon& lexicon_;
};

/// Replays canned raw outputs in order: outputs[sequence mod size].
class ScriptedTranslator final : public Translator {
 public:
  explicit ScriptedTranslator(std::vector<std::string> outputs);
  TranslatorKind kind() const override { return TranslatorKind::Scripted; }
  CompilationRecord compile(const Explanation& explanation, const GridMap& world,
                            std::uint64_t seed, int sequence = 0) override;

  const std::vector<std::string>& outputs() const { return outputs_; }

 private:
  std::vector<std::string> outputs_;
};

/// Fixture format: entries separated by lines consisting of `---`.
std::vector<std::string> parse_script(std::string_view text);
ScriptedTranslator load_script(const std::string& path);

/// Fixed prompt for the remote compiler.
std::vector<ChatMessage> build_compile_prompt(const Explanation& explanation,
                                              const GridMap& world, bool include_layout);

inline constexpr std::size_t kMaxReplyBytes = 16 * 1024;

/// LLM-backed compiler. Incoming seeds are folded onto K sample slots so
/// the compilation distribution is approximated by at most K draws per
/// (explanation, map); every draw is cached on disk when a cache is set.
class RemoteTranslator final : public Translator {
 public:
  RemoteTranslator(TranslatorConfig config, std::shared_ptr<ChatClient> client);
  TranslatorKind kind() const override { return TranslatorKind::Remote; }
  CompilationRecord compile(const Explanation& explanation, const GridMap& world,
                            std::uint64_t seed, int sequence = 0) override;

  /// Cache key for a prompt draw: SHA-256 over prompt, model, temperature
  /// and sample seed.
  std::string cache_key(const std::vector<ChatMessage>& prompt, std::uint64_t sample_seed) const;

 private:
  TranslatorConfig config_;
  std::shared_ptr<ChatClient> client_;
  std::unique_ptr<ResponseCache> cache_;
};

/// Convenience: single compile call that checks explanation.map_id.
CompilationRecord compile(Translator& translator, const Explanation& explanation,
                          const GridMap& world, std::uint64_t seed);

/// Builds the translator a config describes. Remote needs a chat client
/// (created from endpoint_url when `client` is null); Scripted needs
/// `script_path`.
std::unique_ptr<Translator> make_translator(const TranslatorConfig& config,
                                            const std::string& script_path = {},
                                            std::shared_ptr<ChatClient> client = nullptr);

}  // namespace wayfinder
