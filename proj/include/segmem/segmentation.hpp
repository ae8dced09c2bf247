#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segmem/corpus.hpp"

namespace segmem {

class Gateway;

struct SegmentSpan {
  std::size_t segment_id = 0;
  std::size_t start = 0;  // first turn, inclusive
  std::size_t end = 0;    // last turn, inclusive
  std::size_t num_exchanges = 0;

  bool operator==(const SegmentSpan&) const = default;
};

// A contiguous, gap-free partition of turns [0, n_turns).
class Segmentation {
 public:
  Segmentation() = default;
  // Throws InvariantError unless spans cover [0, n_turns) exactly, in order,
  // with consistent num_exchanges and segment ids 0..K-1.
  Segmentation(std::vector<SegmentSpan> spans, std::size_t n_turns);

  static Segmentation single(std::size_t n_turns);
  // From segment-end indices (last turn of each segment; last == n_turns-1).
  static Segmentation from_ends(const std::vector<std::size_t>& ends, std::size_t n_turns);
  // From internal boundaries: `b` means a segment ends after turn b.
  static Segmentation from_boundaries(std::vector<std::size_t> boundaries, std::size_t n_turns);

  const std::vector<SegmentSpan>& spans() const { return spans_; }
  std::size_t n_turns() const { return n_turns_; }
  std::size_t size() const { return spans_.size(); }
  std::vector<std::size_t> ends() const;
  // Internal boundaries (segment ends excluding the final turn).
  std::vector<std::size_t> boundaries() const;
  // Segment index of every turn.
  std::vector<std::size_t> labels() const;

  bool operator==(const Segmentation&) const = default;

 private:
  std::vector<SegmentSpan> spans_;
  std::size_t n_turns_ = 0;
};

// Throws InvariantError describing the first violated requirement.
void check_invariants(const std::vector<SegmentSpan>& spans, std::size_t n_turns);

struct Rubric {
  struct Example {
    std::string gold_rendering;
    std::string prediction_rendering;
    std::string reflection;
    bool operator==(const Example&) const = default;
  };

  static constexpr std::size_t kMaxItems = 10;

  std::vector<std::string> items;
  std::vector<Example> examples;

  // Appends `item`, evicting the oldest items beyond kMaxItems.
  void add_item(std::string item);

  nlohmann::json to_json() const;
  static Rubric from_json(const nlohmann::json& j);
  static Rubric load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct HardExample {
  Session session;
  Segmentation gold;
  Segmentation predicted;
  double wd = 0.0;
};

// "Turn j:\n[user]: u\n[agent]: r" blocks joined by one blank line.
std::string render_turn(const Turn& turn);
std::string render_session(const Session& session);
std::string render_turns(const Session& session, std::size_t first, std::size_t last);
// Segmented rendering used in reflection prompts: each segment is headed by
// "Segment k:".
std::string render_segmented(const Session& session, const Segmentation& seg);

// Prompt builders.
std::string zero_shot_prompt(const std::string& rendered_session);
std::string rubric_prompt(const std::string& rendered_session, const Rubric& rubric);
std::string reflection_prompt(const std::vector<std::string>& past_items,
                              const std::vector<HardExample>& batch);
std::string render_rubric_items(const std::vector<std::string>& items);
std::string render_rubric_examples(const std::vector<Rubric::Example>& examples);

// Extracts spans from model output. Does not validate coverage.
std::vector<SegmentSpan> parse_segmentation(const std::string& model_output, std::size_t n_turns);

struct RepairResult {
  Segmentation segmentation;
  std::vector<std::string> log;
};

// Coerces arbitrary spans into a valid Segmentation. Throws
// std::invalid_argument when `spans` is empty or n_turns is zero.
RepairResult validate_repair(std::vector<SegmentSpan> spans, std::size_t n_turns);

struct FallbackParams {
  std::size_t window = 2;
  double threshold_sigma = 0.5;
  std::size_t min_seg_len = 2;
};

// Cosine cohesion across each gap between turn j and j+1, using term
// frequencies over `window` turns on either side.
std::vector<double> gap_cohesion(const Session& session, std::size_t window);
std::vector<double> depth_scores(const std::vector<double>& cohesion);
Segmentation fallback_segment(const Session& session, const FallbackParams& params = {});

enum class Provenance { forced, model, repaired, fallback };
std::string to_string(Provenance p);

struct SegmentOutcome {
  Segmentation segmentation;
  Provenance provenance = Provenance::model;
  std::vector<std::string> repair_log;
  std::size_t model_calls = 0;
  std::optional<std::string> error;  // last failure when the fallback was taken
};

struct SegmenterConfig {
  std::string model = "gpt-4-0125";
  int max_tokens = 1024;
  int format_retries = 2;
  bool fallback_on_error = true;
  FallbackParams fallback;
};

class Segmenter {
 public:
  // `gateway` may be null, in which case every multi-turn session goes to
  // the offline fallback.
  Segmenter(Gateway* gateway, SegmenterConfig config = {});

  SegmentOutcome segment_zero_shot(const Session& session) const;
  SegmentOutcome segment_with_rubric(const Session& session, const Rubric& rubric) const;
  // Uses the rubric when one is given.
  SegmentOutcome segment(const Session& session, const Rubric* rubric = nullptr) const;

  const SegmenterConfig& config() const { return config_; }

 private:
  SegmentOutcome run(const Session& session, const std::string& prompt) const;

  Gateway* gateway_;
  SegmenterConfig config_;
};

struct SegmentedPair {
  Session session;
  Segmentation gold;
  Segmentation predicted;
};

// Top-k pairs by WindowDiff, descending; ties keep input order.
std::vector<HardExample> select_hard_examples(const std::vector<SegmentedPair>& pairs,
                                              std::size_t k);

struct RubricLearningParams {
  std::size_t top_m = 100;
  std::size_t batches = 10;
};

struct RubricLearningLog {
  std::size_t segmentation_calls = 0;
  std::size_t reflection_calls = 0;
  std::vector<std::string> skipped;  // one entry per skipped batch
};

// Reflection-driven rubric learning over the hardest training sessions.
// Throws std::runtime_error when every batch is skipped.
Rubric learn_rubric(const std::vector<SegGoldSession>& train, Gateway& gateway,
                    const SegmenterConfig& config, const RubricLearningParams& params = {},
                    RubricLearningLog* log = nullptr);

// Persisted form of one segmented dialogue.
nlohmann::json to_json(const SegmentSpan& span);
SegmentSpan span_from_json(const nlohmann::json& j);

}  // namespace segmem
