#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segmem/corpus.hpp"
#include "segmem/segmentation.hpp"

namespace segmem {

class Gateway;

// ---------------------------------------------------------------------------
// Segmentation metrics

struct SegMetrics {
  double pk = 0;
  double wd = 0;
  double f1 = 0;
  double precision = 0;
  double recall = 0;
  double score = 0;
};

// Half the mean reference segment length, rounded, at least 1.
std::size_t default_window(const Segmentation& ref);

// Beeferman Pk. Throws MetricUndefined when n_turns <= k.
double pk(const Segmentation& ref, const Segmentation& hyp, std::optional<std::size_t> k = {});
double window_diff(const Segmentation& ref, const Segmentation& hyp,
                   std::optional<std::size_t> k = {});

struct PRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

PRF boundary_f1(const Segmentation& ref, const Segmentation& hyp);

// (2*F1 + (1-Pk) + (1-WD)) / 4. Inputs must lie in [0, 1].
double segment_score(double pk, double wd, double f1);

SegMetrics evaluate_segmentation(const Segmentation& ref, const Segmentation& hyp);

// ---------------------------------------------------------------------------
// Retrieval metrics

using RelevanceAssignment = std::map<TurnRef, double>;

// Spreads unit relevance evenly over the gold turns.
RelevanceAssignment assign_relevance(const std::vector<TurnRef>& evidence);

// Sum over 1-based ranks i of rel_i / log2(i + 1).
double dcg(const std::vector<TurnRef>& retrieved_in_rank_order, const RelevanceAssignment& rel);

struct RetrievedSpan {
  std::size_t session_index = 0;
  std::size_t turn_start = 0;
  std::size_t turn_end = 0;
};

// Expands units (in rank order) into their turns, in rank then turn order.
std::vector<TurnRef> expand_turns(const std::vector<RetrievedSpan>& units);

// Fraction of gold turns covered by any retrieved span; 1 when no evidence.
double recall_at(const std::vector<RetrievedSpan>& retrieved, const std::vector<TurnRef>& evidence);

// ---------------------------------------------------------------------------
// Text overlap metrics

// Sentence BLEU-4 with add-one smoothing on zero n-gram matches.
double bleu(const std::string& candidate, const std::string& reference);

enum class RougeVariant { rouge1, rouge2, rougeL };
PRF rouge(const std::string& candidate, const std::string& reference, RougeVariant variant);

// ---------------------------------------------------------------------------
// Judges

struct JudgeVerdict {
  enum class Choice { A, B, NONE };

  std::optional<int> rating;  // 1..100 for single-sample scoring
  std::optional<Choice> choice;
  bool clamped = false;
  std::vector<std::string> raw;  // one entry per judge call
};

std::string to_string(JudgeVerdict::Choice c);

std::string single_score_prompt(const std::string& history, const std::string& question,
                                const std::string& response);
std::string pairwise_prompt(const std::string& history, const std::string& question,
                            const std::string& response_a, const std::string& response_b);

// Parse helpers; std::nullopt when the tag is missing or malformed.
std::optional<int> parse_rating(const std::string& judge_output);
std::optional<JudgeVerdict::Choice> parse_choice(const std::string& judge_output);

struct JudgeConfig {
  std::string model = "gpt-4-0125";
  int max_tokens = 512;
};

// Single-sample score, clamped to [1, 100]. One extra attempt on an
// unparseable reply, then FormatError.
JudgeVerdict gpt4score(Gateway& judge, const std::string& history, const std::string& question,
                       const std::string& response, const JudgeConfig& config = {});

// Runs (A, B) then (B, A). Agreement yields the winner, disagreement NONE.
JudgeVerdict pairwise(Gateway& judge, const std::string& history, const std::string& question,
                      const std::string& response_a, const std::string& response_b,
                      const JudgeConfig& config = {});

}  // namespace segmem
