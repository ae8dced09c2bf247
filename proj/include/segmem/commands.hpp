#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segmem/config.hpp"

namespace segmem {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;

struct CommandIO {
  std::ostream& out;
  std::ostream& err;
};

struct IngestArgs {
  std::string input;
  std::string format = "auto";  // auto | conversation | qa | seg-gold
  std::size_t merge = 1;         // sessions per merged session
  std::string out;
};

struct SegmentArgs {
  std::string input;
  std::string format = "auto";  // auto | conversation | seg-gold
  std::string out;
};

struct LearnRubricArgs {
  std::string input;  // seg-gold training file
  std::size_t top_m = 100;
  std::size_t batches = 10;
  std::string out;
};

struct BuildBankArgs {
  std::string input;     // conversations
  std::string segments;  // optional output of `segment`
  std::string out;       // bank directory
};

struct AnswerArgs {
  std::string input;  // conversations
  std::string qa;
  std::string bank;      // optional prebuilt bank directory
  std::string segments;  // optional, used when the bank is built on the fly
  std::string out;
};

struct EvalSegArgs {
  std::string gold;
  std::string pred;
  std::string out;
};

struct EvalQaArgs {
  std::string answers;
  std::string qa;
  std::string compare;  // optional second answers file for pairwise judging
  std::string out;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_ingest(const RunConfig& config, const IngestArgs& args, CommandIO io);
int cmd_segment(const RunConfig& config, const SegmentArgs& args, CommandIO io);
int cmd_learn_rubric(const RunConfig& config, const LearnRubricArgs& args, CommandIO io);
int cmd_build_bank(const RunConfig& config, const BuildBankArgs& args, CommandIO io);
int cmd_answer(const RunConfig& config, const AnswerArgs& args, CommandIO io);
int cmd_eval_seg(const RunConfig& config, const EvalSegArgs& args, CommandIO io);
int cmd_eval_qa(const RunConfig& config, const EvalQaArgs& args, CommandIO io);
int cmd_report(const RunConfig& config, const ReportArgs& args, CommandIO io);

// Generation prompt: retrieved history followed by the user request.
std::string generation_prompt(const std::string& context, const std::string& question);

// Plain-text table of a report's aggregate block.
std::string render_report_table(const nlohmann::json& report);

}  // namespace segmem
