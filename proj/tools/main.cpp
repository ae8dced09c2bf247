// segmem: command-line driver for the memory pipeline.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "segmem/commands.hpp"
#include "segmem/config.hpp"

using namespace segmem;

namespace {

struct SharedFlags {
  std::string config;
  std::string granularity;
  std::string retriever;
  std::optional<std::size_t> budget_tokens;
  std::optional<std::size_t> budget_units;
  std::optional<double> compress_rate;
  bool no_compress = false;
  std::string mock;
  std::string cache_dir;
  std::string segmenter;
  std::string rubric;
  std::string context_mode;
  bool judge = false;
  std::optional<std::size_t> concurrency;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--config", f.config, "run config JSON");
  cmd->add_option("--granularity", f.granularity, "turn|session|segment")
      ->check(CLI::IsMember({"turn", "session", "segment"}));
  cmd->add_option("--retriever", f.retriever, "bm25|dense")->check(CLI::IsMember({"bm25", "dense"}));
  auto* bt = cmd->add_option("--budget-tokens", f.budget_tokens, "context budget in tokens");
  auto* bu = cmd->add_option("--budget-units", f.budget_units, "context budget in units");
  bt->excludes(bu);
  cmd->add_option("--compress-rate", f.compress_rate, "kept-token ratio in (0,1]");
  cmd->add_flag("--no-compress", f.no_compress, "disable denoising");
  cmd->add_option("--mock", f.mock, "scripted mock backend");
  cmd->add_option("--cache-dir", f.cache_dir, "response cache directory");
  cmd->add_option("--segmenter", f.segmenter, "model|fallback")
      ->check(CLI::IsMember({"model", "fallback"}));
  cmd->add_option("--rubric", f.rubric, "learned rubric JSON");
  cmd->add_option("--context", f.context_mode, "retrieved|zero_history|full_history");
  cmd->add_flag("--judge", f.judge, "enable model judges");
  cmd->add_option("--concurrency", f.concurrency, "in-flight request limit");
}

RunConfig resolve(const SharedFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig::from_json(nlohmann::json::object())
                                 : RunConfig::load(f.config);
  if (!f.granularity.empty()) c.granularity = granularity_from_string(f.granularity);
  if (!f.retriever.empty()) c.retriever = retriever_from_string(f.retriever);
  if (f.budget_tokens) c.budget = {Budget::Mode::tokens, *f.budget_tokens};
  if (f.budget_units) c.budget = {Budget::Mode::units, *f.budget_units};
  if (f.compress_rate) {
    c.compression.enabled = true;
    c.compression.config.rate = *f.compress_rate;
  }
  if (f.no_compress) c.compression.enabled = false;
  if (!f.mock.empty()) c.mock_path = f.mock;
  if (!f.cache_dir.empty()) c.paths.cache = f.cache_dir;
  if (!f.segmenter.empty())
    c.segmenter.mode = f.segmenter == "model" ? RunConfig::SegmenterSettings::Mode::model
                                              : RunConfig::SegmenterSettings::Mode::fallback;
  if (!f.rubric.empty()) c.segmenter.rubric_path = f.rubric;
  if (!f.context_mode.empty()) c.context_mode = context_mode_from_string(f.context_mode);
  if (f.judge) c.judge_enabled = true;
  if (f.concurrency) c.concurrency = *f.concurrency;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segment-level conversational memory pipeline"};
  app.require_subcommand(1);

  SharedFlags flags;
  IngestArgs ingest;
  SegmentArgs segment;
  LearnRubricArgs learn;
  BuildBankArgs bank;
  AnswerArgs answer;
  EvalSegArgs eval_seg;
  EvalQaArgs eval_qa;
  ReportArgs report;

  auto* c_ingest = app.add_subcommand("ingest", "validate and normalise an input file");
  c_ingest->add_option("input", ingest.input)->required();
  c_ingest->add_option("--format", ingest.format)
      ->check(CLI::IsMember({"auto", "conversation", "qa", "seg-gold"}));
  c_ingest->add_option("--merge", ingest.merge, "sessions per merged session");
  c_ingest->add_option("--out", ingest.out);

  auto* c_segment = app.add_subcommand("segment", "segment every session");
  c_segment->add_option("input", segment.input)->required();
  c_segment->add_option("--format", segment.format)
      ->check(CLI::IsMember({"auto", "conversation", "seg-gold"}));
  c_segment->add_option("--out", segment.out)->required();

  auto* c_learn = app.add_subcommand("learn-rubric", "learn segmentation rubric by reflection");
  c_learn->add_option("input", learn.input)->required();
  c_learn->add_option("--top-m", learn.top_m);
  c_learn->add_option("--batches", learn.batches);
  c_learn->add_option("--out", learn.out)->required();

  auto* c_bank = app.add_subcommand("build-bank", "build the memory bank");
  c_bank->add_option("input", bank.input)->required();
  c_bank->add_option("--segments", bank.segments, "output of `segment`");
  c_bank->add_option("--out", bank.out)->required();

  auto* c_answer = app.add_subcommand("answer", "answer QA items with retrieved memory");
  c_answer->add_option("input", answer.input, "conversations")->required();
  c_answer->add_option("--qa", answer.qa)->required();
  c_answer->add_option("--bank", answer.bank, "prebuilt bank directory");
  c_answer->add_option("--segments", answer.segments);
  c_answer->add_option("--out", answer.out)->required();

  auto* c_eval_seg = app.add_subcommand("eval-seg", "score segmentations against gold");
  c_eval_seg->add_option("--gold", eval_seg.gold)->required();
  c_eval_seg->add_option("--pred", eval_seg.pred)->required();
  c_eval_seg->add_option("--out", eval_seg.out)->required();

  auto* c_eval_qa = app.add_subcommand("eval-qa", "score answers");
  c_eval_qa->add_option("answers", eval_qa.answers)->required();
  c_eval_qa->add_option("--qa", eval_qa.qa)->required();
  c_eval_qa->add_option("--compare", eval_qa.compare, "second answers file for pairwise judging");
  c_eval_qa->add_option("--out", eval_qa.out)->required();

  auto* c_report = app.add_subcommand("report", "print report tables");
  c_report->add_option("inputs", report.inputs)->required();
  c_report->add_option("--out", report.out, "combined JSON");

  for (auto* sub : app.get_subcommands({})) add_shared(sub, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  RunConfig config;
  try {
    config = resolve(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitUsage;
  }

  CommandIO io{std::cout, std::cerr};
  try {
    if (*c_ingest) return cmd_ingest(config, ingest, io);
    if (*c_segment) return cmd_segment(config, segment, io);
    if (*c_learn) return cmd_learn_rubric(config, learn, io);
    if (*c_bank) return cmd_build_bank(config, bank, io);
    if (*c_answer) return cmd_answer(config, answer, io);
    if (*c_eval_seg) return cmd_eval_seg(config, eval_seg, io);
    if (*c_eval_qa) return cmd_eval_qa(config, eval_qa, io);
    if (*c_report) return cmd_report(config, report, io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
