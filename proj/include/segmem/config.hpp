#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "segmem/denoise.hpp"
#include "segmem/memory.hpp"
#include "segmem/modelgate.hpp"
#include "segmem/segmentation.hpp"

namespace segmem {

enum class RetrieverKind { bm25, dense };
std::string to_string(RetrieverKind r);
RetrieverKind retriever_from_string(const std::string& s);

std::string to_string(ContextMode m);
ContextMode context_mode_from_string(const std::string& s);

// Everything a run needs, serialisable so that reports can embed it.
// Defaults: 4000-token budget, baseline compression at rate 0.75, BM25.
struct RunConfig {
  struct Paths {
    std::string data;
    std::string cache;
    std::string output;
  } paths;

  Granularity granularity = Granularity::segment;
  RetrieverKind retriever = RetrieverKind::bm25;
  Bm25Params bm25;
  Budget budget{Budget::Mode::tokens, 4000};
  ContextMode context_mode = ContextMode::retrieved;
  // Feed the generator the denoised text instead of the original units.
  bool context_uses_index_text = false;

  struct Compression {
    bool enabled = true;
    CompressionConfig config;
  } compression;

  struct SegmenterSettings {
    enum class Mode { model, fallback } mode = Mode::model;
    std::optional<std::string> rubric_path;
    SegmenterConfig params;
  } segmenter;

  struct Models {
    std::string generator = "gpt-4-0125";
    std::string segmentation = "gpt-4-0125";
    std::string judge = "gpt-4-0125";
    std::string embedding = "multi-qa-mpnet-base-dot-v1";
  } models;

  Endpoints endpoints;
  std::optional<std::string> mock_path;
  bool judge_enabled = false;
  std::size_t concurrency = 4;
  int retries = 3;
  int generation_max_tokens = 512;

  // Throws std::invalid_argument on out-of-range values.
  void validate() const;

  nlohmann::json to_json(bool include_secrets = false) const;
  // Starts from defaults (endpoints from the environment) and applies every
  // key present in `j`.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

// Mock backend when a script is configured, HTTP otherwise.
std::unique_ptr<Gateway> make_gateway(const RunConfig& config);

}  // namespace segmem
