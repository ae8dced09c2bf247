#include "segmem/config.hpp"

#include <fstream>
#include <stdexcept>

#include "segmem/error.hpp"

namespace segmem {

using nlohmann::json;

std::string to_string(RetrieverKind r) { return r == RetrieverKind::bm25 ? "bm25" : "dense"; }

RetrieverKind retriever_from_string(const std::string& s) {
  if (s == "bm25") return RetrieverKind::bm25;
  if (s == "dense") return RetrieverKind::dense;
  throw std::invalid_argument("unknown retriever '" + s + "'");
}

std::string to_string(ContextMode m) {
  switch (m) {
    case ContextMode::zero_history: return "zero_history";
    case ContextMode::full_history: return "full_history";
    case ContextMode::retrieved: return "retrieved";
  }
  return "retrieved";
}

ContextMode context_mode_from_string(const std::string& s) {
  if (s == "zero_history" || s == "zero") return ContextMode::zero_history;
  if (s == "full_history" || s == "full") return ContextMode::full_history;
  if (s == "retrieved") return ContextMode::retrieved;
  throw std::invalid_argument("unknown context mode '" + s + "'");
}

void RunConfig::validate() const {
  if (budget.value == 0) throw std::invalid_argument("budget value must be positive");
  compression.config.validate();
  if (concurrency == 0) throw std::invalid_argument("concurrency must be at least 1");
  if (retries < 0) throw std::invalid_argument("retry count must be non-negative");
  if (bm25.k1 < 0 || bm25.b < 0 || bm25.b > 1)
    throw std::invalid_argument("bm25 parameters out of range");
}

json RunConfig::to_json(bool include_secrets) const {
  auto secret = [&](const std::string& s) -> json {
    if (s.empty()) return "";
    return include_secrets ? json(s) : json("<set>");
  };
  json seg = {{"mode", segmenter.mode == SegmenterSettings::Mode::model ? "model" : "fallback"},
              {"rubric_path", segmenter.rubric_path ? json(*segmenter.rubric_path) : json(nullptr)},
              {"format_retries", segmenter.params.format_retries},
              {"fallback_on_error", segmenter.params.fallback_on_error},
              {"max_tokens", segmenter.params.max_tokens},
              {"fallback",
               {{"window", segmenter.params.fallback.window},
                {"threshold_sigma", segmenter.params.fallback.threshold_sigma},
                {"min_seg_len", segmenter.params.fallback.min_seg_len}}}};
  return {
      {"paths", {{"data", paths.data}, {"cache", paths.cache}, {"output", paths.output}}},
      {"granularity", to_string(granularity)},
      {"retriever", to_string(retriever)},
      {"bm25", {{"k1", bm25.k1}, {"b", bm25.b}}},
      {"budget",
       {{"mode", budget.mode == Budget::Mode::tokens ? "tokens" : "units"},
        {"value", budget.value}}},
      {"context_mode", to_string(context_mode)},
      {"context_uses_index_text", context_uses_index_text},
      {"compression",
       {{"enabled", compression.enabled},
        {"rate", compression.config.rate},
        {"backend", to_string(compression.config.backend)},
        {"fallback_to_baseline", compression.config.fallback_to_baseline}}},
      {"segmenter", std::move(seg)},
      {"models",
       {{"generator", models.generator},
        {"segmentation", models.segmentation},
        {"judge", models.judge},
        {"embedding", models.embedding}}},
      {"endpoints",
       {{"model_endpoint", endpoints.model_endpoint},
        {"model_api_key", secret(endpoints.model_api_key)},
        {"embed_endpoint", endpoints.embed_endpoint},
        {"embed_api_key", secret(endpoints.embed_api_key)},
        {"compress_endpoint", endpoints.compress_endpoint}}},
      {"mock", mock_path ? json(*mock_path) : json(nullptr)},
      {"judge_enabled", judge_enabled},
      {"concurrency", concurrency},
      {"retries", retries},
      {"generation_max_tokens", generation_max_tokens},
  };
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j[key].is_null()) dst = j[key].get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  c.endpoints = Endpoints::from_env();
  if (j.contains("paths")) {
    take(j["paths"], "data", c.paths.data);
    take(j["paths"], "cache", c.paths.cache);
    take(j["paths"], "output", c.paths.output);
  }
  if (j.contains("granularity")) c.granularity = granularity_from_string(j["granularity"]);
  if (j.contains("retriever")) c.retriever = retriever_from_string(j["retriever"]);
  if (j.contains("bm25")) {
    take(j["bm25"], "k1", c.bm25.k1);
    take(j["bm25"], "b", c.bm25.b);
  }
  if (j.contains("budget")) {
    const auto& b = j["budget"];
    if (b.contains("mode")) {
      auto m = b["mode"].get<std::string>();
      if (m != "tokens" && m != "units") throw std::invalid_argument("budget mode must be tokens|units");
      c.budget.mode = m == "tokens" ? Budget::Mode::tokens : Budget::Mode::units;
    }
    take(b, "value", c.budget.value);
  }
  if (j.contains("context_mode")) c.context_mode = context_mode_from_string(j["context_mode"]);
  take(j, "context_uses_index_text", c.context_uses_index_text);
  if (j.contains("compression")) {
    const auto& x = j["compression"];
    take(x, "enabled", c.compression.enabled);
    take(x, "rate", c.compression.config.rate);
    take(x, "fallback_to_baseline", c.compression.config.fallback_to_baseline);
    if (x.contains("backend"))
      c.compression.config.backend = compression_backend_from_string(x["backend"]);
  }
  if (j.contains("segmenter")) {
    const auto& s = j["segmenter"];
    if (s.contains("mode")) {
      auto m = s["mode"].get<std::string>();
      if (m != "model" && m != "fallback")
        throw std::invalid_argument("segmenter mode must be model|fallback");
      c.segmenter.mode =
          m == "model" ? SegmenterSettings::Mode::model : SegmenterSettings::Mode::fallback;
    }
    if (s.contains("rubric_path") && !s["rubric_path"].is_null())
      c.segmenter.rubric_path = s["rubric_path"].get<std::string>();
    take(s, "format_retries", c.segmenter.params.format_retries);
    take(s, "fallback_on_error", c.segmenter.params.fallback_on_error);
    take(s, "max_tokens", c.segmenter.params.max_tokens);
    if (s.contains("fallback")) {
      take(s["fallback"], "window", c.segmenter.params.fallback.window);
      take(s["fallback"], "threshold_sigma", c.segmenter.params.fallback.threshold_sigma);
      take(s["fallback"], "min_seg_len", c.segmenter.params.fallback.min_seg_len);
    }
  }
  if (j.contains("models")) {
    take(j["models"], "generator", c.models.generator);
    take(j["models"], "segmentation", c.models.segmentation);
    take(j["models"], "judge", c.models.judge);
    take(j["models"], "embedding", c.models.embedding);
  }
  if (j.contains("endpoints")) {
    const auto& e = j["endpoints"];
    auto secret = [&](const char* key, std::string& dst) {
      if (e.contains(key) && e[key].is_string() && e[key] != "<set>" && e[key] != "")
        dst = e[key].get<std::string>();
    };
    take(e, "model_endpoint", c.endpoints.model_endpoint);
    take(e, "embed_endpoint", c.endpoints.embed_endpoint);
    take(e, "compress_endpoint", c.endpoints.compress_endpoint);
    secret("model_api_key", c.endpoints.model_api_key);
    secret("embed_api_key", c.endpoints.embed_api_key);
  }
  if (j.contains("mock") && !j["mock"].is_null()) c.mock_path = j["mock"].get<std::string>();
  take(j, "judge_enabled", c.judge_enabled);
  take(j, "concurrency", c.concurrency);
  take(j, "retries", c.retries);
  take(j, "generation_max_tokens", c.generation_max_tokens);
  c.segmenter.params.model = c.models.segmentation;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& config) {
  std::shared_ptr<Backend> backend;
  if (config.mock_path)
    backend = MockBackend::from_file(*config.mock_path);
  else
    backend = std::make_shared<HttpBackend>(config.endpoints);
  GatewayOptions opts;
  opts.max_in_flight = config.concurrency;
  opts.retries = config.retries;
  opts.embed_model = config.models.embedding;
  if (!config.paths.cache.empty()) opts.cache_dir = std::filesystem::path(config.paths.cache);
  return std::make_unique<Gateway>(std::move(backend), std::move(opts));
}

}  // namespace segmem
