#include "segmem/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "segmem/modelgate.hpp"

namespace segmem {

std::string to_string(CompressionBackend b) {
  return b == CompressionBackend::baseline ? "baseline" : "external";
}

CompressionBackend compression_backend_from_string(const std::string& s) {
  if (s == "baseline") return CompressionBackend::baseline;
  if (s == "external") return CompressionBackend::external;
  throw std::invalid_argument("unknown compression backend '" + s + "'");
}

void CompressionConfig::validate() const {
  if (!(rate > 0.0 && rate <= 1.0))
    throw std::invalid_argument("compression rate must lie in (0, 1], got " + std::to_string(rate));
}

CorpusStats CorpusStats::from_texts(const std::vector<std::string>& texts) {
  CorpusStats s;
  s.n_docs = texts.size();
  for (const auto& t : texts) {
    auto toks = tokenize(t);
    std::set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& tok : uniq) ++s.df[tok];
  }
  return s;
}

double CorpusStats::idf(const std::string& token) const {
  auto it = df.find(token);
  double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((static_cast<double>(n_docs) + 1.0) / (d + 1.0)) + 1.0;
}

std::string compress_baseline(const std::string& text, double rate, const CorpusStats& stats) {
  CompressionConfig{rate}.validate();
  auto toks = tokenize(text);
  const std::size_t n = toks.size();
  const auto keep = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
  if (keep >= n) return join_tokens(toks);

  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) score[i] = stats.idf(toks[i]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());

  TokenSeq kept;
  kept.reserve(keep);
  for (auto i : order) kept.push_back(toks[i]);
  return join_tokens(kept);
}

Compressor::Compressor(CompressionConfig config, Gateway* external)
    : config_(config), external_(external) {
  config_.validate();
}

std::string Compressor::compress(const std::string& text, const CorpusStats* stats) const {
  auto baseline = [&] {
    if (!stats) throw std::invalid_argument("baseline compression needs corpus statistics");
    return compress_baseline(text, config_.rate, *stats);
  };
  if (config_.backend == CompressionBackend::baseline) return baseline();
  try {
    if (!external_) throw TransportError("external compressor", "no compression service configured", false);
    return external_->compress(text, config_.rate);
  } catch (const TransportError&) {
    if (config_.fallback_to_baseline && stats) return baseline();
    throw;
  }
}

void compress_bank_texts(std::vector<MemoryUnit>& units, const Compressor& compressor) {
  std::vector<std::string> raw;
  raw.reserve(units.size());
  for (const auto& u : units) raw.push_back(u.raw_text);
  const auto stats = CorpusStats::from_texts(raw);
  for (auto& u : units) {
    if (u.raw_text.empty()) {
      u.index_text.clear();
      continue;
    }
    try {
      u.index_text = compressor.compress(u.raw_text, &stats);
    } catch (const TransportError& e) {
      throw TransportError(e.backend(), "unit " + u.unit_id + ": " + e.what(), e.retryable(),
                           e.status());
    } catch (const std::exception& e) {
      throw std::runtime_error("unit " + u.unit_id + ": " + e.what());
    }
  }
}

}  // namespace segmem
