#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "segmem/memory.hpp"

namespace segmem {

class Gateway;

enum class CompressionBackend { baseline, external };
std::string to_string(CompressionBackend b);
CompressionBackend compression_backend_from_string(const std::string& s);

struct CompressionConfig {
  // Target ratio of tokens kept: (#tokens after) / (#tokens before).
  double rate = 0.75;
  CompressionBackend backend = CompressionBackend::baseline;
  // On external failure, compress with the baseline instead of failing.
  bool fallback_to_baseline = false;

  void validate() const;
};

// Document frequencies over a set of texts.
struct CorpusStats {
  std::map<std::string, std::size_t> df;
  std::size_t n_docs = 0;

  static CorpusStats from_texts(const std::vector<std::string>& texts);
  // Smoothed IDF, ln((N+1)/(df+1)) + 1; unseen tokens score highest.
  double idf(const std::string& token) const;
};

// Keeps the ceil(rate * n) highest-IDF tokens (earlier position wins ties)
// and emits them in their original order, space-joined.
std::string compress_baseline(const std::string& text, double rate, const CorpusStats& stats);

class Compressor {
 public:
  // `external` is required only for the external backend.
  explicit Compressor(CompressionConfig config, Gateway* external = nullptr);

  // `stats` is required for the baseline backend (and for fallback).
  std::string compress(const std::string& text, const CorpusStats* stats) const;
  const CompressionConfig& config() const { return config_; }

 private:
  CompressionConfig config_;
  Gateway* external_;
};

// Fills index_text for every unit from its raw_text, using document
// frequencies over the units themselves. raw_text is left unchanged.
void compress_bank_texts(std::vector<MemoryUnit>& units, const Compressor& compressor);

}  // namespace segmem
