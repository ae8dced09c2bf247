#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segmem/corpus.hpp"
#include "segmem/modelgate.hpp"
#include "segmem/segmentation.hpp"

namespace segmem {

class Compressor;

enum class Granularity { turn, session, segment };
std::string to_string(Granularity g);
Granularity granularity_from_string(const std::string& s);

struct MemoryUnit {
  std::string unit_id;
  std::string conversation_id;
  std::size_t session_index = 0;
  std::size_t turn_start = 0;
  std::size_t turn_end = 0;
  std::string raw_text;
  std::string index_text;  // what retrieval scores; the compressed text when denoising
  std::size_t token_count = 0;  // of raw_text

  std::pair<std::size_t, std::size_t> order_key() const { return {session_index, turn_start}; }
  bool operator==(const MemoryUnit&) const = default;
};

class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(Granularity granularity, std::vector<MemoryUnit> units);

  Granularity granularity() const { return granularity_; }
  const std::vector<MemoryUnit>& units() const { return units_; }
  std::size_t n_units() const { return units_.size(); }
  bool empty() const { return units_.empty(); }
  const std::map<std::string, std::size_t>& df() const { return df_; }
  double avg_len() const { return avg_len_; }
  std::size_t doc_len(std::size_t i) const { return doc_len_[i]; }
  const std::vector<TokenSeq>& index_tokens() const { return index_tokens_; }
  const MemoryUnit* find(const std::string& unit_id) const;

  // Units of one conversation, with statistics recomputed.
  MemoryBank for_conversation(const std::string& conversation_id) const;

  // Directory layout: units.jsonl + stats.json.
  void save(const std::filesystem::path& dir) const;
  static MemoryBank load(const std::filesystem::path& dir);

 private:
  Granularity granularity_ = Granularity::turn;
  std::vector<MemoryUnit> units_;
  std::vector<TokenSeq> index_tokens_;
  std::vector<std::size_t> doc_len_;
  std::map<std::string, std::size_t> df_;
  double avg_len_ = 0.0;
  std::map<std::string, std::size_t> by_id_;
};

nlohmann::json to_json(const MemoryUnit& unit);
MemoryUnit memory_unit_from_json(const nlohmann::json& j);

// Segmentation supplier for segment granularity: (conversation, session index)
// -> segmentation of that session.
using SessionSegmenter =
    std::function<Segmentation(const Conversation&, std::size_t session_index)>;

// Throws std::invalid_argument when granularity is segment and no segmenter
// is given.
MemoryBank build_bank(const std::vector<Conversation>& conversations, Granularity granularity,
                      const SessionSegmenter& segmenter = {},
                      const Compressor* compressor = nullptr);

struct ScoredUnit {
  std::string unit_id;
  double score = 0.0;
};

struct RetrievalResult {
  std::vector<ScoredUnit> ranked;  // descending score, ties by order key
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

double bm25_idf(std::size_t n_units, std::size_t df);
RetrievalResult bm25_search(const std::string& query, const MemoryBank& bank, std::size_t top_k,
                            const Bm25Params& params = {});

// Unit embeddings aligned with bank order.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<std::string> unit_ids;
  std::vector<float> data;  // row-major, unit_ids.size() x dim

  std::size_t count() const { return unit_ids.size(); }
  const float* row(std::size_t i) const { return data.data() + i * dim; }

  // <stem>.bin (raw little-endian float32) + <stem>.json {dim, count, unit_ids}.
  void save(const std::filesystem::path& stem) const;
  static EmbeddingMatrix load(const std::filesystem::path& stem);
};

EmbeddingMatrix embed_bank(const MemoryBank& bank, Gateway& embedder);

// Exhaustive dot-product search. Throws std::invalid_argument when the
// matrix does not line up with the bank or the query dimension differs.
RetrievalResult dense_search(const std::string& query, const MemoryBank& bank, std::size_t top_k,
                             const EmbeddingMatrix& embeddings, Gateway& embedder);
RetrievalResult dense_search(const Embedding& query, const MemoryBank& bank, std::size_t top_k,
                             const EmbeddingMatrix& embeddings);

// Ranked search over a bank; top_k is clamped to the bank size.
using Retriever = std::function<RetrievalResult(const std::string& query, const MemoryBank& bank,
                                                std::size_t top_k)>;

struct Budget {
  enum class Mode { units, tokens };
  Mode mode = Mode::tokens;
  std::size_t value = 4000;
};

// Units mode: the first N ranked units. Tokens mode: greedy in rank order,
// skipping any unit that would overflow the remaining budget.
std::vector<MemoryUnit> retrieve_budgeted(const std::string& query, const MemoryBank& bank,
                                          const Retriever& retriever, const Budget& budget);

enum class ContextMode { zero_history, full_history, retrieved };

// retrieved: units in time order, blank-line separated. full_history needs
// the conversation; `use_index_text` swaps in the denoised text.
std::string assemble_context(const std::vector<MemoryUnit>& units, ContextMode mode,
                             const Conversation* conversation = nullptr,
                             bool use_index_text = false);

}  // namespace segmem
