#include "segmem/memory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "segmem/denoise.hpp"
#include "segmem/error.hpp"

namespace segmem {

using nlohmann::json;

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::turn: return "turn";
    case Granularity::session: return "session";
    case Granularity::segment: return "segment";
  }
  return "turn";
}

Granularity granularity_from_string(const std::string& s) {
  if (s == "turn") return Granularity::turn;
  if (s == "session") return Granularity::session;
  if (s == "segment") return Granularity::segment;
  throw std::invalid_argument("unknown granularity '" + s + "'");
}

// ---------------------------------------------------------------------------
// MemoryBank

MemoryBank::MemoryBank(Granularity granularity, std::vector<MemoryUnit> units)
    : granularity_(granularity), units_(std::move(units)) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < units_.size(); ++i) {
    auto& u = units_[i];
    if (u.turn_start > u.turn_end)
      throw InvariantError("unit " + u.unit_id + " has turn_start > turn_end");
    if (!by_id_.emplace(u.unit_id, i).second)
      throw InvariantError("duplicate unit id " + u.unit_id);
    u.token_count = token_count(u.raw_text);
    auto toks = tokenize(u.index_text);
    std::set<std::string> uniq(toks.begin(), toks.end());
    for (const auto& t : uniq) ++df_[t];
    doc_len_.push_back(toks.size());
    total += toks.size();
    index_tokens_.push_back(std::move(toks));
  }
  avg_len_ = units_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(units_.size());
}

const MemoryUnit* MemoryBank::find(const std::string& unit_id) const {
  auto it = by_id_.find(unit_id);
  return it == by_id_.end() ? nullptr : &units_[it->second];
}

MemoryBank MemoryBank::for_conversation(const std::string& conversation_id) const {
  std::vector<MemoryUnit> subset;
  for (const auto& u : units_)
    if (u.conversation_id == conversation_id) subset.push_back(u);
  return MemoryBank(granularity_, std::move(subset));
}

json to_json(const MemoryUnit& u) {
  return {{"unit_id", u.unit_id},
          {"conversation_id", u.conversation_id},
          {"session_index", u.session_index},
          {"turn_range", {u.turn_start, u.turn_end}},
          {"raw_text", u.raw_text},
          {"index_text", u.index_text},
          {"token_count", u.token_count}};
}

MemoryUnit memory_unit_from_json(const json& j) {
  MemoryUnit u;
  u.unit_id = j.at("unit_id").get<std::string>();
  u.conversation_id = j.at("conversation_id").get<std::string>();
  u.session_index = j.at("session_index").get<std::size_t>();
  u.turn_start = j.at("turn_range").at(0).get<std::size_t>();
  u.turn_end = j.at("turn_range").at(1).get<std::size_t>();
  u.raw_text = j.at("raw_text").get<std::string>();
  u.index_text = j.at("index_text").get<std::string>();
  u.token_count = j.value("token_count", std::size_t{0});
  return u;
}

void MemoryBank::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<json> rows;
  for (const auto& u : units_) rows.push_back(to_json(u));
  write_jsonl(dir / "units.jsonl", rows);
  json stats = {{"granularity", to_string(granularity_)},
                {"n_units", units_.size()},
                {"avg_len", avg_len_},
                {"df", df_}};
  std::ofstream out(dir / "stats.json", std::ios::binary | std::ios::trunc);
  out << stats.dump(1) << '\n';
}

MemoryBank MemoryBank::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "stats.json");
  if (!in) throw std::runtime_error("no stats.json in bank directory " + dir.string());
  json stats;
  try {
    stats = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError((dir / "stats.json").string() + ": " + e.what());
  }
  std::vector<MemoryUnit> units;
  for (const auto& row : read_jsonl(dir / "units.jsonl")) units.push_back(memory_unit_from_json(row));
  for (const auto& u : units)
    if (u.token_count != token_count(u.raw_text))
      throw InvariantError("unit " + u.unit_id + ": stored token_count disagrees with raw_text");
  MemoryBank bank(granularity_from_string(stats.at("granularity").get<std::string>()),
                  std::move(units));
  if (stats.at("n_units").get<std::size_t>() != bank.n_units())
    throw InvariantError("bank " + dir.string() + ": stats.json n_units mismatch");
  return bank;
}

// ---------------------------------------------------------------------------
// Construction

MemoryBank build_bank(const std::vector<Conversation>& conversations, Granularity granularity,
                      const SessionSegmenter& segmenter, const Compressor* compressor) {
  if (granularity == Granularity::segment && !segmenter)
    throw std::invalid_argument("segment granularity requires a segmenter");
  std::vector<MemoryUnit> units;
  for (const auto& conv : conversations) {
    for (std::size_t si = 0; si < conv.sessions.size(); ++si) {
      const auto& session = conv.sessions[si];
      if (session.turns.empty()) continue;
      const std::string prefix = conv.conversation_id + "/s" + std::to_string(si);
      auto add = [&](std::string id, std::size_t first, std::size_t last) {
        MemoryUnit u;
        u.unit_id = std::move(id);
        u.conversation_id = conv.conversation_id;
        u.session_index = si;
        u.turn_start = first;
        u.turn_end = last;
        u.raw_text = render_turns(session, first, last);
        u.index_text = u.raw_text;
        u.token_count = token_count(u.raw_text);
        units.push_back(std::move(u));
      };
      switch (granularity) {
        case Granularity::turn:
          for (std::size_t t = 0; t < session.turns.size(); ++t)
            add(prefix + "/t" + std::to_string(t), t, t);
          break;
        case Granularity::session:
          add(prefix, 0, session.turns.size() - 1);
          break;
        case Granularity::segment: {
          auto seg = segmenter(conv, si);
          if (seg.n_turns() != session.turns.size())
            throw InvariantError(prefix + ": segmentation covers " + std::to_string(seg.n_turns()) +
                                 " turns, session has " + std::to_string(session.turns.size()));
          for (const auto& span : seg.spans())
            add(prefix + "/seg" + std::to_string(span.segment_id), span.start, span.end);
          break;
        }
      }
    }
  }
  if (compressor) compress_bank_texts(units, *compressor);
  return MemoryBank(granularity, std::move(units));
}

// ---------------------------------------------------------------------------
// Retrieval

namespace {

RetrievalResult rank(const MemoryBank& bank, const std::vector<double>& scores, std::size_t top_k) {
  std::vector<std::size_t> idx(bank.n_units());
  std::iota(idx.begin(), idx.end(), 0);
  const auto& units = bank.units();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return units[a].order_key() < units[b].order_key();
  });
  if (idx.size() > top_k) idx.resize(top_k);
  RetrievalResult out;
  for (auto i : idx) out.ranked.push_back({units[i].unit_id, scores[i]});
  return out;
}

}  // namespace

double bm25_idf(std::size_t n_units, std::size_t df) {
  const double n = static_cast<double>(n_units);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

RetrievalResult bm25_search(const std::string& query, const MemoryBank& bank, std::size_t top_k,
                            const Bm25Params& params) {
  if (bank.empty()) throw std::invalid_argument("bm25_search: empty memory bank");
  if (top_k == 0) throw std::invalid_argument("bm25_search: top_k must be positive");
  auto qt = tokenize(query);
  std::set<std::string> terms(qt.begin(), qt.end());

  std::vector<double> scores(bank.n_units(), 0.0);
  const double avg = bank.avg_len();
  for (const auto& term : terms) {
    auto it = bank.df().find(term);
    if (it == bank.df().end()) continue;
    const double idf = bm25_idf(bank.n_units(), it->second);
    for (std::size_t i = 0; i < bank.n_units(); ++i) {
      const auto& toks = bank.index_tokens()[i];
      const double tf = static_cast<double>(std::count(toks.begin(), toks.end(), term));
      if (tf == 0) continue;
      const double len_ratio = avg > 0 ? static_cast<double>(bank.doc_len(i)) / avg : 0.0;
      scores[i] += idf * tf * (params.k1 + 1.0) /
                   (tf + params.k1 * (1.0 - params.b + params.b * len_ratio));
    }
  }
  return rank(bank, scores, top_k);
}

void EmbeddingMatrix::save(const std::filesystem::path& stem) const {
  static_assert(std::endian::native == std::endian::little, "embedding files are little-endian");
  auto bin = stem;
  bin += ".bin";
  auto meta = stem;
  meta += ".json";
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  std::ofstream out(meta, std::ios::binary | std::ios::trunc);
  out << json{{"dim", dim}, {"count", unit_ids.size()}, {"unit_ids", unit_ids}}.dump() << '\n';
}

EmbeddingMatrix EmbeddingMatrix::load(const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto meta = stem;
  meta += ".json";
  std::ifstream min(meta);
  if (!min) throw std::runtime_error("cannot open " + meta.string());
  json header = json::parse(min);
  EmbeddingMatrix m;
  m.dim = header.at("dim").get<std::size_t>();
  m.unit_ids = header.at("unit_ids").get<std::vector<std::string>>();
  if (header.at("count").get<std::size_t>() != m.unit_ids.size())
    throw InvariantError(meta.string() + ": count does not match unit_ids");
  m.data.resize(m.dim * m.unit_ids.size());
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + bin.string());
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(m.data.size() * sizeof(float)) ||
      in.peek() != std::char_traits<char>::eof())
    throw InvariantError(bin.string() + ": size does not match header");
  return m;
}

EmbeddingMatrix embed_bank(const MemoryBank& bank, Gateway& embedder) {
  std::vector<std::string> texts;
  EmbeddingMatrix m;
  for (const auto& u : bank.units()) {
    texts.push_back(u.index_text);
    m.unit_ids.push_back(u.unit_id);
  }
  auto vecs = embedder.embed(texts);
  m.dim = vecs.empty() ? 0 : vecs.front().size();
  m.data.reserve(m.dim * vecs.size());
  for (const auto& v : vecs) m.data.insert(m.data.end(), v.begin(), v.end());
  return m;
}

RetrievalResult dense_search(const Embedding& query, const MemoryBank& bank, std::size_t top_k,
                             const EmbeddingMatrix& embeddings) {
  if (bank.empty()) throw std::invalid_argument("dense_search: empty memory bank");
  if (top_k == 0) throw std::invalid_argument("dense_search: top_k must be positive");
  if (embeddings.count() != bank.n_units())
    throw std::invalid_argument("dense_search: embedding matrix has " +
                                std::to_string(embeddings.count()) + " rows for " +
                                std::to_string(bank.n_units()) + " units");
  if (query.size() != embeddings.dim)
    throw std::invalid_argument("dense_search: query dimension " + std::to_string(query.size()) +
                                " != unit dimension " + std::to_string(embeddings.dim));
  std::vector<double> scores(bank.n_units());
  for (std::size_t i = 0; i < bank.n_units(); ++i) {
    if (embeddings.unit_ids[i] != bank.units()[i].unit_id)
      throw std::invalid_argument("dense_search: embedding rows are not aligned with the bank");
    const float* row = embeddings.row(i);
    double dot = 0.0;
    for (std::size_t d = 0; d < embeddings.dim; ++d) dot += double(row[d]) * double(query[d]);
    scores[i] = dot;
  }
  return rank(bank, scores, top_k);
}

RetrievalResult dense_search(const std::string& query, const MemoryBank& bank, std::size_t top_k,
                             const EmbeddingMatrix& embeddings, Gateway& embedder) {
  auto q = embedder.embed({query});
  return dense_search(q.at(0), bank, top_k, embeddings);
}

std::vector<MemoryUnit> retrieve_budgeted(const std::string& query, const MemoryBank& bank,
                                          const Retriever& retriever, const Budget& budget) {
  if (budget.value == 0) throw std::invalid_argument("retrieval budget must be positive");
  std::vector<MemoryUnit> selected;
  if (bank.empty()) return selected;
  auto result = retriever(query, bank, bank.n_units());
  std::size_t used = 0;
  for (const auto& r : result.ranked) {
    const auto* unit = bank.find(r.unit_id);
    if (!unit) throw std::runtime_error("retriever returned unknown unit " + r.unit_id);
    if (budget.mode == Budget::Mode::units) {
      if (selected.size() >= budget.value) break;
      selected.push_back(*unit);
    } else {
      if (used + unit->token_count > budget.value) continue;
      used += unit->token_count;
      selected.push_back(*unit);
    }
  }
  return selected;
}

std::string assemble_context(const std::vector<MemoryUnit>& units, ContextMode mode,
                             const Conversation* conversation, bool use_index_text) {
  switch (mode) {
    case ContextMode::zero_history:
      return {};
    case ContextMode::full_history: {
      if (!conversation) throw std::invalid_argument("full_history context needs the conversation");
      std::string out;
      for (const auto& s : conversation->sessions) {
        if (s.turns.empty()) continue;
        if (!out.empty()) out += "\n\n";
        out += render_session(s);
      }
      return out;
    }
    case ContextMode::retrieved: {
      std::vector<const MemoryUnit*> ordered;
      for (const auto& u : units) ordered.push_back(&u);
      std::sort(ordered.begin(), ordered.end(), [](const MemoryUnit* a, const MemoryUnit* b) {
        if (a->order_key() != b->order_key()) return a->order_key() < b->order_key();
        if (a->turn_end != b->turn_end) return a->turn_end < b->turn_end;
        return a->unit_id < b->unit_id;
      });
      std::string out;
      for (const auto* u : ordered) {
        if (!out.empty()) out += "\n\n";
        out += use_index_text ? u->index_text : u->raw_text;
      }
      return out;
    }
  }
  return {};
}

}  // namespace segmem
