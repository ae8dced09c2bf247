#include "segmem/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "segmem/error.hpp"

namespace segmem {

using nlohmann::json;

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

std::vector<Turn> turns_from_json(const json& arr) {
  if (!arr.is_array()) throw std::invalid_argument("\"turns\" must be an array");
  std::vector<Turn> turns;
  turns.reserve(arr.size());
  for (const auto& t : arr) {
    Turn turn;
    turn.index = turns.size();
    turn.user = t.at("user").get<std::string>();
    turn.agent = t.value("agent", std::string{});
    turns.push_back(std::move(turn));
  }
  return turns;
}

json turns_to_json(const std::vector<Turn>& turns) {
  json arr = json::array();
  for (const auto& t : turns) arr.push_back({{"user", t.user}, {"agent", t.agent}});
  return arr;
}

template <typename T, typename Decode>
std::vector<T> decode_lines(const std::filesystem::path& path, Decode decode) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    try {
      out.push_back(decode(j));
    } catch (const InvariantError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace

std::size_t Conversation::total_turns() const {
  std::size_t n = 0;
  for (const auto& s : sessions) n += s.turns.size();
  return n;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      current.push_back(lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    bool w = is_word_byte(c);
    if (w && !in_word) ++n;
    in_word = w;
  }
  return n;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

void validate(const Session& session) {
  if (session.turns.empty())
    throw InvariantError("session '" + session.session_id + "' has no turns");
  for (std::size_t i = 0; i < session.turns.size(); ++i) {
    if (session.turns[i].index != i)
      throw InvariantError("session '" + session.session_id + "': turn index " +
                           std::to_string(session.turns[i].index) + " at position " +
                           std::to_string(i));
    if (session.turns[i].user.empty())
      throw InvariantError("session '" + session.session_id + "': turn " + std::to_string(i) +
                           " has empty user text");
  }
}

void validate(const Conversation& conversation) {
  const auto& id = conversation.conversation_id;
  if (conversation.sessions.empty())
    throw InvariantError("conversation '" + id + "' has no sessions");
  std::set<std::string> seen;
  for (const auto& s : conversation.sessions) {
    if (!seen.insert(s.session_id).second)
      throw InvariantError("conversation '" + id + "': duplicate session_id '" + s.session_id +
                           "'");
    try {
      validate(s);
    } catch (const InvariantError& e) {
      throw InvariantError("conversation '" + id + "': " + e.what());
    }
  }
}

void validate(const QaItem& item, const Conversation& conversation) {
  if (!item.evidence) return;
  for (const auto& ref : *item.evidence) {
    if (ref.session_index >= conversation.sessions.size() ||
        ref.turn_index >= conversation.sessions[ref.session_index].turns.size())
      throw InvariantError("conversation '" + conversation.conversation_id + "': evidence [" +
                           std::to_string(ref.session_index) + ", " +
                           std::to_string(ref.turn_index) + "] addresses no turn");
  }
}

void validate(const SegGoldSession& gold) {
  validate(gold.session);
  const auto& b = gold.gold_boundaries;
  if (b.empty()) throw InvariantError("dialogue '" + gold.dialogue_id + "': no gold boundaries");
  for (std::size_t i = 1; i < b.size(); ++i)
    if (b[i] <= b[i - 1])
      throw InvariantError("dialogue '" + gold.dialogue_id +
                           "': gold boundaries not strictly increasing");
  if (b.back() != gold.session.turns.size() - 1)
    throw InvariantError("dialogue '" + gold.dialogue_id +
                         "': last gold boundary must be the final turn");
}

json to_json(const Conversation& conversation) {
  json sessions = json::array();
  for (const auto& s : conversation.sessions)
    sessions.push_back({{"session_id", s.session_id}, {"turns", turns_to_json(s.turns)}});
  return {{"conversation_id", conversation.conversation_id}, {"sessions", std::move(sessions)}};
}

Conversation conversation_from_json(const json& j) {
  Conversation c;
  c.conversation_id = j.at("conversation_id").get<std::string>();
  for (const auto& s : j.at("sessions")) {
    Session session;
    session.session_id = s.at("session_id").get<std::string>();
    session.turns = turns_from_json(s.at("turns"));
    c.sessions.push_back(std::move(session));
  }
  return c;
}

json to_json(const QaItem& item) {
  json j = {{"conversation_id", item.conversation_id},
            {"question", item.question},
            {"answer", item.reference_answer}};
  if (item.evidence) {
    json ev = json::array();
    for (const auto& r : *item.evidence) ev.push_back({r.session_index, r.turn_index});
    j["evidence"] = std::move(ev);
  }
  return j;
}

QaItem qa_item_from_json(const json& j) {
  QaItem item;
  item.conversation_id = j.at("conversation_id").get<std::string>();
  item.question = j.at("question").get<std::string>();
  item.reference_answer = j.at("answer").get<std::string>();
  if (j.contains("evidence") && !j["evidence"].is_null()) {
    std::vector<TurnRef> ev;
    for (const auto& pair : j["evidence"]) {
      if (!pair.is_array() || pair.size() != 2)
        throw std::invalid_argument("evidence entries must be [session_idx, turn_idx]");
      ev.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
    }
    item.evidence = std::move(ev);
  }
  return item;
}

json to_json(const SegGoldSession& gold) {
  return {{"dialogue_id", gold.dialogue_id},
          {"turns", turns_to_json(gold.session.turns)},
          {"gold_boundaries", gold.gold_boundaries}};
}

SegGoldSession seg_gold_from_json(const json& j) {
  SegGoldSession g;
  g.dialogue_id = j.at("dialogue_id").get<std::string>();
  g.session.session_id = g.dialogue_id;
  g.session.turns = turns_from_json(j.at("turns"));
  g.gold_boundaries = j.at("gold_boundaries").get<std::vector<std::size_t>>();
  return g;
}

std::vector<Conversation> load_conversations(const std::filesystem::path& path) {
  return decode_lines<Conversation>(path, [](const json& j) {
    auto c = conversation_from_json(j);
    validate(c);
    return c;
  });
}

std::vector<QaItem> load_qa_items(const std::filesystem::path& path) {
  return decode_lines<QaItem>(path, qa_item_from_json);
}

std::vector<SegGoldSession> load_seg_gold(const std::filesystem::path& path) {
  return decode_lines<SegGoldSession>(path, [](const json& j) {
    auto g = seg_gold_from_json(j);
    validate(g);
    return g;
  });
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  return decode_lines<json>(path, [](const json& j) { return j; });
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& row : rows) out << row.dump() << '\n';
}

void save_conversations(const std::filesystem::path& path,
                        const std::vector<Conversation>& conversations) {
  std::vector<json> rows;
  for (const auto& c : conversations) rows.push_back(to_json(c));
  write_jsonl(path, rows);
}

void save_qa_items(const std::filesystem::path& path, const std::vector<QaItem>& items) {
  std::vector<json> rows;
  for (const auto& q : items) rows.push_back(to_json(q));
  write_jsonl(path, rows);
}

void save_seg_gold(const std::filesystem::path& path, const std::vector<SegGoldSession>& gold) {
  std::vector<json> rows;
  for (const auto& g : gold) rows.push_back(to_json(g));
  write_jsonl(path, rows);
}

Conversation merge_sessions(const Conversation& conversation, std::size_t group_size) {
  if (group_size == 0) throw std::invalid_argument("merge_sessions: group_size must be >= 1");
  Conversation out;
  out.conversation_id = conversation.conversation_id;
  const auto& src = conversation.sessions;
  for (std::size_t begin = 0; begin < src.size(); begin += group_size) {
    std::size_t end = std::min(begin + group_size, src.size());
    Session merged;
    for (std::size_t i = begin; i < end; ++i) {
      if (i > begin) merged.session_id += '+';
      merged.session_id += src[i].session_id;
      for (const auto& t : src[i].turns) {
        Turn copy = t;
        copy.index = merged.turns.size();
        merged.turns.push_back(std::move(copy));
      }
    }
    out.sessions.push_back(std::move(merged));
  }
  return out;
}

}  // namespace segmem
