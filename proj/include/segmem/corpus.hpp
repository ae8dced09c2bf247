#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace segmem {

// One user/agent exchange. `index` is 0-based within its session.
struct Turn {
  std::size_t index = 0;
  std::string user;
  std::string agent;

  bool operator==(const Turn&) const = default;
};

struct Session {
  std::string session_id;
  std::vector<Turn> turns;

  std::size_t size() const { return turns.size(); }
  bool operator==(const Session&) const = default;
};

struct Conversation {
  std::string conversation_id;
  std::vector<Session> sessions;

  std::size_t total_turns() const;
  bool operator==(const Conversation&) const = default;
};

// Address of a turn inside a conversation.
struct TurnRef {
  std::size_t session_index = 0;
  std::size_t turn_index = 0;

  auto operator<=>(const TurnRef&) const = default;
};

struct QaItem {
  std::string conversation_id;
  std::string question;
  std::string reference_answer;
  std::optional<std::vector<TurnRef>> evidence;

  bool operator==(const QaItem&) const = default;
};

// A session with gold segment ends (0-based index of the last turn of each
// segment; strictly increasing, last entry == size - 1).
struct SegGoldSession {
  std::string dialogue_id;
  Session session;
  std::vector<std::size_t> gold_boundaries;
};

using TokenSeq = std::vector<std::string>;

// Lowercases and splits on anything that is not an ASCII letter or digit.
// Bytes >= 0x80 are kept as word characters so UTF-8 text survives intact.
TokenSeq tokenize(std::string_view text);
std::size_t token_count(std::string_view text);
std::string join_tokens(const TokenSeq& tokens);

// Invariant checks; throw InvariantError naming the offending id.
void validate(const Session& session);
void validate(const Conversation& conversation);
void validate(const QaItem& item, const Conversation& conversation);
void validate(const SegGoldSession& gold);

// Wire format conversion. Turn indices are assigned by position on decode.
nlohmann::json to_json(const Conversation& conversation);
Conversation conversation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QaItem& item);
QaItem qa_item_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SegGoldSession& gold);
SegGoldSession seg_gold_from_json(const nlohmann::json& j);

// JSON Lines readers. Blank lines are skipped; a malformed line raises
// ParseError carrying its 1-based line number.
std::vector<Conversation> load_conversations(const std::filesystem::path& path);
std::vector<QaItem> load_qa_items(const std::filesystem::path& path);
std::vector<SegGoldSession> load_seg_gold(const std::filesystem::path& path);

void save_conversations(const std::filesystem::path& path,
                        const std::vector<Conversation>& conversations);
void save_qa_items(const std::filesystem::path& path, const std::vector<QaItem>& items);
void save_seg_gold(const std::filesystem::path& path, const std::vector<SegGoldSession>& gold);

// Groups consecutive sessions into blocks of `group_size` (the last block may
// be shorter) and re-indexes turns. Merged ids join the originals with '+'.
Conversation merge_sessions(const Conversation& conversation, std::size_t group_size);

// Shared JSONL helpers.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

}  // namespace segmem
