#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace segmem {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;

  // Single user-message request, the shape every pipeline prompt uses.
  static ChatRequest user(std::string model, std::string prompt, int max_tokens = 1024);

  // OpenAI-compatible body; also the canonical serialization for cache keys.
  nlohmann::json to_json() const;
  std::string joined_content() const;
};

// Failure talking to a backend. `retryable` is false for client errors (4xx
// other than 429) and for scripted permanent failures.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& backend, const std::string& what, bool retryable,
                 int status = 0)
      : std::runtime_error(backend + ": " + what),
        backend_(backend),
        retryable_(retryable),
        status_(status) {}

  const std::string& backend() const { return backend_; }
  bool retryable() const { return retryable_; }
  int status() const { return status_; }
  const std::vector<std::string>& attempts() const { return attempts_; }
  void set_attempts(std::vector<std::string> log) { attempts_ = std::move(log); }

 private:
  std::string backend_;
  bool retryable_;
  int status_;
  std::vector<std::string> attempts_;
};

using Embedding = std::vector<float>;

class Backend {
 public:
  virtual ~Backend() = default;
  // Stable identity folded into cache keys.
  virtual std::string id() const = 0;
  virtual std::string chat(const ChatRequest& req) = 0;
  virtual std::vector<Embedding> embed(const std::string& model,
                                       const std::vector<std::string>& texts) = 0;
  virtual std::string compress(const std::string& text, double rate) = 0;
};

struct Endpoints {
  std::string model_endpoint;
  std::string model_api_key;
  std::string embed_endpoint;
  std::string embed_api_key;
  std::string compress_endpoint;

  // Reads MODEL_ENDPOINT, MODEL_API_KEY, EMBED_ENDPOINT, EMBED_API_KEY,
  // COMPRESS_ENDPOINT.
  static Endpoints from_env();
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(Endpoints endpoints,
                       std::chrono::seconds timeout = std::chrono::seconds(120));

  std::string id() const override;
  std::string chat(const ChatRequest& req) override;
  std::vector<Embedding> embed(const std::string& model,
                               const std::vector<std::string>& texts) override;
  std::string compress(const std::string& text, double rate) override;

 private:
  nlohmann::json post(const std::string& kind, const std::string& url, const std::string& key,
                      const nlohmann::json& body) const;

  Endpoints endpoints_;
  std::chrono::seconds timeout_;
};

// Deterministic scripted backend for offline runs and tests.
//
// Script document:
//   {
//     "chat":     [rule, ...],          // matched in order, first hit wins
//     "sequence": [response, ...],      // ordinal fallback for chat
//     "compress": [rule, ...],          // optional; {"mode": "identity"} also accepted
//     "embed":    {"kind": "hashed_bow", "dim": 64},
//     "delay_ms": 0
//   }
//   rule     = {"contains": "text" | ["all", "of"], "response": r}
//            | {"contains": ..., "responses": [r, ...]}   // played once each
//   response = "text" | {"fail": "transient"} | {"fail": "permanent"} | {"fail": 404}
//
// Response text may include {{request_tokens}}, replaced by the token count
// of the request content. Requests that match nothing raise an error.
class MockBackend : public Backend {
 public:
  explicit MockBackend(nlohmann::json script);
  static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path);

  std::string id() const override;
  std::string chat(const ChatRequest& req) override;
  std::vector<Embedding> embed(const std::string& model,
                               const std::vector<std::string>& texts) override;
  std::string compress(const std::string& text, double rate) override;

  struct Record {
    std::string kind;  // chat | embed | compress
    std::string content;
  };
  std::vector<Record> requests() const;
  std::size_t call_count(const std::string& kind) const;
  std::size_t max_overlap() const { return max_overlap_.load(); }

 private:
  struct Rule {
    std::vector<std::string> contains;
    std::vector<nlohmann::json> responses;
    bool repeat = false;
    std::size_t next = 0;
  };

  std::string play(const std::string& kind, std::vector<Rule>& rules, const std::string& content,
                   bool use_sequence);
  std::string resolve(const nlohmann::json& response, const std::string& content) const;
  void enter();
  void leave();

  nlohmann::json script_;
  std::string digest_;
  mutable std::mutex mu_;
  std::vector<Rule> chat_rules_;
  std::vector<Rule> compress_rules_;
  bool compress_identity_ = false;
  std::vector<nlohmann::json> sequence_;
  std::size_t sequence_next_ = 0;
  std::vector<Record> log_;
  std::size_t embed_dim_ = 64;
  std::chrono::milliseconds delay_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_overlap_{0};
};

// Feature-hashed, L2-normalised bag of words. Used by the mock backend and
// handy as an offline embedder.
Embedding hashed_bow_embedding(const std::string& text, std::size_t dim);

struct GatewayOptions {
  std::size_t max_in_flight = 4;
  int retries = 3;
  std::chrono::milliseconds backoff_base{1000};
  double backoff_factor = 2.0;
  std::optional<std::filesystem::path> cache_dir;
  std::size_t embed_batch = 64;
  std::string embed_model = "multi-qa-mpnet-base-dot-v1";
  // Replaced in tests to avoid real waits.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// Caching, retrying, concurrency-bounded front door to a Backend. Safe for
// concurrent use.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});

  std::string complete(const ChatRequest& req);
  std::vector<Embedding> embed(const std::vector<std::string>& texts);
  std::string compress(const std::string& text, double rate);

  std::string cache_key(const std::string& kind, const nlohmann::json& canonical) const;

  std::size_t backend_calls() const { return backend_calls_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }
  Backend& backend() { return *backend_; }
  const GatewayOptions& options() const { return options_; }

 private:
  template <typename Fn>
  auto with_retry(const std::string& what, Fn&& fn) -> decltype(fn());

  std::optional<nlohmann::json> cache_get(const std::string& key);
  void cache_put(const std::string& key, const nlohmann::json& value);

  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  std::counting_semaphore<1 << 20> slots_;
  std::mutex cache_mu_;
  std::map<std::string, nlohmann::json> memory_cache_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace segmem
