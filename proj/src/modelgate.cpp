#include "segmem/modelgate.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "segmem/corpus.hpp"
#include "segmem/digest.hpp"

namespace segmem {

using nlohmann::json;

ChatRequest ChatRequest::user(std::string model, std::string prompt, int max_tokens) {
  ChatRequest req;
  req.model = std::move(model);
  req.messages.push_back({"user", std::move(prompt)});
  req.max_tokens = max_tokens;
  return req;
}

json ChatRequest::to_json() const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", model},
          {"messages", std::move(msgs)},
          {"temperature", temperature},
          {"max_tokens", max_tokens}};
}

std::string ChatRequest::joined_content() const {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i) out += "\n";
    out += messages[i].content;
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP backend

namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

struct Url {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Endpoints Endpoints::from_env() {
  return {env_or_empty("MODEL_ENDPOINT"), env_or_empty("MODEL_API_KEY"),
          env_or_empty("EMBED_ENDPOINT"), env_or_empty("EMBED_API_KEY"),
          env_or_empty("COMPRESS_ENDPOINT")};
}

HttpBackend::HttpBackend(Endpoints endpoints, std::chrono::seconds timeout)
    : endpoints_(std::move(endpoints)), timeout_(timeout) {}

std::string HttpBackend::id() const {
  return "http|" + endpoints_.model_endpoint + "|" + endpoints_.embed_endpoint + "|" +
         endpoints_.compress_endpoint;
}

json HttpBackend::post(const std::string& kind, const std::string& url, const std::string& key,
                       const json& body) const {
  const std::string who = "http " + kind;
  if (url.empty()) throw TransportError(who, "no endpoint configured", false);
  auto [base, path] = split_url(url);
  httplib::Client client(base);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  httplib::Headers headers;
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw TransportError(who, "request to " + url + " failed: " + httplib::to_string(res.error()), true);
  if (res->status >= 400) {
    bool retryable = res->status >= 500 || res->status == 429 || res->status == 408;
    throw TransportError(who, "HTTP " + std::to_string(res->status) + " from " + url, retryable,
                         res->status);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(who, std::string("malformed response body: ") + e.what(), false,
                         res->status);
  }
}

std::string HttpBackend::chat(const ChatRequest& req) {
  auto j = post("chat", endpoints_.model_endpoint, endpoints_.model_api_key, req.to_json());
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError("http chat", std::string("unexpected response shape: ") + e.what(), false);
  }
}

std::vector<Embedding> HttpBackend::embed(const std::string& model,
                                          const std::vector<std::string>& texts) {
  auto j = post("embed", endpoints_.embed_endpoint, endpoints_.embed_api_key,
                {{"model", model}, {"input", texts}});
  std::vector<Embedding> out;
  try {
    for (const auto& d : j.at("data")) out.push_back(d.at("embedding").get<Embedding>());
  } catch (const json::exception& e) {
    throw TransportError("http embed", std::string("unexpected response shape: ") + e.what(), false);
  }
  return out;
}

std::string HttpBackend::compress(const std::string& text, double rate) {
  auto j = post("compress", endpoints_.compress_endpoint, "", {{"text", text}, {"rate", rate}});
  try {
    return j.at("compressed_text").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError("http compress", std::string("unexpected response shape: ") + e.what(),
                         false);
  }
}

// ---------------------------------------------------------------------------
// Mock backend

Embedding hashed_bow_embedding(const std::string& text, std::size_t dim) {
  Embedding v(dim, 0.0f);
  for (const auto& tok : tokenize(text)) {
    // FNV-1a; stable across platforms unlike std::hash.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : tok) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    v[h % dim] += 1.0f;
  }
  double norm = 0;
  for (float x : v) norm += double(x) * x;
  if (norm > 0) {
    float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (float& x : v) x *= inv;
  }
  return v;
}

namespace {

std::vector<std::string> as_string_list(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

}  // namespace

MockBackend::MockBackend(json script) : script_(std::move(script)) {
  digest_ = sha256_hex(script_.dump()).substr(0, 16);
  auto parse_rules = [](const json& arr) {
    std::vector<Rule> rules;
    for (const auto& r : arr) {
      Rule rule;
      if (r.contains("contains")) rule.contains = as_string_list(r["contains"]);
      if (r.contains("responses")) {
        rule.responses = r["responses"].get<std::vector<json>>();
      } else {
        rule.responses = {r.at("response")};
        rule.repeat = true;
      }
      rules.push_back(std::move(rule));
    }
    return rules;
  };
  if (script_.contains("chat")) chat_rules_ = parse_rules(script_["chat"]);
  if (script_.contains("sequence")) sequence_ = script_["sequence"].get<std::vector<json>>();
  if (script_.contains("compress")) {
    const auto& c = script_["compress"];
    if (c.is_object() && c.value("mode", "") == "identity")
      compress_identity_ = true;
    else
      compress_rules_ = parse_rules(c);
  }
  if (script_.contains("embed")) embed_dim_ = script_["embed"].value("dim", std::size_t{64});
  delay_ = std::chrono::milliseconds(script_.value("delay_ms", 0));
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mock script " + path.string());
  return std::make_shared<MockBackend>(json::parse(in));
}

std::string MockBackend::id() const { return "mock|" + digest_; }

void MockBackend::enter() {
  auto now = ++in_flight_;
  auto prev = max_overlap_.load();
  while (now > prev && !max_overlap_.compare_exchange_weak(prev, now)) {
  }
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
}

void MockBackend::leave() { --in_flight_; }

std::string MockBackend::resolve(const json& response, const std::string& content) const {
  if (response.is_object() && response.contains("fail")) {
    const auto& f = response["fail"];
    if (f.is_number_integer()) {
      int status = f.get<int>();
      bool retryable = status >= 500 || status == 429;
      throw TransportError("mock", "scripted HTTP " + std::to_string(status), retryable, status);
    }
    bool transient = f.get<std::string>() == "transient";
    throw TransportError("mock", "scripted " + f.get<std::string>() + " failure", transient);
  }
  std::string text = response.get<std::string>();
  static const std::string kTok = "{{request_tokens}}";
  for (auto pos = text.find(kTok); pos != std::string::npos; pos = text.find(kTok))
    text.replace(pos, kTok.size(), std::to_string(token_count(content)));
  return text;
}

std::string MockBackend::play(const std::string& kind, std::vector<Rule>& rules,
                              const std::string& content, bool use_sequence) {
  json chosen;
  {
    std::lock_guard lock(mu_);
    log_.push_back({kind, content});
    bool found = false;
    for (auto& rule : rules) {
      bool hit = true;
      for (const auto& needle : rule.contains)
        if (content.find(needle) == std::string::npos) hit = false;
      if (!hit) continue;
      if (rule.repeat) {
        chosen = rule.responses.front();
      } else if (rule.next < rule.responses.size()) {
        chosen = rule.responses[rule.next++];
      } else {
        continue;
      }
      found = true;
      break;
    }
    if (!found && use_sequence && sequence_next_ < sequence_.size()) {
      chosen = sequence_[sequence_next_++];
      found = true;
    }
    if (!found) {
      throw TransportError("mock", "unmatched " + kind + " request #" +
                                       std::to_string(log_.size()) + ": " +
                                       content.substr(0, 80),
                           false);
    }
  }
  enter();
  try {
    auto out = resolve(chosen, content);
    leave();
    return out;
  } catch (...) {
    leave();
    throw;
  }
}

std::string MockBackend::chat(const ChatRequest& req) {
  return play("chat", chat_rules_, req.joined_content(), true);
}

std::vector<Embedding> MockBackend::embed(const std::string&,
                                          const std::vector<std::string>& texts) {
  {
    std::lock_guard lock(mu_);
    std::string joined;
    for (const auto& t : texts) joined += t + "\n";
    log_.push_back({"embed", joined});
  }
  enter();
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hashed_bow_embedding(t, embed_dim_));
  leave();
  return out;
}

std::string MockBackend::compress(const std::string& text, double rate) {
  if (compress_identity_) {
    std::lock_guard lock(mu_);
    log_.push_back({"compress", text});
    return text;
  }
  (void)rate;
  return play("compress", compress_rules_, text, false);
}

std::vector<MockBackend::Record> MockBackend::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t MockBackend::call_count(const std::string& kind) const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& r : log_)
    if (r.kind == kind) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(std::move(options)),
      slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, options_.max_in_flight))) {
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (options_.cache_dir) std::filesystem::create_directories(*options_.cache_dir);
}

std::string Gateway::cache_key(const std::string& kind, const json& canonical) const {
  return sha256_hex(backend_->id() + "\n" + kind + "\n" + canonical.dump());
}

std::optional<json> Gateway::cache_get(const std::string& key) {
  {
    std::lock_guard lock(cache_mu_);
    auto it = memory_cache_.find(key);
    if (it != memory_cache_.end()) return it->second;
  }
  if (!options_.cache_dir) return std::nullopt;
  auto file = *options_.cache_dir / (key + ".json");
  std::ifstream in(file);
  if (!in) return std::nullopt;
  try {
    auto value = json::parse(in);
    std::lock_guard lock(cache_mu_);
    memory_cache_.emplace(key, value);
    return value;
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

void Gateway::cache_put(const std::string& key, const json& value) {
  std::lock_guard lock(cache_mu_);
  memory_cache_[key] = value;
  if (!options_.cache_dir) return;
  auto file = *options_.cache_dir / (key + ".json");
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << value.dump();
  }
  std::filesystem::rename(tmp, file);
}

template <typename Fn>
auto Gateway::with_retry(const std::string& what, Fn&& fn) -> decltype(fn()) {
  std::vector<std::string> attempts;
  auto delay = options_.backoff_base;
  for (int attempt = 0;; ++attempt) {
    try {
      slots_.acquire();
      ++backend_calls_;
      struct Release {
        std::counting_semaphore<1 << 20>& s;
        ~Release() { s.release(); }
      } release{slots_};
      return fn();
    } catch (TransportError& e) {
      attempts.push_back(what + " attempt " + std::to_string(attempt + 1) + ": " + e.what());
      if (!e.retryable() || attempt >= options_.retries) {
        e.set_attempts(attempts);
        throw;
      }
    }
    options_.sleep(delay);
    delay = std::chrono::milliseconds(
        static_cast<std::int64_t>(static_cast<double>(delay.count()) * options_.backoff_factor));
  }
}

std::string Gateway::complete(const ChatRequest& req) {
  if (req.messages.empty()) throw std::invalid_argument("ChatRequest needs at least one message");
  auto key = cache_key("chat", req.to_json());
  if (auto hit = cache_get(key)) {
    ++cache_hits_;
    return hit->get<std::string>();
  }
  auto text = with_retry("chat", [&] { return backend_->chat(req); });
  cache_put(key, text);
  return text;
}

std::string Gateway::compress(const std::string& text, double rate) {
  auto key = cache_key("compress", {{"text", text}, {"rate", rate}});
  if (auto hit = cache_get(key)) {
    ++cache_hits_;
    return hit->get<std::string>();
  }
  auto out = with_retry("compress", [&] { return backend_->compress(text, rate); });
  cache_put(key, out);
  return out;
}

std::vector<Embedding> Gateway::embed(const std::vector<std::string>& texts) {
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> keys(texts.size());
  // Distinct uncached texts, in first-seen order.
  std::vector<std::string> pending;
  std::map<std::string, std::vector<std::size_t>> where;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = cache_key("embed", {{"model", options_.embed_model}, {"text", texts[i]}});
    if (auto hit = cache_get(keys[i])) {
      ++cache_hits_;
      out[i] = hit->get<Embedding>();
      continue;
    }
    auto& slots = where[texts[i]];
    if (slots.empty()) pending.push_back(texts[i]);
    slots.push_back(i);
  }

  const std::size_t batch = std::max<std::size_t>(1, options_.embed_batch);
  for (std::size_t begin = 0; begin < pending.size(); begin += batch) {
    std::vector<std::string> chunk(pending.begin() + begin,
                                   pending.begin() + std::min(begin + batch, pending.size()));
    auto vecs = with_retry("embed", [&] { return backend_->embed(options_.embed_model, chunk); });
    if (vecs.size() != chunk.size())
      throw TransportError(backend_->id(), "embedding count mismatch: sent " +
                                               std::to_string(chunk.size()) + ", got " +
                                               std::to_string(vecs.size()),
                           false);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (vecs[i].size() != vecs.front().size() || vecs[i].empty())
        throw TransportError(backend_->id(), "inconsistent embedding dimensions in response",
                             false);
      for (auto idx : where[chunk[i]]) {
        out[idx] = vecs[i];
        cache_put(keys[idx], vecs[i]);
      }
    }
  }

  for (const auto& v : out)
    if (v.size() != out.front().size())
      throw TransportError(backend_->id(), "inconsistent embedding dimensions across batches",
                           false);
  return out;
}

}  // namespace segmem
