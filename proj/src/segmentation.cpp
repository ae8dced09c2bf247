#include "segmem/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "segmem/error.hpp"
#include "segmem/evalkit.hpp"
#include "segmem/modelgate.hpp"

namespace segmem {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Segmentation value type

void check_invariants(const std::vector<SegmentSpan>& spans, std::size_t n_turns) {
  if (n_turns == 0) throw InvariantError("segmentation over zero turns");
  if (spans.empty()) throw InvariantError("segmentation has no spans");
  if (spans.front().start != 0) throw InvariantError("first span does not start at turn 0");
  if (spans.back().end != n_turns - 1)
    throw InvariantError("last span does not end at turn " + std::to_string(n_turns - 1));
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto& s = spans[k];
    if (s.start > s.end) throw InvariantError("span " + std::to_string(k) + " has start > end");
    if (s.num_exchanges != s.end - s.start + 1)
      throw InvariantError("span " + std::to_string(k) + " miscounts its exchanges");
    if (s.segment_id != k) throw InvariantError("span " + std::to_string(k) + " has wrong id");
    if (k + 1 < spans.size() && spans[k + 1].start != s.end + 1)
      throw InvariantError("spans " + std::to_string(k) + " and " + std::to_string(k + 1) +
                           (spans[k + 1].start <= s.end ? " overlap" : " leave a gap"));
  }
}

Segmentation::Segmentation(std::vector<SegmentSpan> spans, std::size_t n_turns)
    : spans_(std::move(spans)), n_turns_(n_turns) {
  check_invariants(spans_, n_turns_);
}

Segmentation Segmentation::single(std::size_t n_turns) {
  if (n_turns == 0) throw InvariantError("segmentation over zero turns");
  return Segmentation({{0, 0, n_turns - 1, n_turns}}, n_turns);
}

Segmentation Segmentation::from_ends(const std::vector<std::size_t>& ends, std::size_t n_turns) {
  std::vector<SegmentSpan> spans;
  std::size_t start = 0;
  for (auto e : ends) {
    if (e < start) throw InvariantError("segment ends must be strictly increasing");
    spans.push_back({spans.size(), start, e, e - start + 1});
    start = e + 1;
  }
  return Segmentation(std::move(spans), n_turns);
}

Segmentation Segmentation::from_boundaries(std::vector<std::size_t> boundaries,
                                           std::size_t n_turns) {
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());
  if (n_turns == 0) throw InvariantError("segmentation over zero turns");
  if (!boundaries.empty() && boundaries.back() >= n_turns - 1)
    throw InvariantError("boundary after the final turn");
  boundaries.push_back(n_turns - 1);
  return from_ends(boundaries, n_turns);
}

std::vector<std::size_t> Segmentation::ends() const {
  std::vector<std::size_t> out;
  for (const auto& s : spans_) out.push_back(s.end);
  return out;
}

std::vector<std::size_t> Segmentation::boundaries() const {
  auto out = ends();
  if (!out.empty()) out.pop_back();
  return out;
}

std::vector<std::size_t> Segmentation::labels() const {
  std::vector<std::size_t> out(n_turns_);
  for (const auto& s : spans_)
    for (std::size_t t = s.start; t <= s.end; ++t) out[t] = s.segment_id;
  return out;
}

// ---------------------------------------------------------------------------
// Rubric

void Rubric::add_item(std::string item) {
  items.push_back(std::move(item));
  if (items.size() > kMaxItems)
    items.erase(items.begin(), items.begin() + static_cast<long>(items.size() - kMaxItems));
}

json Rubric::to_json() const {
  json ex = json::array();
  for (const auto& e : examples)
    ex.push_back({{"gold_rendering", e.gold_rendering},
                  {"prediction_rendering", e.prediction_rendering},
                  {"reflection", e.reflection}});
  return {{"items", items}, {"examples", std::move(ex)}};
}

Rubric Rubric::from_json(const json& j) {
  Rubric r;
  r.items = j.value("items", std::vector<std::string>{});
  if (r.items.size() > kMaxItems) throw InvariantError("rubric holds more than 10 items");
  for (const auto& e : j.value("examples", json::array()))
    r.examples.push_back({e.value("gold_rendering", ""), e.value("prediction_rendering", ""),
                          e.value("reflection", "")});
  return r;
}

Rubric Rubric::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rubric " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void Rubric::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Rendering

std::string render_turn(const Turn& turn) {
  return "Turn " + std::to_string(turn.index) + ":\n[user]: " + turn.user +
         "\n[agent]: " + turn.agent;
}

std::string render_turns(const Session& session, std::size_t first, std::size_t last) {
  std::string out;
  for (std::size_t t = first; t <= last && t < session.turns.size(); ++t) {
    if (t != first) out += "\n\n";
    out += render_turn(session.turns[t]);
  }
  return out;
}

std::string render_session(const Session& session) {
  if (session.turns.empty()) throw std::invalid_argument("render_session: empty session");
  return render_turns(session, 0, session.turns.size() - 1);
}

std::string render_segmented(const Session& session, const Segmentation& seg) {
  std::string out;
  for (const auto& s : seg.spans()) {
    if (s.segment_id) out += "\n\n";
    out += "Segment " + std::to_string(s.segment_id) + ":\n" + render_turns(session, s.start, s.end);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parsing and repair

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Content of the last complete <tag>...</tag> pair; the trailing remainder
// when the closing tag is missing; nullopt when the tag never opens.
std::optional<std::string> tag_content(const std::string& text, const std::string& tag) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  std::optional<std::string> found;
  std::size_t pos = 0;
  while ((pos = text.find(open, pos)) != std::string::npos) {
    auto body = pos + open.size();
    auto end = text.find(close, body);
    if (end == std::string::npos) {
      if (!found) found = text.substr(body);
      break;
    }
    found = text.substr(body, end - body);
    pos = end + close.size();
  }
  return found;
}

long long as_index(const json& v, const char* key, std::size_t line) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) return static_cast<long long>(std::llround(v.get<double>()));
  if (v.is_string()) {
    try {
      std::size_t used = 0;
      auto s = v.get<std::string>();
      long long x = std::stoll(s, &used);
      if (used == trim(s).size()) return x;
    } catch (const std::exception&) {
    }
  }
  throw FormatError(std::string("line ") + std::to_string(line) + ": key '" + key +
                    "' is not an integer");
}

std::size_t non_negative(long long x) { return x < 0 ? 0 : static_cast<std::size_t>(x); }

SegmentSpan span_from_object(const json& obj, std::size_t line, std::size_t position) {
  for (const char* key : {"start_exchange_number", "end_exchange_number"})
    if (!obj.contains(key))
      throw FormatError("line " + std::to_string(line) + ": missing key '" + key + "'");
  SegmentSpan s;
  s.start = non_negative(as_index(obj["start_exchange_number"], "start_exchange_number", line));
  s.end = non_negative(as_index(obj["end_exchange_number"], "end_exchange_number", line));
  s.segment_id = obj.contains("segment_id")
                     ? non_negative(as_index(obj["segment_id"], "segment_id", line))
                     : position;
  s.num_exchanges = obj.contains("num_exchanges")
                        ? non_negative(as_index(obj["num_exchanges"], "num_exchanges", line))
                        : (s.end >= s.start ? s.end - s.start + 1 : 0);
  return s;
}

}  // namespace

std::vector<SegmentSpan> parse_segmentation(const std::string& model_output, std::size_t n_turns) {
  std::string body = tag_content(model_output, "segmentation").value_or(model_output);

  std::vector<SegmentSpan> spans;
  // Some models emit a JSON array instead of JSON Lines.
  if (auto t = trim(body); !t.empty() && t.front() == '[') {
    try {
      auto arr = json::parse(t);
      std::size_t i = 0;
      for (const auto& obj : arr) {
        if (obj.is_object()) spans.push_back(span_from_object(obj, 1, i++));
      }
      if (!spans.empty()) return spans;
    } catch (const json::parse_error&) {
    }
  }

  std::istringstream in(body);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.rfind("```", 0) == 0) continue;
    if (t.back() == ',') t.pop_back();
    if (t.front() != '{') continue;
    json obj;
    try {
      obj = json::parse(t);
    } catch (const json::parse_error&) {
      continue;
    }
    if (!obj.is_object()) continue;
    spans.push_back(span_from_object(obj, lineno, spans.size()));
  }
  if (spans.empty())
    throw FormatError("no segmentation objects found in model output (" +
                      std::to_string(n_turns) + " turns expected)");
  return spans;
}

RepairResult validate_repair(std::vector<SegmentSpan> spans, std::size_t n_turns) {
  if (spans.empty()) throw std::invalid_argument("validate_repair: no spans");
  if (n_turns == 0) throw std::invalid_argument("validate_repair: zero turns");
  std::vector<std::string> log;
  const std::size_t last = n_turns - 1;

  bool ids_off = false;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    auto& s = spans[k];
    if (s.segment_id != k) ids_off = true;
    if (s.end >= s.start && s.num_exchanges != s.end - s.start + 1)
      log.push_back("span (" + std::to_string(s.start) + "," + std::to_string(s.end) +
                    "): num_exchanges " + std::to_string(s.num_exchanges) + " recounted");
    if (s.start > s.end) {
      log.push_back("span (" + std::to_string(s.start) + "," + std::to_string(s.end) +
                    "): inverted bounds swapped");
      std::swap(s.start, s.end);
    }
    if (s.end > last || s.start > last) {
      log.push_back("span (" + std::to_string(s.start) + "," + std::to_string(s.end) +
                    "): clamped to turn " + std::to_string(last));
      s.start = std::min(s.start, last);
      s.end = std::min(s.end, last);
    }
  }
  if (ids_off) log.push_back("segment ids renumbered");

  std::stable_sort(spans.begin(), spans.end(), [](const SegmentSpan& a, const SegmentSpan& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });

  std::vector<SegmentSpan> out;
  for (const auto& s : spans) {
    while (!out.empty() && out.back().end >= s.start) {
      auto& prev = out.back();
      if (prev.start >= s.start) {
        log.push_back("span (" + std::to_string(prev.start) + "," + std::to_string(prev.end) +
                      ") dropped: covered by (" + std::to_string(s.start) + "," +
                      std::to_string(s.end) + ")");
        out.pop_back();
      } else {
        log.push_back("overlap: span (" + std::to_string(prev.start) + "," +
                      std::to_string(prev.end) + ") truncated to end at " +
                      std::to_string(s.start - 1));
        prev.end = s.start - 1;
      }
    }
    if (!out.empty() && s.start > out.back().end + 1) {
      log.push_back("gap: turns " + std::to_string(out.back().end + 1) + ".." +
                    std::to_string(s.start - 1) + " filled by extending span (" +
                    std::to_string(out.back().start) + "," + std::to_string(out.back().end) +
                    ")");
      out.back().end = s.start - 1;
    }
    out.push_back(s);
  }

  if (out.front().start != 0) {
    log.push_back("first span extended to start at turn 0");
    out.front().start = 0;
  }
  if (out.back().end != last) {
    log.push_back("last span extended to end at turn " + std::to_string(last));
    out.back().end = last;
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].segment_id = k;
    out[k].num_exchanges = out[k].end - out[k].start + 1;
  }
  return {Segmentation(std::move(out), n_turns), std::move(log)};
}

// ---------------------------------------------------------------------------
// Offline fallback

namespace {

using TermVector = std::map<std::string, double>;

double cosine(const TermVector& a, const TermVector& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [t, x] : a) {
    na += x * x;
    if (auto it = b.find(t); it != b.end()) dot += x * it->second;
  }
  for (const auto& [t, y] : b) nb += y * y;
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<double> gap_cohesion(const Session& session, std::size_t window) {
  const std::size_t n = session.turns.size();
  if (n < 2) return {};
  window = std::max<std::size_t>(1, window);
  std::vector<TermVector> tf(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& tok : tokenize(session.turns[j].user)) tf[j][tok] += 1;
    for (const auto& tok : tokenize(session.turns[j].agent)) tf[j][tok] += 1;
  }
  std::vector<double> c(n - 1);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    TermVector left, right;
    std::size_t lo = j + 1 >= window ? j + 1 - window : 0;
    for (std::size_t i = lo; i <= j; ++i)
      for (const auto& [t, x] : tf[i]) left[t] += x;
    for (std::size_t i = j + 1; i <= std::min(n - 1, j + window); ++i)
      for (const auto& [t, x] : tf[i]) right[t] += x;
    c[j] = cosine(left, right);
  }
  return c;
}

std::vector<double> depth_scores(const std::vector<double>& c) {
  std::vector<double> d(c.size());
  for (std::size_t j = 0; j < c.size(); ++j) {
    std::size_t l = j;
    while (l > 0 && c[l - 1] >= c[l]) --l;
    std::size_t r = j;
    while (r + 1 < c.size() && c[r + 1] >= c[r]) ++r;
    d[j] = (c[l] - c[j]) + (c[r] - c[j]);
  }
  return d;
}

Segmentation fallback_segment(const Session& session, const FallbackParams& params) {
  const std::size_t n = session.turns.size();
  if (n == 0) throw std::invalid_argument("fallback_segment: empty session");
  if (n == 1) return Segmentation::single(1);

  auto d = depth_scores(gap_cohesion(session, params.window));
  double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  double var = 0;
  for (double x : d) var += (x - mean) * (x - mean);
  double sd = std::sqrt(var / static_cast<double>(d.size()));
  double threshold = mean + params.threshold_sigma * sd;

  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < d.size(); ++j)
    if (d[j] > threshold + 1e-12) candidates.push_back(j);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });

  const std::size_t min_len = std::max<std::size_t>(1, params.min_seg_len);
  std::vector<std::size_t> accepted;
  for (auto j : candidates) {
    // A boundary after turn j splits its segment into [prev+1, j] and [j+1, next].
    long long prev = -1;
    std::size_t next = n - 1;
    for (auto b : accepted) {
      if (b < j) prev = std::max(prev, static_cast<long long>(b));
      if (b > j) next = std::min(next, b);
    }
    auto left_len = static_cast<std::size_t>(static_cast<long long>(j) - prev);
    auto right_len = next - j;
    if (left_len >= min_len && right_len >= min_len) accepted.push_back(j);
  }
  return Segmentation::from_boundaries(accepted, n);
}

// ---------------------------------------------------------------------------
// Model-driven segmentation

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::forced: return "forced";
    case Provenance::model: return "model";
    case Provenance::repaired: return "repaired";
    case Provenance::fallback: return "fallback";
  }
  return "unknown";
}

Segmenter::Segmenter(Gateway* gateway, SegmenterConfig config)
    : gateway_(gateway), config_(std::move(config)) {}

SegmentOutcome Segmenter::segment_zero_shot(const Session& session) const {
  if (session.turns.size() <= 1) return run(session, {});
  return run(session, zero_shot_prompt(render_session(session)));
}

SegmentOutcome Segmenter::segment_with_rubric(const Session& session, const Rubric& rubric) const {
  if (session.turns.size() <= 1) return run(session, {});
  return run(session, rubric_prompt(render_session(session), rubric));
}

SegmentOutcome Segmenter::segment(const Session& session, const Rubric* rubric) const {
  return rubric ? segment_with_rubric(session, *rubric) : segment_zero_shot(session);
}

SegmentOutcome Segmenter::run(const Session& session, const std::string& prompt) const {
  const std::size_t n = session.turns.size();
  if (n == 0) throw std::invalid_argument("cannot segment an empty session");
  SegmentOutcome outcome;
  if (n == 1) {
    outcome.segmentation = Segmentation::single(1);
    outcome.provenance = Provenance::forced;
    return outcome;
  }

  auto fall_back = [&](std::string why) {
    outcome.segmentation = fallback_segment(session, config_.fallback);
    outcome.provenance = Provenance::fallback;
    outcome.error = std::move(why);
    return outcome;
  };

  if (!gateway_) return fall_back("no model configured");

  auto req = ChatRequest::user(config_.model, prompt, config_.max_tokens);
  std::string last_error;
  for (int attempt = 0; attempt <= config_.format_retries; ++attempt) {
    std::string reply;
    try {
      ++outcome.model_calls;
      reply = gateway_->complete(req);
    } catch (const TransportError& e) {
      if (!config_.fallback_on_error) throw;
      return fall_back(e.what());
    }
    try {
      auto repaired = validate_repair(parse_segmentation(reply, n), n);
      outcome.segmentation = std::move(repaired.segmentation);
      outcome.repair_log = std::move(repaired.log);
      outcome.provenance = outcome.repair_log.empty() ? Provenance::model : Provenance::repaired;
      return outcome;
    } catch (const FormatError& e) {
      last_error = e.what();
    }
    // Follow-up turn so the retry is a distinct (and cacheable) request.
    req.messages.push_back({"assistant", reply});
    req.messages.push_back(
        {"user", "Your previous reply could not be parsed (" + last_error +
                     "). Provide the segmentation result in JSONL format between the tags "
                     "<segmentation></segmentation>."});
  }
  if (!config_.fallback_on_error)
    throw FormatError("segmentation failed after " + std::to_string(outcome.model_calls) +
                      " attempts: " + last_error);
  return fall_back(last_error);
}

// ---------------------------------------------------------------------------
// Rubric learning

std::vector<HardExample> select_hard_examples(const std::vector<SegmentedPair>& pairs,
                                              std::size_t k) {
  if (k == 0) throw std::invalid_argument("select_hard_examples: k must be positive");
  std::vector<HardExample> scored;
  scored.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.gold.n_turns() != p.predicted.n_turns() || p.gold.n_turns() != p.session.size())
      throw std::invalid_argument("select_hard_examples: mismatched turn counts for session '" +
                                  p.session.session_id + "'");
    double wd;
    try {
      wd = window_diff(p.gold, p.predicted);
    } catch (const MetricUndefined&) {
      // Too short for a window: all-or-nothing agreement.
      wd = p.gold == p.predicted ? 0.0 : 1.0;
    }
    scored.push_back({p.session, p.gold, p.predicted, wd});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const HardExample& a, const HardExample& b) { return a.wd > b.wd; });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

namespace {

std::string strip_bullet(std::string line) {
  line = trim(line);
  while (!line.empty() && (line.front() == '-' || line.front() == '*' || line.front() == ' '))
    line.erase(line.begin());
  return line;
}

// The new item is the last bullet inside <rubric>; models sometimes copy the
// existing items first.
std::string extract_new_item(const std::string& body) {
  std::istringstream in(body);
  std::string line;
  std::vector<std::string> bullets;
  std::string plain;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '-' || t.front() == '*') {
      bullets.push_back(strip_bullet(t));
    } else if (!bullets.empty()) {
      bullets.back() += " " + t;
    } else {
      plain += (plain.empty() ? "" : " ") + t;
    }
  }
  if (!bullets.empty()) return bullets.back();
  return plain;
}

// Index (0-based) of the batch example the reflection names, defaulting to
// the hardest one.
std::size_t representative_index(const std::string& example_text, std::size_t batch_size) {
  static const std::regex kRef(R"([Ee]xample\s*#?\s*(\d+))");
  std::smatch m;
  if (std::regex_search(example_text, m, kRef)) {
    auto idx = std::stoul(m[1].str());
    if (idx >= 1 && idx <= batch_size) return idx - 1;
  }
  return 0;
}

}  // namespace

Rubric learn_rubric(const std::vector<SegGoldSession>& train, Gateway& gateway,
                    const SegmenterConfig& config, const RubricLearningParams& params,
                    RubricLearningLog* log) {
  if (train.empty()) throw std::invalid_argument("learn_rubric: empty training set");
  if (params.batches == 0 || params.top_m == 0)
    throw std::invalid_argument("learn_rubric: top_m and batches must be positive");
  RubricLearningLog local;
  RubricLearningLog& lg = log ? *log : local;

  Segmenter segmenter(&gateway, config);
  std::vector<SegmentedPair> pairs;
  pairs.reserve(train.size());
  for (const auto& g : train) {
    auto outcome = segmenter.segment_zero_shot(g.session);
    lg.segmentation_calls += outcome.model_calls;
    pairs.push_back({g.session, Segmentation::from_ends(g.gold_boundaries, g.session.size()),
                     std::move(outcome.segmentation)});
  }

  auto hard = select_hard_examples(pairs, params.top_m);
  const std::size_t n_batches = std::min(params.batches, hard.size());
  const std::size_t base = hard.size() / n_batches;
  const std::size_t extra = hard.size() % n_batches;

  Rubric rubric;
  std::size_t offset = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::size_t len = base + (b < extra ? 1 : 0);
    std::vector<HardExample> batch(hard.begin() + static_cast<long>(offset),
                                   hard.begin() + static_cast<long>(offset + len));
    offset += len;

    auto req = ChatRequest::user(config.model, reflection_prompt(rubric.items, batch),
                                 config.max_tokens);
    ++lg.reflection_calls;
    std::string reply;
    try {
      reply = gateway.complete(req);
    } catch (const TransportError& e) {
      lg.skipped.push_back("batch " + std::to_string(b) + ": " + e.what());
      continue;
    }
    auto item = tag_content(reply, "rubric");
    std::string text = item ? extract_new_item(*item) : std::string();
    if (text.empty()) {
      lg.skipped.push_back("batch " + std::to_string(b) + ": no <rubric> item in reply");
      continue;
    }
    rubric.add_item(std::move(text));
    if (auto ex = tag_content(reply, "example")) {
      const auto& pick = batch[representative_index(*ex, batch.size())];
      rubric.examples.push_back({render_segmented(pick.session, pick.gold),
                                 render_segmented(pick.session, pick.predicted), trim(*ex)});
      if (rubric.examples.size() > Rubric::kMaxItems) rubric.examples.erase(rubric.examples.begin());
    }
  }
  if (lg.skipped.size() == n_batches)
    throw std::runtime_error("learn_rubric: every reflection batch was skipped");
  return rubric;
}

json to_json(const SegmentSpan& span) {
  return {{"segment_id", span.segment_id},
          {"start", span.start},
          {"end", span.end},
          {"num_exchanges", span.num_exchanges}};
}

SegmentSpan span_from_json(const json& j) {
  return {j.at("segment_id").get<std::size_t>(), j.at("start").get<std::size_t>(),
          j.at("end").get<std::size_t>(), j.at("num_exchanges").get<std::size_t>()};
}

}  // namespace segmem
