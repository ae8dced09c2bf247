// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "segmem/commands.hpp"
#include "segmem/corpus.hpp"
#include "segmem/denoise.hpp"
#include "segmem/digest.hpp"
#include "segmem/error.hpp"
#include "segmem/evalkit.hpp"
#include "segmem/memory.hpp"
#include "segmem/modelgate.hpp"
#include "segmem/segmentation.hpp"

using namespace segmem;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SEGMEM_TEST_DATA;

struct Outcome {
  bool ok;
  std::string detail;
};

int g_failed = 0;

void check(const std::string& name, double limit_s, const std::function<Outcome()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome r{false, ""};
  try {
    r = fn();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs > limit_s) {
    r.ok = false;
    r.detail += " (over time limit " + std::to_string(limit_s) + "s)";
  }
  if (!r.ok) ++g_failed;
  std::printf("[%s] %s: %s [%.3fs]\n", r.ok ? "PASS" : "FAIL", name.c_str(), r.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double x, int prec = 6) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << x;
  return s.str();
}

Gateway make_mock(json script, std::shared_ptr<MockBackend>* out = nullptr) {
  auto backend = std::make_shared<MockBackend>(std::move(script));
  if (out) *out = backend;
  GatewayOptions opts;
  opts.sleep = [](std::chrono::milliseconds) {};
  return Gateway(backend, opts);
}

Session numbered_session(std::size_t n, const std::string& tag) {
  Session s{tag, {}};
  for (std::size_t i = 0; i < n; ++i)
    s.turns.push_back({i, tag + " user says " + std::to_string(i), "agent replies " + std::to_string(i)});
  return s;
}

// Oracles written from the sliding-window definitions, sharing nothing with
// the library besides the Segmentation container.
std::vector<int> oracle_labels(const std::vector<std::size_t>& ends, std::size_t n) {
  std::vector<int> lab(n);
  int seg = 0;
  std::size_t e = 0;
  for (std::size_t t = 0; t < n; ++t) {
    lab[t] = seg;
    if (e < ends.size() && ends[e] == t) {
      ++seg;
      ++e;
    }
  }
  return lab;
}

double oracle_pk(const std::vector<std::size_t>& ref, const std::vector<std::size_t>& hyp, std::size_t n,
                 std::size_t k) {
  auto r = oracle_labels(ref, n), h = oracle_labels(hyp, n);
  int miss = 0, total = 0;
  for (std::size_t i = 0; i + k < n; ++i, ++total)
    if ((r[i] == r[i + k]) != (h[i] == h[i + k])) ++miss;
  return double(miss) / total;
}

double oracle_wd(const std::vector<std::size_t>& ref, const std::vector<std::size_t>& hyp, std::size_t n,
                 std::size_t k) {
  auto count = [&](const std::vector<std::size_t>& ends, std::size_t lo, std::size_t hi) {
    int c = 0;  // boundaries strictly between turn lo and turn hi
    for (auto e : ends)
      if (e >= lo && e < hi && e + 1 < n) ++c;
    return c;
  };
  int miss = 0, total = 0;
  for (std::size_t i = 0; i + k < n; ++i, ++total)
    if (count(ref, i, i + k) != count(hyp, i, i + k)) ++miss;
  return double(miss) / total;
}

std::vector<std::size_t> random_ends(std::mt19937& rng, std::size_t n) {
  std::vector<std::size_t> ends;
  double p = std::uniform_real_distribution<double>(0.05, 0.6)(rng);
  std::bernoulli_distribution cut(p);
  for (std::size_t t = 0; t + 1 < n; ++t)
    if (cut(rng)) ends.push_back(t);
  ends.push_back(n - 1);
  return ends;
}

double naive_bm25(const std::vector<TokenSeq>& docs, const TokenSeq& query, std::size_t d) {
  const double k1 = 1.2, b = 0.75;
  double avg = 0;
  for (const auto& x : docs) avg += x.size();
  avg /= docs.size();
  std::set<std::string> terms(query.begin(), query.end());
  double s = 0;
  for (const auto& t : terms) {
    double df = 0, tf = 0;
    for (const auto& x : docs) df += std::count(x.begin(), x.end(), t) > 0;
    tf = std::count(docs[d].begin(), docs[d].end(), t);
    double idf = std::log(1 + (docs.size() - df + 0.5) / (df + 0.5));
    s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * docs[d].size() / avg));
  }
  return s;
}

MemoryBank bank_of(const std::vector<std::string>& texts) {
  std::vector<MemoryUnit> units;
  for (std::size_t i = 0; i < texts.size(); ++i)
    units.push_back({"u" + std::to_string(i), "c", 0, i, i, texts[i], texts[i], token_count(texts[i])});
  return MemoryBank(Granularity::turn, units);
}

std::string span_line(std::size_t id, long s, long e, long n) {
  return "{\"segment_id\": " + std::to_string(id) + ", \"start_exchange_number\": " + std::to_string(s) +
         ", \"end_exchange_number\": " + std::to_string(e) + ", \"num_exchanges\": " + std::to_string(n) + "}";
}

// Random model reply in one of four shapes.
std::string random_reply(std::mt19937& rng, std::size_t n, int shape) {
  std::uniform_int_distribution<long> pos(0, static_cast<long>(n) - 1);
  std::string body;
  switch (shape) {
    case 0: {  // valid partition
      auto ends = random_ends(rng, n);
      std::size_t s = 0;
      for (std::size_t i = 0; i < ends.size(); ++i) {
        body += span_line(i, s, ends[i], ends[i] - s + 1) + "\n";
        s = ends[i] + 1;
      }
      break;
    }
    case 1:    // overlapping
    case 2: {  // gapped / out of range / inverted
      std::size_t k = 1 + rng() % 5;
      for (std::size_t i = 0; i < k; ++i) {
        long a = pos(rng), b = pos(rng) + (shape == 2 ? static_cast<long>(rng() % 4) : 0);
        if (shape == 1 && rng() % 2) std::swap(a, b);
        body += span_line(rng() % 4, a, b, rng() % 7) + "\n";
      }
      break;
    }
    default: {  // garbage
      const char* junk[] = {"I cannot segment this.", "{\"segment_id\": 0}", "<segmentation>oops",
                            "[1, 2, 3]", ""};
      return junk[rng() % 5];
    }
  }
  return "<segmentation>\n" + body + "</segmentation>";
}

}  // namespace

int main() {
  check("segment score arithmetic on reference rows", 0.001, [] {
    double a = segment_score(0.093, 0.103, 0.888);
    double b = segment_score(0.363, 0.401, 0.596);
    bool ok = std::abs(a - 0.895) <= 5e-4 && std::abs(b - 0.607) <= 5e-4;
    return Outcome{ok, "score=" + fmt(a, 4) + " (0.895), " + fmt(b, 4) + " (0.607)"};
  });

  check("Pk/WindowDiff equal brute-force oracles on 500 random pairs", 5.0, [] {
    auto ref = Segmentation::from_ends({1, 3}, 4);
    auto one = Segmentation::single(4);
    double fp = pk(ref, one, 1), fw = window_diff(ref, one, 1);
    if (fp != 1.0 / 3.0 || fw != 1.0 / 3.0)
      return Outcome{false, "fixture Pk=" + fmt(fp) + " WD=" + fmt(fw)};
    std::mt19937 rng(20240611);
    for (int trial = 0; trial < 500; ++trial) {
      std::size_t n = 2 + rng() % 49;
      auto re = random_ends(rng, n), he = random_ends(rng, n);
      auto r = Segmentation::from_ends(re, n), h = Segmentation::from_ends(he, n);
      std::size_t k = std::max<long>(1, std::lround(double(n) / (2.0 * re.size())));
      if (k >= n) continue;
      double p = pk(r, h), w = window_diff(r, h);
      if (p != oracle_pk(re, he, n, k) || w != oracle_wd(re, he, n, k))
        return Outcome{false, "mismatch at trial " + std::to_string(trial)};
    }
    return Outcome{true, "500 pairs exact; fixture Pk=WD=1/3"};
  });

  check("DCG fixtures", 0, [] {
    auto rel2 = assign_relevance({{0, 5}, {0, 6}});
    double a = dcg({{0, 5}, {0, 6}}, rel2);
    double b = dcg({{0, 0}, {0, 1}, {0, 7}}, assign_relevance({{0, 7}}));
    bool ok = std::abs(a - 0.8155) <= 1e-4 && b == 0.5;
    return Outcome{ok, "two gold at ranks 1-2 = " + fmt(a) + ", single gold at rank 3 = " + fmt(b)};
  });

  check("BM25 hand fixture and 200 random corpora vs naive scorer", 0, [] {
    auto bank = bank_of({"cat sat", "dog ran fast"});
    auto r = bm25_search("cat", bank, 2);
    double s = r.ranked[0].unit_id == "u0" ? r.ranked[0].score : -1;
    if (std::abs(s - 0.7549) > 1e-4 || r.ranked[1].score != 0.0)
      return Outcome{false, "fixture score " + fmt(s)};
    std::mt19937 rng(99);
    const char* vocab[] = {"red", "blue", "green", "cat", "dog", "sat", "ran", "on", "the"};
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> docs(1 + rng() % 8);
      for (auto& d : docs)
        for (std::size_t i = 0, len = 1 + rng() % 12; i < len; ++i) d += std::string(vocab[rng() % 9]) + " ";
      std::string q;
      for (std::size_t i = 0, len = 1 + rng() % 4; i < len; ++i) q += std::string(vocab[rng() % 9]) + " ";
      std::vector<TokenSeq> toks;
      for (auto& d : docs) toks.push_back(tokenize(d));
      auto res = bm25_search(q, bank_of(docs), docs.size());
      for (const auto& su : res.ranked) {
        double diff = std::abs(su.score - naive_bm25(toks, tokenize(q), std::stoul(su.unit_id.substr(1))));
        worst = std::max(worst, diff);
      }
    }
    return Outcome{worst <= 1e-9, "fixture=" + fmt(s) + ", max |diff|=" + std::to_string(worst)};
  });

  check("segmentation contract over 1000 randomized model outputs", 0, [] {
    std::mt19937 rng(4242);
    int counts[4] = {0, 0, 0, 0};
    for (int trial = 0; trial < 1000; ++trial) {
      std::size_t n = 1 + rng() % 20;
      int shape = trial % 4;
      std::string reply = random_reply(rng, n, shape);
      auto gw = make_mock({{"sequence", {reply, reply, reply}}});
      Segmenter seg(&gw);
      auto out = seg.segment_zero_shot(numbered_session(n, "t" + std::to_string(trial)));
      check_invariants(out.segmentation.spans(), n);
      if (out.segmentation.spans().back().end != n - 1) return Outcome{false, "coverage"};
      try {
        auto spans = parse_segmentation(reply, n);
        auto first = validate_repair(spans, n);
        auto second = validate_repair(first.segmentation.spans(), n);
        if (!(second.segmentation == first.segmentation) || !second.log.empty())
          return Outcome{false, "repair not idempotent at trial " + std::to_string(trial)};
      } catch (const FormatError&) {
      } catch (const std::invalid_argument&) {
      }
      ++counts[shape];
    }
    return Outcome{true, "valid/overlap/gapped/garbage = " + std::to_string(counts[0]) + "/" +
                             std::to_string(counts[1]) + "/" + std::to_string(counts[2]) + "/" +
                             std::to_string(counts[3]) + ", all invariants hold"};
  });

  check("compression at rate 0.5 improves BM25 recall@1 over rate 1.0", 10.0, [] {
    std::mt19937 rng(7);
    const char* filler[] = {"really", "just", "like", "thing", "stuff", "okay"};
    const std::size_t topics = 30;
    std::vector<MemoryUnit> units;
    auto add = [&](const std::string& text) {
      units.push_back({"u" + std::to_string(units.size()), "c", 0, units.size(), units.size(), text, text,
                       token_count(text)});
    };
    for (std::size_t i = 0; i < topics; ++i) {
      std::string key = "key" + std::to_string(i), attr = "attr" + std::to_string(i);
      std::vector<std::string> words{key, attr};
      std::size_t f = 30 + rng() % 20;
      for (std::size_t j = 0; j < f; ++j) words.push_back(filler[rng() % 6]);
      std::shuffle(words.begin(), words.end(), rng);
      std::string rel;
      for (const auto& w : words) rel += w + " ";
      add(rel);                                          // relevant: key terms diluted with filler
      add(key + " " + key + " note" + std::to_string(i));  // short distractor on the same key
    }
    auto recall_at_1 = [&](double rate) {
      auto copy = units;
      compress_bank_texts(copy, Compressor({rate}));
      MemoryBank bank(Granularity::turn, copy);
      double hits = 0;
      for (std::size_t i = 0; i < topics; ++i) {
        auto r = bm25_search("key" + std::to_string(i) + " attr" + std::to_string(i), bank, 1);
        hits += r.ranked[0].unit_id == "u" + std::to_string(2 * i);
      }
      return hits / topics;
    };
    double full = recall_at_1(1.0), half = recall_at_1(0.5);
    return Outcome{half > full, "recall@1 rate1.0=" + fmt(full, 3) + " rate0.5=" + fmt(half, 3)};
  });

  check("rubric learning: 10 reflection calls, <= 10 items", 0, [] {
    std::string zero_shot = "<segmentation>" + span_line(0, 0, 7, 8) + "</segmentation>";
    std::shared_ptr<MockBackend> backend;
    auto gw = make_mock({{"chat",
                          {{{"contains", "# Existing Rubric:"},
                            {"response", "<rubric>- Split when the user changes subject.</rubric>"
                                         "<example>Example 1 shows a missed shift.</example>"}},
                           {{"contains", "<segmentation></segmentation>"}, {"response", zero_shot}}}}},
                        &backend);
    std::vector<SegGoldSession> train;
    std::mt19937 rng(5);
    for (std::size_t i = 0; i < 100; ++i) {
      auto ends = random_ends(rng, 8);
      train.push_back({"g" + std::to_string(i), numbered_session(8, "g" + std::to_string(i)), ends});
    }
    RubricLearningLog log;
    auto rubric = learn_rubric(train, gw, {}, {100, 10}, &log);
    std::size_t reflections = 0;
    for (const auto& r : backend->requests())
      if (r.content.find("# Existing Rubric:") != std::string::npos) ++reflections;
    bool ok = log.reflection_calls == 10 && reflections == 10 && rubric.items.size() <= 10 &&
              !rubric.items.empty();
    return Outcome{ok, "reflection calls=" + std::to_string(reflections) +
                           ", items=" + std::to_string(rubric.items.size())};
  });

  check("end-to-end pipeline is byte-identical across two runs", 30.0, [] {
    auto work = fs::temp_directory_path() / "segmem_acceptance_e2e";
    RunConfig cfg;
    cfg.segmenter.mode = RunConfig::SegmenterSettings::Mode::fallback;
    cfg.granularity = Granularity::segment;
    cfg.compression.enabled = true;
    cfg.compression.config.rate = 0.75;
    cfg.mock_path = (kData / "mock_pipeline.json").string();
    cfg.paths.cache = (work / "cache").string();
    std::ostringstream sink;
    CommandIO io{sink, sink};
    auto once = [&]() -> std::vector<std::string> {
      fs::remove_all(work);
      fs::create_directories(work);
      auto w = [&](const char* f) { return (work / f).string(); };
      int rc = cmd_ingest(cfg, {(kData / "conversations.jsonl").string(), "auto", 1, w("convs.jsonl")}, io);
      rc |= cmd_segment(cfg, {w("convs.jsonl"), "auto", w("segments.jsonl")}, io);
      rc |= cmd_build_bank(cfg, {w("convs.jsonl"), w("segments.jsonl"), w("bank")}, io);
      rc |= cmd_answer(cfg, {w("convs.jsonl"), (kData / "qa.jsonl").string(), w("bank"), "", w("answers.jsonl")}, io);
      rc |= cmd_eval_qa(cfg, {w("answers.jsonl"), (kData / "qa.jsonl").string(), "", w("report.json")}, io);
      if (rc != 0) throw std::runtime_error("pipeline failed:\n" + sink.str());
      return {file_sha256_hex(w("segments.jsonl")), file_sha256_hex(work / "bank" / "units.jsonl"),
              file_sha256_hex(w("answers.jsonl")), file_sha256_hex(w("report.json"))};
    };
    auto a = once();
    auto b = once();
    return Outcome{a == b, "report sha256 " + a.back().substr(0, 16) + (a == b ? " == " : " != ") +
                               b.back().substr(0, 16)};
  });

  check("granularity counts on the fixture corpus", 0, [] {
    auto convs = load_conversations(kData / "conversations.jsonl");
    std::size_t turns = 0, sessions = 0, segments = 0;
    SessionSegmenter seg = [](const Conversation& c, std::size_t si) {
      return fallback_segment(c.sessions[si]);
    };
    for (const auto& c : convs)
      for (std::size_t si = 0; si < c.sessions.size(); ++si) {
        turns += c.sessions[si].size();
        ++sessions;
        segments += seg(c, si).size();
      }
    auto nt = build_bank(convs, Granularity::turn).n_units();
    auto ns = build_bank(convs, Granularity::session).n_units();
    auto ng = build_bank(convs, Granularity::segment, seg).n_units();
    bool ok = nt == turns && ns == sessions && ng == segments;
    return Outcome{ok, "|M_turn|=" + std::to_string(nt) + "/" + std::to_string(turns) +
                           " |M_session|=" + std::to_string(ns) + "/" + std::to_string(sessions) +
                           " |M_segment|=" + std::to_string(ng) + "/" + std::to_string(segments)};
  });

  check("pairwise judge with position-A bias yields NONE", 0, [] {
    std::shared_ptr<MockBackend> backend;
    auto gw = make_mock({{"chat", {{{"contains", "Bot Response A"}, {"response", "<chosen>A</chosen>"}}}}},
                        &backend);
    auto v = pairwise(gw, "history", "question?", "answer one", "answer two");
    bool ok = v.choice == JudgeVerdict::Choice::NONE && backend->call_count("chat") == 2;
    return Outcome{ok, "verdict=" + to_string(*v.choice) + " after " +
                           std::to_string(backend->call_count("chat")) + " judge calls"};
  });

  std::printf("%d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
