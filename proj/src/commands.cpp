#include "segmem/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "segmem/corpus.hpp"
#include "segmem/denoise.hpp"
#include "segmem/digest.hpp"
#include "segmem/error.hpp"
#include "segmem/evalkit.hpp"
#include "segmem/memory.hpp"
#include "segmem/segmentation.hpp"

namespace segmem {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool require_file(const std::string& path, const char* what, CommandIO io) {
  if (path.empty()) {
    io.err << "error: missing " << what << " path\n";
    return false;
  }
  if (!fs::is_regular_file(path)) {
    io.err << "error: " << what << " file not found: " << path << "\n";
    return false;
  }
  return true;
}

bool require_out(const std::string& path, CommandIO io) {
  if (path.empty()) {
    io.err << "error: --out is required\n";
    return false;
  }
  return true;
}

std::string detect_format(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      if (j.contains("gold_boundaries")) return "seg-gold";
      if (j.contains("sessions")) return "conversation";
      if (j.contains("question")) return "qa";
    } catch (const json::parse_error&) {
    }
    break;
  }
  return "conversation";
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

json input_digest(const std::string& path) {
  return {{"file", fs::path(path).filename().string()}, {"sha256", file_sha256_hex(path)}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void emit_report(const json& report, const std::string& out, CommandIO io) {
  write_text(out, report.dump(2) + "\n");
  auto table = render_report_table(report);
  write_text(out + ".txt", table);
  io.out << table << "report: " << out << " sha256=" << file_sha256_hex(out) << "\n";
}

std::string fmt4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

Segmenter make_segmenter(const RunConfig& config, Gateway* gateway) {
  auto params = config.segmenter.params;
  params.model = config.models.segmentation;
  bool use_model = config.segmenter.mode == RunConfig::SegmenterSettings::Mode::model;
  return Segmenter(use_model ? gateway : nullptr, params);
}

std::optional<Rubric> load_rubric(const RunConfig& config) {
  if (!config.segmenter.rubric_path) return std::nullopt;
  return Rubric::load(*config.segmenter.rubric_path);
}

bool needs_model(const RunConfig& config) {
  return config.segmenter.mode == RunConfig::SegmenterSettings::Mode::model;
}

// (conversation_id, session_index) -> segmentation, from a `segment` output file.
using SegmentIndex = std::map<std::pair<std::string, std::size_t>, Segmentation>;

SegmentIndex load_segment_index(const std::string& path) {
  SegmentIndex index;
  for (const auto& row : read_jsonl(path)) {
    std::vector<SegmentSpan> spans;
    for (const auto& s : row.at("spans")) spans.push_back(span_from_json(s));
    index.emplace(std::make_pair(row.at("conversation_id").get<std::string>(),
                                 row.at("session_index").get<std::size_t>()),
                  Segmentation(std::move(spans), row.at("n_turns").get<std::size_t>()));
  }
  return index;
}

// Segment supplier: precomputed spans when available, otherwise the
// configured segmenter.
SessionSegmenter session_segmenter(const RunConfig& config, const std::string& segments_path,
                                   Gateway* gateway, std::shared_ptr<SegmentIndex>& index_out) {
  if (!segments_path.empty()) index_out = std::make_shared<SegmentIndex>(load_segment_index(segments_path));
  auto rubric = load_rubric(config);
  auto segmenter = make_segmenter(config, gateway);
  auto index = index_out;
  return [index, rubric, segmenter](const Conversation& conv, std::size_t si) {
    if (index) {
      auto it = index->find({conv.conversation_id, si});
      if (it == index->end())
        throw std::runtime_error("no segmentation for " + conv.conversation_id + " session " +
                                 std::to_string(si));
      return it->second;
    }
    return segmenter.segment(conv.sessions[si], rubric ? &*rubric : nullptr).segmentation;
  };
}

std::optional<Compressor> make_compressor(const RunConfig& config, Gateway* gateway) {
  if (!config.compression.enabled) return std::nullopt;
  return Compressor(config.compression.config, gateway);
}

json retrieved_json(const std::vector<MemoryUnit>& units) {
  json arr = json::array();
  for (const auto& u : units)
    arr.push_back({{"unit_id", u.unit_id},
                   {"session_index", u.session_index},
                   {"turn_range", {u.turn_start, u.turn_end}}});
  return arr;
}

json prf_json(const PRF& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, rows);
    } else if (it->is_number_float()) {
      rows.emplace_back(key, fmt4(it->get<double>()));
    } else if (it->is_string()) {
      rows.emplace_back(key, it->get<std::string>());
    } else {
      rows.emplace_back(key, it->dump());
    }
  }
}

}  // namespace

std::string generation_prompt(const std::string& context, const std::string& question) {
  std::string p =
      "You are a helpful assistant in a long-term conversation with the user. Below is the "
      "related conversation history between you and the user, followed by the user's current "
      "request.\n\n## Related Conversation History\n";
  p += context.empty() ? std::string("(none)") : context;
  p += "\n\n## User Request\n";
  p += question;
  p += "\n\nRespond to the user request. Use the conversation history where it is relevant.";
  return p;
}

std::string render_report_table(const json& report) {
  std::vector<std::pair<std::string, std::string>> rows;
  if (report.contains("aggregate")) flatten(report["aggregate"], "", rows);
  std::size_t width = 6;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  std::ostringstream out;
  out << "== " << report.value("kind", std::string("report")) << " ==\n";
  out << std::left << std::setw(static_cast<int>(width)) << "metric" << "  value\n";
  out << std::string(width, '-') << "  " << std::string(10, '-') << "\n";
  for (const auto& [k, v] : rows)
    out << std::left << std::setw(static_cast<int>(width)) << k << "  " << v << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig&, const IngestArgs& args, CommandIO io) {
  if (!require_file(args.input, "input", io)) return kExitUsage;
  if (args.merge == 0) {
    io.err << "error: --merge must be at least 1\n";
    return kExitUsage;
  }
  const std::string format = args.format == "auto" ? detect_format(args.input) : args.format;
  try {
    if (format == "conversation") {
      auto convs = load_conversations(args.input);
      std::size_t sessions = 0, turns = 0, tokens = 0;
      for (auto& c : convs) {
        if (args.merge > 1) c = merge_sessions(c, args.merge);
        sessions += c.sessions.size();
        for (const auto& s : c.sessions) {
          turns += s.turns.size();
          for (const auto& t : s.turns) tokens += token_count(t.user) + token_count(t.agent);
        }
      }
      if (!args.out.empty()) save_conversations(args.out, convs);
      io.out << "conversations=" << convs.size() << " sessions=" << sessions << " turns=" << turns
             << " tokens=" << tokens << "\n";
    } else if (format == "qa") {
      auto items = load_qa_items(args.input);
      std::size_t with_evidence = 0;
      for (const auto& q : items) with_evidence += q.evidence ? 1 : 0;
      if (!args.out.empty()) save_qa_items(args.out, items);
      io.out << "qa_items=" << items.size() << " with_evidence=" << with_evidence << "\n";
    } else if (format == "seg-gold") {
      auto gold = load_seg_gold(args.input);
      std::size_t turns = 0, segments = 0;
      for (const auto& g : gold) {
        turns += g.session.size();
        segments += g.gold_boundaries.size();
      }
      if (!args.out.empty()) save_seg_gold(args.out, gold);
      io.out << "dialogues=" << gold.size() << " turns=" << turns << " segments=" << segments << "\n";
    } else {
      io.err << "error: unknown format '" << format << "'\n";
      return kExitUsage;
    }
  } catch (const std::exception& e) {
    io.err << "error: " << args.input << ": " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

int cmd_segment(const RunConfig& config, const SegmentArgs& args, CommandIO io) {
  if (!require_file(args.input, "input", io) || !require_out(args.out, io)) return kExitUsage;
  const std::string format = args.format == "auto" ? detect_format(args.input) : args.format;

  struct Job {
    std::string dialogue_id;
    std::string conversation_id;
    std::size_t session_index;
    Session session;
  };
  std::vector<Job> jobs;
  std::optional<Rubric> rubric;
  try {
    if (format == "seg-gold") {
      for (auto& g : load_seg_gold(args.input))
        jobs.push_back({g.dialogue_id, g.dialogue_id, 0, std::move(g.session)});
    } else if (format == "conversation") {
      for (auto& c : load_conversations(args.input))
        for (std::size_t si = 0; si < c.sessions.size(); ++si)
          jobs.push_back({c.conversation_id + "/" + c.sessions[si].session_id, c.conversation_id,
                          si, c.sessions[si]});
    } else {
      io.err << "error: segment accepts conversation or seg-gold input, not '" << format << "'\n";
      return kExitUsage;
    }
    rubric = load_rubric(config);
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::unique_ptr<Gateway> gateway;
  try {
    if (needs_model(config)) gateway = make_gateway(config);
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  auto segmenter = make_segmenter(config, gateway.get());

  std::vector<json> rows(jobs.size());
  std::vector<std::string> failures(jobs.size());
  parallel_for(jobs.size(), config.concurrency, [&](std::size_t i) {
    const auto& job = jobs[i];
    json row = {{"dialogue_id", job.dialogue_id},
                {"conversation_id", job.conversation_id},
                {"session_index", job.session_index},
                {"session_id", job.session.session_id},
                {"n_turns", job.session.size()}};
    try {
      auto outcome = segmenter.segment(job.session, rubric ? &*rubric : nullptr);
      json spans = json::array();
      for (const auto& s : outcome.segmentation.spans()) spans.push_back(to_json(s));
      row["provenance"] = to_string(outcome.provenance);
      row["spans"] = std::move(spans);
      row["repair_log"] = outcome.repair_log;
      if (outcome.error) row["error"] = *outcome.error;
    } catch (const std::exception& e) {
      failures[i] = job.dialogue_id + ": " + e.what();
    }
    rows[i] = std::move(row);
  });

  std::vector<json> written;
  std::string repair_log;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!failures[i].empty()) {
      ++failed;
      io.err << "error: " << failures[i] << "\n";
      continue;
    }
    for (const auto& entry : rows[i]["repair_log"])
      repair_log += jobs[i].dialogue_id + "\t" + entry.get<std::string>() + "\n";
    written.push_back(std::move(rows[i]));
  }
  write_jsonl(args.out, written);
  write_text(args.out + ".repairs.log", repair_log);
  io.out << "segmented " << written.size() << " of " << jobs.size() << " sessions -> " << args.out
         << "\n";
  return failed ? kExitPartial : kExitOk;
}

int cmd_learn_rubric(const RunConfig& config, const LearnRubricArgs& args, CommandIO io) {
  if (!require_file(args.input, "training", io) || !require_out(args.out, io)) return kExitUsage;
  try {
    auto train = load_seg_gold(args.input);
    auto gateway = make_gateway(config);
    auto params = config.segmenter.params;
    params.model = config.models.segmentation;
    RubricLearningLog log;
    auto rubric = learn_rubric(train, *gateway, params, {args.top_m, args.batches}, &log);
    rubric.save(args.out);
    for (const auto& s : log.skipped) io.err << "warning: skipped " << s << "\n";
    io.out << "rubric items=" << rubric.items.size() << " examples=" << rubric.examples.size()
           << " reflection_calls=" << log.reflection_calls << " -> " << args.out << "\n";
    return log.skipped.empty() ? kExitOk : kExitPartial;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_build_bank(const RunConfig& config, const BuildBankArgs& args, CommandIO io) {
  if (!require_file(args.input, "input", io) || !require_out(args.out, io)) return kExitUsage;
  if (!args.segments.empty() && !require_file(args.segments, "segments", io)) return kExitUsage;
  try {
    auto convs = load_conversations(args.input);
    std::unique_ptr<Gateway> gateway;
    bool need_gateway =
        (config.granularity == Granularity::segment && args.segments.empty() && needs_model(config)) ||
        (config.compression.enabled &&
         config.compression.config.backend == CompressionBackend::external) ||
        config.retriever == RetrieverKind::dense;
    if (need_gateway) gateway = make_gateway(config);

    SessionSegmenter seg;
    std::shared_ptr<SegmentIndex> index;
    if (config.granularity == Granularity::segment)
      seg = session_segmenter(config, args.segments, gateway.get(), index);
    auto compressor = make_compressor(config, gateway.get());
    auto bank = build_bank(convs, config.granularity, seg, compressor ? &*compressor : nullptr);
    bank.save(args.out);
    if (config.retriever == RetrieverKind::dense)
      embed_bank(bank, *gateway).save(fs::path(args.out) / "embeddings");
    io.out << "bank granularity=" << to_string(bank.granularity()) << " units=" << bank.n_units()
           << " avg_len=" << fmt4(bank.avg_len()) << " -> " << args.out << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_answer(const RunConfig& config, const AnswerArgs& args, CommandIO io) {
  if (!require_file(args.input, "input", io) || !require_file(args.qa, "qa", io) ||
      !require_out(args.out, io))
    return kExitUsage;

  std::vector<Conversation> convs;
  std::vector<QaItem> items;
  std::unique_ptr<Gateway> gateway;
  MemoryBank bank;
  std::optional<EmbeddingMatrix> embeddings;
  try {
    convs = load_conversations(args.input);
    items = load_qa_items(args.qa);
    gateway = make_gateway(config);
    if (config.context_mode == ContextMode::retrieved) {
      if (!args.bank.empty()) {
        bank = MemoryBank::load(args.bank);
        if (config.retriever == RetrieverKind::dense && fs::exists(fs::path(args.bank) / "embeddings.json"))
          embeddings = EmbeddingMatrix::load(fs::path(args.bank) / "embeddings");
      } else {
        SessionSegmenter seg;
        std::shared_ptr<SegmentIndex> index;
        if (config.granularity == Granularity::segment)
          seg = session_segmenter(config, args.segments, gateway.get(), index);
        auto compressor = make_compressor(config, gateway.get());
        bank = build_bank(convs, config.granularity, seg, compressor ? &*compressor : nullptr);
      }
      if (config.retriever == RetrieverKind::dense && !embeddings)
        embeddings = embed_bank(bank, *gateway);
    }
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::map<std::string, const Conversation*> by_id;
  for (const auto& c : convs) by_id[c.conversation_id] = &c;

  // Per-conversation banks (and aligned embedding rows).
  struct ConvIndex {
    MemoryBank bank;
    EmbeddingMatrix embeddings;
  };
  std::map<std::string, ConvIndex> conv_index;
  if (config.context_mode == ContextMode::retrieved) {
    std::map<std::string, std::size_t> row_of;
    if (embeddings)
      for (std::size_t i = 0; i < embeddings->count(); ++i) row_of[embeddings->unit_ids[i]] = i;
    for (const auto& c : convs) {
      ConvIndex ci{bank.for_conversation(c.conversation_id), {}};
      if (embeddings) {
        ci.embeddings.dim = embeddings->dim;
        for (const auto& u : ci.bank.units()) {
          auto it = row_of.find(u.unit_id);
          if (it == row_of.end()) {
            io.err << "error: no embedding for unit " << u.unit_id << "\n";
            return kExitUsage;
          }
          ci.embeddings.unit_ids.push_back(u.unit_id);
          const float* r = embeddings->row(it->second);
          ci.embeddings.data.insert(ci.embeddings.data.end(), r, r + embeddings->dim);
        }
      }
      conv_index.emplace(c.conversation_id, std::move(ci));
    }
  }

  std::vector<json> rows(items.size());
  std::vector<std::string> failures(items.size());
  parallel_for(items.size(), config.concurrency, [&](std::size_t i) {
    const auto& item = items[i];
    json row = {{"conversation_id", item.conversation_id},
                {"question", item.question},
                {"context_mode", to_string(config.context_mode)}};
    try {
      auto conv_it = by_id.find(item.conversation_id);
      if (conv_it == by_id.end())
        throw std::runtime_error("unknown conversation '" + item.conversation_id + "'");
      std::vector<MemoryUnit> selected;
      if (config.context_mode == ContextMode::retrieved) {
        const auto& ci = conv_index.at(item.conversation_id);
        Retriever retriever;
        if (config.retriever == RetrieverKind::bm25) {
          retriever = [&](const std::string& q, const MemoryBank& b, std::size_t k) {
            return bm25_search(q, b, k, config.bm25);
          };
        } else {
          retriever = [&](const std::string& q, const MemoryBank& b, std::size_t k) {
            return dense_search(q, b, k, ci.embeddings, *gateway);
          };
        }
        selected = retrieve_budgeted(item.question, ci.bank, retriever, config.budget);
      }
      auto context = assemble_context(selected, config.context_mode, conv_it->second,
                                      config.context_uses_index_text);
      auto prompt = generation_prompt(context, item.question);
      std::vector<std::string> ids;
      for (const auto& u : selected) ids.push_back(u.unit_id);
      row["context_unit_ids"] = ids;
      row["retrieved"] = retrieved_json(selected);
      row["context"] = context;
      auto answer = gateway->complete(
          ChatRequest::user(config.models.generator, prompt, config.generation_max_tokens));
      row["answer"] = answer;
      row["token_counts"] = {{"context", token_count(context)},
                             {"prompt", token_count(prompt)},
                             {"answer", token_count(answer)}};
    } catch (const std::exception& e) {
      failures[i] = e.what();
      row["answer"] = "";
      row["error"] = e.what();
    }
    rows[i] = std::move(row);
  });

  try {
    write_jsonl(args.out, rows);
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::size_t failed = 0;
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (failures[i].empty()) continue;
    ++failed;
    io.err << "item " << i << " failed: " << failures[i] << "\n";
  }
  io.out << "answered " << (items.size() - failed) << " of " << items.size() << " items -> "
         << args.out << "\n";
  return failed ? kExitPartial : kExitOk;
}

int cmd_eval_seg(const RunConfig& config, const EvalSegArgs& args, CommandIO io) {
  if (!require_file(args.gold, "gold", io) || !require_file(args.pred, "prediction", io) ||
      !require_out(args.out, io))
    return kExitUsage;
  try {
    auto gold = load_seg_gold(args.gold);
    std::map<std::string, json> pred;
    for (auto& row : read_jsonl(args.pred)) pred[row.at("dialogue_id").get<std::string>()] = row;

    std::vector<std::string> missing;
    for (const auto& g : gold)
      if (!pred.count(g.dialogue_id)) missing.push_back(g.dialogue_id);
    if (!missing.empty()) {
      io.err << "error: predictions missing for " << missing.size() << " dialogue(s):";
      for (const auto& id : missing) io.err << " " << id;
      io.err << "\n";
      return kExitUsage;
    }

    json per_item = json::array();
    double pk_sum = 0, wd_sum = 0, f1_sum = 0, p_sum = 0, r_sum = 0;
    for (const auto& g : gold) {
      const auto& row = pred[g.dialogue_id];
      std::vector<SegmentSpan> spans;
      for (const auto& s : row.at("spans")) spans.push_back(span_from_json(s));
      Segmentation hyp(std::move(spans), row.at("n_turns").get<std::size_t>());
      auto ref = Segmentation::from_ends(g.gold_boundaries, g.session.size());
      if (hyp.n_turns() != ref.n_turns())
        throw std::runtime_error("dialogue " + g.dialogue_id + ": prediction covers " +
                                 std::to_string(hyp.n_turns()) + " turns, gold " +
                                 std::to_string(ref.n_turns()));
      auto m = evaluate_segmentation(ref, hyp);
      per_item.push_back({{"dialogue_id", g.dialogue_id},
                          {"pk", m.pk},
                          {"wd", m.wd},
                          {"f1", m.f1},
                          {"precision", m.precision},
                          {"recall", m.recall},
                          {"score", m.score}});
      pk_sum += m.pk;
      wd_sum += m.wd;
      f1_sum += m.f1;
      p_sum += m.precision;
      r_sum += m.recall;
    }
    const double n = gold.empty() ? 1.0 : static_cast<double>(gold.size());
    json agg = {{"n", gold.size()},
                {"pk", pk_sum / n},
                {"wd", wd_sum / n},
                {"f1", f1_sum / n},
                {"precision", p_sum / n},
                {"recall", r_sum / n}};
    agg["score"] = gold.empty() ? 0.0 : segment_score(pk_sum / n, wd_sum / n, f1_sum / n);
    json report = {{"kind", "eval-seg"},
                   {"config", config.to_json()},
                   {"inputs", {{"gold", input_digest(args.gold)}, {"pred", input_digest(args.pred)}}},
                   {"per_item", std::move(per_item)},
                   {"aggregate", std::move(agg)}};
    emit_report(report, args.out, io);
    return kExitOk;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int cmd_eval_qa(const RunConfig& config, const EvalQaArgs& args, CommandIO io) {
  if (!require_file(args.answers, "answers", io) || !require_file(args.qa, "qa", io) ||
      !require_out(args.out, io))
    return kExitUsage;
  if (!args.compare.empty() && !require_file(args.compare, "compare", io)) return kExitUsage;

  std::vector<json> answers, compare;
  std::vector<QaItem> items;
  std::unique_ptr<Gateway> judge;
  try {
    answers = read_jsonl(args.answers);
    items = load_qa_items(args.qa);
    if (!args.compare.empty()) compare = read_jsonl(args.compare);
    if (answers.size() != items.size() || (!compare.empty() && compare.size() != items.size())) {
      io.err << "error: answers (" << answers.size() << ") and qa items (" << items.size()
             << ") are not aligned\n";
      return kExitUsage;
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (answers[i].value("question", "") != items[i].question ||
          answers[i].value("conversation_id", "") != items[i].conversation_id) {
        io.err << "error: answer " << i << " does not match qa item " << i << "\n";
        return kExitUsage;
      }
    }
    if (config.judge_enabled) judge = make_gateway(config);
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  JudgeConfig judge_cfg{config.models.judge, 512};

  std::vector<json> per(items.size());
  std::vector<std::string> judge_errors(items.size());
  parallel_for(items.size(), config.concurrency, [&](std::size_t i) {
    const auto& a = answers[i];
    const auto& item = items[i];
    const std::string answer = a.value("answer", "");
    json row = {{"index", i},
                {"conversation_id", item.conversation_id},
                {"bleu", bleu(answer, item.reference_answer)},
                {"rouge1", prf_json(rouge(answer, item.reference_answer, RougeVariant::rouge1))},
                {"rouge2", prf_json(rouge(answer, item.reference_answer, RougeVariant::rouge2))},
                {"rougeL", prf_json(rouge(answer, item.reference_answer, RougeVariant::rougeL))}};
    if (item.evidence && a.contains("retrieved")) {
      std::vector<RetrievedSpan> spans;
      for (const auto& r : a["retrieved"])
        spans.push_back({r.at("session_index").get<std::size_t>(),
                         r.at("turn_range").at(0).get<std::size_t>(),
                         r.at("turn_range").at(1).get<std::size_t>()});
      row["dcg"] = dcg(expand_turns(spans), assign_relevance(*item.evidence));
      row["recall"] = recall_at(spans, *item.evidence);
    }
    if (judge) {
      const std::string history = a.value("context", "");
      try {
        auto v = gpt4score(*judge, history, item.question, answer, judge_cfg);
        row["gpt4score"] = *v.rating;
        if (v.clamped) row["gpt4score_clamped"] = true;
        if (!compare.empty()) {
          auto pv = pairwise(*judge, history, item.question, answer,
                             compare[i].value("answer", ""), judge_cfg);
          row["pairwise"] = to_string(*pv.choice);
        }
      } catch (const std::exception& e) {
        judge_errors[i] = e.what();
        row["judge_error"] = e.what();
      }
    }
    per[i] = std::move(row);
  });

  const double n = items.empty() ? 1.0 : static_cast<double>(items.size());
  double bleu_sum = 0, r1 = 0, r2 = 0, rl = 0, dcg_sum = 0, rec_sum = 0, judge_sum = 0;
  std::size_t with_ev = 0, judged = 0;
  std::map<std::string, std::size_t> wins{{"A", 0}, {"B", 0}, {"NONE", 0}};
  for (const auto& row : per) {
    bleu_sum += row["bleu"].get<double>();
    r1 += row["rouge1"]["f1"].get<double>();
    r2 += row["rouge2"]["f1"].get<double>();
    rl += row["rougeL"]["f1"].get<double>();
    if (row.contains("dcg")) {
      ++with_ev;
      dcg_sum += row["dcg"].get<double>();
      rec_sum += row["recall"].get<double>();
    }
    if (row.contains("gpt4score")) {
      ++judged;
      judge_sum += row["gpt4score"].get<double>();
    }
    if (row.contains("pairwise")) ++wins[row["pairwise"].get<std::string>()];
  }
  json agg = {{"n", items.size()},
              {"bleu", bleu_sum / n},
              {"rouge1_f1", r1 / n},
              {"rouge2_f1", r2 / n},
              {"rougeL_f1", rl / n}};
  if (with_ev) {
    agg["dcg"] = dcg_sum / static_cast<double>(with_ev);
    agg["recall"] = rec_sum / static_cast<double>(with_ev);
    agg["n_with_evidence"] = with_ev;
  }
  std::size_t judge_failed = 0;
  for (const auto& e : judge_errors) judge_failed += e.empty() ? 0 : 1;
  if (judge) {
    agg["gpt4score"] = judged ? judge_sum / static_cast<double>(judged) : 0.0;
    agg["gpt4score_n"] = judged;
    agg["judge_errors"] = judge_failed;
    if (!compare.empty()) agg["pairwise"] = wins;
  }

  json inputs = {{"answers", input_digest(args.answers)}, {"qa", input_digest(args.qa)}};
  if (!args.compare.empty()) inputs["compare"] = input_digest(args.compare);
  json report = {{"kind", "eval-qa"},
                 {"config", config.to_json()},
                 {"inputs", std::move(inputs)},
                 {"per_item", per},
                 {"aggregate", std::move(agg)}};
  try {
    emit_report(report, args.out, io);
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  for (std::size_t i = 0; i < judge_errors.size(); ++i)
    if (!judge_errors[i].empty()) io.err << "item " << i << " judge error: " << judge_errors[i] << "\n";
  return judge_failed ? kExitPartial : kExitOk;
}

int cmd_report(const RunConfig&, const ReportArgs& args, CommandIO io) {
  if (args.inputs.empty()) {
    io.err << "error: report needs at least one report file\n";
    return kExitUsage;
  }
  json combined = {{"kind", "combined"}, {"reports", json::array()}};
  for (const auto& path : args.inputs) {
    if (!require_file(path, "report", io)) return kExitUsage;
    try {
      std::ifstream in(path);
      auto report = json::parse(in);
      io.out << render_report_table(report) << "\n";
      combined["reports"].push_back({{"file", fs::path(path).filename().string()},
                                     {"sha256", file_sha256_hex(path)},
                                     {"kind", report.value("kind", "")},
                                     {"aggregate", report.value("aggregate", json::object())}});
    } catch (const std::exception& e) {
      io.err << "error: " << path << ": " << e.what() << "\n";
      return kExitUsage;
    }
  }
  if (!args.out.empty()) {
    write_text(args.out, combined.dump(2) + "\n");
    io.out << "combined report: " << args.out << " sha256=" << file_sha256_hex(args.out) << "\n";
  }
  return kExitOk;
}

}  // namespace segmem
