#include "segmem/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <set>
#include <stdexcept>

#include "segmem/error.hpp"
#include "segmem/modelgate.hpp"

namespace segmem {

// ---------------------------------------------------------------------------
// Segmentation metrics

namespace {

void require_same_length(const Segmentation& ref, const Segmentation& hyp) {
  if (ref.n_turns() != hyp.n_turns())
    throw std::invalid_argument("segmentations cover different turn counts (" +
                                std::to_string(ref.n_turns()) + " vs " +
                                std::to_string(hyp.n_turns()) + ")");
}

std::size_t resolve_window(const Segmentation& ref, std::optional<std::size_t> k) {
  std::size_t w = k.value_or(default_window(ref));
  if (w == 0) throw std::invalid_argument("window size must be positive");
  if (ref.n_turns() <= w)
    throw MetricUndefined("window " + std::to_string(w) + " does not fit in " +
                          std::to_string(ref.n_turns()) + " turns");
  return w;
}

// prefix[i] = number of boundaries after turns 0..i-1.
std::vector<std::size_t> boundary_prefix(const Segmentation& seg) {
  std::vector<std::size_t> marks(seg.n_turns(), 0);
  for (auto b : seg.boundaries()) marks[b] = 1;
  std::vector<std::size_t> prefix(seg.n_turns() + 1, 0);
  for (std::size_t i = 0; i < marks.size(); ++i) prefix[i + 1] = prefix[i] + marks[i];
  return prefix;
}

}  // namespace

std::size_t default_window(const Segmentation& ref) {
  if (ref.size() == 0) return 1;
  double half_mean = static_cast<double>(ref.n_turns()) / (2.0 * static_cast<double>(ref.size()));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(half_mean)));
}

double pk(const Segmentation& ref, const Segmentation& hyp, std::optional<std::size_t> k) {
  require_same_length(ref, hyp);
  const std::size_t w = resolve_window(ref, k);
  const auto rl = ref.labels();
  const auto hl = hyp.labels();
  const std::size_t windows = ref.n_turns() - w;
  std::size_t miss = 0;
  for (std::size_t i = 0; i < windows; ++i) {
    bool same_ref = rl[i] == rl[i + w];
    bool same_hyp = hl[i] == hl[i + w];
    if (same_ref != same_hyp) ++miss;
  }
  return static_cast<double>(miss) / static_cast<double>(windows);
}

double window_diff(const Segmentation& ref, const Segmentation& hyp, std::optional<std::size_t> k) {
  require_same_length(ref, hyp);
  const std::size_t w = resolve_window(ref, k);
  const auto rp = boundary_prefix(ref);
  const auto hp = boundary_prefix(hyp);
  const std::size_t windows = ref.n_turns() - w;
  std::size_t miss = 0;
  for (std::size_t i = 0; i < windows; ++i) {
    if (rp[i + w] - rp[i] != hp[i + w] - hp[i]) ++miss;
  }
  return static_cast<double>(miss) / static_cast<double>(windows);
}

PRF boundary_f1(const Segmentation& ref, const Segmentation& hyp) {
  require_same_length(ref, hyp);
  auto rb = ref.boundaries();
  auto hb = hyp.boundaries();
  if (rb.empty() && hb.empty()) return {1.0, 1.0, 1.0};
  std::set<std::size_t> rs(rb.begin(), rb.end());
  std::size_t matched = 0;
  for (auto b : hb) matched += rs.count(b);
  PRF out;
  out.precision = hb.empty() ? 0.0 : double(matched) / double(hb.size());
  out.recall = rb.empty() ? 0.0 : double(matched) / double(rb.size());
  double denom = out.precision + out.recall;
  out.f1 = denom > 0 ? 2 * out.precision * out.recall / denom : 0.0;
  return out;
}

double segment_score(double pk_value, double wd_value, double f1_value) {
  for (double x : {pk_value, wd_value, f1_value})
    if (!(x >= 0.0 && x <= 1.0))
      throw std::invalid_argument("segment_score inputs must lie in [0, 1]");
  return (2.0 * f1_value + (1.0 - pk_value) + (1.0 - wd_value)) / 4.0;
}

SegMetrics evaluate_segmentation(const Segmentation& ref, const Segmentation& hyp) {
  SegMetrics m;
  try {
    m.pk = pk(ref, hyp);
    m.wd = window_diff(ref, hyp);
  } catch (const MetricUndefined&) {
    m.pk = m.wd = ref == hyp ? 0.0 : 1.0;
  }
  auto prf = boundary_f1(ref, hyp);
  m.precision = prf.precision;
  m.recall = prf.recall;
  m.f1 = prf.f1;
  m.score = segment_score(m.pk, m.wd, m.f1);
  return m;
}

// ---------------------------------------------------------------------------
// Retrieval metrics

RelevanceAssignment assign_relevance(const std::vector<TurnRef>& evidence) {
  std::set<TurnRef> gold(evidence.begin(), evidence.end());
  RelevanceAssignment rel;
  if (gold.empty()) return rel;
  const double each = 1.0 / static_cast<double>(gold.size());
  for (const auto& t : gold) rel[t] = each;
  return rel;
}

double dcg(const std::vector<TurnRef>& retrieved, const RelevanceAssignment& rel) {
  double total = 0.0;
  for (std::size_t i = 0; i < retrieved.size(); ++i) {
    auto it = rel.find(retrieved[i]);
    if (it == rel.end() || it->second == 0.0) continue;
    total += it->second / std::log2(static_cast<double>(i + 2));
  }
  return total;
}

std::vector<TurnRef> expand_turns(const std::vector<RetrievedSpan>& units) {
  std::vector<TurnRef> out;
  for (const auto& u : units)
    for (std::size_t t = u.turn_start; t <= u.turn_end; ++t) out.push_back({u.session_index, t});
  return out;
}

double recall_at(const std::vector<RetrievedSpan>& retrieved,
                 const std::vector<TurnRef>& evidence) {
  std::set<TurnRef> gold(evidence.begin(), evidence.end());
  if (gold.empty()) return 1.0;
  std::size_t covered = 0;
  for (const auto& g : gold) {
    for (const auto& u : retrieved) {
      if (u.session_index == g.session_index && u.turn_start <= g.turn_index &&
          g.turn_index <= u.turn_end) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(gold.size());
}

// ---------------------------------------------------------------------------
// BLEU / ROUGE

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const TokenSeq& toks, std::size_t n) {
  NgramCounts out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                   toks.begin() + static_cast<long>(i + n))];
  return out;
}

std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

std::size_t total(const NgramCounts& c) {
  std::size_t t = 0;
  for (const auto& [g, n] : c) t += n;
  return t;
}

PRF prf(double overlap, double cand_total, double ref_total) {
  PRF out;
  out.precision = cand_total > 0 ? overlap / cand_total : 0.0;
  out.recall = ref_total > 0 ? overlap / ref_total : 0.0;
  double d = out.precision + out.recall;
  out.f1 = d > 0 ? 2 * out.precision * out.recall / d : 0.0;
  return out;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu(const std::string& candidate, const std::string& reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto cg = ngrams(cand, n);
    double matched = static_cast<double>(clipped_overlap(cg, ngrams(ref, n)));
    double count = static_cast<double>(total(cg));
    double p = matched > 0 ? matched / count : 1.0 / (count + 1.0);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

PRF rouge(const std::string& candidate, const std::string& reference, RougeVariant variant) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (variant == RougeVariant::rougeL)
    return prf(static_cast<double>(lcs_length(cand, ref)), static_cast<double>(cand.size()),
               static_cast<double>(ref.size()));
  const std::size_t n = variant == RougeVariant::rouge1 ? 1 : 2;
  auto cg = ngrams(cand, n);
  auto rg = ngrams(ref, n);
  return prf(static_cast<double>(clipped_overlap(cg, rg)), static_cast<double>(total(cg)),
             static_cast<double>(total(rg)));
}

// ---------------------------------------------------------------------------
// Judges

std::string to_string(JudgeVerdict::Choice c) {
  switch (c) {
    case JudgeVerdict::Choice::A: return "A";
    case JudgeVerdict::Choice::B: return "B";
    case JudgeVerdict::Choice::NONE: return "NONE";
  }
  return "NONE";
}

std::optional<int> parse_rating(const std::string& out) {
  static const std::regex kRating(R"(<rating>\s*(-?\d+(?:\.\d+)?)\s*</rating>)");
  std::optional<int> found;
  for (auto it = std::sregex_iterator(out.begin(), out.end(), kRating); it != std::sregex_iterator();
       ++it) {
    found = static_cast<int>(std::lround(std::stod((*it)[1].str())));
  }
  return found;
}

std::optional<JudgeVerdict::Choice> parse_choice(const std::string& out) {
  static const std::regex kChosen(R"(<chosen>\s*([A-Za-z]+)[^<]*</chosen>)");
  std::optional<JudgeVerdict::Choice> found;
  for (auto it = std::sregex_iterator(out.begin(), out.end(), kChosen); it != std::sregex_iterator();
       ++it) {
    std::string v = (*it)[1].str();
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::toupper(c); });
    if (v == "A") found = JudgeVerdict::Choice::A;
    else if (v == "B") found = JudgeVerdict::Choice::B;
    else if (v == "NONE") found = JudgeVerdict::Choice::NONE;
  }
  return found;
}

namespace {

// One judge exchange with a single follow-up when the reply lacks the tag.
template <typename T, typename Parse>
T ask_judge(Gateway& judge, const std::string& prompt, const JudgeConfig& config,
            const std::string& reminder, Parse parse, std::vector<std::string>& raw) {
  auto req = ChatRequest::user(config.model, prompt, config.max_tokens);
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = judge.complete(req);
    raw.push_back(reply);
    if (auto v = parse(reply)) return *v;
    req.messages.push_back({"assistant", reply});
    req.messages.push_back({"user", reminder});
  }
  throw FormatError("judge reply could not be parsed after 2 attempts");
}

}  // namespace

JudgeVerdict gpt4score(Gateway& judge, const std::string& history, const std::string& question,
                       const std::string& response, const JudgeConfig& config) {
  JudgeVerdict v;
  int rating = ask_judge<int>(judge, single_score_prompt(history, question, response), config,
                              "Give your final answer strictly as <rating>N</rating> with N an "
                              "integer from 1 to 100.",
                              parse_rating, v.raw);
  int clamped = std::clamp(rating, 1, 100);
  v.clamped = clamped != rating;
  v.rating = clamped;
  return v;
}

JudgeVerdict pairwise(Gateway& judge, const std::string& history, const std::string& question,
                      const std::string& response_a, const std::string& response_b,
                      const JudgeConfig& config) {
  using Choice = JudgeVerdict::Choice;
  static const std::string kReminder =
      "Give your final answer strictly as <chosen>A</chosen>, <chosen>B</chosen> or "
      "<chosen>NONE</chosen>.";
  JudgeVerdict v;
  Choice first = ask_judge<Choice>(judge, pairwise_prompt(history, question, response_a, response_b),
                                   config, kReminder, parse_choice, v.raw);
  Choice swapped = ask_judge<Choice>(
      judge, pairwise_prompt(history, question, response_b, response_a), config, kReminder,
      parse_choice, v.raw);
  Choice second = swapped == Choice::A ? Choice::B : swapped == Choice::B ? Choice::A : Choice::NONE;
  v.choice = first == second ? first : Choice::NONE;
  return v;
}

}  // namespace segmem
