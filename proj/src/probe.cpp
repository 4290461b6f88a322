#include "wklm/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "wklm/error.hpp"
#include "wklm/parallel.hpp"
#include "wklm/text.hpp"

namespace wklm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

double rank_key(double score) { return std::isnan(score) ? kNegInf : score; }

double log_or_neg_inf(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

Template make_template(RelationId relation, std::string pattern) {
  if (count_occurrences(pattern, kSubjectSlot) != 1 || count_occurrences(pattern, kObjectSlot) != 1)
    throw DataError("template for " + relation + " must contain [SUBJ] and [OBJ] exactly once");
  return {std::move(relation), std::move(pattern)};
}

std::map<RelationId, Template> parse_templates(std::istream& in, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(source + ": templates must be a JSON object");
  std::map<RelationId, Template> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string()) throw DataError(source + ": template for " + it.key() + " is not a string");
    out.emplace(it.key(), make_template(it.key(), it.value().get<std::string>()));
  }
  return out;
}

std::map<RelationId, Template> load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_templates(in, path.string());
}

std::string render_query(const Template& tmpl, const std::string& subject_surface) {
  std::string out = tmpl.pattern;
  out.replace(out.find(kSubjectSlot), std::string(kSubjectSlot).size(), subject_surface);
  return out;
}

std::vector<ClozeQuery> build_benchmark(const std::vector<Triple>& triples,
                                        const std::map<RelationId, Template>& templates,
                                        const KnowledgeStore& store, std::size_t per_relation,
                                        std::vector<RelationId> relations) {
  if (relations.empty()) {
    for (const auto& t : triples) relations.push_back(t.relation);
  }
  std::sort(relations.begin(), relations.end());
  relations.erase(std::unique(relations.begin(), relations.end()), relations.end());

  std::vector<RelationId> missing;
  for (const auto& r : relations)
    if (!templates.count(r)) missing.push_back(r);
  if (!missing.empty()) throw DataError("relations without a template: " + join(missing, ", "));

  std::map<EntityId, std::size_t> frequency;
  for (const auto& t : triples) ++frequency[t.subject];

  std::vector<ClozeQuery> queries;
  for (const auto& relation : relations) {
    const auto candidates = object_candidates(triples, relation);
    std::map<EntityId, std::vector<EntityId>> objects_by_subject;  // file order, deduplicated
    for (const auto& t : triples) {
      if (t.relation != relation) continue;
      auto& objs = objects_by_subject[t.subject];
      if (std::find(objs.begin(), objs.end(), t.object) == objs.end()) objs.push_back(t.object);
    }
    std::vector<EntityId> subjects;
    for (const auto& [s, _] : objects_by_subject) subjects.push_back(s);
    std::stable_sort(subjects.begin(), subjects.end(), [&](const EntityId& a, const EntityId& b) {
      return frequency[a] > frequency[b];
    });

    const auto& tmpl = templates.at(relation);
    std::size_t taken = 0;
    for (const auto& s : subjects) {
      if (taken == per_relation) break;
      const auto& objs = objects_by_subject[s];
      std::vector<EntityId> gold = objs;
      std::sort(gold.begin(), gold.end());
      const auto text = render_query(tmpl, store.get(s).name);
      for (const auto& o : objs) {
        if (taken == per_relation) break;
        queries.push_back({relation, s, o, text, gold, candidates});
        ++taken;
      }
    }
  }
  return queries;
}

void write_benchmark(const std::vector<ClozeQuery>& queries, std::ostream& out) {
  for (const auto& q : queries) {
    nlohmann::ordered_json j;
    j["relation"] = q.relation;
    j["subject"] = q.subject;
    j["target"] = q.target;
    j["text"] = q.text;
    j["gold"] = q.gold;
    j["candidates"] = q.candidates;
    out << j.dump() << '\n';
  }
}

std::vector<ClozeQuery> read_benchmark(std::istream& in, const std::string& source) {
  std::vector<ClozeQuery> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ClozeQuery q{j.at("relation").get<std::string>(), j.at("subject").get<std::string>(),
                   j.at("target").get<std::string>(),   j.at("text").get<std::string>(),
                   j.at("gold").get<std::vector<std::string>>(),
                   j.at("candidates").get<std::vector<std::string>>()};
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return out;
}

QueryFrame frame_query(const std::string& text) {
  const auto pos = text.find(kObjectSlot);
  if (pos == std::string::npos) throw std::invalid_argument("query has no [OBJ] slot: " + text);
  return {tokenize(std::string_view(text).substr(0, pos)),
          tokenize(std::string_view(text).substr(pos + std::string(kObjectSlot).size()))};
}

TableMaskedLm::TableMaskedLm(std::vector<std::string> vocab, std::vector<std::vector<double>> distributions)
    : vocab_(std::move(vocab)), distributions_(std::move(distributions)) {
  if (distributions_.empty()) throw std::invalid_argument("TableMaskedLm: no distributions");
  for (const auto& d : distributions_)
    if (d.size() != vocab_.size()) throw std::invalid_argument("TableMaskedLm: distribution size mismatch");
}

TableMaskedLm TableMaskedLm::uniform(std::vector<std::string> vocab) {
  const std::size_t n = vocab.size();
  return TableMaskedLm(std::move(vocab), {std::vector<double>(n, 1.0 / static_cast<double>(n))});
}

std::vector<double> TableMaskedLm::log_probs(std::span<const std::string>, std::span<const std::size_t> positions,
                                             std::span<const std::string> targets) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& dist = distributions_[std::min(i, distributions_.size() - 1)];
    auto it = std::find(vocab_.begin(), vocab_.end(), targets[i]);
    if (it == vocab_.end()) it = std::find(vocab_.begin(), vocab_.end(), "[UNK]");
    out.push_back(it == vocab_.end() ? kNegInf
                                     : log_or_neg_inf(dist[static_cast<std::size_t>(it - vocab_.begin())]));
  }
  return out;
}

TableLeftToRight::TableLeftToRight(Distribution fallback, std::map<std::string, Distribution> by_prefix)
    : fallback_(std::move(fallback)), by_prefix_(std::move(by_prefix)) {}

double TableLeftToRight::next_token_log_prob(std::span<const std::string> prefix, const std::string& token) const {
  const auto key = join(std::vector<std::string>(prefix.begin(), prefix.end()), " ");
  const auto found = by_prefix_.find(key);
  const auto& dist = found == by_prefix_.end() ? fallback_ : found->second;
  auto it = dist.find(token);
  if (it == dist.end()) it = dist.find("[UNK]");
  return it == dist.end() ? kNegInf : log_or_neg_inf(it->second);
}

std::size_t ModelMaskedLm::max_tokens() const { return static_cast<std::size_t>(model_.config.max_len - 2); }

std::vector<double> ModelMaskedLm::log_probs(std::span<const std::string> tokens,
                                             std::span<const std::size_t> positions,
                                             std::span<const std::string> targets) const {
  std::vector<int> ids{model_.config.bos_token};
  for (const auto& t : tokens) ids.push_back(model_.vocab.id(t));
  ids.push_back(model_.config.eos_token);
  const auto enc = encode(model_.params, model_.config, ids);
  std::vector<double> out;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Eigen::RowVectorXd z = mlm_logits(model_.params, enc.hidden, positions[i] + 1);
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    out.push_back(z(model_.vocab.id(targets[i])) - lse);
  }
  return out;
}

double ModelLeftToRight::next_token_log_prob(std::span<const std::string> prefix, const std::string& token) const {
  if (prefix.size() + 3 > static_cast<std::size_t>(model_.config.max_len)) return kNegInf;
  std::vector<std::string> tokens(prefix.begin(), prefix.end());
  tokens.emplace_back(kMaskToken);
  const std::size_t position = tokens.size() - 1;
  return ModelMaskedLm(model_).log_probs(tokens, std::span(&position, 1), std::span(&token, 1)).front();
}

double score_masked_avg(const MaskedLmBackend& backend, const std::string& query_text,
                        const std::vector<std::string>& candidate_tokens) {
  if (candidate_tokens.empty()) throw std::invalid_argument("score_masked_avg: empty candidate");
  const auto frame = frame_query(query_text);
  std::vector<std::string> tokens = frame.prefix;
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < candidate_tokens.size(); ++i) {
    positions.push_back(tokens.size());
    tokens.emplace_back(kMaskToken);
  }
  tokens.insert(tokens.end(), frame.suffix.begin(), frame.suffix.end());
  if (tokens.size() > backend.max_tokens()) return kNegInf;
  const auto lp = backend.log_probs(tokens, positions, candidate_tokens);
  double sum = 0.0;
  for (double v : lp) sum += v;
  return sum / static_cast<double>(lp.size());
}

double score_first_token(const LeftToRightBackend& backend, const std::string& query_text,
                         const std::vector<std::string>& candidate_tokens) {
  if (candidate_tokens.empty()) throw std::invalid_argument("score_first_token: empty candidate");
  const auto frame = frame_query(query_text);
  return backend.next_token_log_prob(frame.prefix, candidate_tokens.front());
}

double score_replacement(const Model& model, const std::string& query_text,
                         const std::vector<std::string>& candidate_tokens) {
  if (candidate_tokens.empty()) throw std::invalid_argument("score_replacement: empty candidate");
  const auto frame = frame_query(query_text);
  const std::size_t framed_len = frame.prefix.size() + candidate_tokens.size() + frame.suffix.size() + 2;
  if (framed_len > static_cast<std::size_t>(model.config.max_len)) return kNegInf;
  std::vector<int> ids{model.config.bos_token};
  for (const auto& t : frame.prefix) ids.push_back(model.vocab.id(t));
  const Span span{ids.size(), ids.size() + candidate_tokens.size()};
  for (const auto& t : candidate_tokens) ids.push_back(model.vocab.id(t));
  for (const auto& t : frame.suffix) ids.push_back(model.vocab.id(t));
  ids.push_back(model.config.eos_token);
  const auto enc = encode(model.params, model.config, ids);
  return replacement_prob(model.params, enc.hidden, span);
}

std::size_t target_rank(const std::vector<ScoredCandidate>& scored, const EntityId& target,
                        const std::vector<EntityId>& gold, bool filtered) {
  const auto it = std::find_if(scored.begin(), scored.end(), [&](const auto& c) { return c.entity == target; });
  if (it == scored.end()) throw std::invalid_argument("target " + target + " is not a candidate");
  const double target_score = rank_key(it->score);
  std::size_t rank = 1;
  for (const auto& c : scored) {
    if (c.entity == target) continue;
    if (filtered && std::find(gold.begin(), gold.end(), c.entity) != gold.end()) continue;
    if (rank_key(c.score) >= target_score) ++rank;
  }
  return rank;
}

std::vector<RankingResult> rank_queries(const std::vector<ClozeQuery>& queries, const CandidateScorer& scorer,
                                        bool filtered, std::size_t workers) {
  std::vector<RankingResult> out(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    const auto& q = queries[i];
    auto& r = out[i];
    r.query = i;
    r.target = q.target;
    for (const auto& c : q.candidates) r.ranked.push_back({c, scorer(q, c)});
    r.rank = target_rank(r.ranked, q.target, q.gold, filtered);
    std::stable_sort(r.ranked.begin(), r.ranked.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
      return rank_key(a.score) > rank_key(b.score);
    });
  });
  return out;
}

std::vector<RelationReport> summarize(const std::vector<ClozeQuery>& queries,
                                      const std::vector<RankingResult>& rankings, std::size_t k) {
  std::vector<RelationReport> reports;
  std::map<RelationId, std::size_t> row;
  std::vector<double> answers, hits;
  for (const auto& r : rankings) {
    const auto& q = queries.at(r.query);
    auto [it, inserted] = row.emplace(q.relation, reports.size());
    if (inserted) {
      reports.push_back({q.relation, q.candidates.size(), 0.0, 0.0, 0});
      answers.push_back(0.0);
      hits.push_back(0.0);
    }
    const auto i = it->second;
    ++reports[i].n_queries;
    answers[i] += static_cast<double>(q.gold.size());
    if (r.rank <= k) hits[i] += 1.0;
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const double n = static_cast<double>(reports[i].n_queries);
    reports[i].avg_answers = answers[i] / n;
    reports[i].hits_at_k = hits[i] / n;
  }
  return reports;
}

std::vector<RelationReport> rank_and_hits(const std::vector<ClozeQuery>& queries, const CandidateScorer& scorer,
                                          std::size_t k, bool filtered, std::size_t workers) {
  return summarize(queries, rank_queries(queries, scorer, filtered, workers), k);
}

double macro_average(const std::vector<RelationReport>& reports) {
  if (reports.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : reports) sum += r.hits_at_k;
  return sum / static_cast<double>(reports.size());
}

void write_report(const std::vector<RelationReport>& reports, std::ostream& out) {
  out << "relation\tn_candidates\tavg_answers\thits_at_k\n";
  double candidates = 0.0, answers = 0.0;
  for (const auto& r : reports) {
    out << r.relation << '\t' << r.n_candidates << '\t' << format_double(r.avg_answers) << '\t'
        << format_double(r.hits_at_k) << '\n';
    candidates += static_cast<double>(r.n_candidates);
    answers += r.avg_answers;
  }
  const double n = reports.empty() ? 1.0 : static_cast<double>(reports.size());
  out << "average\t" << format_double(candidates / n) << '\t' << format_double(answers / n) << '\t'
      << format_double(macro_average(reports)) << '\n';
}

void emit_report(const std::vector<RelationReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_report(reports, out);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<RelationReport> parse_report(std::istream& in, const std::string& source) {
  std::vector<RelationReport> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "relation\tn_candidates\tavg_answers\thits_at_k") throw ParseError(source, 1, "bad header");
      continue;
    }
    std::istringstream row(line);
    std::vector<std::string> cols;
    for (std::string c; std::getline(row, c, '\t');) cols.push_back(c);
    if (cols.size() != 4) throw ParseError(source, lineno, "expected 4 columns");
    if (cols[0] == "average") continue;
    try {
      out.push_back({cols[0], std::stoul(cols[1]), std::stod(cols[2]), std::stod(cols[3]), 0});
    } catch (const std::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return out;
}

std::string render_table(const std::vector<RelationReport>& reports, std::size_t k) {
  std::ostringstream out;
  const std::string metric = "Hits@" + std::to_string(k);
  std::size_t width = 8;
  for (const auto& r : reports) width = std::max(width, r.relation.size());
  width = std::max(width, metric.size() + 8);
  out << std::left << std::setw(static_cast<int>(width)) << "Relation" << "  " << std::right << std::setw(12)
      << "# Candidates" << "  " << std::setw(10) << "# Answers" << "  " << std::setw(8) << metric << '\n';
  out << std::fixed;
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width)) << r.relation << "  " << std::right << std::setw(12)
        << r.n_candidates << "  " << std::setw(10) << std::setprecision(1) << r.avg_answers << "  " << std::setw(8)
        << std::setprecision(2) << 100.0 * r.hits_at_k << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << ("Average " + metric) << "  " << std::right
      << std::setw(12) << "-" << "  " << std::setw(10) << "-" << "  " << std::setw(8) << std::setprecision(2)
      << 100.0 * macro_average(reports) << '\n';
  return out.str();
}

}  // namespace wklm
