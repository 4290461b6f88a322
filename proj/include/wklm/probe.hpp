#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wklm/checkpoint.hpp"
#include "wklm/kb.hpp"

namespace wklm {

inline constexpr const char* kSubjectSlot = "[SUBJ]";
inline constexpr const char* kObjectSlot = "[OBJ]";

struct Template {
  RelationId relation;
  std::string pattern;  // contains [SUBJ] and [OBJ] exactly once each
};

// Throws DataError when a placeholder is missing or repeated.
Template make_template(RelationId relation, std::string pattern);
// JSON object mapping relation id to pattern.
std::map<RelationId, Template> parse_templates(std::istream& in, const std::string& source);
std::map<RelationId, Template> load_templates(const std::filesystem::path& path);

// Pattern with the subject filled in and [OBJ] left in place.
std::string render_query(const Template& tmpl, const std::string& subject_surface);

struct ClozeQuery {
  RelationId relation;
  EntityId subject;
  EntityId target;                  // the answer this query is evaluated on
  std::string text;                 // rendered, [OBJ] unfilled
  std::vector<EntityId> gold;       // every object of (subject, relation), sorted
  std::vector<EntityId> candidates; // every object of the relation, sorted
};

// Per relation (all relations in the triples, ascending id, unless
// `relations` is given): subjects ordered by how many triples they are the
// subject of, over all relations (ties by id); their triples are taken in
// file order until per_relation queries exist. One query per triple taken.
// Throws DataError naming every relation without a template.
std::vector<ClozeQuery> build_benchmark(const std::vector<Triple>& triples,
                                        const std::map<RelationId, Template>& templates,
                                        const KnowledgeStore& store, std::size_t per_relation = 1000,
                                        std::vector<RelationId> relations = {});

void write_benchmark(const std::vector<ClozeQuery>& queries, std::ostream& out);
std::vector<ClozeQuery> read_benchmark(std::istream& in, const std::string& source);

// Query text split around the object slot.
struct QueryFrame {
  std::vector<std::string> prefix;
  std::vector<std::string> suffix;
};
QueryFrame frame_query(const std::string& text);

// Masked-LM scoring backend: log P(targets[i] at positions[i] | tokens).
class MaskedLmBackend {
 public:
  virtual ~MaskedLmBackend() = default;
  virtual std::vector<double> log_probs(std::span<const std::string> tokens,
                                        std::span<const std::size_t> positions,
                                        std::span<const std::string> targets) const = 0;
  // Longest token sequence the backend accepts.
  virtual std::size_t max_tokens() const { return static_cast<std::size_t>(-1); }
};

// Left-to-right backend: log P(token | prefix).
class LeftToRightBackend {
 public:
  virtual ~LeftToRightBackend() = default;
  virtual double next_token_log_prob(std::span<const std::string> prefix, const std::string& token) const = 0;
};

// Context-free table: the i-th mask uses distributions[min(i, last)].
// Tokens missing from the vocabulary score as "[UNK]" when it is listed,
// otherwise as -inf.
class TableMaskedLm : public MaskedLmBackend {
 public:
  TableMaskedLm(std::vector<std::string> vocab, std::vector<std::vector<double>> distributions);
  static TableMaskedLm uniform(std::vector<std::string> vocab);

  std::vector<double> log_probs(std::span<const std::string> tokens, std::span<const std::size_t> positions,
                                std::span<const std::string> targets) const override;

 private:
  std::vector<std::string> vocab_;
  std::vector<std::vector<double>> distributions_;
};

// Next-token table keyed by the space-joined prefix, falling back to a
// default distribution. Unknown tokens score as "[UNK]".
class TableLeftToRight : public LeftToRightBackend {
 public:
  using Distribution = std::map<std::string, double>;
  TableLeftToRight(Distribution fallback, std::map<std::string, Distribution> by_prefix = {});

  double next_token_log_prob(std::span<const std::string> prefix, const std::string& token) const override;

 private:
  Distribution fallback_;
  std::map<std::string, Distribution> by_prefix_;
};

// The trained model's MLM head.
class ModelMaskedLm : public MaskedLmBackend {
 public:
  explicit ModelMaskedLm(const Model& model) : model_(model) {}
  std::vector<double> log_probs(std::span<const std::string> tokens, std::span<const std::size_t> positions,
                                std::span<const std::string> targets) const override;
  std::size_t max_tokens() const override;

 private:
  const Model& model_;
};

// Left-to-right scoring with the MLM head: the prefix followed by one mask.
class ModelLeftToRight : public LeftToRightBackend {
 public:
  explicit ModelLeftToRight(const Model& model) : model_(model) {}
  double next_token_log_prob(std::span<const std::string> prefix, const std::string& token) const override;

 private:
  const Model& model_;
};

// Mean log probability of the candidate's tokens with one mask per token in
// the object slot. -inf when the filled query exceeds the backend's budget.
double score_masked_avg(const MaskedLmBackend& backend, const std::string& query_text,
                        const std::vector<std::string>& candidate_tokens);
// Log probability of the candidate's first token after the text before [OBJ].
double score_first_token(const LeftToRightBackend& backend, const std::string& query_text,
                         const std::vector<std::string>& candidate_tokens);
// Replacement head probability that the candidate, placed in the object
// slot, is an original mention. -inf when the framed sequence is too long.
double score_replacement(const Model& model, const std::string& query_text,
                         const std::vector<std::string>& candidate_tokens);

struct ScoredCandidate {
  EntityId entity;
  double score;
};

struct RankingResult {
  std::size_t query = 0;  // index into the query list
  EntityId target;
  std::vector<ScoredCandidate> ranked;  // score descending, ties by id
  std::size_t rank = 0;                 // 1-based, pessimistic, filtered if requested
};

// 1 + number of competitors scoring at least as high as the target. With
// `filtered`, other gold answers are not competitors. NaN counts as -inf.
std::size_t target_rank(const std::vector<ScoredCandidate>& scored, const EntityId& target,
                        const std::vector<EntityId>& gold, bool filtered);

using CandidateScorer = std::function<double(const ClozeQuery&, const EntityId& candidate)>;

// The scorer must be safe to call concurrently.
std::vector<RankingResult> rank_queries(const std::vector<ClozeQuery>& queries, const CandidateScorer& scorer,
                                        bool filtered = true, std::size_t workers = 1);

struct RelationReport {
  RelationId relation;
  std::size_t n_candidates = 0;
  double avg_answers = 0.0;
  double hits_at_k = 0.0;
  std::size_t n_queries = 0;

  bool operator==(const RelationReport&) const = default;
};

// One row per relation in order of first appearance.
std::vector<RelationReport> summarize(const std::vector<ClozeQuery>& queries,
                                      const std::vector<RankingResult>& rankings, std::size_t k);
std::vector<RelationReport> rank_and_hits(const std::vector<ClozeQuery>& queries, const CandidateScorer& scorer,
                                          std::size_t k = 10, bool filtered = true, std::size_t workers = 1);

// Unweighted mean of hits_at_k over relations; 0 for no relations.
double macro_average(const std::vector<RelationReport>& reports);

// TSV columns relation, n_candidates, avg_answers, hits_at_k, then an
// "average" row holding the column means.
void write_report(const std::vector<RelationReport>& reports, std::ostream& out);
void emit_report(const std::vector<RelationReport>& reports, const std::filesystem::path& path);
// Reads the relation rows back; the average row is skipped.
std::vector<RelationReport> parse_report(std::istream& in, const std::string& source);
// Fixed-width table with Hits@k in percent.
std::string render_table(const std::vector<RelationReport>& reports, std::size_t k);

}  // namespace wklm
