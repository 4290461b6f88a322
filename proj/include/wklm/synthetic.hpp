#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wklm/kb.hpp"
#include "wklm/probe.hpp"

namespace wklm {

// Toy knowledge base with functional relations. Relation j maps every entity
// to an entity of type j (mod types); within each subject type the map is a
// bijection (a derangement when subject and object types coincide), so a
// same-type substitution of either argument always yields a false fact.
struct SyntheticKbConfig {
  std::size_t types = 5;
  std::size_t entities_per_type = 10;
  std::size_t relations = 3;
  std::uint64_t seed = 0;
};

struct SyntheticKb {
  std::vector<EntityRecord> entities;
  std::vector<Triple> triples;
  std::map<RelationId, Template> templates;
};

SyntheticKb make_synthetic_kb(const SyntheticKbConfig& config);

struct SyntheticCorpusConfig {
  std::size_t documents = 200;
  std::size_t min_facts = 2;
  std::size_t max_facts = 4;
  double filler_probability = 0.2;  // chance of an entity-free sentence between facts
  double unknown_anchor_probability = 0.0;  // anchors to ids absent from the KB
  std::uint64_t seed = 0;
};

// Documents as JSON lines in the documents-file format. Each document
// states min_facts..max_facts triples taken from a reshuffled cycle over the
// whole triple list; the first mention of every entity carries an anchor and
// later mentions are left for alias matching. Surfaces are drawn
// uniformly from each entity's alias set.
std::vector<std::string> make_synthetic_documents(const SyntheticKb& kb, const SyntheticCorpusConfig& config);

// entities.jsonl, triples.tsv, templates.json and docs.jsonl under dir.
void write_synthetic(const SyntheticKb& kb, const std::vector<std::string>& documents,
                     const std::filesystem::path& dir);

}  // namespace wklm
