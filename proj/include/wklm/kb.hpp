#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "wklm/rng.hpp"

namespace wklm {

using EntityId = std::string;
using TypeId = std::string;
using RelationId = std::string;

struct EntityRecord {
  EntityId id;
  std::string name;
  std::vector<std::string> aliases;  // sorted, unique, contains name
  std::vector<TypeId> types;         // sorted, unique
};

struct Triple {
  EntityId subject;
  RelationId relation;
  EntityId object;

  bool operator==(const Triple&) const = default;
};

// Same-type peers of an entity for one randomly chosen type.
struct TypedPool {
  TypeId type;
  std::vector<EntityId> entities;  // sorted by id, never contains the queried entity
};

// Entity records with type and alias inverted indexes. Immutable after
// construction; all sampling takes caller-owned rng state.
class KnowledgeStore {
 public:
  KnowledgeStore() = default;
  // Throws DataError on duplicate ids, empty alias sets or empty ids.
  explicit KnowledgeStore(std::vector<EntityRecord> records);

  std::size_t size() const { return records_.size(); }
  bool contains(const EntityId& id) const { return by_id_.count(id) != 0; }
  // Throws UnknownEntityError.
  const EntityRecord& get(const EntityId& id) const;
  // Records in ascending id order.
  const std::vector<EntityRecord>& records() const { return records_; }

  const std::map<TypeId, std::vector<EntityId>>& type_index() const { return type_index_; }
  // Entities of a type, sorted by id; empty for an unknown type.
  const std::vector<EntityId>& entities_of_type(const TypeId& type) const;
  // Entity ids whose alias normalizes to `normalized`; empty when none.
  const std::vector<EntityId>& lookup_alias(const std::string& normalized) const;
  const std::unordered_map<std::string, std::vector<EntityId>>& alias_index() const {
    return alias_index_;
  }
  // Longest alias measured in tokens.
  std::size_t max_alias_tokens() const { return max_alias_tokens_; }

 private:
  std::vector<EntityRecord> records_;
  std::unordered_map<EntityId, std::size_t> by_id_;
  std::map<TypeId, std::vector<EntityId>> type_index_;
  std::unordered_map<std::string, std::vector<EntityId>> alias_index_;
  std::size_t max_alias_tokens_ = 0;
};

// Parses one JSON object per line: {"id", "name", "aliases", "types"}.
// The name is always added to the alias set.
KnowledgeStore load_entities(const std::filesystem::path& path);
std::vector<EntityRecord> parse_entities(std::istream& in, const std::string& source);
void write_entities(const KnowledgeStore& store, std::ostream& out);

// subject<TAB>relation<TAB>object per line, no header.
std::vector<Triple> load_triples(const std::filesystem::path& path);
std::vector<Triple> parse_triples(std::istream& in, const std::string& source);
void write_triples(const std::vector<Triple>& triples, std::ostream& out);
// Throws UnknownEntityError for the first triple whose subject or object is
// missing from the store.
void validate_triples(const KnowledgeStore& store, const std::vector<Triple>& triples);

// Picks one of e's types uniformly and returns every other entity of that
// type. Throws UnknownEntityError, or NotReplaceableError when e has no type.
TypedPool same_type_pool(const KnowledgeStore& store, const EntityId& e, Rng& rng);

// Uniform draw from e's alias set.
const std::string& sample_alias(const KnowledgeStore& store, const EntityId& e, Rng& rng);

// Distinct objects of `relation`, sorted. Unknown relation yields an empty set.
std::vector<EntityId> object_candidates(const std::vector<Triple>& triples,
                                        const RelationId& relation);

}  // namespace wklm
