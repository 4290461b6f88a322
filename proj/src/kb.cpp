#include "wklm/kb.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wklm/error.hpp"
#include "wklm/text.hpp"

namespace wklm {
namespace {

const std::vector<EntityId> kEmpty;

void sort_unique(std::vector<std::string>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

KnowledgeStore::KnowledgeStore(std::vector<EntityRecord> records) : records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(),
            [](const EntityRecord& a, const EntityRecord& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto& r = records_[i];
    if (r.id.empty()) throw DataError("entity with empty id");
    if (i > 0 && records_[i - 1].id == r.id) throw DataError("duplicate entity id: " + r.id);
    if (!r.name.empty()) r.aliases.push_back(r.name);
    std::erase_if(r.aliases, [](const std::string& a) { return tokenize(a).empty(); });
    sort_unique(r.aliases);
    sort_unique(r.types);
    if (r.aliases.empty()) throw DataError("entity with empty alias set: " + r.id);
    if (r.name.empty()) r.name = r.aliases.front();
    by_id_.emplace(r.id, i);
    for (const auto& t : r.types) type_index_[t].push_back(r.id);
    for (const auto& a : r.aliases) {
      const auto key = normalize_surface(a);
      if (key.empty()) continue;
      auto& ids = alias_index_[key];
      if (ids.empty() || ids.back() != r.id) ids.push_back(r.id);
      max_alias_tokens_ = std::max(max_alias_tokens_, tokenize(a).size());
    }
  }
}

const EntityRecord& KnowledgeStore::get(const EntityId& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw UnknownEntityError(id);
  return records_[it->second];
}

const std::vector<EntityId>& KnowledgeStore::entities_of_type(const TypeId& type) const {
  auto it = type_index_.find(type);
  return it == type_index_.end() ? kEmpty : it->second;
}

const std::vector<EntityId>& KnowledgeStore::lookup_alias(const std::string& normalized) const {
  auto it = alias_index_.find(normalized);
  return it == alias_index_.end() ? kEmpty : it->second;
}

std::vector<EntityRecord> parse_entities(std::istream& in, const std::string& source) {
  std::vector<EntityRecord> records;
  std::set<EntityId> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    EntityRecord r;
    try {
      const auto j = nlohmann::json::parse(line);
      r.id = j.at("id").get<std::string>();
      r.name = j.at("name").get<std::string>();
      if (j.contains("aliases")) r.aliases = j.at("aliases").get<std::vector<std::string>>();
      if (j.contains("types")) r.types = j.at("types").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (r.id.empty()) throw ParseError(source, lineno, "empty entity id");
    if (!seen.insert(r.id).second) throw ParseError(source, lineno, "duplicate entity id: " + r.id);
    if (r.name.empty() && r.aliases.empty())
      throw ParseError(source, lineno, "entity with empty alias set: " + r.id);
    records.push_back(std::move(r));
  }
  return records;
}

KnowledgeStore load_entities(const std::filesystem::path& path) {
  auto in = open_input(path);
  return KnowledgeStore(parse_entities(in, path.string()));
}

void write_entities(const KnowledgeStore& store, std::ostream& out) {
  for (const auto& r : store.records()) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["name"] = r.name;
    j["aliases"] = r.aliases;
    j["types"] = r.types;
    out << j.dump() << '\n';
  }
}

std::vector<Triple> parse_triples(std::istream& in, const std::string& source) {
  std::vector<Triple> triples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3)
      throw ParseError(source, lineno, "expected 3 tab-separated columns, got " +
                                           std::to_string(cols.size()));
    for (const auto& c : cols)
      if (c.empty()) throw ParseError(source, lineno, "empty column");
    triples.push_back({cols[0], cols[1], cols[2]});
  }
  return triples;
}

std::vector<Triple> load_triples(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_triples(in, path.string());
}

void write_triples(const std::vector<Triple>& triples, std::ostream& out) {
  for (const auto& t : triples) out << t.subject << '\t' << t.relation << '\t' << t.object << '\n';
}

void validate_triples(const KnowledgeStore& store, const std::vector<Triple>& triples) {
  for (const auto& t : triples) {
    if (!store.contains(t.subject)) throw UnknownEntityError(t.subject);
    if (!store.contains(t.object)) throw UnknownEntityError(t.object);
  }
}

TypedPool same_type_pool(const KnowledgeStore& store, const EntityId& e, Rng& rng) {
  const auto& record = store.get(e);
  if (record.types.empty()) throw NotReplaceableError(e);
  TypedPool pool;
  pool.type = record.types[rng.uniform_index(record.types.size())];
  for (const auto& peer : store.entities_of_type(pool.type))
    if (peer != e) pool.entities.push_back(peer);
  return pool;
}

const std::string& sample_alias(const KnowledgeStore& store, const EntityId& e, Rng& rng) {
  const auto& record = store.get(e);
  return record.aliases[rng.uniform_index(record.aliases.size())];
}

std::vector<EntityId> object_candidates(const std::vector<Triple>& triples,
                                        const RelationId& relation) {
  std::vector<EntityId> out;
  for (const auto& t : triples)
    if (t.relation == relation) out.push_back(t.object);
  sort_unique(out);
  return out;
}

}  // namespace wklm
