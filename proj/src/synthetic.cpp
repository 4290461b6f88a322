#include "wklm/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "wklm/error.hpp"

namespace wklm {
namespace {

const std::vector<std::string> kSyllables = {"ka", "lo", "mi", "ra", "te", "vun", "sol", "dar", "fen", "gil",
                                             "ho", "ju", "ne", "pa", "qui", "ro", "su", "tor", "ul", "ve",
                                             "wen", "xa", "yo", "zen", "bri", "cal", "dro", "esk", "fal", "gor"};

const std::vector<std::string> kPatterns = {
    "[SUBJ] is located in [OBJ] .", "[SUBJ] was founded by [OBJ] .", "[SUBJ] is a member of [OBJ] .",
    "[SUBJ] works with [OBJ] .",    "[SUBJ] was named after [OBJ] .", "[SUBJ] belongs to [OBJ] ."};

const std::vector<std::string> kFillers = {"this is widely known .", "the records were kept for many years .",
                                           "some details remain unclear .", "it was reported again later .",
                                           "many people remember this ."};

std::string make_word(Rng& rng, std::set<std::string>& used) {
  while (true) {
    std::string w;
    const std::size_t n = 2 + rng.uniform_index(2);
    for (std::size_t i = 0; i < n; ++i) w += kSyllables[rng.uniform_index(kSyllables.size())];
    w[0] = static_cast<char>(w[0] - 'a' + 'A');
    if (used.insert(w).second) return w;
  }
}

}  // namespace

SyntheticKb make_synthetic_kb(const SyntheticKbConfig& c) {
  if (c.types == 0 || c.entities_per_type < 2) throw std::invalid_argument("synthetic kb: too small");
  Rng rng = Rng(c.seed).substream("synthetic-kb");
  SyntheticKb kb;
  std::set<std::string> used;
  std::vector<std::vector<EntityId>> by_type(c.types);
  for (std::size_t t = 0; t < c.types; ++t) {
    for (std::size_t i = 0; i < c.entities_per_type; ++i) {
      EntityRecord r;
      const std::size_t n = kb.entities.size();
      r.id = "E" + std::string(n < 10 ? "00" : n < 100 ? "0" : "") + std::to_string(n);
      const auto first = make_word(rng, used);
      const auto last = make_word(rng, used);
      r.name = first + " " + last;
      r.aliases = {r.name, first};
      r.types = {"type" + std::to_string(t)};
      by_type[t].push_back(r.id);
      kb.entities.push_back(std::move(r));
    }
  }

  for (std::size_t j = 0; j < c.relations; ++j) {
    const RelationId rel = "R" + std::to_string(j);
    kb.templates.emplace(rel, make_template(rel, kPatterns[j % kPatterns.size()]));
    const std::size_t object_type = j % c.types;
    for (std::size_t t = 0; t < c.types; ++t) {
      const auto& subjects = by_type[t];
      std::vector<EntityId> objects = by_type[object_type];
      // Rejection-sample a derangement when an entity could map to itself.
      while (true) {
        rng.shuffle(objects);
        if (t != object_type) break;
        bool fixed_point = false;
        for (std::size_t i = 0; i < subjects.size(); ++i) fixed_point |= subjects[i] == objects[i];
        if (!fixed_point) break;
      }
      for (std::size_t i = 0; i < subjects.size(); ++i) kb.triples.push_back({subjects[i], rel, objects[i]});
    }
  }
  return kb;
}

std::vector<std::string> make_synthetic_documents(const SyntheticKb& kb, const SyntheticCorpusConfig& c) {
  if (c.min_facts == 0 || c.max_facts < c.min_facts) throw std::invalid_argument("synthetic corpus: bad fact range");
  if (kb.triples.empty()) throw std::invalid_argument("synthetic corpus: no triples");
  Rng rng = Rng(c.seed).substream("synthetic-docs");
  std::map<EntityId, const EntityRecord*> records;
  for (const auto& e : kb.entities) records[e.id] = &e;
  // Facts come from a shuffled cycle over all triples, so every triple is
  // used about equally often and no entity dominates a document.
  std::vector<std::size_t> order(kb.triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  auto next_fact = [&]() -> const Triple& {
    if (cursor == order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    return kb.triples[order[cursor++]];
  };

  std::vector<std::string> out;
  for (std::size_t d = 0; d < c.documents; ++d) {
    std::string text;
    auto anchors = nlohmann::ordered_json::array();
    std::set<EntityId> anchored;

    auto emit_entity = [&](const EntityId& id) {
      const auto& aliases = records.at(id)->aliases;
      const auto& surface = aliases[rng.uniform_index(aliases.size())];
      const std::size_t start = text.size();
      text += surface;
      if (anchored.insert(id).second) {
        std::string target = id;
        if (c.unknown_anchor_probability > 0.0 && rng.bernoulli(c.unknown_anchor_probability)) target = "X" + id;
        nlohmann::ordered_json a;
        a["start"] = start;
        a["end"] = text.size();
        a["entity"] = target;
        anchors.push_back(std::move(a));
      }
    };

    const std::size_t facts = c.min_facts + rng.uniform_index(c.max_facts - c.min_facts + 1);
    for (std::size_t f = 0; f < facts; ++f) {
      if (!text.empty()) text += ' ';
      if (rng.bernoulli(c.filler_probability)) {
        text += kFillers[rng.uniform_index(kFillers.size())] + " ";
      }
      const Triple* t = &next_fact();
      const auto& pattern = kb.templates.at(t->relation).pattern;
      const auto subj = pattern.find(kSubjectSlot);
      const auto obj = pattern.find(kObjectSlot);
      const std::string subj_slot = kSubjectSlot, obj_slot = kObjectSlot;
      if (subj < obj) {
        text += pattern.substr(0, subj);
        emit_entity(t->subject);
        text += pattern.substr(subj + subj_slot.size(), obj - subj - subj_slot.size());
        emit_entity(t->object);
        text += pattern.substr(obj + obj_slot.size());
      } else {
        text += pattern.substr(0, obj);
        emit_entity(t->object);
        text += pattern.substr(obj + obj_slot.size(), subj - obj - obj_slot.size());
        emit_entity(t->subject);
        text += pattern.substr(subj + subj_slot.size());
      }
    }
    nlohmann::ordered_json doc;
    doc["doc_id"] = "doc" + std::to_string(100000 + d).substr(1);
    doc["text"] = text;
    doc["anchors"] = std::move(anchors);
    out.push_back(doc.dump());
  }
  return out;
}

void write_synthetic(const SyntheticKb& kb, const std::vector<std::string>& documents,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("entities.jsonl");
    for (const auto& e : kb.entities) {
      nlohmann::ordered_json j;
      j["id"] = e.id;
      j["name"] = e.name;
      j["aliases"] = e.aliases;
      j["types"] = e.types;
      out << j.dump() << '\n';
    }
  }
  {
    auto out = open("triples.tsv");
    write_triples(kb.triples, out);
  }
  {
    auto out = open("templates.json");
    nlohmann::ordered_json j;
    for (const auto& [rel, t] : kb.templates) j[rel] = t.pattern;
    out << j.dump(2) << '\n';
  }
  {
    auto out = open("docs.jsonl");
    for (const auto& d : documents) out << d << '\n';
  }
}

}  // namespace wklm
