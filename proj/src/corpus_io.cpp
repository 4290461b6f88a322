#include "wklm/corpus_io.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "wklm/error.hpp"
#include "wklm/text.hpp"

namespace wklm {
namespace {

using nlohmann::json;

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

const char* label_name(MentionLabel label) {
  return label == MentionLabel::kept ? "kept" : "replaced";
}

MentionLabel parse_label(const std::string& s) {
  if (s == "kept") return MentionLabel::kept;
  if (s == "replaced") return MentionLabel::replaced;
  throw DataError("unknown mention label '" + s + "'");
}

Document parse_document(const std::string& line) {
  const auto j = json::parse(line);
  Document doc;
  doc.doc_id = j.at("doc_id").get<std::string>();
  const auto text = j.at("text").get<std::string>();
  const auto tokens = tokenize_with_offsets(text);
  for (const auto& t : tokens) doc.tokens.push_back(t.text);
  if (j.contains("anchors")) {
    for (const auto& a : j.at("anchors")) {
      const auto start = a.at("start").get<std::size_t>();
      const auto end = a.at("end").get<std::size_t>();
      const auto entity = a.at("entity").get<std::string>();
      if (start >= end || end > text.size())
        throw DataError("anchor [" + std::to_string(start) + ", " + std::to_string(end) +
                        ") out of bounds");
      Anchor anchor{{tokens.size(), 0}, entity};
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].end > start && tokens[i].begin < end) {
          if (anchor.span.start == tokens.size()) anchor.span.start = i;
          anchor.span.end = i + 1;
        }
      }
      if (anchor.span.start == tokens.size())
        throw DataError("anchor for " + entity + " covers no token");
      doc.anchors.push_back(std::move(anchor));
    }
  }
  std::stable_sort(doc.anchors.begin(), doc.anchors.end(),
                   [](const Anchor& a, const Anchor& b) { return a.span.start < b.span.start; });
  for (std::size_t i = 1; i < doc.anchors.size(); ++i) {
    if (doc.anchors[i].span.start < doc.anchors[i - 1].span.end)
      throw DataError("overlapping anchors for " + doc.anchors[i - 1].entity + " and " +
                      doc.anchors[i].entity);
  }
  return doc;
}

TrainingInstance parse_instance(const std::string& line) {
  const auto j = json::parse(line);
  TrainingInstance inst;
  inst.doc_id = j.at("doc_id").get<std::string>();
  inst.chunk = j.at("chunk").get<std::size_t>();
  inst.replica = j.at("replica").get<std::size_t>();
  inst.tokens = j.at("tokens").get<std::vector<std::string>>();
  const std::size_t n = inst.tokens.size();
  for (const auto& m : j.at("mentions")) {
    LabeledMention lm;
    lm.span = {m.at("start").get<std::size_t>(), m.at("end").get<std::size_t>()};
    lm.label = parse_label(m.at("label").get<std::string>());
    lm.original = m.at("orig").get<std::string>();
    lm.surface = m.at("surf").get<std::string>();
    if (lm.span.start >= lm.span.end || lm.span.end > n)
      throw DataError("mention span out of bounds");
    if (!inst.mentions.empty() && lm.span.start < inst.mentions.back().span.end)
      throw DataError("mentions overlap or are unsorted");
    inst.mentions.push_back(std::move(lm));
  }
  for (const auto& m : j.at("masks")) {
    MaskSlot slot{m.at("pos").get<std::size_t>(), m.at("orig").get<std::string>()};
    if (slot.position >= n) throw DataError("mask position out of bounds");
    if (!inst.masks.empty() && slot.position <= inst.masks.back().position)
      throw DataError("mask positions must be strictly increasing");
    inst.masks.push_back(std::move(slot));
  }
  return inst;
}

}  // namespace

std::vector<Document> parse_documents(std::istream& in, const std::string& source) {
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      docs.push_back(parse_document(line));
    } catch (const json::exception& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const DataError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return docs;
}

std::vector<Document> load_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_documents(in, path.string());
}

std::string instance_to_json(const TrainingInstance& inst) {
  nlohmann::ordered_json j;
  j["doc_id"] = inst.doc_id;
  j["chunk"] = inst.chunk;
  j["replica"] = inst.replica;
  j["tokens"] = inst.tokens;
  auto mentions = nlohmann::ordered_json::array();
  for (const auto& m : inst.mentions) {
    nlohmann::ordered_json mj;
    mj["start"] = m.span.start;
    mj["end"] = m.span.end;
    mj["label"] = label_name(m.label);
    mj["orig"] = m.original;
    mj["surf"] = m.surface;
    mentions.push_back(std::move(mj));
  }
  j["mentions"] = std::move(mentions);
  auto masks = nlohmann::ordered_json::array();
  for (const auto& s : inst.masks) {
    nlohmann::ordered_json sj;
    sj["pos"] = s.position;
    sj["orig"] = s.original;
    masks.push_back(std::move(sj));
  }
  j["masks"] = std::move(masks);
  return j.dump();
}

void write_instances(const std::vector<TrainingInstance>& instances, std::ostream& out) {
  for (const auto& inst : instances) out << instance_to_json(inst) << '\n';
}

void write_instances(const std::vector<TrainingInstance>& instances,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_instances(instances, out);
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<TrainingInstance> read_instances(std::istream& in, const std::string& source) {
  std::vector<TrainingInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      out.push_back(parse_instance(line));
    } catch (const json::exception& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const DataError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return out;
}

std::vector<TrainingInstance> read_instances(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_instances(in, path.string());
}

}  // namespace wklm
