#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "wklm/corpus.hpp"

namespace wklm {

// {"doc_id", "text", "anchors": [{"start", "end", "entity"}]} per line.
// Anchor offsets are byte offsets into "text"; an anchor covers every token
// that overlaps its byte range.
std::vector<Document> parse_documents(std::istream& in, const std::string& source);
std::vector<Document> load_documents(const std::filesystem::path& path);

// {"doc_id", "chunk", "replica", "tokens", "mentions", "masks"} per line.
void write_instances(const std::vector<TrainingInstance>& instances, std::ostream& out);
void write_instances(const std::vector<TrainingInstance>& instances,
                     const std::filesystem::path& path);
std::vector<TrainingInstance> read_instances(std::istream& in, const std::string& source);
std::vector<TrainingInstance> read_instances(const std::filesystem::path& path);

std::string instance_to_json(const TrainingInstance& instance);

}  // namespace wklm
