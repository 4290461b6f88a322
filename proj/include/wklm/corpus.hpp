#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wklm/kb.hpp"
#include "wklm/rng.hpp"

namespace wklm {

inline constexpr const char* kMaskToken = "[MASK]";

// Half-open token interval.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool contains(std::size_t pos) const { return pos >= start && pos < end; }
  bool operator==(const Span&) const = default;
};

struct Anchor {
  Span span;
  EntityId entity;
};

struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<Anchor> anchors;  // in-bounds, non-overlapping, sorted by start
};

enum class MentionSource { anchor, alias_match };

struct Mention {
  Span span;
  EntityId entity;
  MentionSource source = MentionSource::anchor;

  bool operator==(const Mention&) const = default;
};

struct Chunk {
  std::string doc_id;
  std::size_t index = 0;
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;  // chunk-local spans
};

enum class MentionLabel { kept, replaced };

struct LabeledMention {
  Span span;
  MentionLabel label = MentionLabel::kept;
  EntityId original;
  EntityId surface;  // entity whose alias now occupies the span

  bool operator==(const LabeledMention&) const = default;
};

struct MaskSlot {
  std::size_t position = 0;
  std::string original;

  bool operator==(const MaskSlot&) const = default;
};

struct TrainingInstance {
  std::string doc_id;
  std::size_t chunk = 0;
  std::size_t replica = 0;
  std::vector<std::string> tokens;
  std::vector<LabeledMention> mentions;  // sorted by span start
  std::vector<MaskSlot> masks;           // sorted by position

  std::size_t replaced_count() const;
  bool operator==(const TrainingInstance&) const = default;
};

struct RecognitionResult {
  std::vector<Mention> mentions;
  std::size_t skipped_anchors = 0;  // anchors naming entities absent from the store
};

// Anchors become mentions; further mentions come from matching the aliases of
// anchored entities against the remaining tokens (case-insensitive, longest
// match first, left to right).
RecognitionResult recognize_mentions(const Document& doc, const KnowledgeStore& store);

// Fixed windows of chunk_size tokens. Mentions crossing a window boundary are
// dropped. Requires chunk_size >= 2.
std::vector<Chunk> chunk_document(const Document& doc, const std::vector<Mention>& mentions,
                                  std::size_t chunk_size = 512);

// Picks which mentions to replace. Each eligible mention is proposed with
// probability 1/2; a left-to-right sweep rejects proposals whose predecessor
// in mention order was accepted. If nothing survives, the first eligible
// mention is forced.
std::vector<bool> select_replacements(const std::vector<bool>& eligible, Rng& rng);

// One corrupted instance. When no mention is replaceable, every label is
// `kept` and replaced_count() is zero.
TrainingInstance corrupt_chunk(const Chunk& chunk, const KnowledgeStore& store, Rng& rng);

// `replicas` corrupted copies of the chunk. Each replica draws its replaced
// set independently; at each mention location the negatives are drawn from a
// fixed same-type pool without repetition until the pool is exhausted.
std::vector<TrainingInstance> replicate(const Chunk& chunk, const KnowledgeStore& store,
                                        Rng& rng, std::size_t replicas = 10);

// Masks floor(mask_ratio * n) of the n positions outside every mention span.
// Existing masks are undone first.
TrainingInstance apply_masking(TrainingInstance instance, double mask_ratio, Rng& rng);
// Restores the original tokens at masked positions and clears mask slots.
TrainingInstance unmask(TrainingInstance instance);
std::size_t mask_budget(double mask_ratio, std::size_t eligible_positions);

struct CorpusConfig {
  std::uint64_t seed = 0;
  std::size_t chunk_size = 512;
  std::size_t replicas = 10;
  double mask_ratio = 0.05;
};

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t chunks = 0;
  std::size_t chunks_with_mentions = 0;
  std::size_t mentions = 0;  // mentions retained in chunks
  std::size_t anchor_mentions = 0;
  std::size_t alias_mentions = 0;
  std::size_t dropped_boundary_mentions = 0;
  std::size_t skipped_anchors = 0;
  std::size_t instances = 0;
  std::size_t labeled_mentions = 0;
  std::size_t replaced_mentions = 0;
  std::size_t positives_only_instances = 0;

  double replaced_fraction() const {
    return labeled_mentions ? static_cast<double>(replaced_mentions) / labeled_mentions : 0.0;
  }
};

struct CorpusResult {
  std::vector<TrainingInstance> instances;
  CorpusStats stats;
};

// Full pipeline. Documents are processed in doc_id order with one rng
// substream per document, so the output is independent of `workers`.
// Chunks without mentions produce no instances.
CorpusResult build_corpus(std::vector<Document> docs, const KnowledgeStore& store,
                          const CorpusConfig& config, std::size_t workers = 1);

}  // namespace wklm
