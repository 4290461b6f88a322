#include "wklm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "wklm/error.hpp"
#include "wklm/parallel.hpp"
#include "wklm/text.hpp"

namespace wklm {

std::size_t TrainingInstance::replaced_count() const {
  return static_cast<std::size_t>(std::count_if(mentions.begin(), mentions.end(), [](const auto& m) {
    return m.label == MentionLabel::replaced;
  }));
}

RecognitionResult recognize_mentions(const Document& doc, const KnowledgeStore& store) {
  RecognitionResult result;
  const std::size_t n = doc.tokens.size();
  std::vector<bool> covered(n, false);
  std::set<EntityId> anchored;

  for (const auto& a : doc.anchors) {
    if (a.span.start >= a.span.end || a.span.end > n)
      throw DataError("anchor out of bounds in document " + doc.doc_id);
    if (!store.contains(a.entity)) {
      ++result.skipped_anchors;
      continue;
    }
    result.mentions.push_back({a.span, a.entity, MentionSource::anchor});
    for (std::size_t i = a.span.start; i < a.span.end; ++i) covered[i] = true;
    anchored.insert(a.entity);
  }

  if (!anchored.empty()) {
    std::vector<std::string> lower(n);
    for (std::size_t i = 0; i < n; ++i) lower[i] = ascii_lower(doc.tokens[i]);
    const std::size_t max_len = store.max_alias_tokens();

    std::size_t i = 0;
    while (i < n) {
      if (covered[i]) {
        ++i;
        continue;
      }
      std::size_t free_run = 0;
      while (i + free_run < n && !covered[i + free_run] && free_run < max_len) ++free_run;

      std::size_t match_len = 0;
      const EntityId* match = nullptr;
      for (std::size_t len = free_run; len >= 1 && !match; --len) {
        for (const auto& id : store.lookup_alias(normalize_tokens(lower, i, i + len))) {
          if (anchored.count(id)) {
            match = &id;
            match_len = len;
            break;
          }
        }
      }
      if (match) {
        result.mentions.push_back({{i, i + match_len}, *match, MentionSource::alias_match});
        i += match_len;
      } else {
        ++i;
      }
    }
  }

  std::sort(result.mentions.begin(), result.mentions.end(),
            [](const Mention& a, const Mention& b) { return a.span.start < b.span.start; });
  return result;
}

std::vector<Chunk> chunk_document(const Document& doc, const std::vector<Mention>& mentions,
                                  std::size_t chunk_size) {
  if (chunk_size < 2) throw std::invalid_argument("chunk_size must be >= 2");
  std::vector<Chunk> chunks;
  const std::size_t n = doc.tokens.size();
  for (std::size_t lo = 0, index = 0; lo < n; lo += chunk_size, ++index) {
    const std::size_t hi = std::min(n, lo + chunk_size);
    Chunk c;
    c.doc_id = doc.doc_id;
    c.index = index;
    c.tokens.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(lo),
                    doc.tokens.begin() + static_cast<std::ptrdiff_t>(hi));
    for (const auto& m : mentions) {
      if (m.span.start >= lo && m.span.end <= hi)
        c.mentions.push_back({{m.span.start - lo, m.span.end - lo}, m.entity, m.source});
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<bool> select_replacements(const std::vector<bool>& eligible, Rng& rng) {
  const std::size_t n = eligible.size();
  std::vector<bool> accepted(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (!eligible[i]) continue;
    const bool proposed = rng.bernoulli(0.5);
    accepted[i] = proposed && !(i > 0 && accepted[i - 1]);
  }
  if (std::none_of(accepted.begin(), accepted.end(), [](bool b) { return b; })) {
    auto first = std::find(eligible.begin(), eligible.end(), true);
    if (first != eligible.end()) accepted[static_cast<std::size_t>(first - eligible.begin())] = true;
  }
  return accepted;
}

namespace {

// Type choice and peer pool for each mention location of a chunk.
std::vector<TypedPool> plan_locations(const Chunk& chunk, const KnowledgeStore& store, Rng& rng) {
  std::vector<TypedPool> plan;
  plan.reserve(chunk.mentions.size());
  for (const auto& m : chunk.mentions) {
    if (store.get(m.entity).types.empty()) {
      plan.push_back({});
    } else {
      plan.push_back(same_type_pool(store, m.entity, rng));
    }
  }
  return plan;
}

std::vector<bool> eligibility(const std::vector<TypedPool>& plan) {
  std::vector<bool> out;
  for (const auto& p : plan) out.push_back(!p.entities.empty());
  return out;
}

// Builds the corrupted token sequence. negatives[i] is set for replaced
// mentions only.
TrainingInstance realize(const Chunk& chunk, const std::vector<std::optional<EntityId>>& negatives,
                         const KnowledgeStore& store, Rng& rng) {
  TrainingInstance inst;
  inst.doc_id = chunk.doc_id;
  inst.chunk = chunk.index;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < chunk.mentions.size(); ++i) {
    const auto& m = chunk.mentions[i];
    inst.tokens.insert(inst.tokens.end(), chunk.tokens.begin() + static_cast<std::ptrdiff_t>(cursor),
                       chunk.tokens.begin() + static_cast<std::ptrdiff_t>(m.span.start));
    LabeledMention lm;
    lm.original = m.entity;
    lm.span.start = inst.tokens.size();
    if (negatives[i]) {
      lm.label = MentionLabel::replaced;
      lm.surface = *negatives[i];
      for (auto& t : tokenize(sample_alias(store, lm.surface, rng))) inst.tokens.push_back(std::move(t));
    } else {
      lm.label = MentionLabel::kept;
      lm.surface = m.entity;
      inst.tokens.insert(inst.tokens.end(),
                         chunk.tokens.begin() + static_cast<std::ptrdiff_t>(m.span.start),
                         chunk.tokens.begin() + static_cast<std::ptrdiff_t>(m.span.end));
    }
    lm.span.end = inst.tokens.size();
    inst.mentions.push_back(std::move(lm));
    cursor = m.span.end;
  }
  inst.tokens.insert(inst.tokens.end(), chunk.tokens.begin() + static_cast<std::ptrdiff_t>(cursor),
                     chunk.tokens.end());
  return inst;
}

// Per-location negative source: a shuffled pool consumed in order and
// reshuffled once exhausted.
class NegativeCycle {
 public:
  NegativeCycle(std::vector<EntityId> pool, Rng rng) : order_(std::move(pool)), rng_(rng) {
    rng_.shuffle(order_);
  }

  const EntityId& draw() {
    if (next_ == order_.size()) {
      rng_.shuffle(order_);
      next_ = 0;
    }
    return order_[next_++];
  }

 private:
  std::vector<EntityId> order_;
  Rng rng_;
  std::size_t next_ = 0;
};

}  // namespace

TrainingInstance corrupt_chunk(const Chunk& chunk, const KnowledgeStore& store, Rng& rng) {
  const auto plan = plan_locations(chunk, store, rng);
  const auto replaced = select_replacements(eligibility(plan), rng);
  std::vector<std::optional<EntityId>> negatives(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (replaced[i]) negatives[i] = plan[i].entities[rng.uniform_index(plan[i].entities.size())];
  }
  return realize(chunk, negatives, store, rng);
}

std::vector<TrainingInstance> replicate(const Chunk& chunk, const KnowledgeStore& store, Rng& rng,
                                        std::size_t replicas) {
  if (replicas < 1) throw std::invalid_argument("replicas must be >= 1");
  const Rng base(rng.next());
  Rng plan_rng = base.substream("plan");
  const auto plan = plan_locations(chunk, store, plan_rng);
  const auto eligible = eligibility(plan);

  const Rng negative_rng = base.substream("negatives");
  std::vector<std::optional<NegativeCycle>> cycles(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (eligible[i]) cycles[i].emplace(plan[i].entities, negative_rng.substream(i));
  }

  std::vector<TrainingInstance> out;
  out.reserve(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    Rng replica_rng = base.substream(r);
    const auto replaced = select_replacements(eligible, replica_rng);
    std::vector<std::optional<EntityId>> negatives(plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) {
      if (replaced[i]) negatives[i] = cycles[i]->draw();
    }
    auto inst = realize(chunk, negatives, store, replica_rng);
    inst.replica = r;
    out.push_back(std::move(inst));
  }
  return out;
}

std::size_t mask_budget(double mask_ratio, std::size_t eligible_positions) {
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0))
    throw std::invalid_argument("mask_ratio must lie in [0, 1]");
  // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
  const double raw = std::floor(mask_ratio * static_cast<double>(eligible_positions) + 1e-9);
  return std::min(eligible_positions, static_cast<std::size_t>(raw));
}

TrainingInstance unmask(TrainingInstance instance) {
  for (const auto& slot : instance.masks) instance.tokens.at(slot.position) = slot.original;
  instance.masks.clear();
  return instance;
}

TrainingInstance apply_masking(TrainingInstance instance, double mask_ratio, Rng& rng) {
  instance = unmask(std::move(instance));
  std::vector<bool> in_mention(instance.tokens.size(), false);
  for (const auto& m : instance.mentions)
    for (std::size_t p = m.span.start; p < m.span.end && p < in_mention.size(); ++p) in_mention[p] = true;
  std::vector<std::size_t> eligible;
  for (std::size_t p = 0; p < in_mention.size(); ++p)
    if (!in_mention[p]) eligible.push_back(p);

  const std::size_t count = mask_budget(mask_ratio, eligible.size());
  // Partial Fisher-Yates: the first `count` entries become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());
  for (auto p : eligible) {
    instance.masks.push_back({p, instance.tokens[p]});
    instance.tokens[p] = kMaskToken;
  }
  return instance;
}

CorpusResult build_corpus(std::vector<Document> docs, const KnowledgeStore& store,
                          const CorpusConfig& config, std::size_t workers) {
  std::sort(docs.begin(), docs.end(),
            [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  for (std::size_t i = 1; i < docs.size(); ++i)
    if (docs[i].doc_id == docs[i - 1].doc_id) throw DataError("duplicate doc_id: " + docs[i].doc_id);

  struct DocOutput {
    std::vector<TrainingInstance> instances;
    CorpusStats stats;
  };
  std::vector<DocOutput> outputs(docs.size());
  const Rng corpus_rng = Rng(config.seed).substream("corpus");

  parallel_for(docs.size(), workers, [&](std::size_t d) {
    const auto& doc = docs[d];
    auto& out = outputs[d];
    const Rng doc_rng = corpus_rng.substream(doc.doc_id);
    auto recognized = recognize_mentions(doc, store);
    out.stats.skipped_anchors = recognized.skipped_anchors;
    auto chunks = chunk_document(doc, recognized.mentions, config.chunk_size);
    out.stats.chunks = chunks.size();
    std::size_t retained = 0;
    for (const auto& c : chunks) {
      retained += c.mentions.size();
      for (const auto& m : c.mentions) {
        if (m.source == MentionSource::anchor) {
          ++out.stats.anchor_mentions;
        } else {
          ++out.stats.alias_mentions;
        }
      }
      if (!c.mentions.empty()) ++out.stats.chunks_with_mentions;
      Rng chunk_rng = doc_rng.substream(c.index);
      const Rng mask_rng = chunk_rng.substream("mask");
      auto replicas = replicate(c, store, chunk_rng, config.replicas);
      for (auto& inst : replicas) {
        Rng r = mask_rng.substream(inst.replica);
        inst = apply_masking(std::move(inst), config.mask_ratio, r);
        out.stats.labeled_mentions += inst.mentions.size();
        const auto replaced = inst.replaced_count();
        out.stats.replaced_mentions += replaced;
        if (replaced == 0) ++out.stats.positives_only_instances;
        out.instances.push_back(std::move(inst));
      }
    }
    out.stats.mentions = retained;
    out.stats.dropped_boundary_mentions = recognized.mentions.size() - retained;
  });

  CorpusResult result;
  result.stats.documents = docs.size();
  for (auto& o : outputs) {
    auto& s = result.stats;
    s.chunks += o.stats.chunks;
    s.chunks_with_mentions += o.stats.chunks_with_mentions;
    s.mentions += o.stats.mentions;
    s.anchor_mentions += o.stats.anchor_mentions;
    s.alias_mentions += o.stats.alias_mentions;
    s.dropped_boundary_mentions += o.stats.dropped_boundary_mentions;
    s.skipped_anchors += o.stats.skipped_anchors;
    s.labeled_mentions += o.stats.labeled_mentions;
    s.replaced_mentions += o.stats.replaced_mentions;
    s.positives_only_instances += o.stats.positives_only_instances;
    for (auto& inst : o.instances) result.instances.push_back(std::move(inst));
  }
  result.stats.instances = result.instances.size();
  return result;
}

}  // namespace wklm
