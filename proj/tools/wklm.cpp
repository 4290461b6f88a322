// Command-line entry point: ingest-kb, build-corpus, train, probe and
// make-synthetic. Exit codes: 0 success, 1 usage, 2 data/schema, 3 numerical.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wklm/checkpoint.hpp"
#include "wklm/corpus.hpp"
#include "wklm/corpus_io.hpp"
#include "wklm/error.hpp"
#include "wklm/kb.hpp"
#include "wklm/manifest.hpp"
#include "wklm/parallel.hpp"
#include "wklm/probe.hpp"
#include "wklm/synthetic.hpp"
#include "wklm/text.hpp"
#include "wklm/train.hpp"

namespace fs = std::filesystem;
using namespace wklm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

// CLI flag > config file > built-in default.
template <typename T>
T resolve(const CLI::Option* flag, const T& flag_value, const nlohmann::json& file, const char* key,
          const T& fallback) {
  if (flag && flag->count() > 0) return flag_value;
  if (file.is_object() && file.contains(key)) {
    try {
      return file.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("config key ") + key + ": " + e.what());
    }
  }
  return fallback;
}

struct KbPaths {
  fs::path entities;
  fs::path triples;
};

KbPaths kb_paths(const fs::path& dir) { return {dir / "entities.jsonl", dir / "triples.tsv"}; }

// ---------------------------------------------------------------- ingest-kb

struct IngestArgs {
  std::string entities, triples, out;
};

int run_ingest(const IngestArgs& a) {
  auto store = load_entities(a.entities);
  auto triples = load_triples(a.triples);
  validate_triples(store, triples);

  const fs::path out(a.out);
  fs::create_directories(out);
  const auto paths = kb_paths(out);
  RunManifest m;
  m.subcommand = "ingest-kb";
  m.inputs = {{a.entities, digest_path(a.entities)}, {a.triples, digest_path(a.triples)}};
  m.outputs = {paths.entities.string(), paths.triples.string(), (out / "type_index.json").string()};
  write_manifest(m, out / "manifest.json");

  {
    std::ofstream f(paths.entities, std::ios::binary);
    write_entities(store, f);
  }
  {
    std::ofstream f(paths.triples, std::ios::binary);
    write_triples(triples, f);
  }
  {
    nlohmann::ordered_json types;
    for (const auto& [type, ids] : store.type_index()) types[type] = ids;
    std::ofstream f(out / "type_index.json", std::ios::binary);
    f << types.dump(2) << '\n';
  }
  std::cout << "entities\t" << store.size() << "\ntypes\t" << store.type_index().size() << "\ntriples\t"
            << triples.size() << '\n';
  return 0;
}

// ------------------------------------------------------------- build-corpus

struct CorpusArgs {
  std::string docs, kb, out, config;
  std::uint64_t seed = 0;
  std::size_t chunk_size = 512;
  std::size_t replicas = 10;
  double mask_ratio = 0.05;
  const CLI::Option *seed_opt = nullptr, *chunk_opt = nullptr, *replicas_opt = nullptr, *mask_opt = nullptr;
};

int run_build_corpus(const CorpusArgs& a) {
  const nlohmann::json file = a.config.empty() ? nlohmann::json::object() : read_json_file(a.config);
  CorpusConfig cfg;
  cfg.seed = resolve<std::uint64_t>(a.seed_opt, a.seed, file, "seed", 0);
  cfg.chunk_size = resolve<std::size_t>(a.chunk_opt, a.chunk_size, file, "chunk_size", 512);
  cfg.replicas = resolve<std::size_t>(a.replicas_opt, a.replicas, file, "replicas", 10);
  cfg.mask_ratio = resolve<double>(a.mask_opt, a.mask_ratio, file, "mask_ratio", 0.05);
  if (cfg.chunk_size < 2) throw UsageError("--chunk-size must be >= 2");
  if (cfg.replicas < 1) throw UsageError("--replicas must be >= 1");
  if (!(cfg.mask_ratio >= 0.0 && cfg.mask_ratio <= 1.0)) throw UsageError("--mask-ratio must lie in [0, 1]");

  const auto paths = kb_paths(a.kb);
  auto store = load_entities(paths.entities);
  auto docs = load_documents(a.docs);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  fs::path stats_path = out;
  stats_path += ".stats.json";
  RunManifest m;
  m.subcommand = "build-corpus";
  m.seed = cfg.seed;
  m.config["chunk_size"] = cfg.chunk_size;
  m.config["replicas"] = cfg.replicas;
  m.config["mask_ratio"] = cfg.mask_ratio;
  m.config["seed"] = cfg.seed;
  m.inputs = {{a.docs, digest_path(a.docs)}, {a.kb, digest_path(a.kb)}};
  m.outputs = {out.string(), stats_path.string()};
  write_manifest(m, sidecar_manifest(out));

  const auto result = build_corpus(std::move(docs), store, cfg, worker_count());
  write_instances(result.instances, out);

  const auto& s = result.stats;
  nlohmann::ordered_json stats;
  stats["documents"] = s.documents;
  stats["chunks"] = s.chunks;
  stats["chunks_with_mentions"] = s.chunks_with_mentions;
  stats["mentions"] = s.mentions;
  stats["anchor_mentions"] = s.anchor_mentions;
  stats["alias_mentions"] = s.alias_mentions;
  stats["dropped_boundary_mentions"] = s.dropped_boundary_mentions;
  stats["unknown_anchor_entities"] = s.skipped_anchors;
  stats["instances"] = s.instances;
  stats["positives_only_instances"] = s.positives_only_instances;
  stats["replaced_fraction"] = s.replaced_fraction();
  std::ofstream(stats_path, std::ios::binary) << stats.dump(2) << '\n';
  for (auto it = stats.begin(); it != stats.end(); ++it) std::cout << it.key() << '\t' << it.value().dump() << '\n';
  return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string instances, model_config, out, config, objective = "joint";
  std::uint64_t seed = 0;
  double mask_ratio = 0.05, lr = 1e-5, weight_decay = 0.01, heldout_fraction = 0.0;
  std::int64_t max_updates = 1000, checkpoint_every = 0, eval_every = 100;
  std::size_t batch_size = 16;
  const CLI::Option *seed_opt = nullptr, *objective_opt = nullptr, *mask_opt = nullptr, *updates_opt = nullptr,
                    *lr_opt = nullptr, *batch_opt = nullptr, *decay_opt = nullptr, *ckpt_opt = nullptr,
                    *eval_opt = nullptr, *heldout_opt = nullptr;
};

int run_train(const TrainArgs& a) {
  const nlohmann::json file = a.config.empty() ? nlohmann::json::object() : read_json_file(a.config);
  const ModelConfig model_config = config_from_json(read_json_file(a.model_config));

  TrainConfig cfg;
  cfg.seed = resolve<std::uint64_t>(a.seed_opt, a.seed, file, "seed", cfg.seed);
  try {
    cfg.objective = parse_objective(resolve<std::string>(a.objective_opt, a.objective, file, "objective", "joint"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.mask_ratio = resolve<double>(a.mask_opt, a.mask_ratio, file, "mask_ratio", cfg.mask_ratio);
  cfg.max_updates = resolve<std::int64_t>(a.updates_opt, a.max_updates, file, "max_updates", cfg.max_updates);
  cfg.learning_rate = resolve<double>(a.lr_opt, a.lr, file, "learning_rate", cfg.learning_rate);
  cfg.batch_size = resolve<std::size_t>(a.batch_opt, a.batch_size, file, "batch_size", cfg.batch_size);
  cfg.weight_decay = resolve<double>(a.decay_opt, a.weight_decay, file, "weight_decay", cfg.weight_decay);
  cfg.checkpoint_every =
      resolve<std::int64_t>(a.ckpt_opt, a.checkpoint_every, file, "checkpoint_every", cfg.checkpoint_every);
  cfg.eval_every = resolve<std::int64_t>(a.eval_opt, a.eval_every, file, "eval_every", cfg.eval_every);
  cfg.heldout_fraction =
      resolve<double>(a.heldout_opt, a.heldout_fraction, file, "heldout_fraction", cfg.heldout_fraction);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  RunManifest m;
  m.subcommand = "train";
  m.seed = cfg.seed;
  m.config["model"] = config_to_json(model_config);
  auto& t = m.config["train"];
  t["learning_rate"] = cfg.learning_rate;
  t["batch_size"] = cfg.batch_size;
  t["weight_decay"] = cfg.weight_decay;
  t["max_updates"] = cfg.max_updates;
  t["seed"] = cfg.seed;
  t["objective"] = to_string(cfg.objective);
  t["mask_ratio"] = cfg.mask_ratio;
  t["beta1"] = cfg.beta1;
  t["beta2"] = cfg.beta2;
  t["adam_epsilon"] = cfg.adam_epsilon;
  t["checkpoint_every"] = cfg.checkpoint_every;
  t["eval_every"] = cfg.eval_every;
  t["heldout_fraction"] = cfg.heldout_fraction;
  m.inputs = {{a.instances, digest_path(a.instances)}, {a.model_config, digest_path(a.model_config)}};
  m.outputs = {(out / "model.bin").string(), (out / "trainlog.tsv").string()};
  write_manifest(m, out / "manifest.json");

  const auto result = train(model_config, cfg, a.instances, out);
  const auto& log = result.log;
  std::cout << "train_instances\t" << log.train_instances << "\nheldout_instances\t" << log.heldout_instances
            << "\nskipped_overlength\t" << log.skipped_overlength << "\nvocab\t" << log.vocab_size << '\n';
  if (!log.records.empty()) {
    const auto& last = log.records.back();
    std::cout << "final_update\t" << last.update << "\nloss_repl\t" << format_double(last.loss_repl)
              << "\nloss_mlm\t" << format_double(last.loss_mlm) << "\nacc_heldout\t"
              << format_double(last.acc_heldout) << '\n';
  }
  std::cout << "checkpoint\t" << result.final_checkpoint.string() << '\n';
  return 0;
}

// -------------------------------------------------------------------- probe

struct ProbeArgs {
  std::string kb, templates, checkpoint, scorer = "replacement", out, benchmark_out;
  std::size_t k = 10, per_relation = 1000;
  bool filtered = true;
  std::uint64_t seed = 0;
};

int run_probe(const ProbeArgs& a) {
  const auto paths = kb_paths(a.kb);
  const auto store = load_entities(paths.entities);
  const auto triples = load_triples(paths.triples);
  const auto templates = load_templates(a.templates);
  const auto queries = build_benchmark(triples, templates, store, a.per_relation);
  const Model model = load_checkpoint(a.checkpoint);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  RunManifest m;
  m.subcommand = "probe";
  m.seed = a.seed;
  m.config["scorer"] = a.scorer;
  m.config["k"] = a.k;
  m.config["filtered"] = a.filtered;
  m.config["per_relation"] = a.per_relation;
  m.inputs = {{a.kb, digest_path(a.kb)}, {a.templates, digest_path(a.templates)},
              {a.checkpoint, digest_path(a.checkpoint)}};
  m.outputs = {out.string()};
  if (!a.benchmark_out.empty()) m.outputs.push_back(a.benchmark_out);
  write_manifest(m, sidecar_manifest(out));

  if (!a.benchmark_out.empty()) {
    std::ofstream f(a.benchmark_out, std::ios::binary);
    write_benchmark(queries, f);
  }

  std::map<EntityId, std::vector<std::string>> surfaces;
  for (const auto& q : queries)
    for (const auto& c : q.candidates)
      if (!surfaces.count(c)) surfaces[c] = tokenize(store.get(c).name);

  const ModelMaskedLm masked(model);
  const ModelLeftToRight left_to_right(model);
  CandidateScorer scorer;
  if (a.scorer == "replacement") {
    scorer = [&](const ClozeQuery& q, const EntityId& c) { return score_replacement(model, q.text, surfaces.at(c)); };
  } else if (a.scorer == "masked_avg") {
    scorer = [&](const ClozeQuery& q, const EntityId& c) { return score_masked_avg(masked, q.text, surfaces.at(c)); };
  } else {
    scorer = [&](const ClozeQuery& q, const EntityId& c) {
      return score_first_token(left_to_right, q.text, surfaces.at(c));
    };
  }
  const auto reports = rank_and_hits(queries, scorer, a.k, a.filtered, worker_count());
  emit_report(reports, out);
  std::cout << render_table(reports, a.k);
  return 0;
}

// ----------------------------------------------------------- make-synthetic

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  SyntheticKbConfig kb;
  SyntheticCorpusConfig corpus;
};

int run_make_synthetic(const SynthArgs& a) {
  auto kb_cfg = a.kb;
  kb_cfg.seed = a.seed;
  auto corpus_cfg = a.corpus;
  corpus_cfg.seed = a.seed;
  const auto kb = make_synthetic_kb(kb_cfg);
  const auto docs = make_synthetic_documents(kb, corpus_cfg);
  write_synthetic(kb, docs, a.out);
  ModelConfig model;
  model.layers = 2;
  model.hidden = 64;
  model.heads = 4;
  model.ff_dim = 256;
  model.max_len = 96;
  std::ofstream(fs::path(a.out) / "model_config.json", std::ios::binary) << config_to_json(model).dump(2) << '\n';
  std::cout << "entities\t" << kb.entities.size() << "\ntriples\t" << kb.triples.size() << "\ndocuments\t"
            << docs.size() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-replacement pretraining toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest-kb", "Validate and index a knowledge store");
  ingest_cmd->add_option("--entities", ingest.entities, "Entities JSON Lines file")->required();
  ingest_cmd->add_option("--triples", ingest.triples, "Triples TSV file")->required();
  ingest_cmd->add_option("--out", ingest.out, "Output directory")->required();

  CorpusArgs corpus;
  auto* corpus_cmd = app.add_subcommand("build-corpus", "Build entity-replacement training instances");
  corpus_cmd->add_option("--docs", corpus.docs, "Documents JSON Lines file")->required();
  corpus_cmd->add_option("--kb", corpus.kb, "Directory written by ingest-kb")->required();
  corpus_cmd->add_option("--out", corpus.out, "Instances JSON Lines output")->required();
  corpus_cmd->add_option("--config", corpus.config, "JSON config file");
  corpus.seed_opt = corpus_cmd->add_option("--seed", corpus.seed, "Random seed");
  corpus.chunk_opt = corpus_cmd->add_option("--chunk-size", corpus.chunk_size, "Tokens per chunk")->capture_default_str();
  corpus.replicas_opt =
      corpus_cmd->add_option("--replicas", corpus.replicas, "Corrupted copies per chunk")->capture_default_str();
  corpus.mask_opt = corpus_cmd->add_option("--mask-ratio", corpus.mask_ratio, "Masking ratio")->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the encoder");
  train_cmd->add_option("--instances", tr.instances, "Instances JSON Lines file")->required();
  train_cmd->add_option("--model-config", tr.model_config, "Model config JSON")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--config", tr.config, "Training config JSON");
  tr.seed_opt = train_cmd->add_option("--seed", tr.seed, "Random seed");
  tr.objective_opt = train_cmd->add_option("--objective", tr.objective, "joint|replacement_only|mlm_only")
                         ->check(CLI::IsMember({"joint", "replacement_only", "mlm_only"}));
  tr.mask_opt = train_cmd->add_option("--mask-ratio", tr.mask_ratio, "Masking ratio");
  tr.updates_opt = train_cmd->add_option("--max-updates", tr.max_updates, "Number of optimizer updates");
  tr.lr_opt = train_cmd->add_option("--lr", tr.lr, "Learning rate");
  tr.batch_opt = train_cmd->add_option("--batch-size", tr.batch_size, "Instances per update");
  tr.decay_opt = train_cmd->add_option("--weight-decay", tr.weight_decay, "Decoupled weight decay");
  tr.ckpt_opt = train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Checkpoint interval (0: final only)");
  tr.eval_opt = train_cmd->add_option("--eval-every", tr.eval_every, "Accuracy evaluation interval");
  tr.heldout_opt = train_cmd->add_option("--heldout-fraction", tr.heldout_fraction, "Fraction held out for accuracy");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Zero-shot fact completion");
  probe_cmd->add_option("--kb", probe.kb, "Directory written by ingest-kb")->required();
  probe_cmd->add_option("--templates", probe.templates, "Templates JSON")->required();
  probe_cmd->add_option("--checkpoint", probe.checkpoint, "Model checkpoint")->required();
  probe_cmd->add_option("--scorer", probe.scorer, "replacement|masked_avg|first_token")
      ->check(CLI::IsMember({"replacement", "masked_avg", "first_token"}))
      ->capture_default_str();
  probe_cmd->add_option("--k", probe.k, "Cutoff for Hits@k")->capture_default_str();
  probe_cmd->add_option("--filtered", probe.filtered, "Filter other gold answers")->capture_default_str();
  probe_cmd->add_option("--per-relation", probe.per_relation, "Queries per relation")->capture_default_str();
  probe_cmd->add_option("--seed", probe.seed, "Recorded in the manifest");
  probe_cmd->add_option("--benchmark-out", probe.benchmark_out, "Write the cloze queries as JSON Lines");
  probe_cmd->add_option("--out", probe.out, "Report TSV output")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("make-synthetic", "Write a toy KB, templates and documents");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("--types", synth.kb.types)->capture_default_str();
  synth_cmd->add_option("--entities-per-type", synth.kb.entities_per_type)->capture_default_str();
  synth_cmd->add_option("--relations", synth.kb.relations)->capture_default_str();
  synth_cmd->add_option("--documents", synth.corpus.documents)->capture_default_str();
  synth_cmd->add_option("--min-facts", synth.corpus.min_facts)->capture_default_str();
  synth_cmd->add_option("--max-facts", synth.corpus.max_facts)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest);
    if (*corpus_cmd) return run_build_corpus(corpus);
    if (*train_cmd) return run_train(tr);
    if (*probe_cmd) return run_probe(probe);
    if (*synth_cmd) return run_make_synthetic(synth);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
