// Command-line front end: binds the library into reproducible workflows.
// Every subcommand reads an optional JSON config file (per-subcommand
// sections, flags win), writes its artifacts into an output directory named
// by the hash of the effective configuration, and exits with a categorized
// code: 0 ok, 1 usage, 2 I/O, 3 data validation, 4 numeric.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "remember/corpus.hpp"
#include "remember/encoder.hpp"
#include "remember/errors.hpp"
#include "remember/evalharness.hpp"
#include "remember/evidence.hpp"
#include "remember/fsio.hpp"
#include "remember/labels.hpp"
#include "remember/numerics.hpp"
#include "remember/report.hpp"
#include "remember/retrieval.hpp"
#include "remember/zeroshot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace remember;

namespace {

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash8(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return std::string(buf, 8);
}

std::string now_utc_iso8601() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data().begin(), v.data().end());
}

ordered_json bundle_json(const MetricsBundle& b) {
  ordered_json j;
  j["accuracy"] = b.accuracy;
  j["macro_precision"] = b.macro_precision;
  j["macro_recall"] = b.macro_recall;
  j["macro_f1"] = b.macro_f1;
  j["macro_specificity"] = b.macro_specificity;
  return j;
}

void write_json_file(const fs::path& path, const ordered_json& j) {
  write_file(path, j.dump(2) + "\n");
  std::printf("wrote %s\n", path.string().c_str());
}

void write_text_file(const fs::path& path, std::string_view content) {
  write_file(path, content);
  std::printf("wrote %s\n", path.string().c_str());
}

// Loads a corpus given its manifest path; the blob defaults to the manifest
// path with a .blob extension.
Corpus load_corpus_arg(const std::string& manifest, const std::string& blob) {
  if (manifest.empty()) throw ConfigError("a corpus manifest path is required (--corpus)");
  fs::path m = manifest;
  fs::path b = blob.empty() ? fs::path(m).replace_extension(".blob") : fs::path(blob);
  std::vector<std::string> warnings;
  Corpus corpus = load_index(m, b, &warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return corpus;
}

// ---------------------------------------------------------------------------
// Per-subcommand plumbing: config file merge, effective-config manifest,
// hash-named run directory.
// ---------------------------------------------------------------------------

struct RunContext {
  CLI::App* cmd = nullptr;
  std::string name;
  std::string config_path;
  std::string output_root;
  std::vector<std::string> keys;
  std::vector<std::function<void(const json&)>> appliers;
  std::vector<std::function<void(ordered_json&)>> reporters;
  fs::path run_dir;

  void init(CLI::App& app, std::string sub_name, const std::string& desc) {
    name = std::move(sub_name);
    cmd = app.add_subcommand(name, desc);
    cmd->option_defaults()->always_capture_default();
    cmd->add_option("--config", config_path,
                    "JSON config file; the '" + name + "' section supplies defaults, flags win");
    CLI::Option* root_opt = cmd->add_option(
        "--output-dir", output_root,
        "Output root (default: $REMEMBER_OUTPUT_DIR, else ./runs); artifacts land in "
        "<root>/" + name + "-<confighash>/");
    appliers.push_back([this, root_opt](const json& section) {
      if (root_opt->count() == 0 && section.contains("output-dir")) {
        output_root = section.at("output-dir").get<std::string>();
      }
    });
    keys.push_back("output-dir");
  }

  static std::string key_of(const std::string& flag_spec) {
    std::size_t start = 0;
    while (start < flag_spec.size()) {
      std::size_t end = flag_spec.find(',', start);
      std::string token = flag_spec.substr(start, end == std::string::npos ? end : end - start);
      if (token.rfind("--", 0) == 0) return token.substr(2);
      start = end == std::string::npos ? flag_spec.size() : end + 1;
    }
    throw ConfigError("option spec '" + flag_spec + "' has no long name");
  }

  template <typename T>
  CLI::Option* opt(const std::string& flag_spec, T& var, const std::string& desc) {
    CLI::Option* o = cmd->add_option(flag_spec, var, desc);
    bind(flag_spec, o, var);
    return o;
  }

  template <typename T>
  CLI::Option* flag(const std::string& flag_spec, T& var, const std::string& desc) {
    CLI::Option* o = cmd->add_flag(flag_spec, var, desc);
    bind(flag_spec, o, var);
    return o;
  }

  template <typename T>
  void bind(const std::string& flag_spec, CLI::Option* o, T& var) {
    const std::string key = key_of(flag_spec);
    keys.push_back(key);
    appliers.push_back([key, o, &var](const json& section) {
      if (o->count() == 0 && section.contains(key)) var = section.at(key).get<T>();
    });
    reporters.push_back([key, &var](ordered_json& out) { out[key] = var; });
  }

  // Merges file values under flags, writes run-config.json into the run
  // directory named by the hash of the effective configuration.
  void prepare() {
    json section = json::object();
    if (!config_path.empty()) {
      json doc = json::parse(read_file(config_path));
      if (!doc.is_object()) throw LoadError("config file: top level must be a JSON object");
      if (doc.contains(name)) {
        section = doc.at(name);
        if (!section.is_object()) {
          throw LoadError("config file: section '" + name + "' must be a JSON object");
        }
      }
    }
    for (const auto& apply : appliers) apply(section);
    for (const auto& item : section.items()) {
      if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
        std::fprintf(stderr, "warning: config section '%s' has unknown key '%s'\n", name.c_str(),
                     item.key().c_str());
      }
    }
    ordered_json manifest;
    manifest["command"] = name;
    for (const auto& report : reporters) report(manifest);
    run_dir = root() / (name + "-" + hash8(manifest.dump()));
    fs::create_directories(run_dir);
    write_file(run_dir / "run-config.json", manifest.dump(2) + "\n");
    std::printf("run dir: %s\n", run_dir.string().c_str());
  }

  fs::path root() const {
    if (!output_root.empty()) return output_root;
    if (const char* env = std::getenv("REMEMBER_OUTPUT_DIR"); env != nullptr && *env != '\0') {
      return env;
    }
    return "runs";
  }
};

using Ctx = std::shared_ptr<RunContext>;

Ctx make_ctx(CLI::App& app, const std::string& name, const std::string& desc) {
  auto ctx = std::make_shared<RunContext>();
  ctx->init(app, name, desc);
  return ctx;
}

// ---------------------------------------------------------------------------
// gen-synth
// ---------------------------------------------------------------------------

struct GenSynthParams {
  int classes = 4;
  int per_class = 50;
  int dim = 512;
  double separation = 6.0;
  double sigma = 1.0;
  std::string id_prefix = "synth";
  std::uint64_t seed = 0;
};

void run_gen_synth(const GenSynthParams& p, const fs::path& dir) {
  SyntheticSpec spec;
  spec.n_classes = p.classes;
  spec.n_per_class = p.per_class;
  spec.dim = p.dim;
  spec.cluster_separation = p.separation;
  spec.noise_sigma = p.sigma;
  spec.seed = p.seed;
  spec.id_prefix = p.id_prefix;
  Corpus corpus = generate_synthetic(spec);
  save_index(corpus, dir / "corpus.json", dir / "corpus.blob");
  std::printf("wrote %s\n", (dir / "corpus.json").string().c_str());
  std::printf("wrote %s\n", (dir / "corpus.blob").string().c_str());
  std::printf("%zu cases, dim %zu, %zu anchor sets\n", corpus.size(), corpus.dim(),
              corpus.anchors().size());
}

void setup_gen_synth(CLI::App& app) {
  auto ctx = make_ctx(app, "gen-synth",
                      "Generate a synthetic clustered reference corpus (manifest + blob)");
  auto p = std::make_shared<GenSynthParams>();
  ctx->opt("--classes", p->classes, "Number of label classes");
  ctx->opt("--per-class", p->per_class, "Cases per class");
  ctx->opt("--dim", p->dim, "Embedding width");
  ctx->opt("--separation", p->separation, "Cluster separation in sigma units");
  ctx->opt("--sigma", p->sigma, "Noise standard deviation");
  ctx->opt("--id-prefix", p->id_prefix, "Case id prefix");
  ctx->opt("--seed", p->seed, "RNG seed");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_gen_synth(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// build-index
// ---------------------------------------------------------------------------

struct BuildIndexParams {
  std::string input;
};

void run_build_index(const BuildIndexParams& p, const fs::path& dir) {
  if (p.input.empty()) throw ConfigError("build-index needs --input <cases.json>");
  json doc = json::parse(read_file(p.input));
  const std::size_t dim = doc.at("dim").get<std::size_t>();
  std::vector<ReferenceCase> cases;
  for (const auto& c : doc.at("cases")) {
    ReferenceCase ref;
    ref.id = c.at("id").get<std::string>();
    ref.abnormality = abnormality_from_string(c.at("abnormality").get<std::string>());
    ref.dementia = dementia_from_string(c.at("dementia").get<std::string>());
    ref.description = c.value("description", "");
    ref.image_embedding = Vector(c.at("image_embedding").get<std::vector<double>>());
    ref.abn_embedding = Vector(c.at("abn_embedding").get<std::vector<double>>());
    ref.dx_embedding = Vector(c.at("dx_embedding").get<std::vector<double>>());
    ref.desc_embedding = Vector(c.at("desc_embedding").get<std::vector<double>>());
    cases.push_back(std::move(ref));
  }
  std::vector<AnchorSet> anchor_sets;
  if (doc.contains("anchors")) {
    for (const auto& a : doc.at("anchors")) {
      AnchorSet set;
      set.task = task_from_string(a.at("task").get<std::string>());
      set.classes = a.at("classes").get<std::vector<std::string>>();
      for (const auto& vec : a.at("anchors")) {
        set.anchors.emplace_back(vec.get<std::vector<double>>());
      }
      anchor_sets.push_back(std::move(set));
    }
  }
  Corpus corpus(dim, std::move(cases), std::move(anchor_sets), doc.value("provenance", ""));
  save_index(corpus, dir / "corpus.json", dir / "corpus.blob");
  std::printf("wrote %s\n", (dir / "corpus.json").string().c_str());
  std::printf("wrote %s\n", (dir / "corpus.blob").string().c_str());
  std::printf("%zu cases, dim %zu, %zu anchor sets\n", corpus.size(), corpus.dim(),
              corpus.anchors().size());
}

void setup_build_index(CLI::App& app) {
  auto ctx = make_ctx(app, "build-index",
                      "Repackage a JSON document of embedded cases into the manifest+blob index");
  auto p = std::make_shared<BuildIndexParams>();
  ctx->opt("--input", p->input, "Cases JSON: {dim, provenance?, cases[], anchors[]?}");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_build_index(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// train-encoder
// ---------------------------------------------------------------------------

struct TrainEncoderParams {
  int classes = 4;
  int per_class = 50;
  int eval_per_class = 13;
  int dim = 512;
  double separation = 6.0;
  double sigma = 1.0;
  double modality_sigma = 0.1;
  double tau = 0.07;
  double lr = 5e-5;
  int batch = 16;
  int epochs = 10;
  bool symmetric = true;
  std::string init = "identity";
  std::uint64_t seed = 0;
};

void run_train_encoder(const TrainEncoderParams& p, const fs::path& dir) {
  SyntheticPairSpec spec;
  spec.n_classes = p.classes;
  spec.n_train_per_class = p.per_class;
  spec.n_eval_per_class = p.eval_per_class;
  spec.dim = p.dim;
  spec.cluster_separation = p.separation;
  spec.noise_sigma = p.sigma;
  spec.modality_sigma = p.modality_sigma;
  spec.seed = p.seed;
  PairDataset data = generate_synthetic_pairs(spec);

  EncoderInit init;
  if (p.init == "identity") init = EncoderInit::IdentityAligned;
  else if (p.init == "kaiming") init = EncoderInit::KaimingUniform;
  else throw ConfigError("--init must be 'identity' or 'kaiming'");

  RngStream init_rng = RngStream(p.seed).child(3);
  ToyDualEncoder encoder = make_encoder(static_cast<std::size_t>(p.dim),
                                        static_cast<std::size_t>(p.dim),
                                        static_cast<std::size_t>(p.dim), p.tau, init, init_rng);
  EncoderTrainConfig config;
  config.lr = p.lr;
  config.batch_size = p.batch;
  config.epochs = p.epochs;
  config.symmetric = p.symmetric;
  config.seed = p.seed;
  EncoderTrainHistory history = train_contrastive(encoder, data.train, config);
  const double retrieval = matched_text_retrieval_accuracy(encoder, data.eval);

  save_encoder(encoder, dir / "encoder.json");
  std::printf("wrote %s\n", (dir / "encoder.json").string().c_str());
  ordered_json h;
  h["initial_loss"] = history.initial_loss;
  h["final_loss"] = history.final_loss;
  h["epoch_mean_loss"] = history.epoch_mean_loss;
  h["eval_matched_text_top1"] = retrieval;
  write_json_file(dir / "history.json", h);
  std::printf("loss %.6f -> %.6f, eval matched-text top-1 %.4f\n", history.initial_loss,
              history.final_loss, retrieval);
}

void setup_train_encoder(CLI::App& app) {
  auto ctx = make_ctx(app, "train-encoder",
                      "Train the toy dual encoder contrastively on synthetic pairs");
  auto p = std::make_shared<TrainEncoderParams>();
  ctx->opt("--classes", p->classes, "Number of latent classes");
  ctx->opt("--per-class", p->per_class, "Training pairs per class");
  ctx->opt("--eval-per-class", p->eval_per_class, "Held-out pairs per class");
  ctx->opt("--dim", p->dim, "Feature and embedding width");
  ctx->opt("--separation", p->separation, "Cluster separation in sigma units");
  ctx->opt("--sigma", p->sigma, "Latent noise standard deviation");
  ctx->opt("--modality-sigma", p->modality_sigma, "Per-modality view noise");
  ctx->opt("--tau", p->tau, "Contrastive softmax temperature");
  ctx->opt("--lr", p->lr, "Adam learning rate");
  ctx->opt("--batch", p->batch, "Contrastive batch size");
  ctx->opt("--epochs", p->epochs, "Training epochs");
  ctx->flag("--symmetric,!--one-directional", p->symmetric,
            "Average both directions of the contrastive loss (--one-directional keeps "
            "image-to-text only)");
  ctx->opt("--init", p->init, "Projection init: identity | kaiming")
      ->check(CLI::IsMember({"identity", "kaiming"}));
  ctx->opt("--seed", p->seed, "RNG seed");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_train_encoder(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// train-head
// ---------------------------------------------------------------------------

struct TrainHeadParams {
  std::string corpus;
  std::string blob;
  std::string task = "abnormality";
  int k = 3;
  int hidden = 256;
  double lr = 5e-5;
  int batch = 4;
  int max_epochs = 100;
  int patience = 5;
  double min_delta = 1e-4;
  double train_fraction = 0.75;
  bool drop_image = false;
  bool drop_abn = false;
  bool drop_dx = false;
  bool drop_desc = false;
  bool no_sim_weight = false;
  bool no_attention = false;
  bool drop_all_evidence = false;
  std::uint64_t seed = 0;
};

AblationMask mask_of(const TrainHeadParams& p) {
  AblationMask mask;
  mask.drop_image = p.drop_image;
  mask.drop_abn = p.drop_abn;
  mask.drop_dx = p.drop_dx;
  mask.drop_desc = p.drop_desc;
  mask.disable_similarity_weighting = p.no_sim_weight;
  mask.disable_attention = p.no_attention;
  mask.drop_all_evidence = p.drop_all_evidence;
  return mask;
}

void add_mask_flags(RunContext& ctx, TrainHeadParams& p) {
  ctx.flag("--drop-image", p.drop_image, "Zero the image modality in evidence vectors");
  ctx.flag("--drop-abn", p.drop_abn, "Zero the abnormality-text modality");
  ctx.flag("--drop-dx", p.drop_dx, "Zero the diagnosis-text modality");
  ctx.flag("--drop-desc", p.drop_desc, "Zero the description-text modality");
  ctx.flag("--no-sim-weight", p.no_sim_weight, "Disable similarity weighting of evidence");
  ctx.flag("--no-attention", p.no_attention, "Concatenate evidence instead of attending");
  ctx.flag("--drop-all-evidence", p.drop_all_evidence, "Query-only model (no evidence at all)");
}

void run_train_head(const TrainHeadParams& p, const fs::path& dir) {
  Corpus pool = load_corpus_arg(p.corpus, p.blob);
  const Task task = task_from_string(p.task);
  const int n_classes = task_arity(task);
  auto examples = corpus_queries(pool, pool, task, static_cast<std::size_t>(p.k),
                                 /*exclude_self=*/true);
  RngStream run_rng(p.seed);
  RngStream split_rng = run_rng.child(2);
  PoolSplit split = split_for_eval(examples, n_classes, p.train_fraction, split_rng);
  RngStream init_rng = run_rng.child(3);
  EvidenceModel model = make_model(pool.dim(), static_cast<std::size_t>(p.k), n_classes, p.hidden,
                                   task, mask_of(p), init_rng);
  HeadTrainConfig config;
  config.lr = p.lr;
  config.batch_size = p.batch;
  config.max_epochs = p.max_epochs;
  config.patience = p.patience;
  config.min_delta = p.min_delta;
  config.seed = p.seed;
  HeadTrainHistory history = train_head(model, split.train, split.val, pool, config);
  for (const auto& w : history.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  save_model(model, dir / "model.json");
  std::printf("wrote %s\n", (dir / "model.json").string().c_str());
  MetricsBundle val = evaluate_model(model, split.val, pool);
  ordered_json h;
  h["train_loss"] = history.train_loss;
  h["val_loss"] = history.val_loss;
  h["best_epoch"] = history.best_epoch;
  h["stopped_early"] = history.stopped_early;
  h["warnings"] = history.warnings;
  h["n_train"] = split.train.size();
  h["n_val"] = split.val.size();
  h["val_metrics"] = bundle_json(val);
  write_json_file(dir / "history.json", h);
  std::printf("epochs %zu, best %d, stopped early: %s, val macro-F1 %.4f\n",
              history.val_loss.size(), history.best_epoch,
              history.stopped_early ? "yes" : "no", val.macro_f1);
}

void setup_train_head(CLI::App& app) {
  auto ctx = make_ctx(app, "train-head",
                      "Train the evidence encoder + attention inference head on a corpus");
  auto p = std::make_shared<TrainHeadParams>();
  ctx->opt("--corpus", p->corpus, "Corpus manifest path");
  ctx->opt("--blob", p->blob, "Corpus blob path (default: manifest with .blob)");
  ctx->opt("--task", p->task, "Classification task")
      ->check(CLI::IsMember({"abnormality", "binary", "type"}));
  ctx->opt("--k", p->k, "Retrieval depth");
  ctx->opt("--hidden", p->hidden, "MLP hidden width");
  ctx->opt("--lr", p->lr, "Adam learning rate");
  ctx->opt("--batch", p->batch, "Batch size");
  ctx->opt("--max-epochs", p->max_epochs, "Maximum training epochs");
  ctx->opt("--patience", p->patience, "Early-stopping patience (validation epochs)");
  ctx->opt("--min-delta", p->min_delta, "Minimum validation-loss drop that resets patience");
  ctx->opt("--train-fraction", p->train_fraction, "Per-class fraction of the pool used to train");
  add_mask_flags(*ctx, *p);
  ctx->opt("--seed", p->seed, "RNG seed");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_train_head(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// zeroshot
// ---------------------------------------------------------------------------

struct ZeroshotParams {
  std::string corpus;
  std::string blob;
  std::string task = "all";
  std::string query;
};

ordered_json zs_json(const ZeroShotResult& r) {
  ordered_json j;
  j["label"] = r.classes[static_cast<std::size_t>(r.predicted)];
  j["sims"] = to_std(r.sims);
  j["probs"] = to_std(r.probs);
  return j;
}

ordered_json bin_json(const BinaryResult& b) {
  ordered_json j;
  j["label"] = std::string(binary_label_name(b.predicted));
  j["p_dementia"] = b.p_dementia;
  return j;
}

void run_zeroshot(const ZeroshotParams& p, const fs::path& dir) {
  Corpus corpus = load_corpus_arg(p.corpus, p.blob);
  std::vector<const ReferenceCase*> targets;
  if (!p.query.empty()) {
    targets.push_back(&corpus.by_id(p.query));
  } else {
    for (const auto& c : corpus.cases()) targets.push_back(&c);
  }
  ordered_json results = ordered_json::array();
  for (const ReferenceCase* c : targets) {
    ordered_json row;
    row["id"] = c->id;
    if (p.task == "all") {
      MultiTaskResult r = predict_all(c->image_embedding, corpus);
      row["abnormality"] = zs_json(r.abnormality);
      row["binary"] = bin_json(r.binary);
      row["dementia_type"] = zs_json(r.dementia_type);
      row["severity"] = zs_json(r.severity);
    } else if (p.task == "binary") {
      const AnchorSet* anchors = corpus.find_anchors(Task::Abnormality);
      if (anchors == nullptr) {
        throw ConfigError("corpus has no abnormality anchors (needed to derive the binary call)");
      }
      row["binary"] = bin_json(binary_from_abnormality(classify(c->image_embedding, *anchors)));
    } else {
      const Task t = task_from_string(p.task);
      const AnchorSet* anchors = corpus.find_anchors(t);
      if (anchors == nullptr) {
        throw ConfigError("corpus has no anchor set for task '" + p.task + "'");
      }
      row[p.task] = zs_json(classify(c->image_embedding, *anchors));
    }
    results.push_back(std::move(row));
  }
  ordered_json out;
  out["task"] = p.task;
  out["n"] = results.size();
  out["results"] = std::move(results);
  write_json_file(dir / "zeroshot.json", out);
}

void setup_zeroshot(CLI::App& app) {
  auto ctx = make_ctx(app, "zeroshot",
                      "Anchor-similarity classification of corpus cases (no trained head)");
  auto p = std::make_shared<ZeroshotParams>();
  ctx->opt("--corpus", p->corpus, "Corpus manifest path");
  ctx->opt("--blob", p->blob, "Corpus blob path (default: manifest with .blob)");
  ctx->opt("--task", p->task, "Task to classify")
      ->check(CLI::IsMember({"abnormality", "binary", "type", "severity", "all"}));
  ctx->opt("--query", p->query, "Classify only this case id (default: every case)");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_zeroshot(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferParams {
  std::string corpus;
  std::string blob;
  std::string query;
  std::string query_file;
  std::string model;
  int k = 3;
  std::string corpus_id;
  std::string encoder_id;
  std::string timestamp;
};

void run_infer(const InferParams& p, const fs::path& dir) {
  Corpus corpus = load_corpus_arg(p.corpus, p.blob);
  if (p.query.empty() == p.query_file.empty()) {
    throw ConfigError("infer needs exactly one of --query <case-id> or --query-file <json>");
  }
  Vector query;
  std::string exclude;
  if (!p.query.empty()) {
    query = corpus.by_id(p.query).image_embedding;
    exclude = p.query;
  } else {
    json doc = json::parse(read_file(p.query_file));
    const json& arr = doc.is_array() ? doc : doc.at("embedding");
    query = Vector(arr.get<std::vector<double>>());
  }

  bool truncated = false;
  std::vector<RetrievalHit> hits =
      top_k(query, corpus, static_cast<std::size_t>(p.k), &truncated,
            exclude.empty() ? nullptr : &exclude);
  if (truncated) {
    std::fprintf(stderr, "warning: corpus smaller than k, returning %zu hits\n", hits.size());
  }
  MultiTaskResult zero_shot = predict_all(query, corpus);

  Vector alpha;
  bool have_model = !p.model.empty();
  EvidenceModel model;
  PredictResult head_out;
  if (have_model) {
    model = load_model(p.model);
    if (model.dim != corpus.dim()) {
      throw ShapeError("model was trained at dim " + std::to_string(model.dim) +
                       " but the corpus is dim " + std::to_string(corpus.dim()));
    }
    Matrix evidence = build_evidence_matrix(hits, corpus, model.encoder, model.mask);
    head_out = predict(query, evidence, model);
    alpha = head_out.alpha;
  } else {
    alpha = Vector(hits.size(), hits.empty() ? 0.0 : 1.0 / static_cast<double>(hits.size()));
  }

  ReportMetadata meta;
  meta.corpus_id = !p.corpus_id.empty() ? p.corpus_id
                   : !corpus.provenance().empty() ? corpus.provenance()
                                                  : fs::path(p.corpus).stem().string();
  meta.encoder_id = !p.encoder_id.empty() ? p.encoder_id
                    : have_model ? fs::path(p.model).stem().string()
                                 : "none";
  meta.k = static_cast<std::size_t>(p.k);
  meta.generated_at = p.timestamp.empty() ? now_utc_iso8601() : p.timestamp;

  DiagnosticReport report = assemble(zero_shot, hits, alpha, corpus, meta);
  if (have_model) {
    apply_head_prediction(report, task_prediction_from_head(model.task, head_out));
  }
  const std::string text = render_text(report);
  write_text_file(dir / "report.txt", text);
  write_text_file(dir / "report.json", render_json(report));
  std::fputs(text.c_str(), stdout);
}

void setup_infer(CLI::App& app) {
  auto ctx = make_ctx(app, "infer",
                      "Full pipeline on one query: retrieve, classify, attend, report");
  auto p = std::make_shared<InferParams>();
  ctx->opt("--corpus", p->corpus, "Corpus manifest path");
  ctx->opt("--blob", p->blob, "Corpus blob path (default: manifest with .blob)");
  ctx->opt("--query", p->query, "Query case id from the corpus (its own entry is excluded)");
  ctx->opt("--query-file", p->query_file, "JSON file with the query embedding");
  ctx->opt("--model", p->model, "Trained evidence-model checkpoint (alpha comes from it)");
  ctx->opt("--k", p->k, "Retrieval depth");
  ctx->opt("--corpus-id", p->corpus_id, "Corpus name for the report footer");
  ctx->opt("--encoder-id", p->encoder_id, "Encoder name for the report footer");
  ctx->opt("--timestamp", p->timestamp, "Fixed generated_at value (default: current UTC time)");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_infer(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportParams {
  std::string input;
  std::string format = "both";
};

void run_report(const ReportParams& p, const fs::path& dir) {
  if (p.input.empty()) throw ConfigError("report needs --input <report.json>");
  const std::string text = read_file(p.input);
  std::vector<std::string> problems = validate_report_json(text);
  if (!problems.empty()) {
    for (const auto& msg : problems) std::fprintf(stderr, "schema: %s\n", msg.c_str());
    throw DomainError("report document violates the schema (" + std::to_string(problems.size()) +
                      " problem(s))");
  }
  DiagnosticReport report = parse_report_json(text);
  if (p.format == "text" || p.format == "both") {
    const std::string rendered = render_text(report);
    write_text_file(dir / "report.txt", rendered);
    std::fputs(rendered.c_str(), stdout);
  }
  if (p.format == "json" || p.format == "both") {
    write_text_file(dir / "report.json", render_json(report));
  }
}

void setup_report(CLI::App& app) {
  auto ctx = make_ctx(app, "report",
                      "Validate a report JSON document and re-render it (text and/or JSON)");
  auto p = std::make_shared<ReportParams>();
  ctx->opt("--input", p->input, "Existing report JSON document");
  ctx->opt("--format", p->format, "Output rendering")
      ->check(CLI::IsMember({"text", "json", "both"}));
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_report(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalParams {
  std::string corpus;
  std::string blob;
  std::string references;
  std::string ref_blob;
  std::string model;
  std::string task = "abnormality";
  int k = 3;
  bool retrieval_stats = false;
  int k_max = 5;
};

ordered_json stratum_json(const StratumStats& s) {
  ordered_json j;
  j["count"] = s.count;
  j["mean"] = s.mean;
  j["stddev"] = s.stddev;
  j["min"] = s.min;
  j["max"] = s.max;
  return j;
}

void run_eval(const EvalParams& p, const fs::path& dir) {
  Corpus queries = load_corpus_arg(p.corpus, p.blob);
  const bool self_refs = p.references.empty();
  Corpus refs = self_refs ? Corpus() : load_corpus_arg(p.references, p.ref_blob);
  const Corpus& references = self_refs ? queries : refs;

  ordered_json out;
  out["n_queries"] = queries.size();
  if (!p.model.empty()) {
    EvidenceModel model = load_model(p.model);
    auto examples = corpus_queries(queries, references, model.task, model.k, self_refs);
    MetricsBundle metrics = evaluate_model(model, examples, references);
    out["mode"] = "model";
    out["task"] = std::string(to_string(model.task));
    out["k"] = model.k;
    out["metrics"] = bundle_json(metrics);
    std::printf("task %s: accuracy %.4f, macro-F1 %.4f\n", std::string(to_string(model.task)).c_str(),
                metrics.accuracy, metrics.macro_f1);
  } else {
    const Task task = task_from_string(p.task);
    const AnchorSet* anchors =
        references.find_anchors(task == Task::BinaryDementia ? Task::Abnormality : task);
    if (anchors == nullptr) {
      throw ConfigError("reference corpus has no anchor set for task '" + p.task + "'");
    }
    std::vector<int> truths, preds;
    for (const auto& c : queries.cases()) {
      truths.push_back(task_label(c, task));
      ZeroShotResult r = classify(c.image_embedding, *anchors);
      preds.push_back(task == Task::BinaryDementia ? binary_from_abnormality(r).predicted
                                                   : r.predicted);
    }
    MetricsBundle metrics = task == Task::BinaryDementia
                                ? compute_binary_metrics(truths, preds)
                                : compute_metrics(truths, preds, task_arity(task));
    out["mode"] = "zero-shot";
    out["task"] = p.task;
    out["metrics"] = bundle_json(metrics);
    std::printf("task %s: accuracy %.4f, macro-F1 %.4f\n", p.task.c_str(), metrics.accuracy,
                metrics.macro_f1);
  }

  if (p.retrieval_stats) {
    ConsistencyCurve curve = retrieval_consistency(references, queries, p.k_max, self_refs);
    ordered_json points = ordered_json::array();
    for (const auto& point : curve.points) {
      ordered_json pj;
      pj["k"] = point.k;
      pj["abnormality"] = bundle_json(point.abnormality);
      pj["dementia"] = bundle_json(point.dementia);
      points.push_back(std::move(pj));
    }
    out["retrieval_consistency"] = std::move(points);
    const Task dist_task =
        task_from_string(p.task) == Task::Severity ? Task::Abnormality : task_from_string(p.task);
    SimilarityDistribution dist = similarity_distribution(
        references, queries, dist_task, static_cast<std::size_t>(p.k), self_refs);
    ordered_json dj;
    dj["label_task"] = std::string(to_string(dist.label_task));
    dj["k"] = dist.k;
    dj["match"] = stratum_json(dist.match);
    dj["mismatch"] = stratum_json(dist.mismatch);
    out["similarity"] = std::move(dj);
    write_text_file(dir / "similarity.csv", similarity_csv(dist));
  }
  write_json_file(dir / "metrics.json", out);
}

void setup_eval(CLI::App& app) {
  auto ctx = make_ctx(app, "eval",
                      "Score a corpus of labeled queries (zero-shot or with a trained model)");
  auto p = std::make_shared<EvalParams>();
  ctx->opt("--corpus", p->corpus, "Query corpus manifest path");
  ctx->opt("--blob", p->blob, "Query corpus blob path");
  ctx->opt("--references", p->references,
           "Reference corpus manifest (default: the query corpus itself, self excluded)");
  ctx->opt("--ref-blob", p->ref_blob, "Reference corpus blob path");
  ctx->opt("--model", p->model, "Trained evidence-model checkpoint (omit for zero-shot)");
  ctx->opt("--task", p->task, "Task to score (zero-shot mode; a model brings its own task)")
      ->check(CLI::IsMember({"abnormality", "binary", "type"}));
  ctx->opt("--k", p->k, "Retrieval depth for similarity stats");
  ctx->flag("--retrieval-stats", p->retrieval_stats,
            "Also emit label-consistency curves and the similarity distribution CSV");
  ctx->opt("--k-max", p->k_max, "Largest k for the consistency curve");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_eval(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// fewshot
// ---------------------------------------------------------------------------

struct FewshotParams {
  std::string corpus;
  std::string blob;
  std::string test_corpus;
  std::string test_blob;
  std::string task = "abnormality";
  std::vector<int> ks = {5, 10, 20, 50, 100};
  int runs = 10;
  int k = 3;
  double train_fraction = 0.75;
  int hidden = 256;
  double lr = 5e-5;
  int batch = 4;
  int max_epochs = 100;
  int patience = 5;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
};

void run_fewshot(const FewshotParams& p, const fs::path& dir) {
  Corpus pool = load_corpus_arg(p.corpus, p.blob);
  if (p.test_corpus.empty()) throw ConfigError("fewshot needs --test-corpus <manifest>");
  Corpus test_c = load_corpus_arg(p.test_corpus, p.test_blob);
  const Task task = task_from_string(p.task);
  std::vector<LabeledQuery> test = labeled_queries(test_c, task);

  FewShotConfig config;
  config.ks = p.ks;
  config.runs = p.runs;
  config.retrieval_k = static_cast<std::size_t>(p.k);
  config.train_fraction = p.train_fraction;
  config.hidden = p.hidden;
  config.train.lr = p.lr;
  config.train.batch_size = p.batch;
  config.train.max_epochs = p.max_epochs;
  config.train.patience = p.patience;
  config.train.min_delta = p.min_delta;
  config.seed = p.seed;
  FewShotReport report = few_shot(pool, test, task, config);

  ordered_json cells = ordered_json::array();
  for (const auto& cell : report.cells) {
    ordered_json cj;
    cj["k_shots"] = cell.k_shots;
    cj["mean"] = bundle_json(cell.mean);
    cj["stddev"] = bundle_json(cell.stddev);
    ordered_json runs = ordered_json::array();
    for (const auto& run : cell.runs) runs.push_back(bundle_json(run));
    cj["runs"] = std::move(runs);
    cells.push_back(std::move(cj));
    std::printf("k=%-4d macro-F1 %.4f +- %.4f\n", cell.k_shots, cell.mean.macro_f1,
                cell.stddev.macro_f1);
  }
  ordered_json out;
  out["task"] = std::string(to_string(report.task));
  out["runs"] = report.runs;
  out["cells"] = std::move(cells);
  write_json_file(dir / "fewshot.json", out);
}

void setup_fewshot(CLI::App& app) {
  auto ctx = make_ctx(app, "fewshot",
                      "Episodic protocol: train on k sampled references per class, many runs");
  auto p = std::make_shared<FewshotParams>();
  ctx->opt("--corpus", p->corpus, "Reference pool manifest path");
  ctx->opt("--blob", p->blob, "Reference pool blob path");
  ctx->opt("--test-corpus", p->test_corpus, "Held-out test corpus manifest path");
  ctx->opt("--test-blob", p->test_blob, "Held-out test corpus blob path");
  ctx->opt("--task", p->task, "Classification task")
      ->check(CLI::IsMember({"abnormality", "binary", "type"}));
  ctx->opt("--ks", p->ks, "Shot counts to sweep");
  ctx->opt("--runs", p->runs, "Episodes per shot count");
  ctx->opt("--k", p->k, "Retrieval depth inside each episode");
  ctx->opt("--train-fraction", p->train_fraction, "Train share of each episode's sample");
  ctx->opt("--hidden", p->hidden, "MLP hidden width");
  ctx->opt("--lr", p->lr, "Adam learning rate");
  ctx->opt("--batch", p->batch, "Batch size");
  ctx->opt("--max-epochs", p->max_epochs, "Maximum training epochs");
  ctx->opt("--patience", p->patience, "Early-stopping patience");
  ctx->opt("--min-delta", p->min_delta, "Minimum validation-loss drop that resets patience");
  ctx->opt("--seed", p->seed, "Protocol seed");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_fewshot(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateParams {
  std::string dataset = "contextual";
  std::string task = "abnormality";
  int runs = 10;
  int k = 3;
  int hidden = 256;
  double lr = 5e-5;
  int batch = 4;
  int max_epochs = 100;
  int patience = 5;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
};

ordered_json row_json(const AblationRow& row) {
  ordered_json j;
  j["name"] = row.name;
  j["mean"] = bundle_json(row.mean);
  j["stddev"] = bundle_json(row.stddev);
  j["mean_delta_vs_full"] = bundle_json(row.mean_delta_vs_full);
  return j;
}

void run_ablate(const AblateParams& p, const fs::path& dir) {
  DatasetProvider provider;
  if (p.dataset == "clustered") {
    ClusteredEvalSpec spec;
    spec.retrieval_k = static_cast<std::size_t>(p.k);
    provider = clustered_provider(spec);
  } else if (p.dataset == "contextual") {
    ContextualSpec spec;
    spec.retrieval_k = static_cast<std::size_t>(p.k);
    provider = contextual_provider(spec);
  } else {
    throw ConfigError("--dataset must be 'clustered' or 'contextual'");
  }
  HeadTrainConfig config;
  config.lr = p.lr;
  config.batch_size = p.batch;
  config.max_epochs = p.max_epochs;
  config.patience = p.patience;
  config.min_delta = p.min_delta;
  AblationReport report =
      run_ablation(provider, task_from_string(p.task), standard_ablation_variants(),
                   static_cast<std::size_t>(p.k), p.hidden, config, p.runs, p.seed);

  std::printf("%-26s macro-F1 %.4f\n", report.full.name.c_str(), report.full.mean.macro_f1);
  ordered_json variants = ordered_json::array();
  for (const auto& row : report.variants) {
    variants.push_back(row_json(row));
    std::printf("%-26s macro-F1 %.4f (delta %+.4f)\n", row.name.c_str(), row.mean.macro_f1,
                row.mean_delta_vs_full.macro_f1);
  }
  ordered_json out;
  out["dataset"] = p.dataset;
  out["task"] = p.task;
  out["runs"] = report.runs;
  out["k"] = p.k;
  out["hidden"] = p.hidden;
  out["full"] = row_json(report.full);
  out["variants"] = std::move(variants);
  write_json_file(dir / "ablation.json", out);
}

void setup_ablate(CLI::App& app) {
  auto ctx = make_ctx(app, "ablate",
                      "Train every ablation variant on regenerated synthetic datasets");
  auto p = std::make_shared<AblateParams>();
  ctx->opt("--dataset", p->dataset, "Synthetic dataset family")
      ->check(CLI::IsMember({"clustered", "contextual"}));
  ctx->opt("--task", p->task, "Classification task")
      ->check(CLI::IsMember({"abnormality", "binary", "type"}));
  ctx->opt("--runs", p->runs, "Independent dataset draws");
  ctx->opt("--k", p->k, "Retrieval depth");
  ctx->opt("--hidden", p->hidden, "MLP hidden width");
  ctx->opt("--lr", p->lr, "Adam learning rate");
  ctx->opt("--batch", p->batch, "Batch size");
  ctx->opt("--max-epochs", p->max_epochs, "Maximum training epochs");
  ctx->opt("--patience", p->patience, "Early-stopping patience");
  ctx->opt("--min-delta", p->min_delta, "Minimum validation-loss drop that resets patience");
  ctx->opt("--seed", p->seed, "Base seed for the dataset draws");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_ablate(*p, ctx->run_dir);
  });
}

// ---------------------------------------------------------------------------
// export-embeddings
// ---------------------------------------------------------------------------

struct ExportParams {
  std::string corpus;
  std::string blob;
};

void append_csv_row(std::string& out, const std::string& id, std::string_view abnormality,
                    std::string_view dementia, std::string_view modality, const Vector& v) {
  out += id;
  out += ',';
  out += abnormality;
  out += ',';
  out += dementia;
  out += ',';
  out += modality;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.9g", v[i]);
    out += buf;
  }
  out += '\n';
}

void run_export(const ExportParams& p, const fs::path& dir) {
  Corpus corpus = load_corpus_arg(p.corpus, p.blob);
  std::string out = "id,abnormality,dementia,modality";
  for (std::size_t d = 0; d < corpus.dim(); ++d) {
    out += ",e" + std::to_string(d);
  }
  out += '\n';
  for (const auto& c : corpus.cases()) {
    append_csv_row(out, c.id, to_string(c.abnormality), to_string(c.dementia), "image",
                   c.image_embedding);
    append_csv_row(out, c.id, to_string(c.abnormality), to_string(c.dementia), "abn",
                   c.abn_embedding);
    append_csv_row(out, c.id, to_string(c.abnormality), to_string(c.dementia), "dx",
                   c.dx_embedding);
    append_csv_row(out, c.id, to_string(c.abnormality), to_string(c.dementia), "desc",
                   c.desc_embedding);
  }
  for (const auto& set : corpus.anchors()) {
    for (std::size_t i = 0; i < set.anchors.size(); ++i) {
      append_csv_row(out, "anchor/" + std::string(to_string(set.task)) + "/" + set.classes[i], "",
                     "", "anchor", set.anchors[i]);
    }
  }
  write_text_file(dir / "embeddings.csv", out);
  std::printf("%zu cases, dim %zu\n", corpus.size(), corpus.dim());
}

void setup_export(CLI::App& app) {
  auto ctx = make_ctx(app, "export-embeddings",
                      "Dump corpus embeddings (cases and anchors) as CSV for external projection");
  auto p = std::make_shared<ExportParams>();
  ctx->opt("--corpus", p->corpus, "Corpus manifest path");
  ctx->opt("--blob", p->blob, "Corpus blob path");
  ctx->cmd->callback([ctx, p] {
    ctx->prepare();
    run_export(*p, ctx->run_dir);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-guided, evidence-based diagnostic inference over embedded cases"};
  app.require_subcommand(1);
  setup_gen_synth(app);
  setup_build_index(app);
  setup_train_encoder(app);
  setup_train_head(app);
  setup_zeroshot(app);
  setup_infer(app);
  setup_report(app);
  setup_eval(app);
  setup_fewshot(app);
  setup_ablate(app);
  setup_export(app);

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;  // --help / --version
    auto parsed = app.get_subcommands();
    std::fputs(parsed.size() == 1 ? parsed.front()->help().c_str() : app.help().c_str(), stderr);
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error (I/O): %s\n", e.what());
    return 2;
  } catch (const LoadError& e) {
    std::fprintf(stderr, "error (load): %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error (load): %s\n", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error (I/O): %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error (numeric): %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error (validation): %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
