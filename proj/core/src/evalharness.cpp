#include "remember/evalharness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "remember/retrieval.hpp"

namespace remember {

namespace {

constexpr double kPi = 3.14159265358979323846;

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

// Field list so aggregate helpers can loop over the bundle.
constexpr double MetricsBundle::* kBundleFields[] = {
    &MetricsBundle::accuracy, &MetricsBundle::macro_precision, &MetricsBundle::macro_recall,
    &MetricsBundle::macro_f1, &MetricsBundle::macro_specificity};

MetricsBundle bundle_mean(const std::vector<MetricsBundle>& xs) {
  MetricsBundle out;
  for (auto field : kBundleFields) {
    double sum = 0.0;
    for (const MetricsBundle& x : xs) sum += x.*field;
    out.*field = sum / static_cast<double>(xs.size());
  }
  return out;
}

// Population standard deviation per field.
MetricsBundle bundle_std(const std::vector<MetricsBundle>& xs, const MetricsBundle& mean) {
  MetricsBundle out;
  for (auto field : kBundleFields) {
    double sum = 0.0;
    for (const MetricsBundle& x : xs) {
      const double d = x.*field - mean.*field;
      sum += d * d;
    }
    out.*field = std::sqrt(std::max(0.0, sum / static_cast<double>(xs.size())));
  }
  return out;
}

MetricsBundle bundle_sub(const MetricsBundle& a, const MetricsBundle& b) {
  MetricsBundle out;
  for (auto field : kBundleFields) out.*field = a.*field - b.*field;
  return out;
}

void check_labels(const std::vector<int>& labels, int n_classes, const char* what) {
  for (int v : labels) {
    if (v < 0 || v >= n_classes) {
      throw DomainError(std::string(what) + ": label outside [0, n_classes)");
    }
  }
}

int flip_label(int label, double flip_prob, int n_labels, RngStream& rng) {
  if (rng.uniform01() >= flip_prob) return label;
  const int offset = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(n_labels - 1)));
  return (label + offset) % n_labels;
}

}  // namespace

MetricsBundle compute_metrics(const std::vector<int>& truths, const std::vector<int>& preds,
                              int n_classes) {
  if (truths.size() != preds.size()) throw ShapeError("compute_metrics: truths/preds length mismatch");
  if (truths.empty()) throw ShapeError("compute_metrics: empty input");
  if (n_classes < 2) throw DomainError("compute_metrics: need at least 2 classes");
  check_labels(truths, n_classes, "compute_metrics");
  check_labels(preds, n_classes, "compute_metrics");

  const std::size_t c = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> confusion(c * c, 0);  // [truth][pred]
  for (std::size_t i = 0; i < truths.size(); ++i) {
    confusion[static_cast<std::size_t>(truths[i]) * c + static_cast<std::size_t>(preds[i])]++;
  }
  const double n = static_cast<double>(truths.size());

  MetricsBundle out;
  double diag = 0.0;
  for (std::size_t i = 0; i < c; ++i) diag += static_cast<double>(confusion[i * c + i]);
  out.accuracy = diag / n;

  for (std::size_t k = 0; k < c; ++k) {
    double tp = static_cast<double>(confusion[k * c + k]);
    double fp = 0.0, fn = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      if (i == k) continue;
      fp += static_cast<double>(confusion[i * c + k]);
      fn += static_cast<double>(confusion[k * c + i]);
    }
    const double tn = n - tp - fp - fn;
    const double precision = safe_div(tp, tp + fp);
    const double recall = safe_div(tp, tp + fn);
    out.macro_precision += precision;
    out.macro_recall += recall;
    out.macro_f1 += safe_div(2.0 * precision * recall, precision + recall);
    out.macro_specificity += safe_div(tn, tn + fp);
  }
  const double dc = static_cast<double>(c);
  out.macro_precision /= dc;
  out.macro_recall /= dc;
  out.macro_f1 /= dc;
  out.macro_specificity /= dc;
  return out;
}

MetricsBundle compute_binary_metrics(const std::vector<int>& truths, const std::vector<int>& preds) {
  if (truths.size() != preds.size()) {
    throw ShapeError("compute_binary_metrics: truths/preds length mismatch");
  }
  if (truths.empty()) throw ShapeError("compute_binary_metrics: empty input");
  check_labels(truths, 2, "compute_binary_metrics");
  check_labels(preds, 2, "compute_binary_metrics");

  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] == 1 && preds[i] == 1) ++tp;
    else if (truths[i] == 0 && preds[i] == 1) ++fp;
    else if (truths[i] == 1 && preds[i] == 0) ++fn;
    else ++tn;
  }
  MetricsBundle out;
  out.accuracy = (tp + tn) / static_cast<double>(truths.size());
  out.macro_precision = safe_div(tp, tp + fp);
  out.macro_recall = safe_div(tp, tp + fn);
  out.macro_f1 = safe_div(2.0 * out.macro_precision * out.macro_recall,
                          out.macro_precision + out.macro_recall);
  out.macro_specificity = safe_div(tn, tn + fp);
  return out;
}

int task_label(const ReferenceCase& ref, Task task) {
  switch (task) {
    case Task::Abnormality:
      return static_cast<int>(ref.abnormality);
    case Task::BinaryDementia:
      return ref.dementia == Dementia::NonDementia ? 0 : 1;
    case Task::DementiaType:
      return static_cast<int>(ref.dementia);
    case Task::Severity:
      break;
  }
  throw DomainError("task_label: severity labels are not stored on corpus cases");
}

std::vector<LabeledQuery> labeled_queries(const Corpus& corpus, Task task) {
  std::vector<LabeledQuery> out;
  out.reserve(corpus.size());
  for (const ReferenceCase& ref : corpus.cases()) {
    out.push_back({ref.image_embedding, task_label(ref, task)});
  }
  return out;
}

std::vector<TrainExample> corpus_queries(const Corpus& pool, const Corpus& references, Task task,
                                         std::size_t k, bool exclude_self) {
  std::vector<TrainExample> out;
  out.reserve(pool.size());
  for (const ReferenceCase& ref : pool.cases()) {
    TrainExample ex;
    ex.query = ref.image_embedding;
    ex.label = task_label(ref, task);
    ex.hits = top_k(ex.query, references, k, nullptr, exclude_self ? &ref.id : nullptr);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainExample> attach_hits(const std::vector<LabeledQuery>& queries,
                                      const Corpus& references, std::size_t k) {
  std::vector<TrainExample> out;
  out.reserve(queries.size());
  for (const LabeledQuery& q : queries) {
    TrainExample ex;
    ex.query = q.query;
    ex.label = q.label;
    ex.hits = top_k(ex.query, references, k);
    out.push_back(std::move(ex));
  }
  return out;
}

PoolSplit split_for_eval(const std::vector<TrainExample>& examples, int n_classes,
                         double train_fraction, RngStream& rng) {
  if (examples.empty()) throw DomainError("split_for_eval: no examples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DomainError("split_for_eval: train_fraction must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int label = examples[i].label;
    if (label < 0 || label >= n_classes) throw DomainError("split_for_eval: label out of range");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  PoolSplit split;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    shuffle(members, rng);
    std::size_t n_train = static_cast<std::size_t>(
        train_fraction * static_cast<double>(members.size()));
    n_train = std::max<std::size_t>(1, n_train);
    if (n_train == members.size() && members.size() > 1) n_train = members.size() - 1;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < n_train ? split.train : split.val).push_back(examples[members[i]]);
    }
  }
  if (split.val.empty() && split.train.size() > 1) {
    split.val.push_back(std::move(split.train.back()));
    split.train.pop_back();
  }
  return split;
}

MetricsBundle evaluate_model(const EvidenceModel& model, const std::vector<TrainExample>& examples,
                             const Corpus& references) {
  if (examples.empty()) throw DomainError("evaluate_model: empty example set");
  std::vector<int> truths, preds;
  truths.reserve(examples.size());
  preds.reserve(examples.size());
  for (const TrainExample& ex : examples) {
    PredictResult pr = predict_example(model, ex, references);
    int best = 0;
    for (std::size_t c = 1; c < pr.probs.size(); ++c) {
      if (pr.probs[c] > pr.probs[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    }
    preds.push_back(best);
    truths.push_back(ex.label);
  }
  if (model.task == Task::BinaryDementia && model.n_classes == 2) {
    return compute_binary_metrics(truths, preds);
  }
  return compute_metrics(truths, preds, model.n_classes);
}

// ---------------------------------------------------------------------------
// Few-shot
// ---------------------------------------------------------------------------

FewShotReport few_shot(const Corpus& pool, const std::vector<LabeledQuery>& test, Task task,
                       const FewShotConfig& config) {
  if (config.runs < 1) throw ConfigError("few_shot: runs must be >= 1");
  if (config.ks.empty()) throw ConfigError("few_shot: no shot counts configured");
  for (int k : config.ks) {
    if (k < 1) throw ConfigError("few_shot: shot counts must be >= 1");
  }
  if (config.retrieval_k == 0) throw ConfigError("few_shot: retrieval_k must be >= 1");
  if (test.empty()) throw DomainError("few_shot: empty test set");

  const int n_classes = task_arity(task);
  std::vector<std::vector<std::size_t>> candidates(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    candidates[static_cast<std::size_t>(task_label(pool.at(i), task))].push_back(i);
  }
  for (int c = 0; c < n_classes; ++c) {
    if (candidates[static_cast<std::size_t>(c)].empty()) {
      throw DomainError("few_shot: class '" + std::string(class_names(task)[static_cast<std::size_t>(c)]) +
                        "' has no candidates in the pool");
    }
  }

  FewShotReport report;
  report.task = task;
  report.runs = config.runs;

  for (std::size_t ki = 0; ki < config.ks.size(); ++ki) {
    const int k_shots = config.ks[ki];
    FewShotCell cell;
    cell.k_shots = k_shots;
    for (int run = 0; run < config.runs; ++run) {
      const std::uint64_t salt =
          (static_cast<std::uint64_t>(ki) << 32) ^ static_cast<std::uint64_t>(run);
      const std::uint64_t run_seed = RngStream(config.seed).child(salt).seed();
      RngStream run_rng(run_seed);

      // Episode sample: min(k_shots, available) per class, without replacement.
      RngStream sample_rng = run_rng.child(1);
      std::vector<ReferenceCase> sampled;
      for (int c = 0; c < n_classes; ++c) {
        const auto& members = candidates[static_cast<std::size_t>(c)];
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k_shots),
                                                       members.size());
        for (std::size_t idx : sample_without_replacement(members.size(), take, sample_rng)) {
          sampled.push_back(pool.at(members[idx]));
        }
      }
      Corpus episode(pool.dim(), std::move(sampled));

      std::vector<TrainExample> episode_examples =
          corpus_queries(episode, episode, task, config.retrieval_k, /*exclude_self=*/true);
      RngStream split_rng = run_rng.child(2);
      PoolSplit split = split_for_eval(episode_examples, n_classes, config.train_fraction, split_rng);

      RngStream init_rng = run_rng.child(3);
      EvidenceModel model = make_model(pool.dim(), config.retrieval_k, n_classes, config.hidden,
                                       task, AblationMask{}, init_rng);
      HeadTrainConfig train_config = config.train;
      train_config.seed = run_seed;
      train_head(model, split.train, split.val, episode, train_config);

      std::vector<TrainExample> test_examples = attach_hits(test, episode, config.retrieval_k);
      cell.runs.push_back(evaluate_model(model, test_examples, episode));
    }
    cell.mean = bundle_mean(cell.runs);
    cell.stddev = bundle_std(cell.runs, cell.mean);
    report.cells.push_back(std::move(cell));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Retrieval consistency and similarity distributions
// ---------------------------------------------------------------------------

ConsistencyCurve retrieval_consistency(const Corpus& references, const Corpus& queries, int k_max,
                                       bool exclude_self) {
  if (queries.size() == 0) throw DomainError("retrieval_consistency: empty query set");
  if (k_max < 1) throw DomainError("retrieval_consistency: k_max must be >= 1");

  struct QueryHits {
    int abn_truth, dem_truth;
    std::vector<int> abn_retrieved, dem_retrieved;
  };
  std::vector<QueryHits> per_query;
  per_query.reserve(queries.size());
  for (const ReferenceCase& q : queries.cases()) {
    QueryHits qh;
    qh.abn_truth = task_label(q, Task::Abnormality);
    qh.dem_truth = task_label(q, Task::DementiaType);
    auto hits = top_k(q.image_embedding, references, static_cast<std::size_t>(k_max), nullptr,
                      exclude_self ? &q.id : nullptr);
    for (const RetrievalHit& h : hits) {
      const ReferenceCase& r = references.at(h.corpus_index);
      qh.abn_retrieved.push_back(task_label(r, Task::Abnormality));
      qh.dem_retrieved.push_back(task_label(r, Task::DementiaType));
    }
    per_query.push_back(std::move(qh));
  }

  ConsistencyCurve curve;
  for (int k = 1; k <= k_max; ++k) {
    std::vector<int> abn_truths, abn_preds, dem_truths, dem_preds;
    for (const QueryHits& qh : per_query) {
      const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                     qh.abn_retrieved.size());
      for (std::size_t i = 0; i < take; ++i) {
        abn_truths.push_back(qh.abn_truth);
        abn_preds.push_back(qh.abn_retrieved[i]);
        dem_truths.push_back(qh.dem_truth);
        dem_preds.push_back(qh.dem_retrieved[i]);
      }
    }
    ConsistencyPoint point;
    point.k = k;
    point.abnormality = compute_metrics(abn_truths, abn_preds, kAbnormalityClasses);
    point.dementia = compute_metrics(dem_truths, dem_preds, kDementiaClasses);
    curve.points.push_back(point);
  }
  return curve;
}

SimilarityDistribution similarity_distribution(const Corpus& references, const Corpus& queries,
                                               Task label_task, std::size_t k, bool exclude_self) {
  if (queries.size() == 0) throw DomainError("similarity_distribution: empty query set");
  if (k == 0) throw DomainError("similarity_distribution: k must be >= 1");

  std::vector<double> match_sims, mismatch_sims;
  for (const ReferenceCase& q : queries.cases()) {
    const int truth = task_label(q, label_task);
    auto hits = top_k(q.image_embedding, references, k, nullptr, exclude_self ? &q.id : nullptr);
    for (const RetrievalHit& h : hits) {
      const int retrieved = task_label(references.at(h.corpus_index), label_task);
      (retrieved == truth ? match_sims : mismatch_sims).push_back(h.sim);
    }
  }

  auto summarize = [](const std::vector<double>& sims) {
    StratumStats s;
    s.histogram.assign(kSimilarityBins, 0);
    s.count = sims.size();
    if (sims.empty()) return s;
    double sum = 0.0, sumsq = 0.0;
    s.min = sims.front();
    s.max = sims.front();
    for (double v : sims) {
      sum += v;
      sumsq += v * v;
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      double scaled = (v + 1.0) / 2.0 * static_cast<double>(kSimilarityBins);
      std::size_t bin = scaled <= 0.0 ? 0 : static_cast<std::size_t>(scaled);
      if (bin >= kSimilarityBins) bin = kSimilarityBins - 1;  // sim = 1.0 lands here
      s.histogram[bin]++;
    }
    const double n = static_cast<double>(sims.size());
    s.mean = sum / n;
    s.stddev = std::sqrt(std::max(0.0, sumsq / n - s.mean * s.mean));
    return s;
  };

  SimilarityDistribution dist;
  dist.label_task = label_task;
  dist.k = k;
  dist.match = summarize(match_sims);
  dist.mismatch = summarize(mismatch_sims);
  return dist;
}

std::string similarity_csv(const SimilarityDistribution& dist) {
  std::string out = "bin_low,bin_high,count_match,count_mismatch\n";
  char buf[128];
  const double width = 2.0 / static_cast<double>(kSimilarityBins);
  for (std::size_t i = 0; i < kSimilarityBins; ++i) {
    const double lo = -1.0 + static_cast<double>(i) * width;
    const double hi = lo + width;
    std::snprintf(buf, sizeof(buf), "%g,%g,%zu,%zu\n", lo, hi, dist.match.histogram[i],
                  dist.mismatch.histogram[i]);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::vector<AblationVariant> standard_ablation_variants() {
  std::vector<AblationVariant> variants;
  variants.push_back({"full", AblationMask{}});
  AblationMask m;
  m = AblationMask{};
  m.drop_image = true;
  variants.push_back({"drop_image", m});
  m = AblationMask{};
  m.drop_abn = true;
  variants.push_back({"drop_abnormality_text", m});
  m = AblationMask{};
  m.drop_dx = true;
  variants.push_back({"drop_diagnosis_text", m});
  m = AblationMask{};
  m.drop_desc = true;
  variants.push_back({"drop_description_text", m});
  m = AblationMask{};
  m.disable_similarity_weighting = true;
  variants.push_back({"no_similarity_weighting", m});
  m = AblationMask{};
  m.disable_attention = true;
  variants.push_back({"no_attention", m});
  m = AblationMask{};
  m.drop_all_evidence = true;
  variants.push_back({"query_only", m});
  return variants;
}

AblationReport run_ablation(const DatasetProvider& provider, Task task,
                            const std::vector<AblationVariant>& variants, std::size_t retrieval_k,
                            int hidden, const HeadTrainConfig& base_config, int runs,
                            std::uint64_t base_seed) {
  if (runs < 1) throw ConfigError("run_ablation: runs must be >= 1");
  if (retrieval_k == 0) throw ConfigError("run_ablation: retrieval_k must be >= 1");
  const int n_classes = task_arity(task);

  std::vector<MetricsBundle> full_runs;
  std::vector<std::vector<MetricsBundle>> variant_runs(variants.size());
  std::vector<std::vector<MetricsBundle>> variant_deltas(variants.size());

  for (int run = 0; run < runs; ++run) {
    const std::uint64_t run_seed = RngStream(base_seed).child(static_cast<std::uint64_t>(run)).seed();
    EvalDataset ds = provider(run_seed);
    for (const auto* set : {&ds.train, &ds.val, &ds.test}) {
      for (const TrainExample& ex : *set) {
        if (ex.hits.size() > retrieval_k) {
          throw DomainError("run_ablation: dataset carries more hits per example than retrieval_k");
        }
      }
    }

    auto train_once = [&](const AblationMask& mask) {
      RngStream init_rng = RngStream(run_seed).child(3);
      EvidenceModel model =
          make_model(ds.pool.dim(), retrieval_k, n_classes, hidden, task, mask, init_rng);
      HeadTrainConfig cfg = base_config;
      cfg.seed = run_seed;
      train_head(model, ds.train, ds.val, ds.pool, cfg);
      return evaluate_model(model, ds.test, ds.pool);
    };

    const MetricsBundle full = train_once(AblationMask{});
    full_runs.push_back(full);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const MetricsBundle metrics = train_once(variants[v].mask);
      variant_runs[v].push_back(metrics);
      variant_deltas[v].push_back(bundle_sub(metrics, full));
    }
  }

  AblationReport report;
  report.runs = runs;
  report.full.name = "full";
  report.full.mask = AblationMask{};
  report.full.mean = bundle_mean(full_runs);
  report.full.stddev = bundle_std(full_runs, report.full.mean);
  report.full.mean_delta_vs_full = MetricsBundle{};
  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationRow row;
    row.name = variants[v].name;
    row.mask = variants[v].mask;
    row.mean = bundle_mean(variant_runs[v]);
    row.stddev = bundle_std(variant_runs[v], row.mean);
    row.mean_delta_vs_full = bundle_mean(variant_deltas[v]);
    report.variants.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic experiment datasets
// ---------------------------------------------------------------------------

namespace {

// Queries drawn from the same axis-aligned class means generate_synthetic
// uses; labels are the class indices.
std::vector<LabeledQuery> draw_cluster_queries(int n_classes, int per_class, int dim,
                                               double separation, double sigma, RngStream& rng) {
  std::vector<LabeledQuery> out;
  out.reserve(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(per_class));
  for (int c = 0; c < n_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Vector q(static_cast<std::size_t>(dim));
      for (int d = 0; d < dim; ++d) {
        const double mean = d == c ? separation * sigma : 0.0;
        q[static_cast<std::size_t>(d)] = mean + rng.normal(0.0, sigma);
      }
      out.push_back({std::move(q), c});
    }
  }
  return out;
}

}  // namespace

EvalDataset generate_clustered(const ClusteredEvalSpec& spec) {
  if (spec.n_train_per_class < 1 || spec.n_val_per_class < 1 || spec.n_test_per_class < 1) {
    throw DomainError("generate_clustered: all split sizes must be >= 1");
  }
  if (spec.retrieval_k == 0) throw DomainError("generate_clustered: retrieval_k must be >= 1");
  RngStream root(spec.seed);

  SyntheticSpec pool_spec;
  pool_spec.n_classes = spec.n_classes;
  pool_spec.n_per_class = spec.n_pool_per_class;
  pool_spec.dim = spec.dim;
  pool_spec.cluster_separation = spec.cluster_separation;
  pool_spec.noise_sigma = spec.noise_sigma;
  pool_spec.seed = root.child(1).seed();
  pool_spec.id_prefix = "pool";

  EvalDataset ds;
  ds.pool = generate_synthetic(pool_spec);

  RngStream train_rng = root.child(2), val_rng = root.child(3), test_rng = root.child(4);
  auto queries_to_examples = [&](std::vector<LabeledQuery> queries) {
    return attach_hits(queries, ds.pool, spec.retrieval_k);
  };
  ds.train = queries_to_examples(draw_cluster_queries(
      spec.n_classes, spec.n_train_per_class, spec.dim, spec.cluster_separation, spec.noise_sigma,
      train_rng));
  ds.val = queries_to_examples(draw_cluster_queries(
      spec.n_classes, spec.n_val_per_class, spec.dim, spec.cluster_separation, spec.noise_sigma,
      val_rng));
  ds.test = queries_to_examples(draw_cluster_queries(
      spec.n_classes, spec.n_test_per_class, spec.dim, spec.cluster_separation, spec.noise_sigma,
      test_rng));
  return ds;
}

DatasetProvider clustered_provider(ClusteredEvalSpec spec) {
  return [spec](std::uint64_t seed) mutable {
    spec.seed = seed;
    return generate_clustered(spec);
  };
}

namespace {

struct ContextualDraw {
  Vector image, abn, dx, desc;
  // Expressed votes per modality (the latent vote after per-modality flips),
  // in insertion order image, abn, dx, desc.
  std::array<int, 4> votes{};
};

// One reference case's embeddings: the group position (image only) plus a
// per-modality noisy expression of the reference's latent vote.
ContextualDraw draw_reference(const ContextualSpec& spec, int group, int latent, RngStream& rng) {
  const std::size_t dim = static_cast<std::size_t>(spec.dim);
  const double theta = 2.0 * kPi * static_cast<double>(group) / static_cast<double>(spec.n_groups);
  const int vote_img = flip_label(latent, spec.flip_img, spec.n_labels, rng);
  const int vote_abn = flip_label(latent, spec.flip_abn, spec.n_labels, rng);
  const int vote_dx = flip_label(latent, spec.flip_dx, spec.n_labels, rng);
  const int vote_desc = flip_label(latent, spec.flip_desc, spec.n_labels, rng);

  auto fill = [&](bool with_position, int vote) {
    Vector v(dim);
    if (with_position) {
      v[0] = spec.radius * std::cos(theta);
      v[1] = spec.radius * std::sin(theta);
    }
    v[static_cast<std::size_t>(2 + vote)] += spec.vote_scale;
    for (std::size_t d = 0; d < dim; ++d) v[d] += rng.normal(0.0, spec.sigma);
    return v;
  };
  ContextualDraw out;
  out.image = fill(true, vote_img);
  out.abn = fill(false, vote_abn);
  out.dx = fill(false, vote_dx);
  out.desc = fill(false, vote_desc);
  out.votes = {vote_img, vote_abn, vote_dx, vote_desc};
  return out;
}

// Query embeddings carry the group position and noise only — no votes.
Vector draw_query(const ContextualSpec& spec, int group, RngStream& rng) {
  const std::size_t dim = static_cast<std::size_t>(spec.dim);
  const double theta = 2.0 * kPi * static_cast<double>(group) / static_cast<double>(spec.n_groups);
  Vector v(dim);
  v[0] = spec.radius * std::cos(theta);
  v[1] = spec.radius * std::sin(theta);
  for (std::size_t d = 0; d < dim; ++d) v[d] += rng.normal(0.0, spec.sigma);
  return v;
}

std::vector<Vector> draw_context_queries(const ContextualSpec& spec, int per_group,
                                         RngStream& rng) {
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(spec.n_groups) * static_cast<std::size_t>(per_group));
  for (int g = 0; g < spec.n_groups; ++g) {
    for (int i = 0; i < per_group; ++i) out.push_back(draw_query(spec, g, rng));
  }
  return out;
}

// Attaches hits and derives each query's label as the plurality over the
// expressed votes of its retrieved references, ties toward the lower class
// index. The label is therefore a function of reference content alone — the
// query's position decides only which references get to vote — and the
// optimal readout (vote counts plus a fixed tie-break bias) is linear in the
// pooled evidence rows.
std::vector<TrainExample> vote_resolved_examples(std::vector<Vector> queries, const Corpus& pool,
                                                 const std::vector<std::array<int, 4>>& votes,
                                                 const ContextualSpec& spec) {
  std::vector<TrainExample> out;
  out.reserve(queries.size());
  for (Vector& q : queries) {
    TrainExample ex;
    ex.hits = top_k(q, pool, spec.retrieval_k);
    std::vector<int> count(static_cast<std::size_t>(spec.n_labels), 0);
    for (const RetrievalHit& hit : ex.hits) {
      for (int vote : votes[hit.corpus_index]) ++count[static_cast<std::size_t>(vote)];
    }
    for (int c = 1; c < spec.n_labels; ++c) {
      if (count[static_cast<std::size_t>(c)] > count[static_cast<std::size_t>(ex.label)]) ex.label = c;
    }
    ex.query = std::move(q);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

EvalDataset generate_contextual(const ContextualSpec& spec) {
  if (spec.n_groups < 2) throw DomainError("generate_contextual: n_groups must be >= 2");
  if (spec.n_labels < 2 || spec.n_labels > kAbnormalityClasses) {
    throw DomainError("generate_contextual: n_labels must lie in [2, 4]");
  }
  if (spec.dim < 2 + spec.n_labels) {
    throw DomainError("generate_contextual: dim must be >= 2 + n_labels");
  }
  if (!(spec.sigma > 0.0)) throw DomainError("generate_contextual: sigma must be > 0");
  if (!(spec.radius > 0.0)) throw DomainError("generate_contextual: radius must be > 0");
  for (double f : {spec.flip_abn, spec.flip_img, spec.flip_desc, spec.flip_dx}) {
    if (f < 0.0 || f >= 1.0) throw DomainError("generate_contextual: flip probabilities must lie in [0, 1)");
  }
  if (spec.n_refs_per_group < 1 || spec.n_train_per_group < 1 || spec.n_val_per_group < 1 ||
      spec.n_test_per_group < 1) {
    throw DomainError("generate_contextual: all split sizes must be >= 1");
  }
  if (spec.retrieval_k == 0) throw DomainError("generate_contextual: retrieval_k must be >= 1");

  RngStream root(spec.seed);
  RngStream ref_rng = root.child(1);
  std::vector<ReferenceCase> refs;
  std::vector<std::array<int, 4>> votes;
  char id[32];
  int serial = 0;
  for (int g = 0; g < spec.n_groups; ++g) {
    for (int i = 0; i < spec.n_refs_per_group; ++i, ++serial) {
      // Latent votes are drawn independently of the group, so position says
      // nothing about the label; groups exist only to shape retrieval.
      const int latent = static_cast<int>(ref_rng.below(static_cast<std::size_t>(spec.n_labels)));
      ContextualDraw draw = draw_reference(spec, g, latent, ref_rng);
      ReferenceCase rc;
      std::snprintf(id, sizeof(id), "ctx-%04d", serial);
      rc.id = id;
      rc.image_embedding = std::move(draw.image);
      rc.abn_embedding = std::move(draw.abn);
      rc.dx_embedding = std::move(draw.dx);
      rc.desc_embedding = std::move(draw.desc);
      rc.abnormality = static_cast<Abnormality>(latent);
      rc.dementia = dementia_for_abnormality(rc.abnormality);
      rc.description = std::string(abnormality_text(rc.abnormality));
      refs.push_back(std::move(rc));
      votes.push_back(draw.votes);
    }
  }

  EvalDataset ds;
  ds.pool = Corpus(static_cast<std::size_t>(spec.dim), std::move(refs));
  RngStream train_rng = root.child(2), val_rng = root.child(3), test_rng = root.child(4);
  ds.train = vote_resolved_examples(draw_context_queries(spec, spec.n_train_per_group, train_rng),
                                    ds.pool, votes, spec);
  ds.val = vote_resolved_examples(draw_context_queries(spec, spec.n_val_per_group, val_rng),
                                  ds.pool, votes, spec);
  ds.test = vote_resolved_examples(draw_context_queries(spec, spec.n_test_per_group, test_rng),
                                   ds.pool, votes, spec);
  return ds;
}

DatasetProvider contextual_provider(ContextualSpec spec) {
  return [spec](std::uint64_t seed) mutable {
    spec.seed = seed;
    return generate_contextual(spec);
  };
}

}  // namespace remember
