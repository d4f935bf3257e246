#pragma once

// Evaluation machinery: macro classification metrics, the few-shot episodic
// protocol, retrieval label-consistency curves, similarity distributions for
// match/mismatch strata, and the ablation runner. Everything here is a pure
// function of (data, config, seed).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "remember/corpus.hpp"
#include "remember/evidence.hpp"
#include "remember/labels.hpp"
#include "remember/numerics.hpp"

namespace remember {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsBundle {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double macro_specificity = 0.0;
};

// Macro-averaged multi-class metrics from paired label vectors. Per-class
// values with zero denominators contribute 0 to the macro mean; every class
// in [0, n_classes) participates, present in the data or not. Macro F1 is the
// mean of per-class F1 scores, not the F1 of macro P/R.
MetricsBundle compute_metrics(const std::vector<int>& truths, const std::vector<int>& preds,
                              int n_classes);

// Two-class convention: the bundle's precision/recall/F1 fields carry the
// positive class (label 1) values rather than macro averages; specificity is
// the true-negative rate of class 0.
MetricsBundle compute_binary_metrics(const std::vector<int>& truths, const std::vector<int>& preds);

// ---------------------------------------------------------------------------
// Dataset plumbing
// ---------------------------------------------------------------------------

// The integer label a task assigns to a corpus case. Severity is not stored
// on cases, so asking for it throws DomainError.
int task_label(const ReferenceCase& ref, Task task);

struct LabeledQuery {
  Vector query;
  int label = 0;
};

// (query, label) pairs lifted from a corpus's image embeddings.
std::vector<LabeledQuery> labeled_queries(const Corpus& corpus, Task task);

// Builds ready-to-train examples: one per case of `pool`, with retrieval hits
// resolved against `references`. When exclude_self is set, each query's own
// id is removed from its candidate set (for pools that double as reference
// corpora).
std::vector<TrainExample> corpus_queries(const Corpus& pool, const Corpus& references, Task task,
                                         std::size_t k, bool exclude_self);

// Examples from standalone queries, hits resolved against `references`.
std::vector<TrainExample> attach_hits(const std::vector<LabeledQuery>& queries,
                                      const Corpus& references, std::size_t k);

// Stratified split: per class, roughly `train_fraction` of the examples go to
// train, the rest to val. Assignment order is randomized by `rng`. When the
// split would leave the validation side empty, one example migrates over so
// training can still early-stop.
struct PoolSplit {
  std::vector<TrainExample> train;
  std::vector<TrainExample> val;
};
PoolSplit split_for_eval(const std::vector<TrainExample>& examples, int n_classes,
                         double train_fraction, RngStream& rng);

// Argmax predictions of the model over examples, reduced to a bundle. Models
// whose task is the binary one use the positive-class convention.
MetricsBundle evaluate_model(const EvidenceModel& model, const std::vector<TrainExample>& examples,
                             const Corpus& references);

// ---------------------------------------------------------------------------
// Few-shot protocol
// ---------------------------------------------------------------------------

struct FewShotConfig {
  std::vector<int> ks = {5, 10, 20, 50, 100};
  int runs = 10;
  std::size_t retrieval_k = 3;
  double train_fraction = 0.75;
  int hidden = 256;
  HeadTrainConfig train;  // seed field ignored; per-run seeds are derived
  std::uint64_t seed = 0;
};

struct FewShotCell {
  int k_shots = 0;
  MetricsBundle mean;
  MetricsBundle stddev;  // population std over runs
  std::vector<MetricsBundle> runs;
};

struct FewShotReport {
  Task task = Task::Abnormality;
  int runs = 0;
  std::vector<FewShotCell> cells;
};

// For each shot count k: over `runs` episodes, sample min(k, available) cases
// per class from the pool without replacement, use the sample as both the
// retrieval corpus and (split train/val) the head's training data, train from
// scratch, and evaluate on the fixed test queries (hits resolved against the
// sample). Throws DomainError naming any class with no candidates.
FewShotReport few_shot(const Corpus& pool, const std::vector<LabeledQuery>& test, Task task,
                       const FewShotConfig& config);

// ---------------------------------------------------------------------------
// Retrieval consistency and similarity distributions
// ---------------------------------------------------------------------------

struct ConsistencyPoint {
  int k = 0;
  MetricsBundle abnormality;
  MetricsBundle dementia;
};

struct ConsistencyCurve {
  std::vector<ConsistencyPoint> points;  // k = 1..k_max
};

// Label agreement between queries and their retrieved references: for each k,
// every (query, hit) pair within the top k contributes retrieved-label as the
// prediction and query-label as the truth; macro metrics are computed over
// the pooled pairs, separately for abnormality and dementia labels.
ConsistencyCurve retrieval_consistency(const Corpus& references, const Corpus& queries, int k_max,
                                       bool exclude_self = false);

struct StratumStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::size_t> histogram;  // kSimilarityBins bins over [-1, 1]
};

inline constexpr std::size_t kSimilarityBins = 64;

struct SimilarityDistribution {
  Task label_task = Task::Abnormality;
  std::size_t k = 0;
  StratumStats match;
  StratumStats mismatch;
};

// Retrieval similarities stratified by label agreement under `label_task`.
// Similarity 1.0 lands in the last histogram bin. An empty stratum keeps
// count 0 and zeroed stats.
SimilarityDistribution similarity_distribution(const Corpus& references, const Corpus& queries,
                                               Task label_task, std::size_t k,
                                               bool exclude_self = false);

// CSV rows "bin_low,bin_high,count_match,count_mismatch" with a header line.
std::string similarity_csv(const SimilarityDistribution& dist);

// ---------------------------------------------------------------------------
// Ablation runner
// ---------------------------------------------------------------------------

struct AblationVariant {
  std::string name;
  AblationMask mask;
};

// full, drop_image, drop_abnormality_text, drop_diagnosis_text,
// drop_description_text, no_similarity_weighting, no_attention, query_only.
std::vector<AblationVariant> standard_ablation_variants();

// One experiment's worth of data: a retrieval pool plus disjoint train / val /
// test example sets (hits prefilled against the pool).
struct EvalDataset {
  Corpus pool;
  std::vector<TrainExample> train;
  std::vector<TrainExample> val;
  std::vector<TrainExample> test;
};

// Regenerates a dataset for a given seed, so ablation runs can average over
// independent draws.
using DatasetProvider = std::function<EvalDataset(std::uint64_t seed)>;

struct AblationRow {
  std::string name;
  AblationMask mask;
  MetricsBundle mean;
  MetricsBundle stddev;
  MetricsBundle mean_delta_vs_full;  // variant minus full, averaged over runs
};

struct AblationReport {
  int runs = 0;
  AblationRow full;
  std::vector<AblationRow> variants;
};

// For each run: regenerate the dataset, train the unablated model, then train
// every variant from scratch under the identical seed schedule and measure
// test metrics. A variant with an empty mask therefore reproduces the full
// model bit-for-bit and reports a delta of exactly zero.
AblationReport run_ablation(const DatasetProvider& provider, Task task,
                            const std::vector<AblationVariant>& variants, std::size_t retrieval_k,
                            int hidden, const HeadTrainConfig& base_config, int runs,
                            std::uint64_t base_seed);

// ---------------------------------------------------------------------------
// Synthetic experiment datasets
// ---------------------------------------------------------------------------

// Gaussian clusters: a reference pool plus fresh query draws from the same
// class-mean geometry. Labels are directly recoverable from query positions,
// so this measures the pipeline under favorable conditions.
struct ClusteredEvalSpec {
  int n_classes = 4;
  int dim = 32;
  int n_pool_per_class = 50;
  int n_train_per_class = 200;
  int n_val_per_class = 100;
  int n_test_per_class = 100;
  double cluster_separation = 6.0;
  double noise_sigma = 1.0;
  std::size_t retrieval_k = 3;
  std::uint64_t seed = 0;
};
EvalDataset generate_clustered(const ClusteredEvalSpec& spec);
DatasetProvider clustered_provider(ClusteredEvalSpec spec);

// Context-dependent task: queries carry only a group position on a circle
// (two informative dims) and no class signal at all. Every reference draws a
// latent vote uniformly at random — independent of its group — and expresses
// it as a one-hot bump (dims 2..2+n_labels, scaled by vote_scale) in each of
// its four modality embeddings, with a per-modality flip probability. A
// query's label is the plurality over the expressed votes of its
// retrieval_k nearest references (ties toward the lower class index), so
// class identity lives entirely in reference content: the evidence path can
// read the votes it is handed, every modality's votes count toward the
// label, and a query-only model is reduced to memorising which references
// happen to neighbour each position.
struct ContextualSpec {
  int n_groups = 8;
  int n_labels = 4;
  int dim = 8;
  // Embedding scales are deliberately small: attention scores grow with the
  // square of the overall scale, and modest norms keep the initial softmax
  // gentle (near-uniform weights) instead of saturating on random
  // projections. Retrieval (cosine) and the vote signal-to-noise ratio are
  // scale-invariant, so only the ratios below matter to the task itself.
  double radius = 0.9;
  double sigma = 0.075;
  double vote_scale = 0.75;
  // Flip rates sit near the independence limit so the four modalities'
  // expressed votes carry almost no shared information: no modality's votes
  // can be reconstructed from the others, which is what makes dropping any
  // one of them measurably costly. Abnormality text stays the most faithful
  // to the latent.
  double flip_abn = 0.60;
  double flip_img = 0.63;
  double flip_desc = 0.66;
  double flip_dx = 0.69;
  // Enough references per group that each group's latent composition stays
  // near-balanced: the plurality then genuinely varies with the retrieved
  // triple instead of collapsing to one label per group. Training queries
  // are sized so the simple vote readout generalises while memorising the
  // position-to-label map does not.
  int n_refs_per_group = 24;
  int n_train_per_group = 64;
  int n_val_per_group = 16;
  int n_test_per_group = 16;
  std::size_t retrieval_k = 3;
  std::uint64_t seed = 0;
};
EvalDataset generate_contextual(const ContextualSpec& spec);
DatasetProvider contextual_provider(ContextualSpec spec);

}  // namespace remember
