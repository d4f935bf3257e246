#pragma once

// Evidence encoding and the attention-based inference head: retrieved
// reference cases are fused into similarity-weighted evidence vectors, a
// query-conditioned attention pools them, and a small MLP maps the pooled
// evidence plus the query to class logits. Includes joint training with
// early stopping and the ablation switches used by the evaluation harness.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "remember/corpus.hpp"
#include "remember/labels.hpp"
#include "remember/numerics.hpp"
#include "remember/retrieval.hpp"

namespace remember {

// Switches that remove an input feature or architectural component.
// drop_all_evidence overrides everything else: the head then sees only the
// query (evidence slot zeroed).
struct AblationMask {
  bool drop_image = false;
  bool drop_abn = false;
  bool drop_dx = false;
  bool drop_desc = false;
  bool disable_similarity_weighting = false;
  bool disable_attention = false;
  bool drop_all_evidence = false;

  bool operator==(const AblationMask&) const = default;
};

// Evidence encoder: single affine + ReLU over the 8D concatenated input
// [z; sim*z] (z = image | abn | dx | desc embeddings), then a bias-free
// projection back to D.
struct EvidenceEncoderParams {
  Matrix w1;      // 8D x D
  Vector b1;      // D
  Matrix w_proj;  // D x D, no bias
};

// Inference head: bias-free query projection for attention scoring plus a
// two-layer MLP over [query; pooled evidence].
struct InferenceHeadParams {
  Matrix w_q;     // D x D, no bias
  Matrix mlp_w1;  // input_width x hidden
  Vector mlp_b1;  // hidden
  Matrix mlp_w2;  // hidden x C
  Vector mlp_b2;  // C
};

struct EvidenceModel {
  std::size_t dim = 0;
  std::size_t k = 3;
  int n_classes = 0;
  int hidden = 256;
  Task task = Task::Abnormality;
  AblationMask mask;
  EvidenceEncoderParams encoder;
  InferenceHeadParams head;

  // Width of the MLP input under the active mask: D + k*D with attention
  // disabled (rows concatenated), 2D otherwise (query + pooled evidence,
  // or query + zeros when all evidence is dropped).
  std::size_t mlp_input_width() const;
};

// Kaiming-uniform initialized model; biases start at zero.
EvidenceModel make_model(std::size_t dim, std::size_t k, int n_classes, int hidden,
                         Task task, const AblationMask& mask, RngStream& rng);

// Fuses one reference case with its retrieval similarity into a projected
// D-dim evidence vector: ReLU([z; sim*z] W1 + b) W_proj, with masked
// modalities zeroed in z and sim forced to 1 when similarity weighting is
// disabled.
Vector build_evidence_vector(const ReferenceCase& ref, double sim,
                             const EvidenceEncoderParams& params, const AblationMask& mask);

// Stacks build_evidence_vector over the hits; row i belongs to hit i.
// Cases are resolved through the corpus by id.
Matrix build_evidence_matrix(const std::vector<RetrievalHit>& hits, const Corpus& corpus,
                             const EvidenceEncoderParams& params, const AblationMask& mask);

struct AttendResult {
  Vector alpha;  // softmax over evidence scores, sums to 1
  Vector e_bar;  // alpha-weighted sum of evidence rows
};

// Dot-product attention: scores = E (query W_q), alpha = softmax(scores),
// e_bar = E^T alpha. No scaling factor.
AttendResult attend(const Vector& query, const Matrix& evidence, const InferenceHeadParams& params);

struct PredictResult {
  Vector logits;
  Vector probs;
  Vector alpha;
};

// Full head forward pass under the model's mask. With attention disabled the
// MLP consumes the concatenated evidence rows (zero-padded up to k); with all
// evidence dropped it consumes [query; 0]. alpha is still reported: uniform
// without attention, attention-derived otherwise.
PredictResult predict(const Vector& query, const Matrix& evidence, const EvidenceModel& model);

// One training example: a query embedding, its label, and the retrieval hits
// whose referenced cases supply the evidence.
struct TrainExample {
  Vector query;
  int label = 0;
  std::vector<RetrievalHit> hits;
};

struct HeadTrainConfig {
  double lr = 5e-5;
  int batch_size = 4;
  int max_epochs = 100;
  int patience = 5;
  // Smallest validation-loss drop that still counts as an improvement and
  // resets the patience counter; keeps the loop from chasing float dust.
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
};

struct HeadTrainHistory {
  std::vector<double> train_loss;  // mean cross-entropy per epoch
  std::vector<double> val_loss;    // full validation loss per epoch
  int best_epoch = -1;             // 0-based epoch whose params were kept
  bool stopped_early = false;
  std::vector<std::string> warnings;
};

// Jointly trains the evidence encoder and inference head with cross-entropy
// and Adam; stops when validation loss fails to improve for `patience`
// consecutive epochs and restores the best-validation parameters.
HeadTrainHistory train_head(EvidenceModel& model, const std::vector<TrainExample>& train,
                            const std::vector<TrainExample>& val, const Corpus& corpus,
                            const HeadTrainConfig& config);

// Mean cross-entropy of the model over a labeled set.
double evaluate_loss(const EvidenceModel& model, const std::vector<TrainExample>& examples,
                     const Corpus& corpus);

// Analytic gradients of the mean cross-entropy over `examples` with respect
// to every trainable tensor, alongside the loss. This is exactly the batch
// quantity the trainer steps on, exposed so it can be checked against finite
// differences.
struct HeadGrads {
  Matrix w1;
  Vector b1;
  Matrix w_proj;
  Matrix w_q;
  Matrix mlp_w1;
  Vector mlp_b1;
  Matrix mlp_w2;
  Vector mlp_b2;
};

struct HeadLossResult {
  double loss = 0.0;
  HeadGrads grads;
};

HeadLossResult head_loss(const EvidenceModel& model, const std::vector<TrainExample>& examples,
                         const Corpus& corpus);

// Convenience: build evidence from the example's hits and predict.
PredictResult predict_example(const EvidenceModel& model, const TrainExample& example,
                              const Corpus& corpus);

// JSON checkpoints, decimal floats with exact round-trip.
void save_model(const EvidenceModel& model, const std::filesystem::path& path);
EvidenceModel load_model(const std::filesystem::path& path);

}  // namespace remember
