#pragma once

// Toy vision-text dual encoder: one affine projection per modality followed
// by L2 normalization, trained with a temperature-scaled InfoNCE loss over
// in-batch negatives. Stands in for a pretrained clinical vision-language
// encoder at desk scale; gradients are hand-derived and finite-difference
// checked.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "remember/corpus.hpp"
#include "remember/numerics.hpp"

namespace remember {

struct ToyDualEncoder {
  std::size_t raw_dim = 0;   // image feature width
  std::size_t feat_dim = 0;  // text feature width
  std::size_t dim = 0;       // shared embedding width
  double tau = 0.07;         // fixed softmax temperature

  Matrix w_img;  // raw_dim x dim
  Vector b_img;  // dim
  Matrix w_txt;  // feat_dim x dim
  Vector b_txt;  // dim

  // Unit-norm embedding. Throws NumericError when the affine output is the
  // zero vector, ShapeError on width mismatch.
  Vector embed_image(const Vector& raw) const;
  Vector embed_text(const Vector& features) const;
};

enum class EncoderInit {
  // Truncated-identity projections. This mirrors starting from an encoder
  // whose modalities already live in a shared space (the fine-tuning setting
  // the default hyperparameters are sized for); with feature generators that
  // present both modalities in one basis, cross-modal retrieval works from
  // step zero and training refines it.
  IdentityAligned,
  // Kaiming-uniform projections: the honest from-scratch setting. Needs far
  // more optimization budget than the fine-tuning defaults to align.
  KaimingUniform,
};

ToyDualEncoder make_encoder(std::size_t raw_dim, std::size_t feat_dim, std::size_t dim,
                            double tau, EncoderInit init, RngStream& rng);

// Matched image/text pairs; row i of both matrices is one positive pair.
struct PairBatch {
  Matrix image_features;  // n x raw_dim
  Matrix text_features;   // n x feat_dim
};

struct ContrastiveGrads {
  Matrix w_img;
  Vector b_img;
  Matrix w_txt;
  Vector b_txt;
};

struct ContrastiveResult {
  double loss = 0.0;
  ContrastiveGrads grads;
};

// InfoNCE over the batch's cosine similarity matrix at temperature tau.
// Symmetric mode averages the image->text and text->image directions;
// one-directional mode keeps image->text only. A single pair yields loss 0.
ContrastiveResult contrastive_loss(const PairBatch& batch, const ToyDualEncoder& encoder,
                                   bool symmetric = true);

struct EncoderTrainConfig {
  double lr = 5e-5;
  int batch_size = 16;
  int epochs = 10;
  bool symmetric = true;
  std::uint64_t seed = 0;
};

struct EncoderTrainHistory {
  double initial_loss = 0.0;            // full-set loss before any update
  double final_loss = 0.0;              // full-set loss after training
  std::vector<double> epoch_mean_loss;  // mean of batch losses per epoch
};

// Adam training with per-epoch reshuffling; bitwise deterministic per seed.
EncoderTrainHistory train_contrastive(ToyDualEncoder& encoder, const PairBatch& pairs,
                                      const EncoderTrainConfig& config);

// ---------------------------------------------------------------------------
// Text featurizer: hashed token counts. Tokens are maximal [a-z0-9] runs of
// the lowercased input, hashed with FNV-1a into feat_dim buckets. Fixed for
// all time so stored text embeddings stay comparable.
// ---------------------------------------------------------------------------

Vector text_features(std::string_view text, std::size_t feat_dim);

// Anchor sets (abnormality / type / severity) built by embedding the template
// sentences with this encoder.
std::vector<AnchorSet> build_anchor_sets(const ToyDualEncoder& encoder);

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON with decimal floats carrying 17 significant
// digits, so reload reproduces the exact binary64 weights.
// ---------------------------------------------------------------------------

void save_encoder(const ToyDualEncoder& encoder, const std::filesystem::path& path);
ToyDualEncoder load_encoder(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic paired data for contrastive experiments. Each pair is a noisy
// two-modality view of one latent point: latent = class_mean + N(0, sigma^2),
// image = latent + N(0, modality_sigma^2), text = latent + N(0,
// modality_sigma^2), all expressed in the same coordinate basis (raw_dim ==
// feat_dim == dim). Classes sit at cluster_separation * sigma along distinct
// axes.
// ---------------------------------------------------------------------------

struct SyntheticPairSpec {
  int n_classes = 4;
  int n_train_per_class = 50;
  int n_eval_per_class = 13;
  int dim = 32;
  double cluster_separation = 6.0;
  double noise_sigma = 1.0;
  double modality_sigma = 0.1;
  std::uint64_t seed = 0;
};

struct PairDataset {
  PairBatch train;
  PairBatch eval;
  std::vector<int> train_labels;
  std::vector<int> eval_labels;
};

PairDataset generate_synthetic_pairs(const SyntheticPairSpec& spec);

// Fraction of eval images whose nearest eval text embedding is their own
// partner (top-1 matched-text retrieval).
double matched_text_retrieval_accuracy(const ToyDualEncoder& encoder, const PairBatch& eval);

}  // namespace remember
