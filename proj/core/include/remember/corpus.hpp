#pragma once

// Reference-case corpus: the in-memory store of embedded cases plus class
// anchor embeddings, its on-disk index format (JSON manifest + raw float32
// blob), the canonical pseudo-text templates, and a synthetic generator for
// desk-scale experiments.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "remember/labels.hpp"
#include "remember/numerics.hpp"

namespace remember {

struct ReferenceCase {
  std::string id;
  Vector image_embedding;
  Vector abn_embedding;   // embedded abnormality pseudo-text
  Vector dx_embedding;    // embedded diagnosis pseudo-text
  Vector desc_embedding;  // embedded free-text description
  Abnormality abnormality = Abnormality::Normal;
  Dementia dementia = Dementia::NonDementia;
  std::string description;
};

// Text-anchor embeddings for one task, in canonical class-index order.
struct AnchorSet {
  Task task = Task::Abnormality;
  std::vector<std::string> classes;
  std::vector<Vector> anchors;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates: dim >= 1, every embedding has length dim, ids unique and
  // non-empty, anchor sets match their task arity.
  Corpus(std::size_t dim, std::vector<ReferenceCase> cases,
         std::vector<AnchorSet> anchors = {}, std::string provenance = {});

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return cases_.size(); }
  const std::vector<ReferenceCase>& cases() const { return cases_; }
  const ReferenceCase& at(std::size_t i) const { return cases_[i]; }
  const std::vector<AnchorSet>& anchors() const { return anchors_; }
  const std::string& provenance() const { return provenance_; }

  const ReferenceCase& by_id(const std::string& id) const;  // throws LookupError
  bool contains(const std::string& id) const;
  const AnchorSet* find_anchors(Task task) const;  // nullptr when absent

 private:
  std::size_t dim_ = 0;
  std::vector<ReferenceCase> cases_;
  std::vector<AnchorSet> anchors_;
  std::string provenance_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Pseudo-text templates. The exact sentences matter: they are the anchor and
// modality texts the whole text side of the engine is built from, so they are
// frozen here and golden-tested.
// ---------------------------------------------------------------------------

std::string_view abnormality_text(Abnormality a);
std::string_view dementia_text(Dementia d);
std::string_view severity_text(Severity s);

struct PseudoText {
  std::string description;  // placeholder; real cases carry their own free text
  std::string abnormality;
  std::string dementia;
  std::string combined;  // abnormality + " " + dementia
};
PseudoText pseudo_text(Abnormality a, Dementia d);

// ---------------------------------------------------------------------------
// On-disk index format
//
// manifest (JSON): { "version": 1, "dim": D, "provenance": "...",
//                    "cases": [{"id", "abnormality", "dementia",
//                               "description", "row"}, ...],
//                    "anchors": [{"task", "classes", "rows"}, ...] }
// blob (binary):   magic "REMB", then version/count/dim as uint32 LE, then
//                  count*dim float32 LE values, row-major. Each case owns
//                  four consecutive rows (image, abn, dx, desc); anchor rows
//                  follow the case rows.
// ---------------------------------------------------------------------------

void save_index(const Corpus& corpus, const std::filesystem::path& manifest_path,
                const std::filesystem::path& blob_path);

// Unknown manifest fields are skipped; a note per field is appended to
// `warnings` when provided.
Corpus load_index(const std::filesystem::path& manifest_path,
                  const std::filesystem::path& blob_path,
                  std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Synthetic corpus: n_classes Gaussian clusters with means at
// cluster_separation * noise_sigma along distinct coordinate axes. Anchors
// are the exact class means, so zero-shot behaviour on this data has a
// closed-form oracle. Embeddings are stored unnormalized.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  int n_classes = 4;
  int n_per_class = 10;
  int dim = 32;
  double cluster_separation = 6.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  std::string id_prefix = "synth";
};

// Pure function of the spec (seed included). Throws DomainError on invalid
// specs (needs n_classes >= 2, n_per_class >= 1, dim >= max(2, n_classes),
// noise_sigma > 0).
Corpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace remember
