#pragma once

#include <vector>

#include "remember/corpus.hpp"
#include "remember/labels.hpp"
#include "remember/numerics.hpp"

namespace remember {

// Anchor-matching prediction for one task: per-class cosine similarities to
// the task's anchors plus a softmax confidence vector over them.
struct ZeroShotResult {
  Task task = Task::Abnormality;
  std::vector<std::string> classes;
  Vector sims;
  Vector probs;
  int predicted = 0;  // argmax of sims, ties resolved to the lowest index
};

// Classifies `query` against the anchor set: cosine similarity per anchor,
// argmax prediction, softmax confidences.
ZeroShotResult classify(const Vector& query, const AnchorSet& anchors);

// Two-way dementia call derived from the 4-class abnormality result: the
// query is non-demented exactly when its closest anchor is Normal, and
// p_dementia is 1 - sim(normal) in that case, else the winning similarity.
// raw_p keeps the unclamped value; p_dementia is clamped to [0,1].
struct BinaryResult {
  int predicted = 0;  // 0 = Non-Demented, 1 = Demented
  double p_dementia = 0.0;
  double raw_p = 0.0;
};

BinaryResult binary_from_abnormality(const ZeroShotResult& abnormality);

// All four tasks evaluated against one query.
struct MultiTaskResult {
  ZeroShotResult abnormality;
  BinaryResult binary;
  ZeroShotResult dementia_type;
  ZeroShotResult severity;
};

// Runs classify for abnormality, dementia type, and severity using the
// corpus's stored anchor sets, and derives the binary call. Throws
// ConfigError when a required anchor set is absent.
MultiTaskResult predict_all(const Vector& query, const Corpus& corpus);

}  // namespace remember
