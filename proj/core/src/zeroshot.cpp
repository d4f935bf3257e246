#include "remember/zeroshot.hpp"

#include <algorithm>

#include "remember/errors.hpp"

namespace remember {

ZeroShotResult classify(const Vector& query, const AnchorSet& anchors) {
  if (anchors.anchors.size() < 2) throw DomainError("classify: need at least 2 anchors");
  ZeroShotResult result;
  result.task = anchors.task;
  result.classes = anchors.classes;
  result.sims = Vector(anchors.anchors.size());
  for (std::size_t k = 0; k < anchors.anchors.size(); ++k) {
    if (anchors.anchors[k].size() != query.size()) {
      throw ShapeError("classify: query/anchor dimension mismatch");
    }
    result.sims[k] = cosine_sim(query, anchors.anchors[k]);
  }
  result.predicted = 0;
  for (std::size_t k = 1; k < result.sims.size(); ++k) {
    if (result.sims[k] > result.sims[result.predicted]) result.predicted = static_cast<int>(k);
  }
  result.probs = softmax(result.sims);
  return result;
}

BinaryResult binary_from_abnormality(const ZeroShotResult& abnormality) {
  if (abnormality.task != Task::Abnormality ||
      abnormality.sims.size() != static_cast<std::size_t>(kAbnormalityClasses)) {
    throw DomainError("binary_from_abnormality: input must be a 4-class abnormality result");
  }
  BinaryResult result;
  const bool normal_wins = abnormality.predicted == static_cast<int>(Abnormality::Normal);
  result.predicted = normal_wins ? 0 : 1;
  result.raw_p = normal_wins ? 1.0 - abnormality.sims[0]
                             : abnormality.sims[abnormality.predicted];
  result.p_dementia = std::clamp(result.raw_p, 0.0, 1.0);
  return result;
}

MultiTaskResult predict_all(const Vector& query, const Corpus& corpus) {
  auto require = [&](Task task) -> const AnchorSet& {
    const AnchorSet* set = corpus.find_anchors(task);
    if (set == nullptr) {
      throw ConfigError(std::string("predict_all: corpus has no anchor set for task '") +
                        std::string(to_string(task)) + "'");
    }
    return *set;
  };
  MultiTaskResult out;
  out.abnormality = classify(query, require(Task::Abnormality));
  out.binary = binary_from_abnormality(out.abnormality);
  out.dementia_type = classify(query, require(Task::DementiaType));
  out.severity = classify(query, require(Task::Severity));
  return out;
}

}  // namespace remember
