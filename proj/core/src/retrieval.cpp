#include "remember/retrieval.hpp"

#include <algorithm>

#include "remember/errors.hpp"

namespace remember {

std::vector<RetrievalHit> top_k(const Vector& query, const Corpus& corpus, std::size_t k,
                                bool* truncated, const std::string* exclude_id) {
  if (truncated != nullptr) *truncated = false;
  if (k == 0) throw DomainError("top_k: k must be >= 1");
  if (corpus.cases().empty()) throw DomainError("top_k: corpus is empty");
  if (query.size() != corpus.dim()) throw ShapeError("top_k: query/corpus dimension mismatch");

  std::vector<RetrievalHit> scored;
  scored.reserve(corpus.cases().size());
  for (std::size_t i = 0; i < corpus.cases().size(); ++i) {
    const ReferenceCase& rc = corpus.cases()[i];
    if (exclude_id != nullptr && rc.id == *exclude_id) continue;
    RetrievalHit hit;
    hit.case_id = rc.id;
    hit.sim = cosine_sim(query, rc.image_embedding);
    hit.corpus_index = i;
    scored.push_back(std::move(hit));
  }
  if (scored.empty()) throw DomainError("top_k: no candidates after exclusion");

  std::size_t take = std::min(k, scored.size());
  if (take < k && truncated != nullptr) *truncated = true;

  // stable partial sort: similarity descending, insertion order breaks ties
  std::stable_sort(scored.begin(), scored.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    return a.sim > b.sim;
  });
  scored.resize(take);
  for (std::size_t r = 0; r < scored.size(); ++r) scored[r].rank = static_cast<int>(r) + 1;
  return scored;
}

}  // namespace remember
