#pragma once

#include <string>
#include <vector>

#include "remember/corpus.hpp"
#include "remember/numerics.hpp"

namespace remember {

// One retrieved reference case. `rank` is 1-based; `corpus_index` points back
// into Corpus::cases for cheap access to the full record.
struct RetrievalHit {
  std::string case_id;
  int rank = 0;
  double sim = 0.0;
  std::size_t corpus_index = 0;
};

// Exact exhaustive top-k search over the corpus image embeddings by cosine
// similarity. Hits come back sorted by similarity non-increasing, ties by
// ascending corpus insertion order. k greater than the corpus size returns
// every case and sets *truncated when provided. exclude_id, when non-null,
// drops that case from consideration (used when the query itself lives in
// the pool).
std::vector<RetrievalHit> top_k(const Vector& query, const Corpus& corpus, std::size_t k,
                                bool* truncated = nullptr,
                                const std::string* exclude_id = nullptr);

}  // namespace remember
