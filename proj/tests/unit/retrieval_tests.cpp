#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "remember/retrieval.hpp"
#include "test_util.hpp"

using namespace remember;

namespace {

// Corpus of 2-d points at known angles so cosine order is readable by eye.
Corpus angle_corpus() {
  std::vector<ReferenceCase> cases = {
      make_case("east", Vector{1.0, 0.0}),        // cos = 1.0 vs (1,0)
      make_case("north", Vector{0.0, 1.0}),       // cos = 0.0
      make_case("diag", Vector{1.0, 1.0}),        // cos = 0.7071
      make_case("west", Vector{-1.0, 0.0}),       // cos = -1.0
      make_case("shallow", Vector{2.0, 1.0}),     // cos = 0.8944
  };
  return Corpus(2, std::move(cases));
}

}  // namespace

TEST_CASE("top-k returns hits in similarity order with 1-based ranks") {
  Corpus corpus = angle_corpus();
  Vector query{1.0, 0.0};

  bool truncated = true;
  auto hits = top_k(query, corpus, 3, &truncated);
  CHECK_FALSE(truncated);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].case_id == "east");
  CHECK(hits[1].case_id == "shallow");
  CHECK(hits[2].case_id == "diag");
  CHECK(hits[0].sim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hits[1].sim == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-12));
  CHECK(hits[2].sim == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(hits[0].rank == 1);
  CHECK(hits[1].rank == 2);
  CHECK(hits[2].rank == 3);
  CHECK(corpus.at(hits[0].corpus_index).id == "east");
  CHECK(corpus.at(hits[1].corpus_index).id == "shallow");
}

TEST_CASE("ties keep corpus insertion order") {
  std::vector<ReferenceCase> cases = {
      make_case("a", Vector{1.0, 0.0}),
      make_case("b", Vector{2.0, 0.0}),  // same direction, same cosine
      make_case("c", Vector{3.0, 0.0}),
      make_case("d", Vector{0.0, 1.0}),
  };
  Corpus corpus(2, std::move(cases));
  auto hits = top_k(Vector{1.0, 0.0}, corpus, 4);
  REQUIRE(hits.size() == 4);
  CHECK(hits[0].case_id == "a");
  CHECK(hits[1].case_id == "b");
  CHECK(hits[2].case_id == "c");
  CHECK(hits[3].case_id == "d");
}

TEST_CASE("k beyond the corpus returns everything and reports truncation") {
  Corpus corpus = angle_corpus();
  bool truncated = false;
  auto hits = top_k(Vector{1.0, 0.0}, corpus, 50, &truncated);
  CHECK(truncated);
  CHECK(hits.size() == 5);
  CHECK(hits.back().case_id == "west");
  CHECK(hits.back().rank == 5);

  // same call without the out-param still works
  auto hits2 = top_k(Vector{1.0, 0.0}, corpus, 50);
  CHECK(hits2.size() == 5);
}

TEST_CASE("exclusion removes the query's own record") {
  Corpus corpus = angle_corpus();
  std::string self = "east";
  auto hits = top_k(Vector{1.0, 0.0}, corpus, 2, nullptr, &self);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].case_id == "shallow");
  CHECK(hits[1].case_id == "diag");

  // excluding the only candidate leaves nothing to rank
  Corpus single(2, {make_case("solo", Vector{1.0, 0.0})});
  std::string solo = "solo";
  CHECK_THROWS_AS(top_k(Vector{1.0, 0.0}, single, 1, nullptr, &solo), DomainError);
}

TEST_CASE("top-k rejects bad arguments") {
  Corpus corpus = angle_corpus();
  CHECK_THROWS_AS(top_k(Vector{1.0, 0.0}, corpus, 0), DomainError);
  CHECK_THROWS_AS(top_k(Vector{1.0, 0.0, 0.0}, corpus, 2), ShapeError);
  Corpus empty(2, {});
  CHECK_THROWS_AS(top_k(Vector{1.0, 0.0}, empty, 2), DomainError);
  // zero query has no direction
  CHECK_THROWS_AS(top_k(Vector{0.0, 0.0}, corpus, 2), DomainError);
}

TEST_CASE("top-k agrees with a full-sort oracle on random corpora") {
  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng.below(46);  // 5..50 cases
    const std::size_t dim = 3 + rng.below(6); // 3..8 dims
    std::vector<ReferenceCase> cases;
    for (std::size_t i = 0; i < n; ++i) {
      Vector v(dim);
      for (std::size_t d = 0; d < dim; ++d) v[d] = rng.normal();
      char id[32];
      std::snprintf(id, sizeof id, "case-%02zu", i);
      cases.push_back(make_case(id, v));
    }
    Corpus corpus(dim, std::move(cases));
    Vector query(dim);
    for (std::size_t d = 0; d < dim; ++d) query[d] = rng.normal();
    const std::size_t k = 1 + rng.below(n);

    // oracle: score every case, full stable sort on (sim desc, index asc)
    struct Scored {
      std::size_t index;
      double sim;
    };
    std::vector<Scored> oracle;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      oracle.push_back({i, cosine_sim(query, corpus.at(i).image_embedding)});
    }
    std::sort(oracle.begin(), oracle.end(), [](const Scored& a, const Scored& b) {
      if (a.sim != b.sim) return a.sim > b.sim;
      return a.index < b.index;
    });

    auto hits = top_k(query, corpus, k);
    REQUIRE(hits.size() == k);
    for (std::size_t r = 0; r < k; ++r) {
      CAPTURE(trial);
      CAPTURE(r);
      CHECK(hits[r].corpus_index == oracle[r].index);
      CHECK(hits[r].sim == oracle[r].sim);
      CHECK(hits[r].rank == static_cast<int>(r) + 1);
    }
  }
}
