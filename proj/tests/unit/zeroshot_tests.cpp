#include <doctest.h>

#include <vector>

#include "remember/zeroshot.hpp"
#include "test_util.hpp"

using namespace remember;

namespace {

AnchorSet orthonormal_abnormality_anchors() {
  AnchorSet set;
  set.task = Task::Abnormality;
  set.classes = class_names(Task::Abnormality);
  for (int c = 0; c < 4; ++c) {
    Vector a(4);
    a[static_cast<std::size_t>(c)] = 1.0;
    set.anchors.push_back(a);
  }
  return set;
}

}  // namespace

TEST_CASE("classify against orthonormal anchors has a closed form") {
  AnchorSet set = orthonormal_abnormality_anchors();
  Vector query(4);
  query[2] = 2.5;  // any positive scale lands on anchor 2

  ZeroShotResult r = classify(query, set);
  CHECK(r.task == Task::Abnormality);
  CHECK(r.classes == class_names(Task::Abnormality));
  REQUIRE(r.sims.size() == 4);
  CHECK(r.sims[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.sims[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.sims[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.sims[3] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.predicted == 2);

  // softmax over (0, 0, 1, 0): winner e/(3+e), the rest 1/(3+e)
  CHECK(r.probs[2] == doctest::Approx(0.475367).epsilon(1e-5));
  CHECK(r.probs[0] == doctest::Approx(0.174878).epsilon(1e-5));
  CHECK(r.probs[1] == doctest::Approx(0.174878).epsilon(1e-5));
  CHECK(r.probs[3] == doctest::Approx(0.174878).epsilon(1e-5));
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sum += r.probs[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("similarity ties resolve to the lowest class index") {
  AnchorSet set = orthonormal_abnormality_anchors();
  Vector query{1.0, 1.0, 0.0, 0.0};
  ZeroShotResult r = classify(query, set);
  CHECK(r.sims[0] == r.sims[1]);
  CHECK(r.predicted == 0);
}

TEST_CASE("classify validates anchors and query") {
  AnchorSet tiny;
  tiny.task = Task::Abnormality;
  tiny.classes = {"only"};
  tiny.anchors = {Vector{1.0, 0.0}};
  CHECK_THROWS_AS(classify(Vector{1.0, 0.0}, tiny), DomainError);

  AnchorSet set = orthonormal_abnormality_anchors();
  CHECK_THROWS_AS(classify(Vector{1.0, 0.0, 0.0}, set), ShapeError);
  // zero query has no direction
  CHECK_THROWS_AS(classify(Vector(4), set), DomainError);
}

TEST_CASE("binary call derives from the abnormality winner") {
  AnchorSet set = orthonormal_abnormality_anchors();

  ZeroShotResult normal_wins;
  normal_wins.task = Task::Abnormality;
  normal_wins.classes = set.classes;
  normal_wins.sims = Vector{0.9, 0.1, 0.1, 0.1};
  normal_wins.probs = softmax(normal_wins.sims);
  normal_wins.predicted = 0;
  BinaryResult b0 = binary_from_abnormality(normal_wins);
  CHECK(b0.predicted == 0);
  CHECK(b0.p_dementia == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(b0.raw_p == doctest::Approx(0.1).epsilon(1e-12));

  ZeroShotResult mtl_wins = normal_wins;
  mtl_wins.sims = Vector{0.2, 0.8, 0.1, 0.1};
  mtl_wins.probs = softmax(mtl_wins.sims);
  mtl_wins.predicted = 1;
  BinaryResult b1 = binary_from_abnormality(mtl_wins);
  CHECK(b1.predicted == 1);
  CHECK(b1.p_dementia == doctest::Approx(0.8).epsilon(1e-12));

  // out-of-range raw values clamp but stay observable
  ZeroShotResult hot = normal_wins;
  hot.sims = Vector{0.1, 1.5, 0.2, 0.2};
  hot.predicted = 1;
  BinaryResult bh = binary_from_abnormality(hot);
  CHECK(bh.p_dementia == 1.0);
  CHECK(bh.raw_p == doctest::Approx(1.5).epsilon(1e-12));

  ZeroShotResult cold = normal_wins;
  cold.sims = Vector{-0.9, -0.1, -0.5, -0.5};
  cold.predicted = 1;
  BinaryResult bc = binary_from_abnormality(cold);
  CHECK(bc.p_dementia == 0.0);
  CHECK(bc.raw_p == doctest::Approx(-0.1).epsilon(1e-12));

  // a negative Normal similarity pushes 1 - s above 1; it clamps too
  ZeroShotResult anti = normal_wins;
  anti.sims = Vector{-0.5, -0.6, -0.7, -0.8};
  anti.predicted = 0;
  BinaryResult ba = binary_from_abnormality(anti);
  CHECK(ba.predicted == 0);
  CHECK(ba.p_dementia == 1.0);
  CHECK(ba.raw_p == doctest::Approx(1.5).epsilon(1e-12));

  // only a 4-class abnormality result is accepted
  ZeroShotResult wrong_task = normal_wins;
  wrong_task.task = Task::DementiaType;
  CHECK_THROWS_AS(binary_from_abnormality(wrong_task), DomainError);
  ZeroShotResult wrong_size = normal_wins;
  wrong_size.sims = Vector{0.9, 0.1, 0.1};
  CHECK_THROWS_AS(binary_from_abnormality(wrong_size), DomainError);
}

TEST_CASE("predict_all runs every task off the corpus anchors") {
  SyntheticSpec spec;
  spec.n_classes = 4;
  spec.n_per_class = 5;
  spec.dim = 8;
  spec.seed = 77;
  Corpus corpus = generate_synthetic(spec);
  REQUIRE(corpus.anchors().size() == 3);

  const Vector& q = corpus.at(0).image_embedding;
  MultiTaskResult r = predict_all(q, corpus);
  CHECK(r.abnormality.sims.size() == 4);
  CHECK(r.dementia_type.sims.size() == 3);
  CHECK(r.severity.sims.size() == 4);
  // the binary call is consistent with the abnormality winner
  CHECK((r.binary.predicted == 0) == (r.abnormality.predicted == 0));

  // every case agrees with the consistency rule
  for (const auto& c : corpus.cases()) {
    MultiTaskResult m = predict_all(c.image_embedding, corpus);
    CHECK((m.binary.predicted == 0) == (m.abnormality.predicted == 0));
    CHECK(m.binary.p_dementia >= 0.0);
    CHECK(m.binary.p_dementia <= 1.0);
  }

  Corpus bare(8, {make_case("x", Vector(8, 1.0))});
  CHECK_THROWS_AS(predict_all(q, bare), ConfigError);
}
