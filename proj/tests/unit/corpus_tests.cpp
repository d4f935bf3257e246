#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "remember/corpus.hpp"
#include "remember/fsio.hpp"
#include "test_util.hpp"

using namespace remember;

TEST_CASE("template sentences are byte-exact") {
  CHECK(abnormality_text(Abnormality::Normal) ==
        "MRI image shows normal brain without evidence of significant structures or pathological "
        "changes.");
  CHECK(abnormality_text(Abnormality::MtlAtrophy) ==
        "MRI image illustrates volume reduction and structural atrophy in the medial temporal "
        "lobes, including hippocampal shrinkage.");
  CHECK(abnormality_text(Abnormality::Wmh) ==
        "MRI image reveals hyperintense lesions within cerebral white matter regions, indicating "
        "white matter hyperintensities.");
  CHECK(abnormality_text(Abnormality::OtherAtrophy) ==
        "MRI image indicates brain atrophy in cortical or subcortical regions other than medial "
        "temporal lobes, with notable structural volume loss.");

  CHECK(dementia_text(Dementia::NonDementia) ==
        "MRI image presents no evident dementia-related structural changes, reflecting a normal "
        "cognitive state.");
  CHECK(dementia_text(Dementia::Alzheimers) ==
        "MRI image shows characteristic patterns of brain atrophy suggestive of Alzheimer's "
        "Disease pathology.");
  CHECK(dementia_text(Dementia::OtherDementia) ==
        "MRI image shows structural brain abnormalities indicative of dementia types other than "
        "Alzheimer's Disease, such as Vascular dementia or Dementia with Lewy bodies.");

  CHECK(severity_text(Severity::NonDemented) ==
        "MRI image depicts normal brain anatomy without visible dementia-related atrophic or "
        "pathological changes.");
  CHECK(severity_text(Severity::VeryMild) ==
        "MRI image presents subtle and minimal structural changes, consistent with very mild "
        "cognitive impairment or early-stage dementia.");
  CHECK(severity_text(Severity::Mild) ==
        "MRI image illustrates noticeable atrophic changes in brain regions, indicative of mild "
        "dementia progression.");
  CHECK(severity_text(Severity::Moderate) ==
        "MRI image shows pronounced structural atrophy and pathological changes characteristic "
        "of moderate dementia severity.");
}

TEST_CASE("combined pseudo text joins with a single space") {
  PseudoText t = pseudo_text(Abnormality::Wmh, Dementia::OtherDementia);
  CHECK(t.abnormality == abnormality_text(Abnormality::Wmh));
  CHECK(t.dementia == dementia_text(Dementia::OtherDementia));
  CHECK(t.combined == t.abnormality + " " + t.dementia);
}

TEST_CASE("corpus construction validates its input") {
  Vector e{1.0, 0.0, 0.0};
  std::vector<ReferenceCase> ok = {make_case("a", e), make_case("b", e)};
  Corpus corpus(3, ok);
  CHECK(corpus.size() == 2);
  CHECK(corpus.dim() == 3);
  CHECK(corpus.contains("a"));
  CHECK_FALSE(corpus.contains("zzz"));
  CHECK(corpus.by_id("b").id == "b");
  CHECK_THROWS_AS(corpus.by_id("zzz"), LookupError);
  CHECK(corpus.find_anchors(Task::Abnormality) == nullptr);

  // duplicate ids
  CHECK_THROWS_AS(Corpus(3, {make_case("a", e), make_case("a", e)}), DomainError);
  // empty id
  CHECK_THROWS_AS(Corpus(3, {make_case("", e)}), DomainError);
  // embedding width mismatch
  ReferenceCase bad = make_case("c", e);
  bad.dx_embedding = Vector{1.0, 2.0};
  CHECK_THROWS_AS(Corpus(3, {bad}), ShapeError);
  // dim zero
  CHECK_THROWS_AS(Corpus(0, {}), DomainError);

  // anchor set arity must match the task
  AnchorSet anchors;
  anchors.task = Task::Abnormality;
  anchors.classes = {"x", "y"};
  anchors.anchors = {e, e};
  CHECK_THROWS_AS(Corpus(3, {make_case("a", e)}, {anchors}), ShapeError);
}

TEST_CASE("index round-trip is a byte-level fixed point") {
  auto dir = test_tmp_dir("index-roundtrip");
  SyntheticSpec spec;
  spec.n_classes = 3;
  spec.n_per_class = 4;
  spec.dim = 8;
  spec.seed = 5;
  Corpus corpus = generate_synthetic(spec);

  save_index(corpus, dir / "m.json", dir / "b.blob");
  Corpus loaded = load_index(dir / "m.json", dir / "b.blob");
  CHECK(loaded.size() == corpus.size());
  CHECK(loaded.dim() == corpus.dim());
  CHECK(loaded.provenance() == corpus.provenance());
  CHECK(loaded.anchors().size() == corpus.anchors().size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded.at(i).id == corpus.at(i).id);
    CHECK(loaded.at(i).abnormality == corpus.at(i).abnormality);
    CHECK(loaded.at(i).dementia == corpus.at(i).dementia);
    CHECK(loaded.at(i).description == corpus.at(i).description);
  }

  // save -> load -> save reproduces both files byte for byte
  save_index(loaded, dir / "m2.json", dir / "b2.blob");
  CHECK(read_file(dir / "m.json") == read_file(dir / "m2.json"));
  CHECK(read_file(dir / "b.blob") == read_file(dir / "b2.blob"));

  // loaded embeddings are bit-identical across the two loads
  Corpus loaded2 = load_index(dir / "m2.json", dir / "b2.blob");
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    for (std::size_t d = 0; d < loaded.dim(); ++d) {
      CHECK(loaded.at(i).image_embedding[d] == loaded2.at(i).image_embedding[d]);
      CHECK(loaded.at(i).desc_embedding[d] == loaded2.at(i).desc_embedding[d]);
    }
  }
}

TEST_CASE("empty corpus round-trips") {
  auto dir = test_tmp_dir("index-empty");
  Corpus corpus(4, {});
  save_index(corpus, dir / "m.json", dir / "b.blob");
  Corpus loaded = load_index(dir / "m.json", dir / "b.blob");
  CHECK(loaded.size() == 0);
  CHECK(loaded.dim() == 4);
}

TEST_CASE("blob truncation names the offending case") {
  auto dir = test_tmp_dir("index-truncated");
  Vector e{1.0, 2.0};
  Corpus corpus(2, {make_case("case-one", e), make_case("case-two", e)});
  save_index(corpus, dir / "m.json", dir / "b.blob");

  std::string blob = read_file(dir / "b.blob");
  write_file(dir / "b.blob", blob.substr(0, blob.size() - 1));
  try {
    load_index(dir / "m.json", dir / "b.blob");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("case-two") != std::string::npos);
  }
}

TEST_CASE("bad magic and duplicate manifest ids are load errors") {
  auto dir = test_tmp_dir("index-bad");
  Vector e{1.0, 2.0};
  Corpus corpus(2, {make_case("a", e)});
  save_index(corpus, dir / "m.json", dir / "b.blob");

  std::string blob = read_file(dir / "b.blob");
  blob[0] = 'X';
  write_file(dir / "b2.blob", blob);
  CHECK_THROWS_AS(load_index(dir / "m.json", dir / "b2.blob"), LoadError);

  // rewrite the second case id so the manifest carries a duplicate
  Corpus two(2, {make_case("a", e), make_case("b", e)});
  save_index(two, dir / "m2.json", dir / "b3.blob");
  std::string m2 = read_file(dir / "m2.json");
  std::size_t b_pos = m2.find("\"b\"");
  REQUIRE(b_pos != std::string::npos);
  m2.replace(b_pos, 3, "\"a\"");
  write_file(dir / "m2.json", m2);
  CHECK_THROWS_AS(load_index(dir / "m2.json", dir / "b3.blob"), LoadError);

  // malformed JSON manifest
  write_file(dir / "m3.json", "{not json");
  CHECK_THROWS_AS(load_index(dir / "m3.json", dir / "b.blob"), LoadError);

  // missing files are I/O errors
  CHECK_THROWS_AS(load_index(dir / "absent.json", dir / "b.blob"), IoError);
}

TEST_CASE("unknown manifest fields are skipped with a warning") {
  auto dir = test_tmp_dir("index-unknown-field");
  Vector e{1.0, 2.0};
  Corpus corpus(2, {make_case("a", e)});
  save_index(corpus, dir / "m.json", dir / "b.blob");

  std::string manifest = read_file(dir / "m.json");
  auto pos = manifest.find("\"version\"");
  REQUIRE(pos != std::string::npos);
  manifest.insert(pos, "\"future_field\": 42, ");
  write_file(dir / "m.json", manifest);

  std::vector<std::string> warnings;
  Corpus loaded = load_index(dir / "m.json", dir / "b.blob", &warnings);
  CHECK(loaded.size() == 1);
  REQUIRE(warnings.size() >= 1);
  CHECK(warnings[0].find("future_field") != std::string::npos);
}

TEST_CASE("synthetic generation is pure and geometrically sane") {
  SyntheticSpec spec;
  spec.n_classes = 4;
  spec.n_per_class = 10;
  spec.dim = 16;
  spec.cluster_separation = 6.0;
  spec.seed = 123;
  Corpus a = generate_synthetic(spec);
  Corpus b = generate_synthetic(spec);
  CHECK(a.size() == 40);
  CHECK(a.dim() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.at(i).id == b.at(i).id);
    for (std::size_t d = 0; d < a.dim(); ++d) {
      CHECK(a.at(i).image_embedding[d] == b.at(i).image_embedding[d]);
    }
  }

  // anchors are the exact class means: separation * sigma on axis c
  const AnchorSet* anchors = a.find_anchors(Task::Abnormality);
  REQUIRE(anchors != nullptr);
  REQUIRE(anchors->anchors.size() == 4);
  for (int c = 0; c < 4; ++c) {
    for (std::size_t d = 0; d < a.dim(); ++d) {
      const double expected = d == static_cast<std::size_t>(c) ? 6.0 : 0.0;
      CHECK(anchors->anchors[static_cast<std::size_t>(c)][d] == doctest::Approx(expected));
    }
  }

  // nearest-mean classification of image embeddings is >= 99% at 6 sigma
  int correct = 0;
  for (const auto& c : a.cases()) {
    int best = 0;
    double best_sim = -2.0;
    for (int k = 0; k < 4; ++k) {
      double s = cosine_sim(c.image_embedding, anchors->anchors[static_cast<std::size_t>(k)]);
      if (s > best_sim) {
        best_sim = s;
        best = k;
      }
    }
    if (best == static_cast<int>(c.abnormality)) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(a.size()) >= 0.99);

  SyntheticSpec bad = spec;
  bad.n_classes = 1;
  CHECK_THROWS_AS(generate_synthetic(bad), DomainError);
  bad = spec;
  bad.noise_sigma = 0.0;
  CHECK_THROWS_AS(generate_synthetic(bad), DomainError);
  bad = spec;
  bad.dim = 2;
  CHECK_THROWS_AS(generate_synthetic(bad), DomainError);
}
