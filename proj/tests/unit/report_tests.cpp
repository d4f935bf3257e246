#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remember/fsio.hpp"
#include "remember/report.hpp"
#include "test_util.hpp"

using namespace remember;

namespace {

// The demo report rendered by the golden file: one case each of strong MTL
// atrophy evidence, a weaker second MTL hit, and an off-label WMH hit.
DiagnosticReport demo_report() {
  DiagnosticReport r;

  r.abnormality.task = Task::Abnormality;
  r.abnormality.predicted = 1;
  r.abnormality.classes = class_names(Task::Abnormality);
  r.abnormality.probs = Vector{0.03, 0.91, 0.04, 0.02};
  r.abnormality.source = "zero-shot";

  r.dementia_type.task = Task::DementiaType;
  r.dementia_type.predicted = 1;
  r.dementia_type.classes = class_names(Task::DementiaType);
  r.dementia_type.probs = Vector{0.06, 0.89, 0.05};
  r.dementia_type.source = "zero-shot";

  r.severity.task = Task::Severity;
  r.severity.predicted = 2;
  r.severity.classes = class_names(Task::Severity);
  r.severity.probs = Vector{0.07, 0.13, 0.72, 0.08};
  r.severity.source = "zero-shot";

  r.binary.predicted = 1;
  r.binary.p_dementia = 0.91;
  r.binary.scale = "similarity";
  r.binary.source = "derived";

  EvidenceRow a;
  a.rank = 1;
  a.case_id = "case-0012";
  a.sim = 0.94;
  a.alpha = 0.57;
  a.abnormality = Abnormality::MtlAtrophy;
  a.dementia = Dementia::Alzheimers;
  a.description =
      "MRI shows severe hippocampal shrinkage and entorhinal cortex thinning, consistent with "
      "advanced medial temporal lobe atrophy.";
  EvidenceRow b;
  b.rank = 2;
  b.case_id = "case-0047";
  b.sim = 0.89;
  b.alpha = 0.36;
  b.abnormality = Abnormality::MtlAtrophy;
  b.dementia = Dementia::Alzheimers;
  b.description =
      "Evidence of moderate atrophy in the parahippocampal region and temporal horns enlargement.";
  EvidenceRow c;
  c.rank = 3;
  c.case_id = "case-0103";
  c.sim = 0.85;
  c.alpha = 0.07;
  c.abnormality = Abnormality::Wmh;
  c.dementia = Dementia::OtherDementia;
  c.description =
      "MRI reveals scattered periventricular white matter hyperintensities, suggestive of small "
      "vessel ischemic changes.";
  r.evidence = {a, b, c};

  r.metadata.corpus_id = "mindset-demo";
  r.metadata.encoder_id = "toy-encoder-v1";
  r.metadata.k = 3;
  return r;
}

ZeroShotResult zs(Task task, int predicted, Vector sims, Vector probs) {
  ZeroShotResult r;
  r.task = task;
  r.classes = class_names(task);
  r.sims = std::move(sims);
  r.probs = std::move(probs);
  r.predicted = predicted;
  return r;
}

MultiTaskResult demo_zero_shot() {
  MultiTaskResult mt;
  mt.abnormality = zs(Task::Abnormality, 1, Vector{0.2, 0.9, 0.3, 0.1}, Vector{0.1, 0.7, 0.15, 0.05});
  mt.binary.predicted = 1;
  mt.binary.p_dementia = 0.9;
  mt.binary.raw_p = 0.9;
  mt.dementia_type = zs(Task::DementiaType, 1, Vector{0.1, 0.8, 0.2}, Vector{0.2, 0.6, 0.2});
  mt.severity = zs(Task::Severity, 2, Vector{0.1, 0.2, 0.8, 0.3}, Vector{0.1, 0.2, 0.5, 0.2});
  return mt;
}

Corpus three_case_corpus() {
  std::vector<ReferenceCase> cases;
  cases.push_back(make_case("a", Vector{1.0, 0.0}, Abnormality::MtlAtrophy, Dementia::Alzheimers,
                            "case a text"));
  cases.push_back(make_case("b", Vector{0.0, 1.0}, Abnormality::Normal, Dementia::NonDementia,
                            "case b text"));
  cases.push_back(make_case("c", Vector{1.0, 1.0}, Abnormality::Wmh, Dementia::OtherDementia,
                            "case c text"));
  return Corpus(2, std::move(cases));
}

RetrievalHit hit(const std::string& id, double sim) {
  RetrievalHit h;
  h.case_id = id;
  h.sim = sim;
  return h;
}

}  // namespace

TEST_CASE("text rendering matches the golden file byte for byte") {
  DiagnosticReport r = demo_report();
  validate_report(r);
  std::string expected =
      read_file(std::filesystem::path(REMEMBER_TEST_DATA_DIR) / "report_golden.txt");
  CHECK(render_text(r) == expected);
}

TEST_CASE("probabilities render as half-up integer percents") {
  DiagnosticReport r = demo_report();
  r.binary.p_dementia = 0.905;
  CHECK(render_text(r).find("(p_dementia = 91%)") != std::string::npos);
  r.binary.p_dementia = 0.004999;
  CHECK(render_text(r).find("(p_dementia = 0%)") != std::string::npos);
  r.binary.p_dementia = 0.005;
  CHECK(render_text(r).find("(p_dementia = 1%)") != std::string::npos);
  r.binary.p_dementia = 0.9999;
  CHECK(render_text(r).find("(p_dementia = 100%)") != std::string::npos);
}

TEST_CASE("zero-shot conversions copy fields and stamp sources") {
  ZeroShotResult z = zs(Task::DementiaType, 2, Vector{0.1, 0.2, 0.9}, Vector{0.2, 0.3, 0.5});
  TaskPrediction p = task_prediction_from(z);
  CHECK(p.task == Task::DementiaType);
  CHECK(p.predicted == 2);
  CHECK(p.classes == class_names(Task::DementiaType));
  CHECK(p.probs[2] == 0.5);
  CHECK(p.source == "zero-shot");

  BinaryResult br;
  br.predicted = 1;
  br.p_dementia = 0.93;
  br.raw_p = 1.2;
  BinaryPrediction bp = binary_prediction_from(br);
  CHECK(bp.predicted == 1);
  CHECK(bp.p_dementia == 0.93);
  CHECK(bp.scale == "similarity");
  CHECK(bp.source == "derived");
}

TEST_CASE("head conversions take the argmax with ties to the lowest index") {
  PredictResult pr;
  pr.probs = Vector{0.25, 0.25, 0.25, 0.25};
  TaskPrediction p = task_prediction_from_head(Task::Abnormality, pr);
  CHECK(p.predicted == 0);
  CHECK(p.source == "evidence-guided");
  CHECK(p.classes == class_names(Task::Abnormality));

  pr.probs = Vector{0.1, 0.1, 0.4, 0.4};
  CHECK(task_prediction_from_head(Task::Abnormality, pr).predicted == 2);

  pr.probs = Vector{0.5, 0.5};
  CHECK_THROWS_AS(task_prediction_from_head(Task::Abnormality, pr), ShapeError);
}

TEST_CASE("assemble sorts evidence by similarity with alpha following its hit") {
  Corpus corpus = three_case_corpus();
  std::vector<RetrievalHit> hits = {hit("b", 0.5), hit("a", 0.9), hit("c", 0.7)};
  Vector alpha{0.2, 0.5, 0.3};
  ReportMetadata meta;
  meta.corpus_id = "demo";
  meta.encoder_id = "enc";
  meta.k = 3;

  DiagnosticReport r = assemble(demo_zero_shot(), hits, alpha, corpus, meta);
  REQUIRE(r.evidence.size() == 3);
  CHECK(r.evidence[0].case_id == "a");
  CHECK(r.evidence[0].sim == 0.9);
  CHECK(r.evidence[0].alpha == 0.5);
  CHECK(r.evidence[0].rank == 1);
  CHECK(r.evidence[0].abnormality == Abnormality::MtlAtrophy);
  CHECK(r.evidence[0].description == "case a text");
  CHECK(r.evidence[1].case_id == "c");
  CHECK(r.evidence[1].alpha == 0.3);
  CHECK(r.evidence[1].rank == 2);
  CHECK(r.evidence[2].case_id == "b");
  CHECK(r.evidence[2].alpha == 0.2);
  CHECK(r.evidence[2].rank == 3);
  CHECK(r.abnormality.source == "zero-shot");
  CHECK(r.binary.p_dementia == 0.9);
  CHECK(r.metadata.corpus_id == "demo");

  // equal similarities keep their incoming order
  std::vector<RetrievalHit> tied = {hit("b", 0.5), hit("c", 0.5)};
  DiagnosticReport t = assemble(demo_zero_shot(), tied, Vector{0.6, 0.4}, corpus, meta);
  CHECK(t.evidence[0].case_id == "b");
  CHECK(t.evidence[1].case_id == "c");

  CHECK_THROWS_AS(assemble(demo_zero_shot(), hits, Vector{0.5, 0.5}, corpus, meta), ShapeError);
  std::vector<RetrievalHit> ghost = {hit("zz", 0.9)};
  CHECK_THROWS_AS(assemble(demo_zero_shot(), ghost, Vector{1.0}, corpus, meta), LookupError);
}

TEST_CASE("head predictions replace blocks and re-derive the binary call") {
  // a non-normal abnormality head turns the binary call positive
  DiagnosticReport r = demo_report();
  TaskPrediction head;
  head.task = Task::Abnormality;
  head.classes = class_names(Task::Abnormality);
  head.probs = Vector{0.1, 0.2, 0.6, 0.1};
  head.predicted = 2;
  head.source = "evidence-guided";
  apply_head_prediction(r, head);
  CHECK(r.abnormality.source == "evidence-guided");
  CHECK(r.abnormality.predicted == 2);
  CHECK(r.binary.predicted == 1);
  CHECK(r.binary.p_dementia == 0.6);
  CHECK(r.binary.scale == "softmax");
  CHECK(r.binary.source == "derived");
  validate_report(r);

  // a normal abnormality head flips it negative with p = 1 - p_normal
  DiagnosticReport r2 = demo_report();
  head.probs = Vector{0.7, 0.1, 0.1, 0.1};
  head.predicted = 0;
  apply_head_prediction(r2, head);
  CHECK(r2.binary.predicted == 0);
  CHECK(r2.binary.p_dementia == 1.0 - 0.7);
  CHECK(r2.binary.scale == "softmax");

  // dementia-type and severity replacements leave the binary call alone
  DiagnosticReport r3 = demo_report();
  TaskPrediction dem;
  dem.task = Task::DementiaType;
  dem.classes = class_names(Task::DementiaType);
  dem.probs = Vector{0.2, 0.5, 0.3};
  dem.predicted = 1;
  dem.source = "evidence-guided";
  apply_head_prediction(r3, dem);
  CHECK(r3.dementia_type.source == "evidence-guided");
  CHECK(r3.binary.scale == "similarity");
  CHECK(r3.binary.p_dementia == 0.91);

  // a dedicated two-class head drives the binary block directly
  DiagnosticReport r4 = demo_report();
  TaskPrediction bin;
  bin.task = Task::BinaryDementia;
  bin.classes = class_names(Task::BinaryDementia);
  bin.probs = Vector{0.35, 0.65};
  bin.predicted = 1;
  bin.source = "evidence-guided";
  apply_head_prediction(r4, bin);
  CHECK(r4.binary.predicted == 1);
  CHECK(r4.binary.p_dementia == 0.65);
  CHECK(r4.binary.scale == "softmax");
  CHECK(r4.binary.source == "evidence-guided");

  // malformed predictions are rejected before touching the report
  DiagnosticReport r5 = demo_report();
  TaskPrediction bad = head;
  bad.probs = Vector{0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(apply_head_prediction(r5, bad), DomainError);
  bad = head;
  bad.classes[0] = "normal";
  CHECK_THROWS_AS(apply_head_prediction(r5, bad), DomainError);
  bad = head;
  bad.predicted = 9;
  CHECK_THROWS_AS(apply_head_prediction(r5, bad), DomainError);
}

TEST_CASE("validate_report rejects every broken invariant") {
  auto broken = [](auto mutate) {
    DiagnosticReport r = demo_report();
    mutate(r);
    CHECK_THROWS_AS(validate_report(r), DomainError);
  };
  broken([](DiagnosticReport& r) { r.abnormality.probs = Vector{0.5, 0.5, 0.1, 0.0}; });
  broken([](DiagnosticReport& r) { r.abnormality.probs = Vector{0.5, 0.5}; });
  broken([](DiagnosticReport& r) { r.abnormality.classes[0] = "normal"; });
  broken([](DiagnosticReport& r) { r.abnormality.predicted = 4; });
  broken([](DiagnosticReport& r) { r.abnormality.source.clear(); });
  broken([](DiagnosticReport& r) { r.severity.task = Task::Abnormality; });
  broken([](DiagnosticReport& r) { r.binary.predicted = 2; });
  broken([](DiagnosticReport& r) { r.binary.p_dementia = 1.5; });
  broken([](DiagnosticReport& r) { r.binary.scale = "linear"; });
  broken([](DiagnosticReport& r) { r.binary.source.clear(); });
  broken([](DiagnosticReport& r) { r.evidence[0].rank = 0; });
  broken([](DiagnosticReport& r) { r.evidence[0].sim = 0.10; });
  broken([](DiagnosticReport& r) { r.evidence[1].alpha = -0.1; });
  broken([](DiagnosticReport& r) { r.evidence[2].alpha = 0.5; });

  // an evidence-free report is still valid (alpha sum not enforced on empty)
  DiagnosticReport r = demo_report();
  r.evidence.clear();
  validate_report(r);
}

TEST_CASE("JSON rendering round-trips byte-identically") {
  DiagnosticReport r = demo_report();
  std::string j1 = render_json(r);
  DiagnosticReport parsed = parse_report_json(j1);
  CHECK(render_json(parsed) == j1);
  CHECK(parsed.abnormality.predicted == 1);
  CHECK(parsed.dementia_type.probs[1] == 0.89);
  CHECK(parsed.binary.p_dementia == 0.91);
  CHECK(parsed.evidence.size() == 3);
  CHECK(parsed.evidence[0].case_id == "case-0012");
  CHECK(parsed.evidence[2].dementia == Dementia::OtherDementia);
  CHECK(parsed.metadata.corpus_id == "mindset-demo");
  CHECK(parsed.metadata.k == 3);
  CHECK(parsed.metadata.generated_at.empty());
  CHECK(j1.find("generated_at") == std::string::npos);

  // timestamps are carried when present
  r.metadata.generated_at = "2026-02-11T09:30:00Z";
  std::string j2 = render_json(r);
  CHECK(j2.find("\"generated_at\": \"2026-02-11T09:30:00Z\"") != std::string::npos);
  DiagnosticReport stamped = parse_report_json(j2);
  CHECK(stamped.metadata.generated_at == "2026-02-11T09:30:00Z");
  CHECK(render_json(stamped) == j2);
}

TEST_CASE("report parsing rejects malformed documents") {
  CHECK_THROWS_AS(parse_report_json("{not json"), LoadError);
  CHECK_THROWS_AS(parse_report_json("{}"), LoadError);

  std::string good = render_json(demo_report());
  CHECK_THROWS_AS(parse_report_json(good.substr(0, good.size() / 2)), LoadError);

  std::string wrong_version = good;
  wrong_version.replace(wrong_version.find("\"version\": 1"), 12, "\"version\": 2");
  CHECK_THROWS_AS(parse_report_json(wrong_version), LoadError);

  std::string bad_label = good;
  bad_label.replace(bad_label.find("\"label\": \"MTL Atrophy\""), 22, "\"label\": \"Bogus Label\"");
  CHECK_THROWS_AS(parse_report_json(bad_label), LoadError);
}

TEST_CASE("structural JSON validation reports violations without throwing") {
  std::string good = render_json(demo_report());
  CHECK(validate_report_json(good).empty());

  CHECK_THROWS_AS(validate_report_json("{not json"), LoadError);

  auto problems = validate_report_json("[]");
  REQUIRE(problems.size() == 1);
  CHECK(problems[0] == "root: must be an object");

  problems = validate_report_json("{}");
  CHECK(problems.size() == 4);
  bool saw_version = false;
  for (const std::string& p : problems) {
    if (p.find("'version'") != std::string::npos) saw_version = true;
  }
  CHECK(saw_version);

  nlohmann::json doc = nlohmann::json::parse(good);
  doc["version"] = 2;
  problems = validate_report_json(doc.dump());
  REQUIRE(problems.size() == 1);
  CHECK(problems[0] == "root: version must be 1");

  doc = nlohmann::json::parse(good);
  doc["predictions"]["binary"]["scale"] = "linear";
  problems = validate_report_json(doc.dump());
  REQUIRE(problems.size() == 1);
  CHECK(problems[0] == "predictions.binary: scale must be 'similarity' or 'softmax'");

  doc = nlohmann::json::parse(good);
  doc["predictions"]["severity"]["probs"] = {0.5, 0.5};
  problems = validate_report_json(doc.dump());
  REQUIRE(problems.size() == 1);
  CHECK(problems[0] == "predictions.severity: classes and probs must have equal length");

  doc = nlohmann::json::parse(good);
  doc["predictions"]["abnormality"].erase("label");
  doc["evidence"][1] = 5;
  problems = validate_report_json(doc.dump());
  REQUIRE(problems.size() == 2);
  CHECK(problems[0] == "predictions.abnormality: missing required key 'label'");
  CHECK(problems[1] == "evidence[1]: must be an object");

  doc = nlohmann::json::parse(good);
  doc["metadata"]["k"] = "three";
  problems = validate_report_json(doc.dump());
  REQUIRE(problems.size() == 1);
  CHECK(problems[0] == "metadata: key 'k' must be of type integer");
}

TEST_CASE("the embedded schema matches the installed document") {
  std::string installed =
      read_file(std::filesystem::path(REMEMBER_DOCS_DIR) / "report.schema.json");
  CHECK(installed == kReportSchemaJson);
}
