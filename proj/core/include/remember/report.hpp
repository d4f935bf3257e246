#pragma once

// Structured diagnostic reports: multi-task predictions with confidence
// vectors plus the ranked evidence table, rendered as frozen plain text
// (golden-file tested) and as schema-conformant JSON (lossless round-trip).

#include <string>
#include <vector>

#include "remember/corpus.hpp"
#include "remember/evidence.hpp"
#include "remember/labels.hpp"
#include "remember/numerics.hpp"
#include "remember/retrieval.hpp"
#include "remember/zeroshot.hpp"

namespace remember {

// One task's prediction block. `classes` always holds the task's canonical
// class names; `source` records what produced it ("zero-shot" or
// "evidence-guided").
struct TaskPrediction {
  Task task = Task::Abnormality;
  int predicted = 0;
  std::vector<std::string> classes;
  Vector probs;
  std::string source;
};

// The two-way dementia call. `scale` records what the probability means:
// "similarity" when derived from anchor similarities, "softmax" when it came
// from a trained two-class head — the two are not comparable in scale.
struct BinaryPrediction {
  int predicted = 0;  // 0 = Non-Demented, 1 = Demented
  double p_dementia = 0.0;
  std::string scale = "similarity";
  std::string source = "derived";
};

struct EvidenceRow {
  int rank = 0;
  std::string case_id;
  double sim = 0.0;
  double alpha = 0.0;
  Abnormality abnormality = Abnormality::Normal;
  Dementia dementia = Dementia::NonDementia;
  std::string description;
};

struct ReportMetadata {
  std::string corpus_id;
  std::string encoder_id;
  std::size_t k = 0;
  // Timestamp injected by the CLI right before writing; empty means omitted
  // from the JSON, and it never appears in the text rendering.
  std::string generated_at;
};

struct DiagnosticReport {
  TaskPrediction abnormality;
  TaskPrediction dementia_type;
  TaskPrediction severity;
  BinaryPrediction binary;
  std::vector<EvidenceRow> evidence;
  ReportMetadata metadata;
};

TaskPrediction task_prediction_from(const ZeroShotResult& result);
BinaryPrediction binary_prediction_from(const BinaryResult& result);

// Converts a trained head's output for `task`; source = "evidence-guided".
TaskPrediction task_prediction_from_head(Task task, const PredictResult& result);

// Builds a report from zero-shot predictions plus retrieval evidence.
// alpha[i] must belong to hits[i]; rows are re-sorted by similarity
// (non-increasing, stable) and re-ranked 1..n. Throws ShapeError on
// alpha/hits length mismatch, LookupError on unresolvable case ids.
DiagnosticReport assemble(const MultiTaskResult& zero_shot, const std::vector<RetrievalHit>& hits,
                          const Vector& alpha, const Corpus& corpus, ReportMetadata metadata);

// Replaces the matching task block with a head prediction. For the
// abnormality task the binary call is re-derived from the head's probability
// vector (argmax Normal keeps 1 - p_normal, otherwise the winning
// probability) so the two stay consistent; its scale becomes "softmax".
void apply_head_prediction(DiagnosticReport& report, const TaskPrediction& prediction);

// Checks every report invariant (prob sums, alpha sum, sim ordering, ranks,
// label ranges, canonical class lists). Throws DomainError on violation.
void validate_report(const DiagnosticReport& report);

// Frozen plain-text layout: three confidence blocks, the binary line, the
// evidence table, and a metadata footer. UTF-8, LF endings, stable widths.
std::string render_text(const DiagnosticReport& report);

// Schema-conformant JSON with full-precision decimal floats.
std::string render_json(const DiagnosticReport& report);

// Inverse of render_json. Throws LoadError on malformed or non-conformant
// documents.
DiagnosticReport parse_report_json(const std::string& text);

// Structural validation against the published schema; returns one message per
// violation, empty when conformant. Throws LoadError only when `text` is not
// JSON at all.
std::vector<std::string> validate_report_json(const std::string& text);

// The JSON schema document (also installed at docs/report.schema.json).
extern const char* const kReportSchemaJson;

}  // namespace remember
