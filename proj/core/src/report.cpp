#include "remember/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

namespace remember {

namespace {

// Integer percent, rounding half away from zero (probabilities are
// non-negative so this is plain half-up).
int percent(double p) { return static_cast<int>(std::floor(p * 100.0 + 0.5)); }

std::string_view confidence_name(Task task, int index) {
  switch (task) {
    case Task::Abnormality:
      return short_name(static_cast<Abnormality>(index));
    case Task::DementiaType:
      return to_string(static_cast<Dementia>(index));
    case Task::Severity:
      return short_name(static_cast<Severity>(index));
    case Task::BinaryDementia:
      break;
  }
  return binary_label_name(index);
}

std::string_view headline_name(Task task, int index) {
  switch (task) {
    case Task::Abnormality:
      return to_string(static_cast<Abnormality>(index));
    case Task::DementiaType:
      return display_name(static_cast<Dementia>(index));
    case Task::Severity:
      return to_string(static_cast<Severity>(index));
    case Task::BinaryDementia:
      break;
  }
  return binary_label_name(index);
}

void check_probs(const TaskPrediction& p, const char* what) {
  const int arity = task_arity(p.task);
  if (p.probs.size() != static_cast<std::size_t>(arity)) {
    throw DomainError(std::string(what) + ": probability vector width does not match the task");
  }
  if (p.classes != class_names(p.task)) {
    throw DomainError(std::string(what) + ": class list is not the task's canonical one");
  }
  if (p.predicted < 0 || p.predicted >= arity) {
    throw DomainError(std::string(what) + ": predicted index out of range");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (p.probs[i] < 0.0 || p.probs[i] > 1.0) {
      throw DomainError(std::string(what) + ": probability outside [0, 1]");
    }
    sum += p.probs[i];
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw DomainError(std::string(what) + ": probabilities do not sum to 1");
  }
  if (p.source.empty()) throw DomainError(std::string(what) + ": missing prediction source");
}

void append_confidence_line(std::string& out, const char* title, const TaskPrediction& p) {
  out += title;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (i > 0) out += ",";
    out += " ";
    out += confidence_name(p.task, static_cast<int>(i));
    out += ": " + std::to_string(percent(p.probs[i])) + "%";
  }
  out += "\n";
}

}  // namespace

TaskPrediction task_prediction_from(const ZeroShotResult& result) {
  TaskPrediction p;
  p.task = result.task;
  p.predicted = result.predicted;
  p.classes = class_names(result.task);
  p.probs = result.probs;
  p.source = "zero-shot";
  return p;
}

BinaryPrediction binary_prediction_from(const BinaryResult& result) {
  BinaryPrediction p;
  p.predicted = result.predicted;
  p.p_dementia = result.p_dementia;
  p.scale = "similarity";
  p.source = "derived";
  return p;
}

TaskPrediction task_prediction_from_head(Task task, const PredictResult& result) {
  if (result.probs.size() != static_cast<std::size_t>(task_arity(task))) {
    throw ShapeError("task_prediction_from_head: head width does not match the task");
  }
  TaskPrediction p;
  p.task = task;
  p.classes = class_names(task);
  p.probs = result.probs;
  p.predicted = 0;
  for (std::size_t i = 1; i < result.probs.size(); ++i) {
    if (result.probs[i] > result.probs[static_cast<std::size_t>(p.predicted)]) {
      p.predicted = static_cast<int>(i);
    }
  }
  p.source = "evidence-guided";
  return p;
}

DiagnosticReport assemble(const MultiTaskResult& zero_shot, const std::vector<RetrievalHit>& hits,
                          const Vector& alpha, const Corpus& corpus, ReportMetadata metadata) {
  if (alpha.size() != hits.size()) {
    throw ShapeError("assemble: alpha length does not match the hit count");
  }
  DiagnosticReport report;
  report.abnormality = task_prediction_from(zero_shot.abnormality);
  report.dementia_type = task_prediction_from(zero_shot.dementia_type);
  report.severity = task_prediction_from(zero_shot.severity);
  report.binary = binary_prediction_from(zero_shot.binary);
  report.metadata = std::move(metadata);

  report.evidence.reserve(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const ReferenceCase& ref = corpus.by_id(hits[i].case_id);
    EvidenceRow row;
    row.case_id = ref.id;
    row.sim = hits[i].sim;
    row.alpha = alpha[i];
    row.abnormality = ref.abnormality;
    row.dementia = ref.dementia;
    row.description = ref.description;
    report.evidence.push_back(std::move(row));
  }
  std::stable_sort(report.evidence.begin(), report.evidence.end(),
                   [](const EvidenceRow& a, const EvidenceRow& b) { return a.sim > b.sim; });
  for (std::size_t i = 0; i < report.evidence.size(); ++i) {
    report.evidence[i].rank = static_cast<int>(i) + 1;
  }
  validate_report(report);
  return report;
}

void apply_head_prediction(DiagnosticReport& report, const TaskPrediction& prediction) {
  check_probs(prediction, "apply_head_prediction");
  switch (prediction.task) {
    case Task::Abnormality: {
      report.abnormality = prediction;
      // Keep the binary call consistent with the new abnormality source.
      const bool normal = prediction.predicted == static_cast<int>(Abnormality::Normal);
      report.binary.predicted = normal ? 0 : 1;
      report.binary.p_dementia = normal
          ? 1.0 - prediction.probs[0]
          : prediction.probs[static_cast<std::size_t>(prediction.predicted)];
      report.binary.scale = "softmax";
      report.binary.source = "derived";
      return;
    }
    case Task::DementiaType:
      report.dementia_type = prediction;
      return;
    case Task::Severity:
      report.severity = prediction;
      return;
    case Task::BinaryDementia:
      report.binary.predicted = prediction.predicted;
      report.binary.p_dementia = prediction.probs[1];
      report.binary.scale = "softmax";
      report.binary.source = prediction.source;
      return;
  }
  throw DomainError("apply_head_prediction: unknown task");
}

void validate_report(const DiagnosticReport& report) {
  if (report.abnormality.task != Task::Abnormality ||
      report.dementia_type.task != Task::DementiaType || report.severity.task != Task::Severity) {
    throw DomainError("report: prediction blocks are attached to the wrong tasks");
  }
  check_probs(report.abnormality, "report.abnormality");
  check_probs(report.dementia_type, "report.dementia_type");
  check_probs(report.severity, "report.severity");

  if (report.binary.predicted != 0 && report.binary.predicted != 1) {
    throw DomainError("report.binary: predicted label must be 0 or 1");
  }
  if (report.binary.p_dementia < 0.0 || report.binary.p_dementia > 1.0) {
    throw DomainError("report.binary: p_dementia outside [0, 1]");
  }
  if (report.binary.scale != "similarity" && report.binary.scale != "softmax") {
    throw DomainError("report.binary: scale must be 'similarity' or 'softmax'");
  }
  if (report.binary.source.empty()) throw DomainError("report.binary: missing source");

  double alpha_sum = 0.0;
  for (std::size_t i = 0; i < report.evidence.size(); ++i) {
    const EvidenceRow& row = report.evidence[i];
    if (row.rank != static_cast<int>(i) + 1) {
      throw DomainError("report.evidence: ranks must run 1..n in order");
    }
    if (row.alpha < 0.0) throw DomainError("report.evidence: negative attention weight");
    if (i > 0 && report.evidence[i - 1].sim < row.sim) {
      throw DomainError("report.evidence: rows not sorted by similarity");
    }
    alpha_sum += row.alpha;
  }
  if (!report.evidence.empty() && std::abs(alpha_sum - 1.0) > 1e-6) {
    throw DomainError("report.evidence: attention weights do not sum to 1");
  }
}

std::string render_text(const DiagnosticReport& report) {
  validate_report(report);
  std::string out;
  out += "Diagnostic Report\n";
  out += "=================\n\n";

  out += "Abnormality Type: ";
  out += headline_name(Task::Abnormality, report.abnormality.predicted);
  out += "\n";
  append_confidence_line(out, "Abnormality Confidence:", report.abnormality);
  out += "\n";

  out += "Dementia Diagnosis: ";
  out += headline_name(Task::DementiaType, report.dementia_type.predicted);
  out += "\n";
  append_confidence_line(out, "Dementia Confidence:", report.dementia_type);
  out += "\n";

  out += "Dementia Severity: ";
  out += headline_name(Task::Severity, report.severity.predicted);
  out += "\n";
  append_confidence_line(out, "Severity Confidence:", report.severity);
  out += "\n";

  out += "Binary Dementia: ";
  out += binary_label_name(report.binary.predicted);
  out += " (p_dementia = " + std::to_string(percent(report.binary.p_dementia)) + "%)\n\n";

  out += "Top-" + std::to_string(report.evidence.size()) + " Retrieved Reference Cases\n";
  out += "  # | sim   | alpha | abnormality   | dementia label | reference description\n";
  char buf[96];
  for (const EvidenceRow& row : report.evidence) {
    std::snprintf(buf, sizeof(buf), "%3d | %-5.2f | %-5.2f | %-13s | %-14s | ", row.rank, row.sim,
                  row.alpha, std::string(to_string(row.abnormality)).c_str(),
                  std::string(to_string(row.dementia)).c_str());
    out += buf;
    out += row.description;
    out += "\n";
  }
  out += "\n";

  out += "Sources: abnormality=" + report.abnormality.source +
         "; dementia_type=" + report.dementia_type.source +
         "; severity=" + report.severity.source + "; binary=" + report.binary.source + " (" +
         report.binary.scale + " scale)\n";
  out += "Corpus: " + report.metadata.corpus_id + " | Encoder: " + report.metadata.encoder_id +
         " | k: " + std::to_string(report.metadata.k) + "\n";
  return out;
}

// --- JSON ------------------------------------------------------------------

namespace {

nlohmann::ordered_json task_to_json(const TaskPrediction& p) {
  nlohmann::ordered_json j;
  j["task"] = std::string(to_string(p.task));
  j["label"] = p.classes[static_cast<std::size_t>(p.predicted)];
  j["classes"] = p.classes;
  std::vector<double> probs(p.probs.data().begin(), p.probs.data().end());
  j["probs"] = probs;
  j["source"] = p.source;
  return j;
}

TaskPrediction task_from_json(const nlohmann::json& j, Task expected) {
  TaskPrediction p;
  p.task = task_from_string(j.at("task").get<std::string>());
  if (p.task != expected) throw DomainError("report JSON: prediction block has the wrong task");
  p.classes = j.at("classes").get<std::vector<std::string>>();
  p.probs = Vector(j.at("probs").get<std::vector<double>>());
  p.source = j.at("source").get<std::string>();
  const std::string label = j.at("label").get<std::string>();
  auto it = std::find(p.classes.begin(), p.classes.end(), label);
  if (it == p.classes.end()) throw DomainError("report JSON: label not found in class list");
  p.predicted = static_cast<int>(it - p.classes.begin());
  return p;
}

}  // namespace

std::string render_json(const DiagnosticReport& report) {
  validate_report(report);
  nlohmann::ordered_json j;
  j["version"] = 1;
  nlohmann::ordered_json preds;
  preds["abnormality"] = task_to_json(report.abnormality);
  nlohmann::ordered_json binary;
  binary["label"] = std::string(binary_label_name(report.binary.predicted));
  binary["p_dementia"] = report.binary.p_dementia;
  binary["scale"] = report.binary.scale;
  binary["source"] = report.binary.source;
  preds["binary"] = binary;
  preds["dementia_type"] = task_to_json(report.dementia_type);
  preds["severity"] = task_to_json(report.severity);
  j["predictions"] = preds;

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const EvidenceRow& row : report.evidence) {
    nlohmann::ordered_json r;
    r["rank"] = row.rank;
    r["case_id"] = row.case_id;
    r["sim"] = row.sim;
    r["alpha"] = row.alpha;
    r["abnormality"] = std::string(to_string(row.abnormality));
    r["dementia"] = std::string(to_string(row.dementia));
    r["description"] = row.description;
    rows.push_back(std::move(r));
  }
  j["evidence"] = rows;

  nlohmann::ordered_json meta;
  meta["corpus_id"] = report.metadata.corpus_id;
  meta["encoder_id"] = report.metadata.encoder_id;
  meta["k"] = report.metadata.k;
  if (!report.metadata.generated_at.empty()) meta["generated_at"] = report.metadata.generated_at;
  j["metadata"] = meta;
  return j.dump(2) + "\n";
}

DiagnosticReport parse_report_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("report JSON does not parse: ") + e.what());
  }
  try {
    if (j.value("version", 0) != 1) throw DomainError("report JSON: unsupported version");
    const auto& preds = j.at("predictions");
    DiagnosticReport report;
    report.abnormality = task_from_json(preds.at("abnormality"), Task::Abnormality);
    report.dementia_type = task_from_json(preds.at("dementia_type"), Task::DementiaType);
    report.severity = task_from_json(preds.at("severity"), Task::Severity);
    const auto& binary = preds.at("binary");
    const std::string blabel = binary.at("label").get<std::string>();
    if (blabel == binary_label_name(0)) report.binary.predicted = 0;
    else if (blabel == binary_label_name(1)) report.binary.predicted = 1;
    else throw DomainError("report JSON: unknown binary label");
    report.binary.p_dementia = binary.at("p_dementia").get<double>();
    report.binary.scale = binary.at("scale").get<std::string>();
    report.binary.source = binary.at("source").get<std::string>();

    for (const auto& r : j.at("evidence")) {
      EvidenceRow row;
      row.rank = r.at("rank").get<int>();
      row.case_id = r.at("case_id").get<std::string>();
      row.sim = r.at("sim").get<double>();
      row.alpha = r.at("alpha").get<double>();
      row.abnormality = abnormality_from_string(r.at("abnormality").get<std::string>());
      row.dementia = dementia_from_string(r.at("dementia").get<std::string>());
      row.description = r.at("description").get<std::string>();
      report.evidence.push_back(std::move(row));
    }
    const auto& meta = j.at("metadata");
    report.metadata.corpus_id = meta.at("corpus_id").get<std::string>();
    report.metadata.encoder_id = meta.at("encoder_id").get<std::string>();
    report.metadata.k = meta.at("k").get<std::size_t>();
    report.metadata.generated_at = meta.value("generated_at", "");
    validate_report(report);
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("report JSON is missing fields: ") + e.what());
  } catch (const Error& e) {
    throw LoadError(std::string("report JSON is not a valid report: ") + e.what());
  }
}

std::vector<std::string> validate_report_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("report JSON does not parse: ") + e.what());
  }
  std::vector<std::string> problems;
  auto require = [&](const nlohmann::json& node, const char* key, const char* type,
                     const std::string& where) -> const nlohmann::json* {
    if (!node.contains(key)) {
      problems.push_back(where + ": missing required key '" + key + "'");
      return nullptr;
    }
    const auto& v = node.at(key);
    const std::string t = type;
    const bool ok = (t == "string" && v.is_string()) || (t == "number" && v.is_number()) ||
                    (t == "integer" && v.is_number_integer()) || (t == "array" && v.is_array()) ||
                    (t == "object" && v.is_object());
    if (!ok) {
      problems.push_back(where + ": key '" + key + "' must be of type " + t);
      return nullptr;
    }
    return &v;
  };

  if (!j.is_object()) {
    problems.push_back("root: must be an object");
    return problems;
  }
  if (const auto* v = require(j, "version", "integer", "root"); v && v->get<int>() != 1) {
    problems.push_back("root: version must be 1");
  }
  const auto* preds = require(j, "predictions", "object", "root");
  if (preds != nullptr) {
    for (const char* key : {"abnormality", "dementia_type", "severity"}) {
      const auto* block = require(*preds, key, "object", "predictions");
      if (block == nullptr) continue;
      const std::string where = std::string("predictions.") + key;
      require(*block, "task", "string", where);
      require(*block, "label", "string", where);
      const auto* classes = require(*block, "classes", "array", where);
      const auto* probs = require(*block, "probs", "array", where);
      require(*block, "source", "string", where);
      if (probs != nullptr) {
        for (const auto& p : *probs) {
          if (!p.is_number()) {
            problems.push_back(where + ": probs entries must be numbers");
            break;
          }
        }
        if (classes != nullptr && classes->size() != probs->size()) {
          problems.push_back(where + ": classes and probs must have equal length");
        }
      }
    }
    const auto* binary = require(*preds, "binary", "object", "predictions");
    if (binary != nullptr) {
      require(*binary, "label", "string", "predictions.binary");
      require(*binary, "p_dementia", "number", "predictions.binary");
      if (const auto* s = require(*binary, "scale", "string", "predictions.binary");
          s != nullptr && *s != "similarity" && *s != "softmax") {
        problems.push_back("predictions.binary: scale must be 'similarity' or 'softmax'");
      }
      require(*binary, "source", "string", "predictions.binary");
    }
  }
  const auto* evidence = require(j, "evidence", "array", "root");
  if (evidence != nullptr) {
    for (std::size_t i = 0; i < evidence->size(); ++i) {
      const auto& row = (*evidence)[i];
      const std::string where = "evidence[" + std::to_string(i) + "]";
      if (!row.is_object()) {
        problems.push_back(where + ": must be an object");
        continue;
      }
      require(row, "rank", "integer", where);
      require(row, "case_id", "string", where);
      require(row, "sim", "number", where);
      require(row, "alpha", "number", where);
      require(row, "abnormality", "string", where);
      require(row, "dementia", "string", where);
      require(row, "description", "string", where);
    }
  }
  if (const auto* meta = require(j, "metadata", "object", "root"); meta != nullptr) {
    require(*meta, "corpus_id", "string", "metadata");
    require(*meta, "encoder_id", "string", "metadata");
    require(*meta, "k", "integer", "metadata");
  }
  return problems;
}

const char* const kReportSchemaJson = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "Diagnostic report",
  "type": "object",
  "required": ["version", "predictions", "evidence", "metadata"],
  "properties": {
    "version": {"const": 1},
    "predictions": {
      "type": "object",
      "required": ["abnormality", "binary", "dementia_type", "severity"],
      "properties": {
        "abnormality": {"$ref": "#/definitions/task_prediction"},
        "binary": {
          "type": "object",
          "required": ["label", "p_dementia", "scale", "source"],
          "properties": {
            "label": {"enum": ["Non-Demented", "Demented"]},
            "p_dementia": {"type": "number", "minimum": 0, "maximum": 1},
            "scale": {"enum": ["similarity", "softmax"]},
            "source": {"type": "string"}
          }
        },
        "dementia_type": {"$ref": "#/definitions/task_prediction"},
        "severity": {"$ref": "#/definitions/task_prediction"}
      }
    },
    "evidence": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["rank", "case_id", "sim", "alpha", "abnormality", "dementia", "description"],
        "properties": {
          "rank": {"type": "integer", "minimum": 1},
          "case_id": {"type": "string"},
          "sim": {"type": "number", "minimum": -1, "maximum": 1},
          "alpha": {"type": "number", "minimum": 0},
          "abnormality": {"type": "string"},
          "dementia": {"type": "string"},
          "description": {"type": "string"}
        }
      }
    },
    "metadata": {
      "type": "object",
      "required": ["corpus_id", "encoder_id", "k"],
      "properties": {
        "corpus_id": {"type": "string"},
        "encoder_id": {"type": "string"},
        "k": {"type": "integer", "minimum": 0},
        "generated_at": {"type": "string"}
      }
    }
  },
  "definitions": {
    "task_prediction": {
      "type": "object",
      "required": ["task", "label", "classes", "probs", "source"],
      "properties": {
        "task": {"type": "string"},
        "label": {"type": "string"},
        "classes": {"type": "array", "items": {"type": "string"}},
        "probs": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "source": {"type": "string"}
      }
    }
  }
}
)";

}  // namespace remember
