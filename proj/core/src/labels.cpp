#include "remember/labels.hpp"

namespace remember {

int task_arity(Task task) {
  switch (task) {
    case Task::Abnormality: return kAbnormalityClasses;
    case Task::BinaryDementia: return kBinaryClasses;
    case Task::DementiaType: return kDementiaClasses;
    case Task::Severity: return kSeverityClasses;
  }
  throw DomainError("task_arity: bad task");
}

std::string_view to_string(Abnormality a) {
  switch (a) {
    case Abnormality::Normal: return "Normal";
    case Abnormality::MtlAtrophy: return "MTL Atrophy";
    case Abnormality::Wmh: return "WMH";
    case Abnormality::OtherAtrophy: return "Other Atrophy";
  }
  throw DomainError("to_string: bad abnormality value");
}

std::string_view to_string(Dementia d) {
  switch (d) {
    case Dementia::NonDementia: return "Non-Dementia";
    case Dementia::Alzheimers: return "AD";
    case Dementia::OtherDementia: return "Other Dementia";
  }
  throw DomainError("to_string: bad dementia value");
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::NonDemented: return "Non-Demented";
    case Severity::VeryMild: return "Very Mild Demented";
    case Severity::Mild: return "Mild Demented";
    case Severity::Moderate: return "Moderate Demented";
  }
  throw DomainError("to_string: bad severity value");
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::Abnormality: return "abnormality";
    case Task::BinaryDementia: return "binary";
    case Task::DementiaType: return "type";
    case Task::Severity: return "severity";
  }
  throw DomainError("to_string: bad task value");
}

std::string_view display_name(Dementia d) {
  switch (d) {
    case Dementia::NonDementia: return "Non-Dementia";
    case Dementia::Alzheimers: return "Alzheimer's Disease";
    case Dementia::OtherDementia: return "Other Dementia";
  }
  throw DomainError("display_name: bad dementia value");
}

std::string_view short_name(Abnormality a) {
  switch (a) {
    case Abnormality::Normal: return "Normal";
    case Abnormality::MtlAtrophy: return "MTL Atrophy";
    case Abnormality::Wmh: return "WMH";
    case Abnormality::OtherAtrophy: return "Other";
  }
  throw DomainError("short_name: bad abnormality value");
}

std::string_view short_name(Dementia d) { return to_string(d); }

std::string_view short_name(Severity s) {
  switch (s) {
    case Severity::NonDemented: return "Non-Demented";
    case Severity::VeryMild: return "Very Mild";
    case Severity::Mild: return "Mild";
    case Severity::Moderate: return "Moderate";
  }
  throw DomainError("short_name: bad severity value");
}

std::string_view binary_label_name(int label) {
  if (label == 0) return "Non-Demented";
  if (label == 1) return "Demented";
  throw DomainError("binary_label_name: label must be 0 or 1");
}

Abnormality abnormality_from_string(std::string_view token) {
  for (int i = 0; i < kAbnormalityClasses; ++i) {
    if (token == to_string(static_cast<Abnormality>(i))) return static_cast<Abnormality>(i);
  }
  throw DomainError("unknown abnormality label: '" + std::string(token) + "'");
}

Dementia dementia_from_string(std::string_view token) {
  for (int i = 0; i < kDementiaClasses; ++i) {
    if (token == to_string(static_cast<Dementia>(i))) return static_cast<Dementia>(i);
  }
  throw DomainError("unknown dementia label: '" + std::string(token) + "'");
}

Task task_from_string(std::string_view token) {
  if (token == "abnormality") return Task::Abnormality;
  if (token == "binary") return Task::BinaryDementia;
  if (token == "type") return Task::DementiaType;
  if (token == "severity") return Task::Severity;
  throw DomainError("unknown task: '" + std::string(token) + "' (expected abnormality|binary|type|severity)");
}

const std::vector<std::string>& class_names(Task task) {
  static const std::vector<std::string> abn = {"Normal", "MTL Atrophy", "WMH", "Other Atrophy"};
  static const std::vector<std::string> bin = {"Non-Demented", "Demented"};
  static const std::vector<std::string> dem = {"Non-Dementia", "AD", "Other Dementia"};
  static const std::vector<std::string> sev = {"Non-Demented", "Very Mild Demented", "Mild Demented",
                                               "Moderate Demented"};
  switch (task) {
    case Task::Abnormality: return abn;
    case Task::BinaryDementia: return bin;
    case Task::DementiaType: return dem;
    case Task::Severity: return sev;
  }
  throw DomainError("class_names: bad task");
}

std::string task_label_name(Task task, int label) {
  if (label < 0 || label >= task_arity(task)) {
    throw DomainError("task_label_name: label out of range for task");
  }
  if (task == Task::DementiaType) {
    return std::string(display_name(static_cast<Dementia>(label)));
  }
  return class_names(task)[static_cast<std::size_t>(label)];
}

Dementia dementia_for_abnormality(Abnormality a) {
  switch (a) {
    case Abnormality::Normal: return Dementia::NonDementia;
    case Abnormality::MtlAtrophy: return Dementia::Alzheimers;
    case Abnormality::Wmh: return Dementia::OtherDementia;
    case Abnormality::OtherAtrophy: return Dementia::OtherDementia;
  }
  throw DomainError("dementia_for_abnormality: bad abnormality value");
}

}  // namespace remember
