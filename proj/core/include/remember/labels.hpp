#pragma once

// Shared label vocabulary for the four classification tasks and the
// canonical display strings used in manifests and rendered reports.

#include <string>
#include <string_view>
#include <vector>

#include "remember/errors.hpp"

namespace remember {

enum class Abnormality { Normal = 0, MtlAtrophy = 1, Wmh = 2, OtherAtrophy = 3 };
enum class Dementia { NonDementia = 0, Alzheimers = 1, OtherDementia = 2 };
enum class Severity { NonDemented = 0, VeryMild = 1, Mild = 2, Moderate = 3 };

enum class Task { Abnormality, BinaryDementia, DementiaType, Severity };

constexpr int kAbnormalityClasses = 4;
constexpr int kDementiaClasses = 3;
constexpr int kSeverityClasses = 4;
constexpr int kBinaryClasses = 2;

int task_arity(Task task);

// Canonical tokens, also used in manifests and evidence tables.
std::string_view to_string(Abnormality a);  // "Normal", "MTL Atrophy", "WMH", "Other Atrophy"
std::string_view to_string(Dementia d);     // "Non-Dementia", "AD", "Other Dementia"
std::string_view to_string(Severity s);     // "Non-Demented", ..., "Moderate Demented"
std::string_view to_string(Task t);         // "abnormality", "binary", "type", "severity"

// Longer names used on the headline prediction lines of a report.
std::string_view display_name(Dementia d);  // "Alzheimer's Disease" instead of "AD"

// Compact names used inside confidence lines ("Other" instead of
// "Other Atrophy", "Very Mild" instead of "Very Mild Demented", ...).
std::string_view short_name(Abnormality a);
std::string_view short_name(Dementia d);
std::string_view short_name(Severity s);

// Binary task labels, index 0/1.
std::string_view binary_label_name(int label);

Abnormality abnormality_from_string(std::string_view token);  // throws DomainError
Dementia dementia_from_string(std::string_view token);
Task task_from_string(std::string_view token);

// Class-name list in canonical index order for a task (binary included).
const std::vector<std::string>& class_names(Task task);

// Headline label string for class index `label` of `task`.
std::string task_label_name(Task task, int label);

// The dementia diagnosis implied by a structural abnormality. MTL atrophy is
// the classic Alzheimer's presentation; white-matter lesions and other
// atrophies point at non-AD dementias.
Dementia dementia_for_abnormality(Abnormality a);

}  // namespace remember
