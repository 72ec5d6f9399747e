#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/error.hpp"

namespace medeval {

// The nine evaluation tasks. Loaders normalize each task's upstream record
// layout (see docs/formats.md) into Question.
enum class TaskTag {
  medqa,
  medmcqa_dev,
  pubmedqa_rr,
  mmlu_clinical_knowledge,
  mmlu_medical_genetics,
  mmlu_anatomy,
  mmlu_professional_medicine,
  mmlu_college_biology,
  mmlu_college_medicine,
};

inline constexpr int kTaskCount = 9;

const char* task_name(TaskTag task);
std::optional<TaskTag> parse_task(std::string_view name);
std::vector<TaskTag> all_tasks();
bool is_mmlu(TaskTag task);

struct Question {
  std::string id;
  TaskTag task = TaskTag::medqa;
  std::string stem;
  std::optional<std::string> context;  // PubMedQA abstract
  std::vector<std::string> options;    // options[i] is labeled 'A' + i
  char gold = 'A';

  int option_count() const { return static_cast<int>(options.size()); }
  std::vector<char> letters() const;

  bool operator==(const Question&) const = default;
};

// Throws on any invariant violation: nonempty stem and option texts,
// 2..5 options, gold indexes an option.
void validate_question(const Question& q);

// Canonical per-task layouts, one record per line (MMLU tasks: CSV rows).
std::vector<Question> load_dataset(const std::string& path, TaskTag task);
std::vector<Question> parse_dataset(std::string_view content, TaskTag task);

// Normalized dump format: one JSON object per line with fields
// {id, task, stem, context?, options, gold}.
std::string dump_questions(const std::vector<Question>& questions);
std::vector<Question> parse_normalized(std::string_view text);
std::vector<Question> load_normalized(const std::string& path);

// Deterministic sampling without replacement; pure function of its arguments.
std::vector<Question> sample_few_shot(const std::vector<Question>& pool,
                                      size_t k, uint64_t seed);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace medeval
