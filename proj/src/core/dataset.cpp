#include "core/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "core/csv.hpp"
#include "core/text.hpp"

namespace medeval {

using nlohmann::json;

const char* task_name(TaskTag task) {
  switch (task) {
    case TaskTag::medqa: return "medqa";
    case TaskTag::medmcqa_dev: return "medmcqa-dev";
    case TaskTag::pubmedqa_rr: return "pubmedqa-rr";
    case TaskTag::mmlu_clinical_knowledge: return "mmlu-clinical-knowledge";
    case TaskTag::mmlu_medical_genetics: return "mmlu-medical-genetics";
    case TaskTag::mmlu_anatomy: return "mmlu-anatomy";
    case TaskTag::mmlu_professional_medicine: return "mmlu-professional-medicine";
    case TaskTag::mmlu_college_biology: return "mmlu-college-biology";
    case TaskTag::mmlu_college_medicine: return "mmlu-college-medicine";
  }
  return "unknown";
}

std::optional<TaskTag> parse_task(std::string_view name) {
  std::string n = to_lower_ascii(name);
  for (char& c : n)
    if (c == '_') c = '-';
  if (n == "medmcqa") n = "medmcqa-dev";
  if (n == "pubmedqa") n = "pubmedqa-rr";
  for (TaskTag t : all_tasks())
    if (n == task_name(t)) return t;
  return std::nullopt;
}

std::vector<TaskTag> all_tasks() {
  return {TaskTag::medqa,
          TaskTag::medmcqa_dev,
          TaskTag::pubmedqa_rr,
          TaskTag::mmlu_clinical_knowledge,
          TaskTag::mmlu_medical_genetics,
          TaskTag::mmlu_anatomy,
          TaskTag::mmlu_professional_medicine,
          TaskTag::mmlu_college_biology,
          TaskTag::mmlu_college_medicine};
}

bool is_mmlu(TaskTag task) {
  switch (task) {
    case TaskTag::mmlu_clinical_knowledge:
    case TaskTag::mmlu_medical_genetics:
    case TaskTag::mmlu_anatomy:
    case TaskTag::mmlu_professional_medicine:
    case TaskTag::mmlu_college_biology:
    case TaskTag::mmlu_college_medicine:
      return true;
    default:
      return false;
  }
}

std::vector<char> Question::letters() const {
  std::vector<char> out;
  out.reserve(options.size());
  for (size_t i = 0; i < options.size(); ++i)
    out.push_back(static_cast<char>('A' + i));
  return out;
}

void validate_question(const Question& q) {
  if (q.id.empty())
    throw Error(ErrorCode::malformed_record, "question id is empty");
  if (trim(q.stem).empty())
    throw Error(ErrorCode::malformed_record, "question stem is empty");
  if (q.options.size() < 2 || q.options.size() > 5)
    throw Error(ErrorCode::malformed_record,
                "option count " + std::to_string(q.options.size()) +
                    " outside [2, 5]");
  for (size_t i = 0; i < q.options.size(); ++i) {
    if (trim(q.options[i]).empty())
      throw Error(ErrorCode::malformed_record,
                  std::string("option ") + static_cast<char>('A' + i) +
                      " text is empty");
  }
  if (q.gold < 'A' || q.gold >= static_cast<char>('A' + q.options.size()))
    throw Error(ErrorCode::unknown_gold_letter,
                std::string("gold letter '") + q.gold +
                    "' is not among options A-" +
                    static_cast<char>('A' + q.options.size() - 1));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io_error, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::io_error, "cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out)
    throw Error(ErrorCode::io_error, "short write: " + path);
}

namespace {

[[noreturn]] void record_error(size_t line, const std::string& reason,
                               ErrorCode code = ErrorCode::malformed_record) {
  throw Error(code, "line " + std::to_string(line) + ": " + reason);
}

std::string require_string(const json& rec, const char* key, size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string())
    record_error(line, std::string("missing or non-string field '") + key + "'");
  return it->get<std::string>();
}

// Accepts an object keyed by letters and enforces contiguity from 'A'.
std::vector<std::string> options_from_object(const json& obj, size_t line) {
  if (!obj.is_object() || obj.empty())
    record_error(line, "'options' must be a non-empty object");
  std::vector<std::pair<char, std::string>> entries;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string& key = it.key();
    if (key.size() != 1 || !is_ascii_letter(key[0]) || !it->is_string())
      record_error(line, "option key '" + key + "' is not a single letter");
    entries.emplace_back(static_cast<char>(std::toupper(key[0])),
                         it->get<std::string>());
  }
  std::sort(entries.begin(), entries.end());
  std::vector<std::string> out;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != static_cast<char>('A' + i))
      record_error(line, "option letters are not contiguous from 'A'");
    out.push_back(entries[i].second);
  }
  return out;
}

char single_letter(const std::string& s, size_t line) {
  std::string t(trim(s));
  if (t.size() != 1 || !is_ascii_letter(t[0]))
    record_error(line, "gold field '" + s + "' is not a single letter");
  return static_cast<char>(std::toupper(t[0]));
}

Question adapt_medqa(const json& rec, size_t line) {
  Question q;
  q.task = TaskTag::medqa;
  q.stem = require_string(rec, "question", line);
  auto it = rec.find("options");
  if (it == rec.end()) record_error(line, "missing field 'options'");
  q.options = options_from_object(*it, line);
  q.gold = single_letter(require_string(rec, "answer_idx", line), line);
  if (rec.contains("id") && rec["id"].is_string())
    q.id = rec["id"].get<std::string>();
  return q;
}

Question adapt_medmcqa(const json& rec, size_t line) {
  Question q;
  q.task = TaskTag::medmcqa_dev;
  q.stem = require_string(rec, "question", line);
  for (const char* key : {"opa", "opb", "opc", "opd"})
    q.options.push_back(require_string(rec, key, line));
  auto it = rec.find("cop");
  if (it == rec.end() || !it->is_number_integer())
    record_error(line, "missing or non-integer field 'cop'");
  int cop = it->get<int>();
  if (cop < 0 || cop > 3)
    record_error(line, "'cop' value " + std::to_string(cop) +
                           " outside [0, 3] (0-based option index)",
                 ErrorCode::unknown_gold_letter);
  q.gold = static_cast<char>('A' + cop);
  if (rec.contains("id") && rec["id"].is_string())
    q.id = rec["id"].get<std::string>();
  return q;
}

Question adapt_pubmedqa(const json& rec, size_t line) {
  Question q;
  q.task = TaskTag::pubmedqa_rr;
  if (rec.contains("QUESTION"))
    q.stem = require_string(rec, "QUESTION", line);
  else
    q.stem = require_string(rec, "question", line);

  const char* ctx_keys[] = {"CONTEXTS", "contexts"};
  for (const char* key : ctx_keys) {
    auto it = rec.find(key);
    if (it != rec.end() && it->is_array()) {
      std::string joined;
      for (const auto& part : *it) {
        if (!part.is_string()) record_error(line, "context entry is not a string");
        if (!joined.empty()) joined += "\n";
        joined += part.get<std::string>();
      }
      q.context = joined;
      break;
    }
  }
  if (!q.context && rec.contains("context") && rec["context"].is_string())
    q.context = rec["context"].get<std::string>();

  q.options = {"yes", "no", "maybe"};
  std::string decision =
      to_lower_ascii(trim(require_string(rec, "final_decision", line)));
  if (decision == "yes") q.gold = 'A';
  else if (decision == "no") q.gold = 'B';
  else if (decision == "maybe") q.gold = 'C';
  else
    record_error(line, "final_decision '" + decision + "' is not yes/no/maybe",
                 ErrorCode::unknown_gold_letter);
  for (const char* key : {"id", "pmid"}) {
    if (rec.contains(key)) {
      const auto& v = rec[key];
      if (v.is_string()) q.id = v.get<std::string>();
      else if (v.is_number_integer()) q.id = std::to_string(v.get<int64_t>());
      if (!q.id.empty()) break;
    }
  }
  return q;
}

std::vector<Question> parse_jsonl_task(std::string_view content, TaskTag task) {
  std::vector<Question> out;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= content.size()) {
    size_t nl = content.find('\n', pos);
    std::string_view line = content.substr(
        pos, nl == std::string_view::npos ? content.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? content.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      record_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) record_error(line_no, "record is not a JSON object");

    Question q;
    switch (task) {
      case TaskTag::medqa: q = adapt_medqa(rec, line_no); break;
      case TaskTag::medmcqa_dev: q = adapt_medmcqa(rec, line_no); break;
      case TaskTag::pubmedqa_rr: q = adapt_pubmedqa(rec, line_no); break;
      default:
        throw Error(ErrorCode::invalid_argument,
                    std::string("no JSONL adapter for task ") + task_name(task));
    }
    if (q.id.empty())
      q.id = std::string(task_name(task)) + "-" + std::to_string(line_no);
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Question> parse_mmlu_csv(std::string_view content, TaskTag task) {
  std::vector<Question> out;
  auto records = parse_csv(content);
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& row = records[i];
    size_t line_no = i + 1;
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() != 6)
      record_error(line_no, "expected 6 CSV fields (question, 4 options, answer), got " +
                                std::to_string(row.size()));
    Question q;
    q.task = task;
    q.id = std::string(task_name(task)) + "-" + std::to_string(line_no);
    q.stem = row[0];
    q.options = {row[1], row[2], row[3], row[4]};
    std::string ans(trim(row[5]));
    if (ans.size() == 1 && is_ascii_letter(ans[0])) {
      q.gold = static_cast<char>(std::toupper(ans[0]));
    } else if (ans.size() == 1 && ans[0] >= '0' && ans[0] <= '9') {
      q.gold = static_cast<char>('A' + (ans[0] - '0'));  // 0-based index
    } else {
      record_error(line_no, "answer field '" + ans + "' is neither a letter nor a 0-based index",
                   ErrorCode::unknown_gold_letter);
    }
    out.push_back(std::move(q));
  }
  return out;
}

void validate_batch(std::vector<Question>& questions) {
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < questions.size(); ++i) {
    const Question& q = questions[i];
    try {
      validate_question(q);
    } catch (const Error& e) {
      throw Error(e.code(),
                  "record " + std::to_string(i + 1) + " (id " + q.id + "): " + e.what());
    }
    std::string key = std::string(task_name(q.task)) + "/" + q.id;
    if (!seen.insert(key).second)
      throw Error(ErrorCode::duplicate_id,
                  "duplicate id '" + q.id + "' in task " + task_name(q.task));
  }
}

}  // namespace

std::vector<Question> parse_dataset(std::string_view content, TaskTag task) {
  std::vector<Question> out = is_mmlu(task) ? parse_mmlu_csv(content, task)
                                            : parse_jsonl_task(content, task);
  validate_batch(out);
  return out;
}

std::vector<Question> load_dataset(const std::string& path, TaskTag task) {
  return parse_dataset(read_file(path), task);
}

std::string dump_questions(const std::vector<Question>& questions) {
  std::string out;
  for (const Question& q : questions) {
    json rec;
    rec["id"] = q.id;
    rec["task"] = task_name(q.task);
    rec["stem"] = q.stem;
    if (q.context) rec["context"] = *q.context;
    json opts = json::object();
    for (size_t i = 0; i < q.options.size(); ++i)
      opts[std::string(1, static_cast<char>('A' + i))] = q.options[i];
    rec["options"] = opts;
    rec["gold"] = std::string(1, q.gold);
    out += rec.dump();
    out += "\n";
  }
  return out;
}

std::vector<Question> parse_normalized(std::string_view text) {
  std::vector<Question> out;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      record_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    Question q;
    q.id = require_string(rec, "id", line_no);
    auto task = parse_task(require_string(rec, "task", line_no));
    if (!task) record_error(line_no, "unknown task tag");
    q.task = *task;
    q.stem = require_string(rec, "stem", line_no);
    if (rec.contains("context") && rec["context"].is_string())
      q.context = rec["context"].get<std::string>();
    auto it = rec.find("options");
    if (it == rec.end()) record_error(line_no, "missing field 'options'");
    q.options = options_from_object(*it, line_no);
    q.gold = single_letter(require_string(rec, "gold", line_no), line_no);
    out.push_back(std::move(q));
  }
  validate_batch(out);
  return out;
}

std::vector<Question> load_normalized(const std::string& path) {
  return parse_normalized(read_file(path));
}

std::vector<Question> sample_few_shot(const std::vector<Question>& pool,
                                      size_t k, uint64_t seed) {
  if (k > pool.size())
    throw Error(ErrorCode::k_too_large,
                "k=" + std::to_string(k) + " exceeds pool size " +
                    std::to_string(pool.size()));
  std::vector<size_t> idx(pool.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Partial Fisher-Yates with an explicit draw so results do not depend on
  // the standard library's distribution implementation.
  std::mt19937_64 rng(seed);
  std::vector<Question> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

}  // namespace medeval
