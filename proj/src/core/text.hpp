#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medeval {

inline bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z');
}

inline bool is_ascii_letter(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = ascii_lower(c);
  return out;
}

// Retrieval tokenizer: lowercase, split on non-alphanumerics, no stemming,
// no stopword removal. Identified as "simple-v1" in persisted indexes.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (is_ascii_alnum(c)) {
      cur.push_back(ascii_lower(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Whitespace-delimited count, the fallback when a backend reports no usage.
inline int approx_token_count(std::string_view text) {
  int count = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

inline std::string truncate_whitespace_tokens(std::string_view text,
                                              int max_tokens) {
  if (max_tokens <= 0) return "";
  int count = 0;
  bool in_token = false;
  size_t end = text.size();
  for (size_t i = 0; i < text.size(); ++i) {
    if (is_space(text[i])) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      if (++count > max_tokens) {
        end = i;
        break;
      }
    }
  }
  std::string_view cut = text.substr(0, end);
  while (!cut.empty() && is_space(cut.back())) cut.remove_suffix(1);
  return std::string(cut);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline void replace_all(std::string& text, std::string_view needle,
                        std::string_view repl) {
  if (needle.empty()) return;
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), repl);
    pos += repl.size();
  }
}

}  // namespace medeval
