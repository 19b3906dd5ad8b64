#pragma once

#include <cctype>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace chainscore {

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline bool is_alnum(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline char lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

inline std::string to_lower(const std::string& s) {
  std::string out(s);
  for (char& c : out) c = lower(c);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

/* trim and squeeze internal whitespace runs to single spaces */
inline std::string collapse_ws(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = true;  // leading whitespace dropped
  for (char c : s) {
    if (is_space(c)) {
      in_ws = true;
    } else {
      if (in_ws && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_ws = false;
    }
  }
  return out;
}

/* lowercase, split on every non-alphanumeric character, drop empties */
inline std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_alnum(c)) {
      cur.push_back(lower(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::set<std::string> unique_tokens(const std::string& s) {
  std::set<std::string> out;
  for (auto& t : tokenize(s)) out.insert(t);
  return out;
}

/* lowercase with punctuation flattened to spaces; used for relaxed equality */
inline std::string relaxed_form(const std::string& s) {
  std::string joined;
  for (const auto& t : tokenize(s)) {
    if (!joined.empty()) joined.push_back(' ');
    joined += t;
  }
  return joined;
}

inline std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  std::size_t pos = text.find(needle);
  while (pos != std::string::npos) {
    ++n;
    pos = text.find(needle, pos + needle.size());
  }
  return n;
}

/* stable across runs and platforms, unlike std::hash */
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace chainscore
