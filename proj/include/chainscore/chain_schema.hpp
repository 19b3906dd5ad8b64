#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "chainscore/errors.hpp"
#include "chainscore/text.hpp"

namespace chainscore {

inline constexpr const char* kThinkOpen = "<think>";
inline constexpr const char* kThinkClose = "</think>";
inline constexpr const char* kAnswerOpen = "<answer>";
inline constexpr const char* kAnswerClose = "</answer>";

inline constexpr std::size_t kNpos = std::numeric_limits<std::size_t>::max();

inline bool is_delimiter_token(const std::string& s) {
  return s == kThinkOpen || s == kThinkClose || s == kAnswerOpen || s == kAnswerClose;
}

struct DetectedHeader {
  std::string header;  // as declared in the schema
  std::size_t offset;  // byte offset of the match within raw_text
};

/* Parsed model output. Malformedness is a state, not an error: downstream
   scoring needs to see broken outputs, so parse never throws on bad input. */
struct ReasoningChain {
  std::string raw_text;
  std::string think_body;   // empty unless well_formed
  std::string answer_body;  // empty unless well_formed
  std::vector<DetectedHeader> detected_headers;
  bool well_formed = false;
  std::string schema_task_id;  // task the chain was parsed against
};

enum class HeaderMatchMode { Exact, CaseInsensitive };

/* Expected layout of one task's outputs: the delimiter tags plus the ordered
   step headers that must appear inside the think block. */
struct ChainSchema {
  std::string task_id;
  std::vector<std::string> step_headers;
  HeaderMatchMode header_match_mode = HeaderMatchMode::CaseInsensitive;

  /* [<think>, h1..hK, </think>, <answer>, </answer>]; elements pairwise
     distinct under header normalization */
  std::vector<std::string> required_sequence() const {
    std::vector<std::string> seq;
    seq.reserve(step_headers.size() + 4);
    seq.push_back(kThinkOpen);
    std::vector<std::string> seen;
    for (const auto& h : step_headers) {
      const std::string norm = collapse_ws(to_lower(h));
      if (norm.empty())
        throw ConfigError("schema '" + task_id + "': empty step header");
      if (is_delimiter_token(norm))
        throw ConfigError("schema '" + task_id + "': step header collides with delimiter token '" + h + "'");
      if (std::find(seen.begin(), seen.end(), norm) != seen.end())
        throw ConfigError("schema '" + task_id + "': duplicate step header '" + h + "'");
      seen.push_back(norm);
      seq.push_back(h);
    }
    seq.push_back(kThinkClose);
    seq.push_back(kAnswerOpen);
    seq.push_back(kAnswerClose);
    return seq;
  }
};

namespace detail {

/* Positions where a header line may begin: start of text, after each newline,
   and directly after a delimiter tag (headers often follow <think> on the
   same line). */
inline std::vector<std::size_t> header_anchor_positions(const std::string& text) {
  std::vector<std::size_t> anchors;
  anchors.push_back(0);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') anchors.push_back(i + 1);
  }
  for (const char* tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    const std::string t(tag);
    std::size_t pos = text.find(t);
    while (pos != std::string::npos) {
      anchors.push_back(pos + t.size());
      pos = text.find(t, pos + t.size());
    }
  }
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
  return anchors;
}

/* Whitespace-normalized prefix match at an anchor, case-folded unless the
   schema asks for exact matching. Returns the offset of the first matched
   character, or kNpos. */
inline std::size_t match_header_at(const std::string& text, std::size_t anchor,
                                   const std::string& want_normalized, bool fold_case) {
  std::size_t i = anchor;
  while (i < text.size() && is_space(text[i]) && text[i] != '\n') ++i;
  if (i >= text.size()) return kNpos;
  const std::size_t start = i;
  for (std::size_t w = 0; w < want_normalized.size(); ++w) {
    const char wc = want_normalized[w];
    if (wc == ' ') {
      if (i >= text.size() || !is_space(text[i])) return kNpos;
      while (i < text.size() && is_space(text[i])) ++i;
    } else {
      if (i >= text.size()) return kNpos;
      const char tc = fold_case ? lower(text[i]) : text[i];
      if (tc != wc) return kNpos;
      ++i;
    }
  }
  return start;
}

/* First occurrence of a schema header in text, as a line-prefix match.
   Minimum over anchors: a later anchor can start earlier than an earlier
   anchor once leading whitespace is skipped. */
inline std::size_t find_header(const std::string& text, const std::string& header,
                               HeaderMatchMode mode = HeaderMatchMode::CaseInsensitive) {
  const bool fold = mode == HeaderMatchMode::CaseInsensitive;
  const std::string want = collapse_ws(fold ? to_lower(header) : header);
  if (want.empty()) return kNpos;
  std::size_t best = kNpos;
  for (std::size_t anchor : header_anchor_positions(text)) {
    const std::size_t at = match_header_at(text, anchor, want, fold);
    if (at < best) best = at;
  }
  return best;
}

/* First occurrence of any required-sequence element: literal search for the
   delimiter tags, normalized line-prefix search for headers. */
inline std::size_t element_index(const std::string& text, const std::string& element,
                                 HeaderMatchMode mode = HeaderMatchMode::CaseInsensitive) {
  if (is_delimiter_token(element)) {
    const std::size_t pos = text.find(element);
    return pos == std::string::npos ? kNpos : pos;
  }
  return find_header(text, element, mode);
}

}  // namespace detail

struct ValidityVector {
  std::vector<std::string> elements;    // required sequence, in order
  std::vector<bool> flags;              // one per element
  std::vector<std::size_t> positions;   // first-occurrence offsets, kNpos if absent

  std::size_t total() const { return flags.size(); }
  std::size_t count_valid() const {
    std::size_t n = 0;
    for (bool f : flags)
      if (f) ++n;
    return n;
  }
  double fraction() const {
    return flags.empty() ? 0.0 : static_cast<double>(count_valid()) / static_cast<double>(total());
  }
};

/* An element is valid when it occurs and its first occurrence falls after the
   first occurrences of all previously validated elements. */
inline ValidityVector compute_validity(const ReasoningChain& chain, const ChainSchema& schema) {
  if (!chain.schema_task_id.empty() && chain.schema_task_id != schema.task_id)
    throw ConfigError("chain parsed against schema '" + chain.schema_task_id +
                      "' but validated against '" + schema.task_id + "'");
  ValidityVector v;
  v.elements = schema.required_sequence();
  v.flags.resize(v.elements.size(), false);
  v.positions.resize(v.elements.size(), kNpos);
  long long max_seen = -1;
  for (std::size_t i = 0; i < v.elements.size(); ++i) {
    const std::size_t pos =
        detail::element_index(chain.raw_text, v.elements[i], schema.header_match_mode);
    v.positions[i] = pos;
    if (pos != kNpos && static_cast<long long>(pos) > max_seen) {
      v.flags[i] = true;
      max_seen = static_cast<long long>(pos);
    }
  }
  return v;
}

inline ReasoningChain parse_chain(const std::string& raw, const ChainSchema& schema) {
  ReasoningChain chain;
  chain.raw_text = raw;
  chain.schema_task_id = schema.task_id;

  const std::size_t to = raw.find(kThinkOpen);
  const std::size_t tc = raw.find(kThinkClose);
  const std::size_t ao = raw.find(kAnswerOpen);
  const std::size_t ac = raw.find(kAnswerClose);

  const bool single = count_occurrences(raw, kThinkOpen) == 1 &&
                      count_occurrences(raw, kThinkClose) == 1 &&
                      count_occurrences(raw, kAnswerOpen) == 1 &&
                      count_occurrences(raw, kAnswerClose) == 1;
  chain.well_formed = single && to < tc && tc < ao && ao < ac;

  if (chain.well_formed) {
    const std::size_t tb = to + std::string(kThinkOpen).size();
    chain.think_body = raw.substr(tb, tc - tb);
    const std::size_t ab = ao + std::string(kAnswerOpen).size();
    chain.answer_body = raw.substr(ab, ac - ab);
  }

  /* headers are reported from the think region even for malformed chains */
  if (to != std::string::npos) {
    const std::size_t begin = to + std::string(kThinkOpen).size();
    std::size_t end = raw.find(kThinkClose, begin);
    if (end == std::string::npos) end = raw.size();
    const std::string region = raw.substr(begin, end - begin);
    std::vector<DetectedHeader> found;
    for (const auto& h : schema.step_headers) {
      const std::size_t at = detail::find_header(region, h, schema.header_match_mode);
      if (at != kNpos) found.push_back({h, begin + at});
    }
    std::sort(found.begin(), found.end(), [](const DetectedHeader& a, const DetectedHeader& b) {
      if (a.offset != b.offset) return a.offset < b.offset;
      return a.header.size() > b.header.size();
    });
    /* same offset means one header is a prefix of another; keep the longer */
    for (std::size_t i = 0; i < found.size(); ++i) {
      if (!chain.detected_headers.empty() && chain.detected_headers.back().offset == found[i].offset)
        continue;
      chain.detected_headers.push_back(found[i]);
    }
  }
  return chain;
}

/* Training-target assembly. Bodies may not smuggle delimiter tokens: parsing
   the result must always yield the same two bodies back. */
inline std::string serialize_target(const std::string& think_body, const std::string& answer_body) {
  for (const char* tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    if (think_body.find(tag) != std::string::npos)
      throw ValueError(std::string("think body contains delimiter token '") + tag + "'");
    if (answer_body.find(tag) != std::string::npos)
      throw ValueError(std::string("answer body contains delimiter token '") + tag + "'");
  }
  std::string out;
  out.reserve(think_body.size() + answer_body.size() + 32);
  out += kThinkOpen;
  out += think_body;
  out += kThinkClose;
  out += kAnswerOpen;
  out += answer_body;
  out += kAnswerClose;
  return out;
}

}  // namespace chainscore
