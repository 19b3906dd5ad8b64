#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chainscore/errors.hpp"
#include "chainscore/text.hpp"

namespace chainscore {

struct LabelValue {
  enum class Kind { Single, Set, Text };
  Kind kind = Kind::Single;
  std::vector<std::string> values;  // Single/Text: one entry; Set: sorted unique

  static LabelValue single(const std::string& v) {
    LabelValue lv;
    lv.kind = Kind::Single;
    lv.values = {to_lower(trim(v))};
    return lv;
  }
  static LabelValue label_set(std::vector<std::string> v) {
    LabelValue lv;
    lv.kind = Kind::Set;
    for (auto& s : v) s = to_lower(trim(s));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    lv.values = std::move(v);
    return lv;
  }
  static LabelValue text(const std::string& v) {
    LabelValue lv;
    lv.kind = Kind::Text;
    lv.values = {v};
    return lv;
  }
  std::set<std::string> as_set() const { return {values.begin(), values.end()}; }
  bool operator==(const LabelValue&) const = default;
};

class ConfusionTable {
 public:
  explicit ConfusionTable(std::vector<std::string> classes) : classes_(std::move(classes)) {
    if (classes_.empty()) throw ValueError("confusion table needs at least one class");
    for (std::size_t i = 0; i < classes_.size(); ++i)
      for (std::size_t j = i + 1; j < classes_.size(); ++j)
        if (classes_[i] == classes_[j])
          throw ValueError("duplicate class '" + classes_[i] + "' in confusion table");
    counts_.assign(classes_.size(), std::vector<std::size_t>(classes_.size(), 0));
  }

  std::size_t index_of(const std::string& cls) const {
    for (std::size_t i = 0; i < classes_.size(); ++i)
      if (classes_[i] == cls) return i;
    throw ValueError("unknown class '" + cls + "' in confusion table");
  }

  void add(const std::string& truth, const std::string& pred, std::size_t n = 1) {
    counts_[index_of(truth)][index_of(pred)] += n;
  }

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t at(std::size_t t, std::size_t p) const { return counts_[t][p]; }

  std::size_t row_total(std::size_t t) const {
    std::size_t n = 0;
    for (std::size_t p = 0; p < classes_.size(); ++p) n += counts_[t][p];
    return n;
  }
  std::size_t col_total(std::size_t p) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < classes_.size(); ++t) n += counts_[t][p];
    return n;
  }
  std::size_t total() const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < classes_.size(); ++t) n += row_total(t);
    return n;
  }

 private:
  std::vector<std::string> classes_;
  std::vector<std::vector<std::size_t>> counts_;
};

inline double accuracy(const std::vector<LabelValue>& predictions,
                       const std::vector<LabelValue>& golds) {
  if (golds.empty()) throw ValueError("accuracy over empty input");
  if (predictions.size() != golds.size())
    throw ValueError("accuracy: prediction/gold count mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < golds.size(); ++i)
    if (predictions[i] == golds[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(golds.size());
}

namespace detail {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline PRF prf(std::size_t tp, std::size_t fp, std::size_t fn) {
  PRF r;
  r.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

}  // namespace detail

/* Support-weighted mean of per-class F1; absent classes carry zero weight,
   zero-division inside a class yields F1 = 0 for that class. */
inline double weighted_f1(const ConfusionTable& t) {
  const std::size_t n = t.total();
  if (n == 0) throw ValueError("weighted F1 over empty confusion table");
  double sum = 0.0;
  for (std::size_t c = 0; c < t.classes().size(); ++c) {
    const std::size_t tp = t.at(c, c);
    const std::size_t fp = t.col_total(c) - tp;
    const std::size_t fn = t.row_total(c) - tp;
    const double weight = static_cast<double>(t.row_total(c)) / static_cast<double>(n);
    sum += weight * detail::prf(tp, fp, fn).f1;
  }
  return sum;
}

namespace detail {

/* Single-rounding pooled form: equal to 2PR/(P+R) but exact when the ratio
   is a plain integer fraction, e.g. singleton sets reduce to accuracy. */
inline double pooled_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace detail

/* F1 of TP/FP/FN pooled across all classes. */
inline double micro_f1(const ConfusionTable& t) {
  if (t.total() == 0) throw ValueError("micro F1 over empty confusion table");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < t.classes().size(); ++c) {
    tp += t.at(c, c);
    fp += t.col_total(c) - t.at(c, c);
    fn += t.row_total(c) - t.at(c, c);
  }
  return detail::pooled_f1(tp, fp, fn);
}

/* Multi-label form: pool element hits and misses across samples. */
inline double micro_f1(const std::vector<std::set<std::string>>& predictions,
                       const std::vector<std::set<std::string>>& golds) {
  if (golds.empty()) throw ValueError("micro F1 over empty input");
  if (predictions.size() != golds.size())
    throw ValueError("micro F1: prediction/gold count mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    for (const auto& p : predictions[i]) {
      if (golds[i].count(p))
        ++tp;
      else
        ++fp;
    }
    for (const auto& g : golds[i])
      if (!predictions[i].count(g)) ++fn;
  }
  return detail::pooled_f1(tp, fp, fn);
}

/* F1 over unique lowercased words with punctuation stripped. Two empty sets
   agree perfectly; one empty set cannot match anything. */
inline double exact_match_f1(const std::string& prediction, const std::string& gold) {
  const std::set<std::string> p = unique_tokens(prediction);
  const std::set<std::string> g = unique_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& w : p)
    if (g.count(w)) ++hit;
  return detail::prf(hit, p.size() - hit, g.size() - hit).f1;
}

/* Agreement between two raters beyond chance. Degenerate case: both raters
   constant and identical has expected agreement 1, returned as full agreement. */
inline double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty()) throw ValueError("kappa over empty input");
  if (a.size() != b.size()) throw ValueError("kappa: rater length mismatch");
  const double n = static_cast<double>(a.size());
  std::size_t agree = 0;
  std::map<std::string, std::size_t> ma, mb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++agree;
    ++ma[a[i]];
    ++mb[b[i]];
  }
  const double po = static_cast<double>(agree) / n;
  double pe = 0.0;
  for (const auto& [cls, ca] : ma) {
    auto it = mb.find(cls);
    if (it != mb.end())
      pe += (static_cast<double>(ca) / n) * (static_cast<double>(it->second) / n);
  }
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

/* Hook for resolving outputs the deterministic cascade cannot: takes the raw
   output and the label space, returns a label or nothing. */
using ExtractHook =
    std::function<std::optional<std::string>(const std::string&, const std::vector<std::string>&)>;

struct Normalized {
  bool matched = false;
  std::string label;  // canonical (lowercased) label from the space
  int rule = 0;       // 1 exact, 2 relaxed, 3 substring, 4 hook, 0 unmatched
};

namespace detail {

/* Tokens that signal the output offers alternatives or hedges instead of one
   answer. Substring matching is withheld for such outputs: picking whichever
   label happens to be mentioned would mistake an expression of uncertainty
   for a commitment. The hook stage may still resolve them. */
inline const std::vector<std::vector<std::string>>& hedge_patterns() {
  static const std::vector<std::vector<std::string>> patterns = {
      {"or"},           {"either"},        {"unsure"},       {"unclear"},
      {"maybe"},        {"perhaps"},       {"not", "sure"},  {"hard", "to", "say"},
      {"cannot", "tell"}, {"can", "t", "tell"}, {"hard", "to", "tell"},
  };
  return patterns;
}

inline bool contains_token_seq(const std::vector<std::string>& tokens,
                               const std::vector<std::string>& seq) {
  if (seq.empty() || seq.size() > tokens.size()) return false;
  for (std::size_t i = 0; i + seq.size() <= tokens.size(); ++i) {
    bool all = true;
    for (std::size_t j = 0; j < seq.size(); ++j)
      if (tokens[i + j] != seq[j]) {
        all = false;
        break;
      }
    if (all) return true;
  }
  return false;
}

inline bool is_hedged(const std::vector<std::string>& tokens) {
  for (const auto& p : hedge_patterns())
    if (contains_token_seq(tokens, p)) return true;
  return false;
}

}  // namespace detail

/* Maps a raw answer onto the label space.
   1. exact string equality
   2. equality ignoring case and punctuation
   3. exactly one label occurs as a whole-word phrase, and the output does not
      hedge between alternatives
   4. extraction hook, when provided
   Anything else is unmatched; the caller decides how unmatched scores. */
inline Normalized normalize_answer(const std::string& raw,
                                   const std::vector<std::string>& label_space,
                                   const ExtractHook& hook = nullptr) {
  if (label_space.empty()) throw ValueError("normalize_answer: empty label space");
  Normalized out;

  for (const auto& l : label_space) {
    if (raw == l) {
      out.matched = true;
      out.label = to_lower(trim(l));
      out.rule = 1;
      return out;
    }
  }

  const std::string relaxed = relaxed_form(raw);
  for (const auto& l : label_space) {
    if (!relaxed.empty() && relaxed == relaxed_form(l)) {
      out.matched = true;
      out.label = to_lower(trim(l));
      out.rule = 2;
      return out;
    }
  }

  const std::vector<std::string> tokens = tokenize(raw);
  if (!detail::is_hedged(tokens)) {
    std::vector<std::string> hits;
    for (const auto& l : label_space) {
      if (detail::contains_token_seq(tokens, tokenize(l))) hits.push_back(l);
    }
    if (hits.size() == 1) {
      out.matched = true;
      out.label = to_lower(trim(hits[0]));
      out.rule = 3;
      return out;
    }
  }

  if (hook) {
    const std::optional<std::string> got = hook(raw, label_space);
    if (got) {
      const std::string want = relaxed_form(*got);
      for (const auto& l : label_space) {
        if (want == relaxed_form(l)) {
          out.matched = true;
          out.label = to_lower(trim(l));
          out.rule = 4;
          return out;
        }
      }
    }
  }
  return out;
}

struct NormalizedSet {
  std::set<std::string> labels;               // parts resolved into the space
  std::vector<std::string> unmatched_parts;   // parts that resolved nowhere
  bool fully_matched() const { return unmatched_parts.empty() && !labels.empty(); }
};

/* Splits a multi-label answer on list punctuation and resolves each part
   through the single-label cascade. When parts fail and a hook is given, the
   hook sees the whole raw output and may return a comma-separated list. */
inline NormalizedSet normalize_label_set(const std::string& raw,
                                         const std::vector<std::string>& label_space,
                                         const ExtractHook& hook = nullptr) {
  auto split_parts = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
      if (c == ',' || c == ';' || c == '/' || c == '\n') {
        if (!trim(cur).empty()) parts.push_back(trim(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!trim(cur).empty()) parts.push_back(trim(cur));
    return parts;
  };

  auto resolve = [&](const std::vector<std::string>& parts) {
    NormalizedSet out;
    for (const auto& part : parts) {
      const Normalized one = normalize_answer(part, label_space);
      if (one.matched)
        out.labels.insert(one.label);
      else
        out.unmatched_parts.push_back(part);
    }
    return out;
  };

  NormalizedSet first = resolve(split_parts(raw));
  if (first.unmatched_parts.empty() || !hook) return first;

  const std::optional<std::string> got = hook(raw, label_space);
  if (!got) return first;
  NormalizedSet second = resolve(split_parts(*got));
  return second.unmatched_parts.empty() && !second.labels.empty() ? second : first;
}

}  // namespace chainscore
