#pragma once

#include <algorithm>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "chainscore/chain_schema.hpp"
#include "chainscore/errors.hpp"
#include "chainscore/harness.hpp"
#include "chainscore/judge.hpp"
#include "chainscore/metrics.hpp"
#include "chainscore/reward.hpp"

namespace chainscore {

enum class CurationRoute { Correct, PartiallyIncorrect, CompletelyIncorrect };

inline std::string to_string(CurationRoute r) {
  switch (r) {
    case CurationRoute::Correct: return "correct";
    case CurationRoute::PartiallyIncorrect: return "partially_incorrect";
    case CurationRoute::CompletelyIncorrect: return "completely_incorrect";
  }
  return "?";
}

struct CurationOptions {
  int n_candidates = 3;
  double semantic_threshold = 0.5;  // judge score treated as a match for
                                    // free-text golds; recorded in the export
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct CurationRecord {
  std::string sample_id;
  std::string prompt;
  std::vector<std::string> candidate_raw;
  std::vector<ReasoningChain> candidates;
  CurationRoute route = CurationRoute::CompletelyIncorrect;
  int survivor_index = -1;
  std::string final_chain;         // survivor text, possibly reflected
  std::string correction_request;  // set for the two incorrect routes
  std::vector<std::string> flags;
  std::optional<double> semantic_threshold;  // recorded when judge matching decided the route
};

namespace detail {

inline std::map<std::string, std::string> render_fields(const TaskManifest& task,
                                                        const Sample& sample) {
  std::map<std::string, std::string> fields = sample.fields;
  std::string labels;
  for (const auto& l : task.label_space) {
    if (!labels.empty()) labels += ", ";
    labels += l;
  }
  fields.emplace("labels", labels);
  return fields;
}

inline std::string answer_text_of(const ReasoningChain& chain) {
  return chain.well_formed ? chain.answer_body : chain.raw_text;
}

struct CandidateMatch {
  bool correct = false;
  bool partial = false;        // strict non-empty subset of the gold labels
  std::size_t overlap = 0;     // matched gold elements, ranks partial candidates
  bool used_judge = false;
};

inline CandidateMatch match_candidate(const TaskManifest& task, const Sample& sample,
                                      const ReasoningChain& chain, JudgeHandle* judge,
                                      const CurationOptions& opts) {
  CandidateMatch m;
  const std::string answer = answer_text_of(chain);
  const bool set_valued = task.multi_label || (task.open_ended && task.binds(MetricBinding::MF));

  if (set_valued && !task.open_ended) {
    const NormalizedSet ns = normalize_label_set(answer, task.label_space);
    const std::set<std::string> gold = sample.gold.as_set();
    if (ns.unmatched_parts.empty() && !ns.labels.empty()) {
      std::size_t overlap = 0;
      for (const auto& l : ns.labels)
        if (gold.count(l)) ++overlap;
      m.overlap = overlap;
      if (ns.labels == gold) {
        m.correct = true;
      } else if (overlap == ns.labels.size() && overlap < gold.size()) {
        m.partial = true;
      }
    }
    return m;
  }

  if (task.open_ended && task.binds(MetricBinding::MF)) {
    const std::set<std::string> pred = open_item_set(answer);
    const std::set<std::string> gold = gold_item_set(sample.gold);
    std::size_t overlap = 0;
    for (const auto& p : pred)
      if (gold.count(p)) ++overlap;
    m.overlap = overlap;
    if (!pred.empty() && pred == gold) {
      m.correct = true;
    } else if (!pred.empty() && overlap == pred.size() && overlap < gold.size()) {
      m.partial = true;
    }
    return m;
  }

  if (task.open_ended) {
    if (!judge)
      throw ConfigError("curation for task '" + task.task_id +
                        "' needs a judge backend to match free-text golds");
    m.used_judge = true;
    m.correct = judge->judge_semantic(answer, sample.gold.values[0]) >= opts.semantic_threshold;
    return m;
  }

  const Normalized n = normalize_answer(answer, task.label_space);
  m.correct = n.matched && n.label == sample.gold.values[0];
  if (m.correct) m.overlap = 1;
  return m;
}

}  // namespace detail

/* Step 1: sample n candidate chains for one input. */
inline CurationRecord generate_step(const TaskManifest& task, const Sample& sample,
                                    JudgeHandle& model, const CurationOptions& opts = {}) {
  if (opts.n_candidates < 1) throw ValueError("candidate count must be positive");
  CurationRecord rec;
  rec.sample_id = sample.sample_id;
  rec.prompt = render_prompt(task.tmpl, detail::render_fields(task, sample));
  rec.candidate_raw = model.generate_candidates(rec.prompt, opts.n_candidates, opts.seed);
  for (const auto& raw : rec.candidate_raw) rec.candidates.push_back(parse_chain(raw, task.schema));
  return rec;
}

/* Step 2: route on answer correctness. The first fully correct candidate
   survives; a strict non-empty subset of a set-valued gold is only partially
   wrong; everything else needs a fresh chain. */
inline void filter_step(CurationRecord& rec, const TaskManifest& task, const Sample& sample,
                        JudgeHandle* judge, const CurationOptions& opts = {}) {
  if (rec.candidates.empty()) throw ValueError("filter step before generate step");
  std::vector<detail::CandidateMatch> matches;
  for (const auto& chain : rec.candidates)
    matches.push_back(detail::match_candidate(task, sample, chain, judge, opts));

  for (const auto& m : matches)
    if (m.used_judge) rec.semantic_threshold = opts.semantic_threshold;

  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (matches[i].correct) {
      rec.route = CurationRoute::Correct;
      rec.survivor_index = static_cast<int>(i);
      rec.final_chain = rec.candidate_raw[i];
      return;
    }
  }

  std::size_t best = matches.size();
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (!matches[i].partial) continue;
    if (best == matches.size() || matches[i].overlap > matches[best].overlap) best = i;
  }
  std::string gold_text;
  if (sample.gold.kind == LabelValue::Kind::Set) {
    for (const auto& v : sample.gold.values) {
      if (!gold_text.empty()) gold_text += ", ";
      gold_text += v;
    }
  } else {
    gold_text = sample.gold.values[0];
  }

  if (best != matches.size()) {
    rec.route = CurationRoute::PartiallyIncorrect;
    rec.survivor_index = static_cast<int>(best);
    rec.final_chain = rec.candidate_raw[best];
    rec.correction_request =
        "The reasoning below reaches only part of the reference answer. Revise only the "
        "erroneous parts and keep the valid portions intact. Reference answer: " + gold_text +
        "\n\n" + rec.candidate_raw[best];
  } else {
    rec.route = CurationRoute::CompletelyIncorrect;
    rec.survivor_index = -1;
    rec.final_chain.clear();
    rec.correction_request =
        "None of the sampled reasoning reaches the reference answer. Produce a new chain from "
        "scratch that follows the required step layout and concludes with the reference answer: " +
        gold_text;
  }
}

/* Step 3: formatting normalization for surviving chains. The rewrite must
   keep the answer and may not lose layout credit; a violation keeps the
   original chain and leaves a flag for external review. */
inline void reflect_step(CurationRecord& rec, const TaskManifest& task, JudgeHandle& model) {
  if (rec.route != CurationRoute::Correct) return;
  const ReasoningChain& before = rec.candidates[static_cast<std::size_t>(rec.survivor_index)];
  const double structure_before = compute_validity(before, task.schema).fraction();

  const std::string instruction =
      "Normalize the formatting of this reasoning chain: keep every step and the final answer "
      "unchanged, fix only layout, and return the full chain with its delimiters.";
  const std::string reflected_raw = model.reflect(before.raw_text, instruction);
  const ReasoningChain after = parse_chain(reflected_raw, task.schema);

  /* answer preservation: byte-equal answer bodies when the survivor was well
     formed; for a malformed survivor the preserved quantity is the label the
     answer resolves to, since it has no answer body to compare */
  bool answer_kept;
  if (before.well_formed) {
    answer_kept = after.well_formed && after.answer_body == before.answer_body;
  } else {
    const std::string b = detail::answer_text_of(before);
    const std::string a = detail::answer_text_of(after);
    if (!task.open_ended && !task.multi_label) {
      const Normalized nb = normalize_answer(b, task.label_space);
      const Normalized na = normalize_answer(a, task.label_space);
      answer_kept = after.well_formed && nb.matched && na.matched && nb.label == na.label;
    } else {
      answer_kept = after.well_formed && relaxed_form(a) == relaxed_form(b);
    }
  }
  if (!answer_kept) {
    rec.flags.push_back("answer-drift");
    return;  // original chain stays
  }

  const double structure_after = compute_validity(after, task.schema).fraction();
  if (structure_after < structure_before) {
    rec.flags.push_back("schema-regression");
    return;
  }
  rec.final_chain = reflected_raw;
}

/* Step 4: hand the routed records to external verification, one JSON object
   per line. */
inline void export_for_verification(const std::vector<CurationRecord>& records,
                                    std::ostream& out) {
  for (const auto& rec : records) {
    nlohmann::json j;
    j["sample_id"] = rec.sample_id;
    j["route"] = to_string(rec.route);
    j["survivor_index"] = rec.survivor_index;
    j["final_chain"] = rec.final_chain;
    j["flags"] = rec.flags;
    j["prompt_digest"] = to_hex(fnv1a64(rec.prompt));
    j["candidates"] = rec.candidate_raw;
    if (!rec.correction_request.empty()) j["correction_request"] = rec.correction_request;
    if (rec.semantic_threshold) j["semantic_threshold"] = *rec.semantic_threshold;
    out << j.dump() << "\n";
  }
}

inline std::vector<CurationRecord> run_pipeline(const TaskManifest& task,
                                                const std::vector<Sample>& samples,
                                                JudgeHandle& model,
                                                const CurationOptions& opts = {}) {
  return parallel_map<CurationRecord>(samples.size(), opts.jobs, [&](std::size_t i) {
    CurationRecord rec = generate_step(task, samples[i], model, opts);
    filter_step(rec, task, samples[i], &model, opts);
    reflect_step(rec, task, model);
    return rec;
  });
}

}  // namespace chainscore
