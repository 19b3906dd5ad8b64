#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "chainscore/chain_schema.hpp"
#include "chainscore/errors.hpp"
#include "chainscore/judge.hpp"
#include "chainscore/metrics.hpp"
#include "chainscore/tom_prompts.hpp"

namespace chainscore {

struct RewardWeights {
  double structure = 0.4;
  double content = 1.0;
  double process = 0.1;
  double consistency = 1.0;

  void validate() const {
    for (double w : {structure, content, process, consistency})
      if (!std::isfinite(w) || w < 0.0) throw ValueError("reward weights must be non-negative");
  }
};

struct RewardBreakdown {
  double structure = 0.0;
  double content = 0.0;
  double process = 0.0;
  double consistency = 0.0;
  double total = 0.0;

  /* diagnostics */
  ValidityVector validity;
  std::size_t lexicon_hit_count = 0;
  std::optional<JudgeVerdict> consistency_verdict;

  double weighted_sum(const RewardWeights& w) const {
    return w.structure * structure + w.content * content + w.process * process +
           w.consistency * consistency;
  }
};

/* Fraction of required layout elements present in order. */
inline double reward_structure(const ReasoningChain& chain, const ChainSchema& schema) {
  return compute_validity(chain, schema).fraction();
}

/* Mental-state vocabulary usage, saturating at eta distinct hits. */
inline double reward_process(const std::string& think_body, const ToMLexicon& lex) {
  if (!(lex.eta > 0.0)) throw ConfigError("lexicon eta must be positive");
  const double hits = static_cast<double>(lexicon_hits(think_body, lex));
  return std::min(1.0, hits / lex.eta);
}

/* How the content term scores one answer against its gold value. */
struct ContentSpec {
  enum class Mode {
    Label,        // closed single-label: right or wrong after normalization
    LabelSet,     // multi-label: per-sample element F1
    WordOverlap,  // free text scored by unique-word F1
    Semantic,     // free text scored by the judge
  };
  Mode mode = Mode::Label;
  std::vector<std::string> label_space;  // required for Label/LabelSet
};

inline double reward_content(const std::string& answer_text, const LabelValue& gold,
                             const ContentSpec& spec, JudgeHandle* judge = nullptr) {
  switch (spec.mode) {
    case ContentSpec::Mode::Label: {
      if (gold.kind != LabelValue::Kind::Single)
        throw ConfigError("content mode Label requires a single-label gold value");
      ExtractHook hook = nullptr;
      if (judge)
        hook = [judge](const std::string& raw, const std::vector<std::string>& space) {
          return judge->judge_extract(raw, space);
        };
      const Normalized n = normalize_answer(answer_text, spec.label_space, hook);
      return (n.matched && n.label == gold.values[0]) ? 1.0 : 0.0;
    }
    case ContentSpec::Mode::LabelSet: {
      if (gold.kind != LabelValue::Kind::Set)
        throw ConfigError("content mode LabelSet requires a set-valued gold");
      ExtractHook hook = nullptr;
      if (judge)
        hook = [judge](const std::string& raw, const std::vector<std::string>& space) {
          return judge->judge_extract(raw, space);
        };
      const NormalizedSet pred = normalize_label_set(answer_text, spec.label_space, hook);
      const std::set<std::string> gold_set = gold.as_set();
      std::size_t tp = 0;
      for (const auto& l : pred.labels)
        if (gold_set.count(l)) ++tp;
      const std::size_t fp = pred.labels.size() - tp + pred.unmatched_parts.size();
      const std::size_t fn = gold_set.size() - tp;
      return detail::prf(tp, fp, fn).f1;
    }
    case ContentSpec::Mode::WordOverlap:
      if (gold.kind != LabelValue::Kind::Text)
        throw ConfigError("content mode WordOverlap requires a text gold value");
      return exact_match_f1(answer_text, gold.values[0]);
    case ContentSpec::Mode::Semantic:
      if (gold.kind != LabelValue::Kind::Text)
        throw ConfigError("content mode Semantic requires a text gold value");
      if (!judge)
        throw ConfigError("content mode Semantic requires a judge backend");
      return judge->judge_semantic(answer_text, gold.values[0]);
  }
  throw ConfigError("unhandled content mode");
}

struct ConsistencyResult {
  double score = 0.0;  // 1.0 when both checks pass, 0.1 otherwise; nothing else
  JudgeVerdict verdict;
};

/* A judge failure here must surface, not degrade into a silent penalty:
   GatewayError from the handle propagates. */
inline ConsistencyResult reward_consistency(const ReasoningChain& chain,
                                            const std::string& input_context,
                                            JudgeHandle& judge) {
  const std::string& tau = chain.well_formed ? chain.think_body : chain.raw_text;
  ConsistencyResult r;
  r.verdict = judge.judge_consistency(tau, input_context);
  r.score = (r.verdict.internal_ok && r.verdict.external_ok) ? 1.0 : 0.1;
  return r;
}

struct SampleScoreConfig {
  ChainSchema schema;
  ToMLexicon lexicon;
  ContentSpec content;
  RewardWeights weights;
  std::string input_context;  // what the external consistency check reads
};

/* Full per-sample reward: parse, score each component, weight, and keep the
   diagnostics a training loop or audit wants to see. */
inline RewardBreakdown score_sample(const std::string& raw_output, const LabelValue& gold,
                                    const SampleScoreConfig& cfg, JudgeHandle* judge) {
  cfg.weights.validate();
  /* the consistency term is part of every reward, so scoring is judge-bound
     even when a sweep later zeroes its weight */
  if (!judge)
    throw ConfigError("scoring task '" + cfg.schema.task_id +
                      "' requires a judge backend (consistency term)");

  const ReasoningChain chain = parse_chain(raw_output, cfg.schema);
  RewardBreakdown b;
  b.validity = compute_validity(chain, cfg.schema);
  b.structure = b.validity.fraction();
  const std::string& answer = chain.well_formed ? chain.answer_body : chain.raw_text;
  b.content = reward_content(answer, gold, cfg.content, judge);
  b.lexicon_hit_count = lexicon_hits(chain.think_body, cfg.lexicon);
  b.process = reward_process(chain.think_body, cfg.lexicon);
  const ConsistencyResult c = reward_consistency(chain, cfg.input_context, *judge);
  b.consistency = c.score;
  b.consistency_verdict = c.verdict;
  b.total = b.weighted_sum(cfg.weights);
  return b;
}

}  // namespace chainscore
