#pragma once

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "chainscore/chain_schema.hpp"
#include "chainscore/errors.hpp"
#include "chainscore/grpo.hpp"
#include "chainscore/jsonl.hpp"
#include "chainscore/judge.hpp"
#include "chainscore/metrics.hpp"
#include "chainscore/reward.hpp"
#include "chainscore/tom_prompts.hpp"
#include "chainscore/version.hpp"

namespace chainscore {

enum class MetricBinding { ACC, WAF, MF, EMF, LLM };

inline MetricBinding metric_binding_from_string(const std::string& s, const std::string& task_id) {
  if (s == "ACC") return MetricBinding::ACC;
  if (s == "WAF") return MetricBinding::WAF;
  if (s == "MF") return MetricBinding::MF;
  if (s == "EMF") return MetricBinding::EMF;
  if (s == "LLM") return MetricBinding::LLM;
  throw ConfigError("unsupported metric binding '" + s + "' for task '" + task_id + "'");
}

inline std::string to_string(MetricBinding b) {
  switch (b) {
    case MetricBinding::ACC: return "ACC";
    case MetricBinding::WAF: return "WAF";
    case MetricBinding::MF: return "MF";
    case MetricBinding::EMF: return "EMF";
    case MetricBinding::LLM: return "LLM";
  }
  return "?";
}

struct TaskManifest {
  std::string task_id;
  int level = 1;
  std::string name;
  std::vector<MetricBinding> metrics;
  std::vector<std::string> label_space;  // canonical lowercase, original order
  bool multi_label = false;
  bool open_ended = false;
  double eta = 5.0;
  std::string data_path;  // resolved against the manifest directory

  PromptTemplate tmpl;
  ChainSchema schema;
  ToMLexicon lexicon;

  bool binds(MetricBinding b) const {
    return std::find(metrics.begin(), metrics.end(), b) != metrics.end();
  }

  /* headline metric: accuracy when bound, otherwise the first binding */
  MetricBinding primary_metric() const {
    if (metrics.empty()) throw ConfigError("task '" + task_id + "' binds no metrics");
    if (binds(MetricBinding::ACC)) return MetricBinding::ACC;
    return metrics.front();
  }
};

struct RunManifest {
  std::vector<TaskManifest> tasks;
  std::string base_dir;
  std::string digest;  // over the canonical manifest content
};

namespace detail {

inline std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(base_dir) / fp).string();
}

inline TaskManifest parse_task_manifest(const nlohmann::json& j, const std::string& base_dir) {
  TaskManifest t;
  try {
    t.task_id = j.at("task_id").get<std::string>();
    t.level = j.at("level").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task manifest missing task_id/level: ") + e.what());
  }
  if (t.task_id.empty()) throw ConfigError("task manifest with empty task_id");
  if (t.level < 1 || t.level > 3)
    throw ConfigError("task '" + t.task_id + "': level " + std::to_string(t.level) +
                      " out of range 1..3");
  t.name = j.value("name", t.task_id);

  if (!j.contains("metrics") || !j.at("metrics").is_array() || j.at("metrics").empty())
    throw ConfigError("task '" + t.task_id + "': metrics must be a non-empty array");
  for (const auto& m : j.at("metrics"))
    t.metrics.push_back(metric_binding_from_string(m.get<std::string>(), t.task_id));

  t.multi_label = j.value("multi_label", false);
  t.open_ended = j.value("open_ended", false);
  if (j.contains("label_space")) {
    std::set<std::string> seen;
    for (const auto& l : j.at("label_space")) {
      const std::string canon = to_lower(trim(l.get<std::string>()));
      if (canon.empty()) throw ConfigError("task '" + t.task_id + "': empty label in space");
      if (!seen.insert(canon).second)
        throw ConfigError("task '" + t.task_id + "': duplicate label '" + canon + "'");
      t.label_space.push_back(canon);
    }
  }

  const bool needs_space = t.binds(MetricBinding::ACC) || t.binds(MetricBinding::WAF) ||
                           (t.binds(MetricBinding::MF) && !t.open_ended);
  if (needs_space && t.label_space.size() < 2)
    throw ConfigError("task '" + t.task_id + "': label_space with at least 2 labels required");
  if (t.binds(MetricBinding::WAF) && t.multi_label)
    throw ConfigError("task '" + t.task_id + "': weighted F1 needs single-label outputs");
  if ((t.binds(MetricBinding::EMF) || t.binds(MetricBinding::LLM)) && !t.open_ended)
    throw ConfigError("task '" + t.task_id + "': EMF/LLM bindings require open_ended");

  const std::string template_ref = j.value("template", std::string("builtin"));
  if (template_ref == "builtin") {
    t.tmpl = builtin_template(t.task_id);
  } else {
    t.tmpl = load_template_file(resolve_path(base_dir, template_ref));
  }
  t.schema = schema_from_template(t.tmpl);

  t.eta = j.value("eta", 5.0);
  if (!(t.eta > 0.0)) throw ConfigError("task '" + t.task_id + "': eta must be positive");
  if (j.contains("lexicon")) {
    t.lexicon = load_lexicon_file(resolve_path(base_dir, j.at("lexicon").get<std::string>()), t.eta);
  } else {
    t.lexicon = default_lexicon();
    t.lexicon.eta = t.eta;
  }

  if (!j.contains("data"))
    throw ConfigError("task '" + t.task_id + "': no data file configured");
  t.data_path = resolve_path(base_dir, j.at("data").get<std::string>());
  return t;
}

}  // namespace detail

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest '" + path + "': " + e.what());
  }
  RunManifest run;
  run.base_dir = std::filesystem::path(path).parent_path().string();
  const nlohmann::json tasks = j.contains("tasks") ? j.at("tasks") : nlohmann::json::array({j});
  if (!tasks.is_array() || tasks.empty())
    throw ConfigError("manifest '" + path + "': tasks must be a non-empty array");
  std::set<std::string> ids;
  for (const auto& tj : tasks) {
    TaskManifest t = detail::parse_task_manifest(tj, run.base_dir);
    if (!ids.insert(t.task_id).second)
      throw ConfigError("manifest '" + path + "': duplicate task_id '" + t.task_id + "'");
    run.tasks.push_back(std::move(t));
  }
  run.digest = to_hex(fnv1a64(j.dump()));
  return run;
}

struct Sample {
  std::string sample_id;
  std::map<std::string, std::string> fields;  // text, audio_caption, image_caption, ...
  LabelValue gold;

  /* what the external consistency check and the judge read as "the input" */
  std::string context() const {
    std::string out;
    for (const auto& [k, v] : fields) {
      if (!out.empty()) out += "\n";
      out += k + ": " + v;
    }
    return out;
  }
};

inline std::vector<Sample> ingest_samples(const TaskManifest& task, const std::string& path) {
  std::vector<Sample> samples;
  std::map<std::string, std::size_t> seen;  // id -> line
  for_each_jsonl(path, [&](std::size_t line_no, const nlohmann::json& j) {
    const std::string where = path + ":" + std::to_string(line_no);
    if (!j.is_object()) throw IoError(where + ": sample line is not an object");
    if (!j.contains("sample_id") || !j.at("sample_id").is_string())
      throw IoError(where + ": missing sample_id");
    Sample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    if (s.sample_id.empty()) throw IoError(where + ": empty sample_id");
    auto prev = seen.find(s.sample_id);
    if (prev != seen.end())
      throw IoError(where + ": duplicate sample id '" + s.sample_id + "' (first seen at line " +
                    std::to_string(prev->second) + ")");
    seen[s.sample_id] = line_no;

    for (const auto& [k, v] : j.items()) {
      if (k == "sample_id" || k == "gold") continue;
      if (v.is_string()) s.fields[k] = v.get<std::string>();
    }

    if (!j.contains("gold")) throw IoError(where + ": missing gold");
    const nlohmann::json& g = j.at("gold");
    const bool set_valued = task.multi_label || (task.open_ended && task.binds(MetricBinding::MF));
    if (set_valued) {
      if (!g.is_array() || g.empty())
        throw IoError(where + ": gold must be a non-empty array for this task");
      std::vector<std::string> vals;
      for (const auto& e : g) vals.push_back(e.get<std::string>());
      s.gold = LabelValue::label_set(vals);
    } else if (task.open_ended) {
      if (!g.is_string()) throw IoError(where + ": gold must be a string for this task");
      s.gold = LabelValue::text(g.get<std::string>());
    } else {
      if (!g.is_string()) throw IoError(where + ": gold must be a string for this task");
      s.gold = LabelValue::single(g.get<std::string>());
    }

    if (!task.open_ended) {
      for (const auto& v : s.gold.values) {
        if (std::find(task.label_space.begin(), task.label_space.end(), v) ==
            task.label_space.end())
          throw IoError(where + ": gold label '" + v + "' not in label space of task '" +
                        task.task_id + "'");
      }
    }
    samples.push_back(std::move(s));
  });
  return samples;
}

inline std::unordered_map<std::string, std::string> load_predictions(const std::string& path) {
  std::unordered_map<std::string, std::string> out;
  for_each_jsonl(path, [&](std::size_t line_no, const nlohmann::json& j) {
    const std::string where = path + ":" + std::to_string(line_no);
    if (!j.is_object() || !j.contains("sample_id") || !j.contains("output"))
      throw IoError(where + ": prediction line needs sample_id and output");
    const std::string id = j.at("sample_id").get<std::string>();
    if (!out.emplace(id, j.at("output").get<std::string>()).second)
      throw IoError(where + ": duplicate prediction for sample '" + id + "'");
  });
  return out;
}

struct ScoreOptions {
  std::shared_ptr<JudgeHandle> judge;
  int jobs = 1;
  bool include_timestamp = false;
  /* level averages use each task's headline metric when true, the mean of all
     bound metrics per task when false */
  bool primary_only_levels = true;
};

struct SampleRecord {
  std::string sample_id;
  bool have_prediction = false;
  bool well_formed = false;
  double structure = 0.0;
  std::string answer_text;
  std::string pred_label;                // single-label tasks, canonical or ""
  std::vector<std::string> pred_set;     // set tasks
  std::vector<std::string> unmatched_parts;
  bool unmatched = false;
  bool correct = false;
  double emf = 0.0;
  double semantic = 0.0;
};

struct TaskReport {
  std::string task_id;
  int level = 1;
  std::map<std::string, double> metric_values;
  std::string primary_metric;
  double primary_value = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_missing = 0;
  std::size_t n_malformed = 0;
  std::vector<SampleRecord> samples;
};

struct RunReport {
  std::string tool_version;
  std::string config_digest;
  std::string timestamp;  // empty unless requested; excluded from comparisons
  std::vector<TaskReport> tasks;
  std::map<int, double> level_averages;
  double overall_mean = 0.0;
};

namespace detail {

inline const std::string kUnmatchedClass = "\x1funmatched";

inline std::set<std::string> open_item_set(const std::string& text) {
  std::set<std::string> items;
  std::string cur;
  auto flush = [&] {
    const std::string norm = relaxed_form(cur);
    if (!norm.empty()) items.insert(norm);
    cur.clear();
  };
  for (char c : text) {
    if (c == ',' || c == ';' || c == '\n') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return items;
}

/* Gold side of an open item-set comparison: set-valued golds contribute every
   element, a free-text gold is split like a prediction. */
inline std::set<std::string> gold_item_set(const LabelValue& gold) {
  if (gold.kind != LabelValue::Kind::Set)
    return open_item_set(gold.values.empty() ? std::string() : gold.values[0]);
  std::set<std::string> items;
  for (const auto& v : gold.values) {
    const std::string norm = relaxed_form(v);
    if (!norm.empty()) items.insert(norm);
  }
  return items;
}

inline SampleRecord score_one_sample(const TaskManifest& task, const Sample& sample,
                                     const std::string* raw_output, JudgeHandle* judge) {
  SampleRecord rec;
  rec.sample_id = sample.sample_id;
  if (!raw_output) return rec;  // scored wrong everywhere below
  rec.have_prediction = true;

  const ReasoningChain chain = parse_chain(*raw_output, task.schema);
  rec.well_formed = chain.well_formed;
  rec.structure = compute_validity(chain, task.schema).fraction();
  rec.answer_text = chain.well_formed ? chain.answer_body : chain.raw_text;

  ExtractHook hook = nullptr;
  if (judge)
    hook = [judge](const std::string& raw, const std::vector<std::string>& space) {
      return judge->judge_extract(raw, space);
    };

  const bool set_valued = task.multi_label || (task.open_ended && task.binds(MetricBinding::MF));
  if (set_valued && !task.open_ended) {
    const NormalizedSet ns = normalize_label_set(rec.answer_text, task.label_space, hook);
    rec.pred_set.assign(ns.labels.begin(), ns.labels.end());
    rec.unmatched_parts = ns.unmatched_parts;
    rec.unmatched = ns.labels.empty();
    rec.correct = ns.unmatched_parts.empty() && ns.labels == sample.gold.as_set();
  } else if (task.open_ended) {
    if (task.binds(MetricBinding::MF)) {
      const auto items = open_item_set(rec.answer_text);
      rec.pred_set.assign(items.begin(), items.end());
      rec.correct = items == gold_item_set(sample.gold);
    }
    if (task.binds(MetricBinding::EMF)) {
      rec.emf = exact_match_f1(rec.answer_text, sample.gold.values[0]);
      rec.correct = rec.emf == 1.0;
    }
    if (task.binds(MetricBinding::LLM)) {
      if (!judge)
        throw ConfigError("task '" + task.task_id +
                          "' binds the LLM metric but no judge backend is configured");
      rec.semantic = judge->judge_semantic(rec.answer_text, sample.gold.values[0]);
      rec.correct = rec.semantic >= 0.5;
    }
  } else {
    const Normalized n = normalize_answer(rec.answer_text, task.label_space, hook);
    rec.unmatched = !n.matched;
    rec.pred_label = n.matched ? n.label : "";
    rec.correct = n.matched && n.label == sample.gold.values[0];
  }
  return rec;
}

inline void fill_task_metrics(const TaskManifest& task, const std::vector<Sample>& samples,
                              TaskReport& report) {
  const std::size_t n = samples.size();
  for (const MetricBinding b : task.metrics) {
    double value = 0.0;
    switch (b) {
      case MetricBinding::ACC: {
        std::size_t hit = 0;
        for (const auto& r : report.samples)
          if (r.correct) ++hit;
        value = n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
        break;
      }
      case MetricBinding::WAF: {
        std::vector<std::string> classes = task.label_space;
        classes.push_back(kUnmatchedClass);
        ConfusionTable table(classes);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& r = report.samples[i];
          const std::string pred =
              (r.have_prediction && !r.unmatched) ? r.pred_label : kUnmatchedClass;
          table.add(samples[i].gold.values[0], pred);
        }
        value = weighted_f1(table);
        break;
      }
      case MetricBinding::MF: {
        std::vector<std::set<std::string>> preds, golds;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& r = report.samples[i];
          std::set<std::string> p(r.pred_set.begin(), r.pred_set.end());
          /* unmatched parts stay in the pool as precision misses */
          for (const auto& u : r.unmatched_parts) p.insert(std::string("\x1f") + u);
          preds.push_back(std::move(p));
          if (task.open_ended)
            golds.push_back(gold_item_set(samples[i].gold));
          else
            golds.push_back(samples[i].gold.as_set());
        }
        value = micro_f1(preds, golds);
        break;
      }
      case MetricBinding::EMF: {
        double acc = 0.0;
        for (const auto& r : report.samples) acc += r.emf;
        value = n == 0 ? 0.0 : acc / static_cast<double>(n);
        break;
      }
      case MetricBinding::LLM: {
        double acc = 0.0;
        for (const auto& r : report.samples) acc += r.semantic;
        value = n == 0 ? 0.0 : acc / static_cast<double>(n);
        break;
      }
    }
    report.metric_values[to_string(b)] = value;
  }
  report.primary_metric = to_string(task.primary_metric());
  report.primary_value = report.metric_values.at(report.primary_metric);
}

}  // namespace detail

inline void aggregate_levels(RunReport& report, bool primary_only = true) {
  std::map<int, std::pair<double, std::size_t>> acc;
  double overall = 0.0;
  std::size_t n_tasks = 0;
  for (const auto& tr : report.tasks) {
    double task_value = tr.primary_value;
    if (!primary_only) {
      double s = 0.0;
      for (const auto& [name, v] : tr.metric_values) s += v;
      task_value = tr.metric_values.empty() ? 0.0 : s / static_cast<double>(tr.metric_values.size());
    }
    auto& [sum, count] = acc[tr.level];
    sum += task_value;
    ++count;
    overall += task_value;
    ++n_tasks;
  }
  report.level_averages.clear();
  for (const auto& [level, sc] : acc)
    report.level_averages[level] = sc.first / static_cast<double>(sc.second);
  report.overall_mean = n_tasks == 0 ? 0.0 : overall / static_cast<double>(n_tasks);
}

inline RunReport score_run(const RunManifest& manifest,
                           const std::unordered_map<std::string, std::string>& predictions,
                           const ScoreOptions& options = {}) {
  /* judge-bound tasks fail fast, before any scoring work */
  for (const auto& task : manifest.tasks)
    if (task.binds(MetricBinding::LLM) && !options.judge)
      throw ConfigError("task '" + task.task_id +
                        "' binds the LLM metric but no judge backend is configured");

  RunReport report;
  report.tool_version = kVersion;
  report.config_digest = manifest.digest;
  if (options.include_timestamp) {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    report.timestamp = buf;
  }

  std::set<std::string> run_ids;
  for (const auto& task : manifest.tasks) {
    const std::vector<Sample> samples = ingest_samples(task, task.data_path);
    for (const auto& s : samples)
      if (!run_ids.insert(s.sample_id).second)
        throw ConfigError("sample id '" + s.sample_id + "' appears in more than one task");

    TaskReport tr;
    tr.task_id = task.task_id;
    tr.level = task.level;
    tr.n_samples = samples.size();

    JudgeHandle* judge = options.judge.get();
    tr.samples = parallel_map<SampleRecord>(
        samples.size(), options.jobs, [&](std::size_t i) {
          auto it = predictions.find(samples[i].sample_id);
          const std::string* raw = it == predictions.end() ? nullptr : &it->second;
          return detail::score_one_sample(task, samples[i], raw, judge);
        });

    for (const auto& r : tr.samples) {
      if (!r.have_prediction) ++tr.n_missing;
      if (r.have_prediction && !r.well_formed) ++tr.n_malformed;
    }
    detail::fill_task_metrics(task, samples, tr);
    report.tasks.push_back(std::move(tr));
  }
  aggregate_levels(report, options.primary_only_levels);
  return report;
}

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json j;
  j["tool_version"] = r.tool_version;
  j["config_digest"] = r.config_digest;
  if (!r.timestamp.empty()) j["timestamp"] = r.timestamp;
  j["overall_mean"] = r.overall_mean;
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [level, v] : r.level_averages) levels["level_" + std::to_string(level)] = v;
  j["level_averages"] = levels;
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : r.tasks) {
    nlohmann::json tj;
    tj["task_id"] = t.task_id;
    tj["level"] = t.level;
    tj["metrics"] = t.metric_values;
    tj["primary_metric"] = t.primary_metric;
    tj["primary_value"] = t.primary_value;
    tj["n_samples"] = t.n_samples;
    tj["n_missing"] = t.n_missing;
    tj["n_malformed"] = t.n_malformed;
    tj["samples"] = nlohmann::json::array();
    for (const auto& s : t.samples) {
      nlohmann::json sj;
      sj["sample_id"] = s.sample_id;
      sj["have_prediction"] = s.have_prediction;
      sj["well_formed"] = s.well_formed;
      sj["structure"] = s.structure;
      sj["correct"] = s.correct;
      if (!s.pred_label.empty()) sj["pred_label"] = s.pred_label;
      if (!s.pred_set.empty()) sj["pred_set"] = s.pred_set;
      if (s.unmatched) sj["unmatched"] = true;
      if (s.emf != 0.0) sj["emf"] = s.emf;
      if (s.semantic != 0.0) sj["semantic"] = s.semantic;
      tj["samples"].push_back(sj);
    }
    j["tasks"].push_back(tj);
  }
  return j;
}

/* Reward-weight sensitivity sweep. */
struct SweepPoint {
  std::string label;  // which axis the point varies
  RewardWeights weights;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

inline std::string format_weight(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/* Default grid: the process weight swept over {0, 0.1, 0.3, 0.5} with the
   structure weight at its default, then the structure weight swept over
   {0.1, 0.4, 0.7, 1.0} with the process weight at its default. Content and
   consistency stay at 1. */
inline std::vector<std::pair<std::string, RewardWeights>> default_sweep_grid() {
  std::vector<std::pair<std::string, RewardWeights>> grid;
  for (double p : {0.0, 0.1, 0.3, 0.5}) {
    RewardWeights w;
    w.process = p;
    grid.emplace_back("process=" + format_weight(p), w);
  }
  for (double s : {0.1, 0.4, 0.7, 1.0}) {
    RewardWeights w;
    w.structure = s;
    grid.emplace_back("structure=" + format_weight(s), w);
  }
  return grid;
}

inline std::vector<SweepPoint> sweep_weights(
    const std::vector<RewardBreakdown>& fixture,
    const std::vector<std::pair<std::string, RewardWeights>>& grid) {
  if (fixture.empty()) throw ValueError("weight sweep over an empty fixture");
  std::vector<SweepPoint> out;
  for (const auto& [label, w] : grid) {
    w.validate();
    SweepPoint p;
    p.label = label;
    p.weights = w;
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& b : fixture) {
      const double c = b.weighted_sum(w);
      sum += c;
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    p.mean = sum / static_cast<double>(fixture.size());
    p.min = lo;
    p.max = hi;
    out.push_back(p);
  }
  return out;
}

}  // namespace chainscore
