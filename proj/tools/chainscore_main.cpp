#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chainscore/curation.hpp"
#include "chainscore/grpo.hpp"
#include "chainscore/harness.hpp"
#include "chainscore/judge.hpp"
#include "chainscore/reward.hpp"
#include "chainscore/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitMissingPredictions = 2;
constexpr int kExitJudgeUnbound = 3;

struct BackendFlags {
  bool mock = false;
  std::string judge_url;
  std::string model_url;
  std::string mock_rules_path;
  std::string model = "gpt-4.1";
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
  cmd->add_flag("--mock", f.mock, "use the deterministic mock backend");
  cmd->add_option("--judge-url", f.judge_url, "judge endpoint base URL");
  cmd->add_option("--model-url", f.model_url, "generation model endpoint base URL");
  cmd->add_option("--mock-rules", f.mock_rules_path, "JSON rule table for the mock backend");
  cmd->add_option("--model", f.model, "model name sent to remote endpoints");
}

/* judge/scoring backend: --judge-url wins, --mock otherwise, null when neither */
std::shared_ptr<chainscore::JudgeHandle> make_judge(const BackendFlags& f) {
  if (!f.judge_url.empty()) return chainscore::make_remote_judge(f.judge_url, f.model);
  if (f.mock) {
    chainscore::MockRules rules;
    if (!f.mock_rules_path.empty()) rules = chainscore::MockRules::from_file(f.mock_rules_path);
    return chainscore::make_mock_judge(std::move(rules));
  }
  return nullptr;
}

/* generation backend for curation: --model-url wins, --mock otherwise */
std::shared_ptr<chainscore::JudgeHandle> make_model(const BackendFlags& f) {
  if (!f.model_url.empty()) return chainscore::make_remote_judge(f.model_url, f.model);
  if (f.mock) {
    chainscore::MockRules rules;
    if (!f.mock_rules_path.empty()) rules = chainscore::MockRules::from_file(f.mock_rules_path);
    return chainscore::make_mock_judge(std::move(rules));
  }
  return nullptr;
}

chainscore::RewardWeights parse_mu(const std::string& mu) {
  chainscore::RewardWeights w;
  if (mu.empty()) return w;
  std::vector<double> parts;
  std::stringstream ss(mu);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(std::stod(item));
  if (parts.size() != 4)
    throw chainscore::ConfigError("--mu needs four comma-separated weights");
  w.structure = parts[0];
  w.content = parts[1];
  w.process = parts[2];
  w.consistency = parts[3];
  w.validate();
  return w;
}

void write_text(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw chainscore::IoError("cannot write '" + out_path + "'");
  out << content;
}

int cmd_score(const std::string& manifest_path, const std::string& predictions_path,
              const std::string& out_path, const BackendFlags& backend, int jobs,
              bool with_timestamp, bool all_metrics_levels) {
  if (!std::filesystem::exists(predictions_path)) {
    std::cerr << "predictions file not found: " << predictions_path << "\n";
    return kExitMissingPredictions;
  }
  const chainscore::RunManifest manifest = chainscore::load_manifest(manifest_path);
  chainscore::ScoreOptions options;
  options.judge = make_judge(backend);
  options.jobs = jobs;
  options.include_timestamp = with_timestamp;
  options.primary_only_levels = !all_metrics_levels;
  for (const auto& task : manifest.tasks) {
    if (task.binds(chainscore::MetricBinding::LLM) && !options.judge) {
      std::cerr << "task '" << task.task_id
                << "' binds the LLM metric; pass --judge-url or --mock\n";
      return kExitJudgeUnbound;
    }
  }
  const auto predictions = chainscore::load_predictions(predictions_path);
  const chainscore::RunReport report = chainscore::score_run(manifest, predictions, options);
  write_text(out_path, chainscore::report_to_json(report).dump(2) + "\n");
  return kExitOk;
}

int cmd_reward(const std::string& manifest_path, const std::string& predictions_path,
               const std::string& out_path, const BackendFlags& backend,
               const std::string& mu, double eta, int jobs) {
  if (!std::filesystem::exists(predictions_path)) {
    std::cerr << "predictions file not found: " << predictions_path << "\n";
    return kExitMissingPredictions;
  }
  auto judge = make_judge(backend);
  if (!judge) {
    std::cerr << "reward scoring includes the consistency term; pass --judge-url or --mock\n";
    return kExitJudgeUnbound;
  }
  const chainscore::RewardWeights weights = parse_mu(mu);
  const chainscore::RunManifest manifest = chainscore::load_manifest(manifest_path);
  const auto predictions = chainscore::load_predictions(predictions_path);

  std::ostringstream lines;
  for (const auto& task : manifest.tasks) {
    chainscore::SampleScoreConfig cfg;
    cfg.schema = task.schema;
    cfg.lexicon = task.lexicon;
    if (eta > 0.0) cfg.lexicon.eta = eta;
    cfg.weights = weights;
    if (task.open_ended) {
      cfg.content.mode = task.binds(chainscore::MetricBinding::LLM)
                             ? chainscore::ContentSpec::Mode::Semantic
                             : chainscore::ContentSpec::Mode::WordOverlap;
    } else if (task.multi_label) {
      cfg.content.mode = chainscore::ContentSpec::Mode::LabelSet;
      cfg.content.label_space = task.label_space;
    } else {
      cfg.content.mode = chainscore::ContentSpec::Mode::Label;
      cfg.content.label_space = task.label_space;
    }
    /* set-valued generation golds score as word overlap in the reward path */
    if (task.open_ended && task.binds(chainscore::MetricBinding::MF))
      cfg.content.mode = chainscore::ContentSpec::Mode::WordOverlap;

    const auto samples = chainscore::ingest_samples(task, task.data_path);
    std::vector<const chainscore::Sample*> scored;
    for (const auto& s : samples)
      if (predictions.count(s.sample_id)) scored.push_back(&s);

    const auto results = chainscore::parallel_map<nlohmann::json>(
        scored.size(), jobs, [&](std::size_t i) {
          const chainscore::Sample& s = *scored[i];
          chainscore::SampleScoreConfig sample_cfg = cfg;
          sample_cfg.input_context = s.context();
          chainscore::LabelValue gold = s.gold;
          if (task.open_ended && task.binds(chainscore::MetricBinding::MF)) {
            std::string joined;
            for (const auto& v : s.gold.values) {
              if (!joined.empty()) joined += ", ";
              joined += v;
            }
            gold = chainscore::LabelValue::text(joined);
          }
          const chainscore::RewardBreakdown b = chainscore::score_sample(
              predictions.at(s.sample_id), gold, sample_cfg, judge.get());
          nlohmann::json j;
          j["task_id"] = task.task_id;
          j["sample_id"] = s.sample_id;
          j["structure"] = b.structure;
          j["content"] = b.content;
          j["process"] = b.process;
          j["consistency"] = b.consistency;
          j["total"] = b.total;
          j["lexicon_hits"] = b.lexicon_hit_count;
          j["valid_elements"] = b.validity.count_valid();
          j["total_elements"] = b.validity.total();
          if (b.consistency_verdict) {
            j["internal_ok"] = b.consistency_verdict->internal_ok;
            j["external_ok"] = b.consistency_verdict->external_ok;
          }
          return j;
        });
    for (const auto& j : results) lines << j.dump() << "\n";
  }
  write_text(out_path, lines.str());
  return kExitOk;
}

int cmd_advantage(const std::string& rollouts_path, const std::string& out_path, double beta,
                  double eps, const std::string& mode_name) {
  chainscore::AdvantageMode mode = chainscore::AdvantageMode::Value;
  if (mode_name == "rank")
    mode = chainscore::AdvantageMode::Rank;
  else if (mode_name != "value")
    throw chainscore::ConfigError("--mode must be 'value' or 'rank'");

  struct Group {
    std::vector<double> rewards;
    chainscore::CandidateGroup rollouts;
    bool with_logprobs = true;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  chainscore::for_each_jsonl(rollouts_path, [&](std::size_t line_no, const nlohmann::json& j) {
    const std::string where = rollouts_path + ":" + std::to_string(line_no);
    if (!j.contains("sample_id") || !j.contains("reward"))
      throw chainscore::IoError(where + ": rollout line needs sample_id and reward");
    const std::string id = j.at("sample_id").get<std::string>();
    if (!groups.count(id)) {
      order.push_back(id);
      groups[id].rollouts.sample_id = id;
    }
    Group& g = groups[id];
    g.rewards.push_back(j.at("reward").get<double>());
    chainscore::Rollout r;
    r.candidate_id = j.value("candidate_id", id + "#" + std::to_string(g.rewards.size() - 1));
    r.reward = g.rewards.back();
    if (j.contains("logp_theta") && j.contains("logp_old") && j.contains("logp_ref")) {
      r.logp_theta = j.at("logp_theta").get<std::vector<double>>();
      r.logp_old = j.at("logp_old").get<std::vector<double>>();
      r.logp_ref = j.at("logp_ref").get<std::vector<double>>();
    } else {
      g.with_logprobs = false;
    }
    g.rollouts.rollouts.push_back(std::move(r));
  });

  std::ostringstream lines;
  std::size_t emitted = 0;
  for (const auto& id : order) {
    const Group& g = groups[id];
    if (g.rewards.size() < 2) {
      std::cerr << "group '" << id << "' has fewer than 2 candidates, skipped\n";
      continue;
    }
    nlohmann::json j;
    j["sample_id"] = id;
    j["advantages"] = chainscore::compute_advantages(g.rewards, eps, mode);
    if (g.with_logprobs) {
      const auto advantages = chainscore::compute_advantages(g.rewards, eps, mode);
      j["surrogate"] = chainscore::surrogate_objective(g.rollouts, advantages, beta);
      double kl = 0.0;
      for (const auto& r : g.rollouts.rollouts)
        kl += chainscore::estimate_kl(r.logp_theta, r.logp_ref);
      j["mean_kl"] = kl / static_cast<double>(g.rollouts.rollouts.size());
    }
    lines << j.dump() << "\n";
    ++emitted;
  }
  if (emitted == 0) {
    std::cerr << "no group had at least 2 candidates\n";
    return kExitFailure;
  }
  write_text(out_path, lines.str());
  return kExitOk;
}

int cmd_curate(const std::string& manifest_path, const std::string& out_path,
               const BackendFlags& backend, int n_candidates, double threshold,
               std::uint64_t seed, int jobs) {
  auto model = make_model(backend);
  if (!model) {
    std::cerr << "curation needs a generation backend; pass --model-url or --mock\n";
    return kExitJudgeUnbound;
  }
  const chainscore::RunManifest manifest = chainscore::load_manifest(manifest_path);
  chainscore::CurationOptions opts;
  opts.n_candidates = n_candidates;
  opts.semantic_threshold = threshold;
  opts.seed = seed;
  opts.jobs = jobs;

  std::ostringstream lines;
  for (const auto& task : manifest.tasks) {
    const auto samples = chainscore::ingest_samples(task, task.data_path);
    const auto records = chainscore::run_pipeline(task, samples, *model, opts);
    chainscore::export_for_verification(records, lines);
  }
  write_text(out_path, lines.str());
  return kExitOk;
}

int cmd_sweep(const std::string& rollouts_path, const std::string& out_path,
              const std::string& grid_path) {
  std::vector<chainscore::RewardBreakdown> fixture;
  chainscore::for_each_jsonl(rollouts_path, [&](std::size_t line_no, const nlohmann::json& j) {
    const std::string where = rollouts_path + ":" + std::to_string(line_no);
    chainscore::RewardBreakdown b;
    try {
      b.structure = j.at("structure").get<double>();
      b.content = j.at("content").get<double>();
      b.process = j.at("process").get<double>();
      b.consistency = j.at("consistency").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw chainscore::IoError(where + ": " + e.what());
    }
    fixture.push_back(b);
  });

  std::vector<std::pair<std::string, chainscore::RewardWeights>> grid;
  if (grid_path.empty()) {
    grid = chainscore::default_sweep_grid();
  } else {
    std::ifstream in(grid_path);
    if (!in) throw chainscore::IoError("cannot open grid file '" + grid_path + "'");
    nlohmann::json gj = nlohmann::json::parse(in);
    for (const auto& e : gj) {
      chainscore::RewardWeights w;
      w.structure = e.at("structure").get<double>();
      w.content = e.at("content").get<double>();
      w.process = e.at("process").get<double>();
      w.consistency = e.at("consistency").get<double>();
      grid.emplace_back(e.value("label", "custom"), w);
    }
  }

  const auto points = chainscore::sweep_weights(fixture, grid);
  std::ostringstream lines;
  for (const auto& p : points) {
    nlohmann::json j;
    j["label"] = p.label;
    j["weights"] = {{"structure", p.weights.structure},
                    {"content", p.weights.content},
                    {"process", p.weights.process},
                    {"consistency", p.weights.consistency}};
    j["mean"] = p.mean;
    j["min"] = p.min;
    j["max"] = p.max;
    lines << j.dump() << "\n";
  }
  write_text(out_path, lines.str());
  return kExitOk;
}

int cmd_report(const std::string& report_path, const std::string& out_path) {
  std::ifstream in(report_path);
  if (!in) throw chainscore::IoError("cannot open report '" + report_path + "'");
  nlohmann::json j = nlohmann::json::parse(in);

  std::ostringstream os;
  os << "run " << j.value("config_digest", std::string("?")) << " (tool "
     << j.value("tool_version", std::string("?")) << ")\n\n";
  os << "task        level  metric  value\n";
  os << "----------  -----  ------  --------\n";
  char buf[64];
  for (const auto& t : j.value("tasks", nlohmann::json::array())) {
    const std::string id = t.value("task_id", std::string("?"));
    const int level = t.value("level", 0);
    /* items() must not be called on a temporary: the proxy outlives it */
    const nlohmann::json metrics = t.value("metrics", nlohmann::json::object());
    for (const auto& [name, v] : metrics.items()) {
      std::snprintf(buf, sizeof(buf), "%-10s  %5d  %-6s  %.6f\n", id.c_str(), level, name.c_str(),
                    v.get<double>());
      os << buf;
    }
  }
  os << "\nlevel averages (headline metric per task)\n";
  const nlohmann::json levels = j.value("level_averages", nlohmann::json::object());
  for (const auto& [name, v] : levels.items()) {
    std::snprintf(buf, sizeof(buf), "  %-8s  %.6f\n", name.c_str(), v.get<double>());
    os << buf;
  }
  if (j.contains("overall_mean")) {
    std::snprintf(buf, sizeof(buf), "  %-8s  %.6f\n", "overall", j["overall_mean"].get<double>());
    os << buf;
  }
  write_text(out_path, os.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reward, policy-math, and benchmark toolkit for structured reasoning chains"};
  app.set_version_flag("--version", chainscore::kVersion);
  app.require_subcommand(1);

  std::string manifest_path, predictions_path, out_path, rollouts_path, report_path;
  std::string mu, mode_name = "value", grid_path;
  double eta = 0.0, beta = chainscore::kDefaultKlBeta, eps = chainscore::kDefaultAdvantageEps;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  int jobs = 1, n_candidates = 3;
  bool with_timestamp = false, all_metrics_levels = false;
  BackendFlags backend;

  auto* score = app.add_subcommand("score", "score a prediction file against a task manifest");
  score->add_option("--manifest", manifest_path, "task manifest JSON")->required();
  score->add_option("--predictions", predictions_path, "predictions JSONL")->required();
  score->add_option("--out", out_path, "report output path (default stdout)");
  score->add_option("--jobs", jobs, "worker threads");
  score->add_flag("--timestamp", with_timestamp, "stamp the report with wall-clock time");
  score->add_flag("--all-metrics-levels", all_metrics_levels,
                  "level averages use the mean of all bound metrics instead of the headline one");
  add_backend_flags(score, backend);

  auto* reward = app.add_subcommand("reward", "per-sample reward breakdowns for predictions");
  reward->add_option("--manifest", manifest_path, "task manifest JSON")->required();
  reward->add_option("--predictions", predictions_path, "predictions JSONL")->required();
  reward->add_option("--out", out_path, "output JSONL path (default stdout)");
  reward->add_option("--mu", mu, "four reward weights: structure,content,process,consistency");
  reward->add_option("--eta", eta, "lexicon saturation override");
  reward->add_option("--jobs", jobs, "worker threads");
  add_backend_flags(reward, backend);

  auto* advantage = app.add_subcommand("advantage", "group-relative advantages from rollouts");
  advantage->add_option("--rollouts", rollouts_path, "rollout JSONL grouped by sample_id")
      ->required();
  advantage->add_option("--out", out_path, "output JSONL path (default stdout)");
  advantage->add_option("--beta", beta, "KL penalty weight");
  advantage->add_option("--eps", eps, "advantage normalization epsilon");
  advantage->add_option("--mode", mode_name, "value | rank");

  auto* curate = app.add_subcommand("curate", "candidate generation, routing, and reflection");
  curate->add_option("--manifest", manifest_path, "task manifest JSON")->required();
  curate->add_option("--out", out_path, "exported records JSONL (default stdout)");
  curate->add_option("--candidates", n_candidates, "candidates per sample");
  curate->add_option("--threshold", threshold, "judge score treated as a match for text golds");
  curate->add_option("--seed", seed, "generation seed");
  curate->add_option("--jobs", jobs, "worker threads");
  add_backend_flags(curate, backend);

  auto* sweep = app.add_subcommand("sweep", "reward-weight sensitivity sweep over breakdowns");
  sweep->add_option("--rollouts", rollouts_path, "component breakdown JSONL")->required();
  sweep->add_option("--grid", grid_path, "grid JSON (default: built-in 4+4 grid)");
  sweep->add_option("--out", out_path, "output JSONL path (default stdout)");

  auto* report = app.add_subcommand("report", "render a score report as text");
  report->add_option("--in", report_path, "report JSON from 'score'")->required();
  report->add_option("--out", out_path, "output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (score->parsed())
      return cmd_score(manifest_path, predictions_path, out_path, backend, jobs, with_timestamp,
                       all_metrics_levels);
    if (reward->parsed())
      return cmd_reward(manifest_path, predictions_path, out_path, backend, mu, eta, jobs);
    if (advantage->parsed()) return cmd_advantage(rollouts_path, out_path, beta, eps, mode_name);
    if (curate->parsed())
      return cmd_curate(manifest_path, out_path, backend, n_candidates, threshold, seed, jobs);
    if (sweep->parsed()) return cmd_sweep(rollouts_path, out_path, grid_path);
    if (report->parsed()) return cmd_report(report_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
