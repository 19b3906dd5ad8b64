#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "chainscore/version.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::filesystem::path work_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "chainscore_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string write_file(const std::string& name, const std::string& content) {
  const auto p = work_dir() / name;
  std::ofstream out(p);
  out << content;
  return p.string();
}

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const auto out_path = work_dir() / ("stdout_" + std::to_string(counter) + ".txt");
  const auto err_path = work_dir() / ("stderr_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = std::string("\"") + CHAINSCORE_CLI_PATH + "\" " + args + " > \"" +
                          out_path.string() + "\" 2> \"" + err_path.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = status == -1 ? -1 : WEXITSTATUS(status);
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

std::string fixture(const std::string& name) {
  return std::string(CHAINSCORE_FIXTURE_DIR) + "/" + name;
}

std::vector<nlohmann::json> parse_jsonl(const std::string& text) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  return rows;
}

std::string bench_score_args() {
  return "score --manifest \"" + fixture("bench/manifest.json") + "\" --predictions \"" +
         fixture("bench/predictions.jsonl") + "\"";
}

}  // namespace

TEST_CASE("the version flag reports the tool version") {
  const auto r = run_cli("--version");
  CHECK(r.code == 0);
  CHECK_THAT(r.out, ContainsSubstring(chainscore::kVersion));
}

TEST_CASE("score produces a deterministic hand-checked report") {
  const auto r1 = run_cli(bench_score_args());
  REQUIRE(r1.code == 0);
  const auto r2 = run_cli(bench_score_args());
  CHECK(r1.out == r2.out);  // byte-identical across runs

  const nlohmann::json report = nlohmann::json::parse(r1.out);
  CHECK_FALSE(report.contains("timestamp"));
  CHECK(report.at("tool_version") == chainscore::kVersion);

  const double expected_emf = (1.0 + 2.0 / 3.0) / 4.0;
  CHECK_THAT(report.at("overall_mean").get<double>(),
             WithinAbs((0.5 + 8.0 / 13.0 + expected_emf) / 3.0, 1e-9));
  CHECK_THAT(report.at("level_averages").at("level_1").get<double>(), WithinAbs(0.5, 1e-12));
  CHECK_THAT(report.at("level_averages").at("level_2").get<double>(),
             WithinAbs(8.0 / 13.0, 1e-9));
  CHECK_THAT(report.at("level_averages").at("level_3").get<double>(),
             WithinAbs(expected_emf, 1e-9));

  const auto& tasks = report.at("tasks");
  REQUIRE(tasks.size() == 3);
  CHECK_THAT(tasks[0].at("metrics").at("ACC").get<double>(), WithinAbs(0.5, 1e-12));
  CHECK_THAT(tasks[0].at("metrics").at("WAF").get<double>(), WithinAbs(7.0 / 12.0, 1e-9));
  CHECK(tasks[0].at("n_missing") == 1);
  CHECK(tasks[1].at("n_malformed") == 1);
  CHECK_THAT(tasks[1].at("metrics").at("MF").get<double>(), WithinAbs(8.0 / 13.0, 1e-9));
  CHECK(tasks[2].at("n_missing") == 1);
  CHECK_THAT(tasks[2].at("metrics").at("EMF").get<double>(), WithinAbs(expected_emf, 1e-9));
}

TEST_CASE("score options map onto report fields") {
  SECTION("timestamps are opt-in") {
    const auto r = run_cli(bench_score_args() + " --timestamp");
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).contains("timestamp"));
  }
  SECTION("all-metrics level averages") {
    const auto r = run_cli(bench_score_args() + " --all-metrics-levels");
    REQUIRE(r.code == 0);
    const nlohmann::json report = nlohmann::json::parse(r.out);
    CHECK_THAT(report.at("level_averages").at("level_1").get<double>(),
               WithinAbs((0.5 + 7.0 / 12.0) / 2.0, 1e-9));
  }
  SECTION("reports can be written to a file") {
    const auto out = (work_dir() / "report_out.json").string();
    const auto r = run_cli(bench_score_args() + " --out \"" + out + "\"");
    REQUIRE(r.code == 0);
    CHECK(r.out.empty());
    CHECK(nlohmann::json::parse(slurp(out)).at("tasks").size() == 3);
  }
}

TEST_CASE("score distinguishes missing inputs from bad inputs") {
  SECTION("a missing predictions file is its own exit code") {
    const auto r = run_cli("score --manifest \"" + fixture("bench/manifest.json") +
                           "\" --predictions \"" + (work_dir() / "nope.jsonl").string() + "\"");
    CHECK(r.code == 2);
    CHECK_THAT(r.err, ContainsSubstring("not found"));
  }
  SECTION("a broken manifest is an ordinary failure") {
    const auto preds = write_file("empty_preds.jsonl", "");
    const auto r = run_cli("score --manifest \"" + (work_dir() / "nomanifest.json").string() +
                           "\" --predictions \"" + preds + "\"");
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("error:"));
  }
  SECTION("a judged metric without a backend is refused up front") {
    const auto data = write_file("cli_ei.jsonl",
        "{\"sample_id\": \"e1\", \"text\": \"t\", \"gold\": \"an explanation\"}\n");
    nlohmann::json t{{"task_id", "EI"},
                     {"level", 3},
                     {"metrics", {"LLM"}},
                     {"open_ended", true},
                     {"data", std::filesystem::path(data).filename().string()}};
    const auto manifest = write_file("cli_ei_manifest.json",
                                     nlohmann::json{{"tasks", {t}}}.dump());
    const auto preds = write_file("cli_ei_preds.jsonl", "");
    const auto r =
        run_cli("score --manifest \"" + manifest + "\" --predictions \"" + preds + "\"");
    CHECK(r.code == 3);
    CHECK_THAT(r.err, ContainsSubstring("--judge-url or --mock"));
  }
  SECTION("a subcommand without its required options fails to parse") {
    const auto r = run_cli("score");
    CHECK(r.code != 0);
  }
}

TEST_CASE("reward emits one breakdown line per scored sample") {
  const std::string base = "reward --manifest \"" + fixture("bench/manifest.json") +
                           "\" --predictions \"" + fixture("bench/predictions.jsonl") + "\"";

  SECTION("the consistency term needs a backend") {
    const auto r = run_cli(base);
    CHECK(r.code == 3);
    CHECK_THAT(r.err, ContainsSubstring("--judge-url or --mock"));
  }

  SECTION("breakdown lines recompose under the default weights") {
    const auto r = run_cli(base + " --mock");
    REQUIRE(r.code == 0);
    const auto rows = parse_jsonl(r.out);
    REQUIRE(rows.size() == 10);  // two samples have no prediction at all

    CHECK(rows[0].at("task_id") == "MSA");
    CHECK(rows[0].at("sample_id") == "s1");
    CHECK(rows[0].at("structure") == 1.0);
    CHECK(rows[0].at("content") == 1.0);
    CHECK(rows[0].at("consistency") == 1.0);
    CHECK(rows[0].at("valid_elements") == 8);
    CHECK(rows[0].at("total_elements") == 8);

    for (const auto& row : rows) {
      const double s = row.at("structure").get<double>();
      const double c = row.at("content").get<double>();
      const double p = row.at("process").get<double>();
      const double k = row.at("consistency").get<double>();
      CHECK((k == 1.0 || k == 0.1));
      CHECK_THAT(row.at("total").get<double>(),
                 WithinAbs(0.4 * s + 1.0 * c + 0.1 * p + 1.0 * k, 1e-12));
      CHECK(row.at("internal_ok").is_boolean());
    }
  }

  SECTION("custom weights change the recomposition") {
    const auto r = run_cli(base + " --mock --mu 0.5,1.0,0.2,1.0");
    REQUIRE(r.code == 0);
    for (const auto& row : parse_jsonl(r.out)) {
      const double s = row.at("structure").get<double>();
      const double c = row.at("content").get<double>();
      const double p = row.at("process").get<double>();
      const double k = row.at("consistency").get<double>();
      CHECK_THAT(row.at("total").get<double>(),
                 WithinAbs(0.5 * s + 1.0 * c + 0.2 * p + 1.0 * k, 1e-12));
    }
  }

  SECTION("mock rule tables reach the consistency verdict") {
    const auto r = run_cli(base + " --mock --mock-rules \"" +
                           fixture("bench/curation_rules.json") + "\"");
    REQUIRE(r.code == 0);
    const auto rows = parse_jsonl(r.out);
    int flipped = 0;
    for (const auto& row : rows) {
      if (row.at("sample_id") == "d3") {
        CHECK(row.at("consistency") == 0.1);  // rule keys on this chain's step text
        CHECK(row.at("internal_ok") == false);
        ++flipped;
      } else {
        CHECK(row.at("consistency") == 1.0);
      }
    }
    CHECK(flipped == 1);
  }
}

TEST_CASE("advantage groups rollouts and normalizes rewards") {
  nlohmann::json g1a{{"sample_id", "g1"}, {"reward", 1.0}};
  nlohmann::json g1b{{"sample_id", "g1"}, {"reward", 0.0}};
  /* log-probabilities chosen so the first ratio is exactly 6 and the
     reference matches the current policy */
  const double shifted = -0.5 - std::log(6.0) / 2.0;
  nlohmann::json g2a{{"sample_id", "g2"}, {"reward", 2.0},
                     {"logp_theta", {-0.5, -0.5}},
                     {"logp_old", {shifted, shifted}},
                     {"logp_ref", {-0.5, -0.5}}};
  nlohmann::json g2b{{"sample_id", "g2"}, {"reward", 0.0},
                     {"logp_theta", {-0.2, -0.3}},
                     {"logp_old", {-0.2, -0.3}},
                     {"logp_ref", {-0.2, -0.3}}};
  nlohmann::json lone{{"sample_id", "solo"}, {"reward", 0.5}};
  const std::string rollouts = write_file("rollouts.jsonl",
      g1a.dump() + "\n" + g1b.dump() + "\n" + g2a.dump() + "\n" + g2b.dump() + "\n" +
      lone.dump() + "\n");

  SECTION("value mode with surrogate objective") {
    const auto r = run_cli("advantage --rollouts \"" + rollouts + "\" --eps 0 --beta 0");
    REQUIRE(r.code == 0);
    CHECK_THAT(r.err, ContainsSubstring("fewer than 2"));  // the singleton group
    const auto rows = parse_jsonl(r.out);
    REQUIRE(rows.size() == 2);

    CHECK(rows[0].at("sample_id") == "g1");
    CHECK_THAT(rows[0].at("advantages")[0].get<double>(), WithinAbs(1.0, 1e-12));
    CHECK_THAT(rows[0].at("advantages")[1].get<double>(), WithinAbs(-1.0, 1e-12));
    CHECK_FALSE(rows[0].contains("surrogate"));  // no log-probabilities given

    CHECK(rows[1].at("sample_id") == "g2");
    CHECK_THAT(rows[1].at("surrogate").get<double>(), WithinAbs(2.5, 1e-9));
    CHECK_THAT(rows[1].at("mean_kl").get<double>(), WithinAbs(0.0, 1e-15));
  }

  SECTION("rank mode ignores reward magnitudes") {
    const std::string ranked = write_file("rollouts_rank.jsonl",
        "{\"sample_id\": \"g4\", \"reward\": 10}\n"
        "{\"sample_id\": \"g4\", \"reward\": 20}\n"
        "{\"sample_id\": \"g4\", \"reward\": 1000}\n");
    const auto r = run_cli("advantage --rollouts \"" + ranked + "\" --mode rank --eps 0");
    REQUIRE(r.code == 0);
    const auto rows = parse_jsonl(r.out);
    REQUIRE(rows.size() == 1);
    const double z = 1.0 / std::sqrt(2.0 / 3.0);
    CHECK_THAT(rows[0].at("advantages")[0].get<double>(), WithinAbs(-z, 1e-9));
    CHECK_THAT(rows[0].at("advantages")[1].get<double>(), WithinAbs(0.0, 1e-12));
    CHECK_THAT(rows[0].at("advantages")[2].get<double>(), WithinAbs(z, 1e-9));
  }

  SECTION("a file with no usable group fails") {
    const std::string singles = write_file("rollouts_single.jsonl",
        "{\"sample_id\": \"a\", \"reward\": 1}\n"
        "{\"sample_id\": \"b\", \"reward\": 2}\n");
    const auto r = run_cli("advantage --rollouts \"" + singles + "\"");
    CHECK(r.code == 1);
  }

  SECTION("an unknown mode is rejected") {
    const auto r = run_cli("advantage --rollouts \"" + rollouts + "\" --mode sorted");
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("error:"));
  }
}

TEST_CASE("sweep recomputes composite rewards from exported breakdowns") {
  const auto reward_run = run_cli("reward --manifest \"" + fixture("bench/manifest.json") +
                                  "\" --predictions \"" + fixture("bench/predictions.jsonl") +
                                  "\" --mock");
  REQUIRE(reward_run.code == 0);
  const auto breakdowns = parse_jsonl(reward_run.out);
  const std::string rollouts = write_file("sweep_input.jsonl", reward_run.out);

  SECTION("the built-in grid emits eight labeled points") {
    const auto r = run_cli("sweep --rollouts \"" + rollouts + "\"");
    REQUIRE(r.code == 0);
    const auto rows = parse_jsonl(r.out);
    REQUIRE(rows.size() == 8);
    CHECK(rows[0].at("label") == "process=0");
    CHECK(rows[7].at("label") == "structure=1");

    for (const auto& row : rows) {
      const double ws = row.at("weights").at("structure").get<double>();
      const double wc = row.at("weights").at("content").get<double>();
      const double wp = row.at("weights").at("process").get<double>();
      const double wk = row.at("weights").at("consistency").get<double>();
      double sum = 0.0;
      for (const auto& b : breakdowns)
        sum += ws * b.at("structure").get<double>() + wc * b.at("content").get<double>() +
               wp * b.at("process").get<double>() + wk * b.at("consistency").get<double>();
      CHECK_THAT(row.at("mean").get<double>(),
                 WithinAbs(sum / static_cast<double>(breakdowns.size()), 1e-9));
      CHECK(row.at("min").get<double>() <= row.at("mean").get<double>() + 1e-12);
      CHECK(row.at("max").get<double>() >= row.at("mean").get<double>() - 1e-12);
    }
  }

  SECTION("a custom grid file overrides the default") {
    const std::string grid = write_file("grid.json",
        "[{\"label\": \"flat\", \"structure\": 1.0, \"content\": 1.0, \"process\": 1.0, "
        "\"consistency\": 1.0}]");
    const auto r = run_cli("sweep --rollouts \"" + rollouts + "\" --grid \"" + grid + "\"");
    REQUIRE(r.code == 0);
    const auto rows = parse_jsonl(r.out);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].at("label") == "flat");
    double sum = 0.0;
    for (const auto& b : breakdowns)
      sum += b.at("structure").get<double>() + b.at("content").get<double>() +
             b.at("process").get<double>() + b.at("consistency").get<double>();
    CHECK_THAT(rows[0].at("mean").get<double>(),
               WithinAbs(sum / static_cast<double>(breakdowns.size()), 1e-9));
  }

  SECTION("an empty breakdown file fails") {
    const std::string empty = write_file("sweep_empty.jsonl", "");
    const auto r = run_cli("sweep --rollouts \"" + empty + "\"");
    CHECK(r.code == 1);
  }
}

TEST_CASE("curate routes candidates through the scripted mock model") {
  const std::string base = "curate --manifest \"" + fixture("bench/curation_manifest.json") + "\"";

  SECTION("a generation backend is required") {
    const auto r = run_cli(base);
    CHECK(r.code == 3);
    CHECK_THAT(r.err, ContainsSubstring("--model-url or --mock"));
  }

  SECTION("routing follows the scripted candidates") {
    const auto r = run_cli(base + " --mock --mock-rules \"" +
                           fixture("bench/curation_rules.json") + "\"");
    REQUIRE(r.code == 0);
    const auto rows = parse_jsonl(r.out);
    REQUIRE(rows.size() == 2);

    CHECK(rows[0].at("sample_id") == "cur1");
    CHECK(rows[0].at("route") == "correct");
    CHECK(rows[0].at("survivor_index") == 1);  // wrong first draft, correct second
    CHECK_THAT(rows[0].at("final_chain").get<std::string>(),
               ContainsSubstring("<answer>positive</answer>"));
    CHECK(rows[0].at("candidates").size() == 3);

    CHECK(rows[1].at("sample_id") == "cur2");
    CHECK(rows[1].at("route") == "completely_incorrect");
    CHECK(rows[1].at("survivor_index") == -1);
    CHECK_THAT(rows[1].at("correction_request").get<std::string>(),
               ContainsSubstring("negative"));
  }

  SECTION("runs are reproducible") {
    const std::string args =
        base + " --mock --mock-rules \"" + fixture("bench/curation_rules.json") + "\"";
    const auto r1 = run_cli(args);
    const auto r2 = run_cli(args + " --jobs 2");
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    CHECK(r1.out == r2.out);
  }
}

TEST_CASE("report renders a score report as a text table") {
  const auto out = (work_dir() / "for_report.json").string();
  REQUIRE(run_cli(bench_score_args() + " --out \"" + out + "\"").code == 0);
  const auto r = run_cli("report --in \"" + out + "\"");
  REQUIRE(r.code == 0);
  CHECK_THAT(r.out, ContainsSubstring("MSA"));
  CHECK_THAT(r.out, ContainsSubstring("DPTM"));
  CHECK_THAT(r.out, ContainsSubstring("SFA"));
  CHECK_THAT(r.out, ContainsSubstring("level_1"));
  CHECK_THAT(r.out, ContainsSubstring("overall"));
  CHECK_THAT(r.out, ContainsSubstring("0.510684"));  // overall mean to six places

  const auto missing = run_cli("report --in \"" + (work_dir() / "no_report.json").string() + "\"");
  CHECK(missing.code == 1);
}
