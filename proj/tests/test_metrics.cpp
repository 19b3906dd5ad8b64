#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "chainscore/metrics.hpp"

namespace {

/* ---- independent oracles ------------------------------------------------
   Straight from the written definitions, computed off raw label vectors with
   no shared code: per-class counting loops here, table algebra in the
   library. */

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0, support = 0;
};

std::map<std::string, ClassCounts> per_class(const std::vector<std::string>& gold,
                                             const std::vector<std::string>& pred) {
  std::map<std::string, ClassCounts> m;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    m[gold[i]].support += 1;
    if (gold[i] == pred[i]) {
      m[gold[i]].tp += 1;
    } else {
      m[gold[i]].fn += 1;
      m[pred[i]].fp += 1;
    }
  }
  return m;
}

double f1_of(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;  // covers zero-division: P or R is 0 whenever tp is
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * r / (p + r);
}

double oracle_weighted_f1(const std::vector<std::string>& gold,
                          const std::vector<std::string>& pred) {
  const auto m = per_class(gold, pred);
  double sum = 0.0;
  for (const auto& [cls, c] : m)
    sum += (static_cast<double>(c.support) / static_cast<double>(gold.size())) *
           f1_of(c.tp, c.fp, c.fn);
  return sum;
}

double oracle_micro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& [cls, c] : per_class(gold, pred)) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  return f1_of(tp, fp, fn);
}

double oracle_set_micro_f1(const std::vector<std::set<std::string>>& pred,
                           const std::vector<std::set<std::string>>& gold,
                           const std::vector<std::string>& universe) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& e : universe) {
      const bool in_p = pred[i].count(e) > 0;
      const bool in_g = gold[i].count(e) > 0;
      if (in_p && in_g) ++tp;
      if (in_p && !in_g) ++fp;
      if (!in_p && in_g) ++fn;
    }
  }
  return f1_of(tp, fp, fn);
}

double oracle_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const double n = static_cast<double>(a.size());
  double po = 0.0;
  std::map<std::string, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) po += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  po /= n;
  double pe = 0.0;
  for (const auto& [cls, ca] : ra)
    if (rb.count(cls)) pe += (ca / n) * (rb.at(cls) / n);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

std::vector<std::string> class_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("weighted and micro F1 agree with per-class brute force on random tables") {
  std::mt19937 rng(0xC0FFEE);
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t n_classes = 1 + rng() % 8;
    const std::size_t n_samples = 1 + rng() % 50;
    const auto classes = class_names(n_classes);
    std::vector<std::string> gold(n_samples), pred(n_samples);
    chainscore::ConfusionTable table(classes);
    for (std::size_t i = 0; i < n_samples; ++i) {
      gold[i] = classes[rng() % n_classes];
      pred[i] = classes[rng() % n_classes];
      table.add(gold[i], pred[i]);
    }
    INFO("iter " << iter << " classes " << n_classes << " samples " << n_samples);
    REQUIRE_THAT(chainscore::weighted_f1(table),
                 Catch::Matchers::WithinAbs(oracle_weighted_f1(gold, pred), 1e-9));
    REQUIRE_THAT(chainscore::micro_f1(table),
                 Catch::Matchers::WithinAbs(oracle_micro_f1(gold, pred), 1e-9));
  }
}

TEST_CASE("micro F1 on single-label tables is accuracy") {
  std::mt19937 rng(7);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n_classes = 2 + rng() % 6;
    const std::size_t n_samples = 1 + rng() % 40;
    const auto classes = class_names(n_classes);
    chainscore::ConfusionTable table(classes);
    std::vector<chainscore::LabelValue> pv, gv;
    std::vector<std::set<std::string>> ps, gs;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
      const std::string g = classes[rng() % n_classes];
      const std::string p = classes[rng() % n_classes];
      table.add(g, p);
      pv.push_back(chainscore::LabelValue::single(p));
      gv.push_back(chainscore::LabelValue::single(g));
      ps.push_back({p});
      gs.push_back({g});
      if (p == g) ++hits;
    }
    const double acc = static_cast<double>(hits) / static_cast<double>(n_samples);
    REQUIRE_THAT(chainscore::accuracy(pv, gv), Catch::Matchers::WithinAbs(acc, 0.0));
    REQUIRE_THAT(chainscore::micro_f1(table), Catch::Matchers::WithinAbs(acc, 1e-12));
    REQUIRE_THAT(chainscore::micro_f1(ps, gs), Catch::Matchers::WithinAbs(acc, 1e-12));
  }
}

TEST_CASE("multi-label micro F1 agrees with element-wise brute force") {
  std::mt19937 rng(99);
  const auto universe = class_names(8);
  for (int iter = 0; iter < 300; ++iter) {
    const std::size_t n_samples = 1 + rng() % 40;
    std::vector<std::set<std::string>> pred(n_samples), gold(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      for (const auto& e : universe) {
        if (rng() % 10 < 3) pred[i].insert(e);
        if (rng() % 10 < 3) gold[i].insert(e);
      }
    }
    REQUIRE_THAT(chainscore::micro_f1(pred, gold),
                 Catch::Matchers::WithinAbs(oracle_set_micro_f1(pred, gold, universe), 1e-12));
  }
}

TEST_CASE("micro F1 hand values") {
  /* one sample: pred {a,b}, gold {a,c}: tp=1 fp=1 fn=1 -> f1 = 0.5 */
  CHECK_THAT(chainscore::micro_f1({{"a", "b"}}, {{"a", "c"}}),
             Catch::Matchers::WithinAbs(0.5, 1e-15));
  /* disjoint -> 0, identical -> 1 */
  CHECK(chainscore::micro_f1({{"a"}}, {{"b"}}) == 0.0);
  CHECK(chainscore::micro_f1({{"a", "b"}}, {{"a", "b"}}) == 1.0);
}

TEST_CASE("weighted F1 zero-division classes contribute zero") {
  /* all predictions c1, golds split: class c0 has tp=0 -> F1 0; class c1
     P=2/4, R=1 -> F1 = 2/3; weights 0.5 each -> 1/3 */
  chainscore::ConfusionTable t(class_names(2));
  t.add("c0", "c1", 2);
  t.add("c1", "c1", 2);
  CHECK_THAT(chainscore::weighted_f1(t), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("unique-word F1 matches the worked example and edge rules") {
  /* three predicted words, two gold words, two common: P=2/3 R=1 -> 0.8 */
  CHECK_THAT(chainscore::exact_match_f1("happy joy extra", "happy joy"),
             Catch::Matchers::WithinAbs(0.8, 1e-12));
  CHECK(chainscore::exact_match_f1("", "") == 1.0);
  CHECK(chainscore::exact_match_f1("  .  ", "") == 1.0);
  CHECK(chainscore::exact_match_f1("word", "") == 0.0);
  CHECK(chainscore::exact_match_f1("", "word") == 0.0);
  CHECK(chainscore::exact_match_f1("Happy!", "happy") == 1.0);
  CHECK(chainscore::exact_match_f1("joy joy joy", "joy") == 1.0);
  CHECK(chainscore::exact_match_f1("the cat sat", "a dog ran") == 0.0);
}

TEST_CASE("kappa matches the worked 2x2 example") {
  std::vector<std::string> a, b;
  auto push = [&](const std::string& x, const std::string& y, int n) {
    for (int i = 0; i < n; ++i) {
      a.push_back(x);
      b.push_back(y);
    }
  };
  push("x", "x", 45);
  push("x", "y", 5);
  push("y", "x", 5);
  push("y", "y", 45);
  CHECK_THAT(chainscore::cohen_kappa(a, b), Catch::Matchers::WithinAbs(0.8, 1e-12));
}

TEST_CASE("kappa degenerate and random cases") {
  CHECK(chainscore::cohen_kappa({"x", "x", "x"}, {"x", "x", "x"}) == 1.0);
  /* agreement exactly at chance level -> 0 */
  CHECK_THAT(chainscore::cohen_kappa({"x", "x"}, {"x", "y"}),
             Catch::Matchers::WithinAbs(0.0, 1e-12));

  std::mt19937 rng(1234);
  for (int iter = 0; iter < 500; ++iter) {
    const std::size_t n_classes = 1 + rng() % 4;
    const std::size_t n = 2 + rng() % 59;
    const auto classes = class_names(n_classes);
    std::vector<std::string> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = classes[rng() % n_classes];
      b[i] = classes[rng() % n_classes];
    }
    REQUIRE_THAT(chainscore::cohen_kappa(a, b),
                 Catch::Matchers::WithinAbs(oracle_kappa(a, b), 1e-12));
  }
}

TEST_CASE("metric input validation") {
  CHECK_THROWS_AS(chainscore::accuracy({}, {}), chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::accuracy({chainscore::LabelValue::single("a")}, {}),
                  chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::cohen_kappa({}, {}), chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::cohen_kappa({"a"}, {"a", "b"}), chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::micro_f1({}, {}), chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::ConfusionTable({}), chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::ConfusionTable({"a", "a"}), chainscore::ValueError);
  chainscore::ConfusionTable t(class_names(2));
  CHECK_THROWS_AS(t.add("zzz", "c0"), chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::weighted_f1(t), chainscore::ValueError);
  CHECK_THROWS_AS(chainscore::micro_f1(t), chainscore::ValueError);
}

TEST_CASE("label values canonicalize") {
  const auto s = chainscore::LabelValue::single("  HapPy ");
  CHECK(s.values == std::vector<std::string>{"happy"});
  const auto set = chainscore::LabelValue::label_set({"Joy", " sadness", "joy", "JOY "});
  CHECK(set.values == std::vector<std::string>{"joy", "sadness"});
  CHECK(set.as_set() == std::set<std::string>{"joy", "sadness"});
  const auto t = chainscore::LabelValue::text("  Keep Raw  ");
  CHECK(t.values == std::vector<std::string>{"  Keep Raw  "});
  /* same values, different kind: distinct */
  auto a = chainscore::LabelValue::single("x");
  auto b = chainscore::LabelValue::label_set({"x"});
  CHECK_FALSE(a == b);
}

TEST_CASE("answer normalization cascade resolves in order") {
  const std::vector<std::string> space = {"happy", "sad", "neutral"};

  auto exact = chainscore::normalize_answer("happy", space);
  CHECK(exact.matched);
  CHECK(exact.label == "happy");
  CHECK(exact.rule == 1);

  auto relaxed = chainscore::normalize_answer("  Happy!  ", space);
  CHECK(relaxed.matched);
  CHECK(relaxed.label == "happy");
  CHECK(relaxed.rule == 2);

  auto sub = chainscore::normalize_answer("I would say the person is happy today", space);
  CHECK(sub.matched);
  CHECK(sub.label == "happy");
  CHECK(sub.rule == 3);

  /* two labels mentioned: ambiguous, no substring match */
  auto ambiguous = chainscore::normalize_answer("happy but also sad", space);
  CHECK_FALSE(ambiguous.matched);
  CHECK(ambiguous.rule == 0);

  /* whole-word only: "unhappy" does not contain the token "happy" */
  auto partial = chainscore::normalize_answer("clearly unhappy here", space);
  CHECK_FALSE(partial.matched);

  auto none = chainscore::normalize_answer("no emotion word present", space);
  CHECK_FALSE(none.matched);
}

TEST_CASE("hedged outputs never resolve through the substring rule") {
  const std::vector<std::string> space = {"joy", "sad"};
  /* only "sad" occurs as a token, but the output is an expression of
     uncertainty, not a commitment */
  for (const std::string raw : {
           "joyful or sad, hard to say",
           "maybe sad",
           "perhaps sad?",
           "not sure, sad",
           "it is unclear but sad comes to mind",
           "either sad",
           "cannot tell, looks sad",
       }) {
    INFO(raw);
    CHECK_FALSE(chainscore::normalize_answer(raw, space).matched);
  }
  /* the same mention without hedges resolves */
  CHECK(chainscore::normalize_answer("the face looks sad", space).matched);
}

TEST_CASE("extraction hook is the last resort and is verified against the space") {
  const std::vector<std::string> space = {"happy", "sad"};
  const chainscore::ExtractHook pick_sad = [](const std::string&,
                                              const std::vector<std::string>&) {
    return std::optional<std::string>("Sad");
  };
  const chainscore::ExtractHook garbage = [](const std::string&,
                                             const std::vector<std::string>&) {
    return std::optional<std::string>("banana");
  };
  const chainscore::ExtractHook nothing = [](const std::string&,
                                             const std::vector<std::string>&) {
    return std::optional<std::string>();
  };

  auto hooked = chainscore::normalize_answer("totally different words", space, pick_sad);
  CHECK(hooked.matched);
  CHECK(hooked.label == "sad");
  CHECK(hooked.rule == 4);

  CHECK_FALSE(chainscore::normalize_answer("totally different words", space, garbage).matched);
  CHECK_FALSE(chainscore::normalize_answer("totally different words", space, nothing).matched);

  /* earlier rules win before the hook is consulted */
  auto direct = chainscore::normalize_answer("happy", space, pick_sad);
  CHECK(direct.rule == 1);
  CHECK(direct.label == "happy");

  CHECK_THROWS_AS(chainscore::normalize_answer("x", {}), chainscore::ValueError);
}

TEST_CASE("label set normalization splits, resolves, and tracks leftovers") {
  const std::vector<std::string> space = {"joy", "sadness", "anger"};

  auto both = chainscore::normalize_label_set("joy, sadness", space);
  CHECK(both.labels == std::set<std::string>{"joy", "sadness"});
  CHECK(both.fully_matched());

  auto mixed = chainscore::normalize_label_set("Joy; banana", space);
  CHECK(mixed.labels == std::set<std::string>{"joy"});
  REQUIRE(mixed.unmatched_parts.size() == 1);
  CHECK(mixed.unmatched_parts[0] == "banana");
  CHECK_FALSE(mixed.fully_matched());

  auto slashes = chainscore::normalize_label_set("joy/anger", space);
  CHECK(slashes.labels == std::set<std::string>{"anger", "joy"});

  auto dupes = chainscore::normalize_label_set("joy, JOY, joy!", space);
  CHECK(dupes.labels == std::set<std::string>{"joy"});

  /* hook sees the whole raw output and may return a list */
  const chainscore::ExtractHook lister = [](const std::string&,
                                            const std::vector<std::string>&) {
    return std::optional<std::string>("joy, anger");
  };
  auto rescued = chainscore::normalize_label_set("the wheel of feelings", space, lister);
  CHECK(rescued.labels == std::set<std::string>{"anger", "joy"});
  CHECK(rescued.fully_matched());

  /* failed hook keeps the first parse with its leftovers */
  const chainscore::ExtractHook bad = [](const std::string&, const std::vector<std::string>&) {
    return std::optional<std::string>("banana, kiwi");
  };
  auto kept = chainscore::normalize_label_set("joy, banana", space, bad);
  CHECK(kept.labels == std::set<std::string>{"joy"});
  CHECK(kept.unmatched_parts.size() == 1);
}
