#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kgf/evaluation.hpp"
#include "kgf/text.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace kgf;
using kgf_test::fixture_provider;
using kgf_test::load_toy_graph;

namespace {

Embedder stub_embedder() {
    return [](const std::vector<std::string>& texts) {
        std::vector<std::vector<double>> out;
        for (const auto& t : texts) out.push_back(hash_embed(t, 256));
        return out;
    };
}

std::vector<BenchmarkInstance> fixture_benchmark() {
    std::ifstream in(std::filesystem::path(kgf_test::fixtures_dir()) / "benchmark_5.jsonl");
    return load_benchmark(in, BenchmarkDialect::Weighted);
}

MatchVerdict verdict(std::size_t idx, bool matched) {
    MatchVerdict v;
    v.truth_index = idx;
    v.matched = matched;
    if (matched) v.matched_by = 0;
    return v;
}

}  // namespace

TEST_CASE("load_benchmark dialects") {
    SUBCASE("unweighted strings default to weight 1") {
        std::istringstream in(
            R"({"instance_id": "u1", "conversation": {"turns": [{"speaker": "patient", "text": "hi"}]}, "truth": ["a?", "b?", "c?", "d?", "e?", "f?", "g?", "h?", "i?"]})"
            "\n");
        auto instances = load_benchmark(in, BenchmarkDialect::Unweighted);
        REQUIRE(instances.size() == 1);
        REQUIRE(instances[0].truth.size() == 9);
        for (const auto& [text, w] : instances[0].truth) CHECK(w == doctest::Approx(1.0));
    }
    SUBCASE("weighted records preserve weights") {
        std::istringstream in(
            R"({"instance_id": "w1", "conversation": {"turns": [{"speaker": "patient", "text": "hi"}]}, "truth": [{"text": "a?", "weight": 3}, {"text": "b?", "weight": 1}]})"
            "\n");
        auto instances = load_benchmark(in, BenchmarkDialect::Weighted);
        CHECK(instances[0].truth[0].second == doctest::Approx(3.0));
        CHECK(instances[0].truth[1].second == doctest::Approx(1.0));
    }
    SUBCASE("zero weight is rejected with the instance id") {
        std::istringstream in(
            R"({"instance_id": "bad1", "conversation": {"turns": [{"speaker": "patient", "text": "hi"}]}, "truth": [{"text": "a?", "weight": 0}]})"
            "\n");
        CHECK_THROWS_WITH_AS((void)load_benchmark(in, BenchmarkDialect::Weighted),
                             doctest::Contains("bad1"), BenchmarkError);
    }
    SUBCASE("missing truth is rejected") {
        std::istringstream in(
            R"({"instance_id": "bad2", "conversation": {"turns": [{"speaker": "patient", "text": "hi"}]}, "truth": []})"
            "\n");
        CHECK_THROWS_AS((void)load_benchmark(in, BenchmarkDialect::Weighted), BenchmarkError);
    }
    SUBCASE("conversation without a patient turn is rejected") {
        std::istringstream in(
            R"({"instance_id": "bad3", "conversation": {"turns": [{"speaker": "doctor", "text": "hi"}]}, "truth": ["a?"]})"
            "\n");
        CHECK_THROWS_AS((void)load_benchmark(in, BenchmarkDialect::Weighted), BenchmarkError);
    }
}

TEST_CASE("embedding judge: verbatim coverage matches everything") {
    EmbeddingJudge judge(stub_embedder());
    std::vector<std::pair<std::string, double>> truth{{"Any fever?", 1.0}, {"Any rash?", 2.0}};
    std::vector<std::string> generated{"Any rash?", "Any fever?", "Extra question?"};
    auto verdicts = judge.match(generated, truth);
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].matched);
    CHECK(*verdicts[0].matched_by == 1);
    CHECK(verdicts[1].matched);
    CHECK(*verdicts[1].matched_by == 0);
}

TEST_CASE("embedding judge: empty generated set matches nothing") {
    EmbeddingJudge judge(stub_embedder());
    auto verdicts = judge.match({}, {{"Any fever?", 1.0}});
    REQUIRE(verdicts.size() == 1);
    CHECK_FALSE(verdicts[0].matched);
}

TEST_CASE("embedding judge: 4x3 verdicts equal the exhaustive cosine table") {
    std::vector<std::string> generated{"Any fever at night?", "Do you smoke?",
                                       "How long have you had the cough?", "Fever at night?"};
    std::vector<std::pair<std::string, double>> truth{{"Fever at night?", 1.0},
                                                      {"Any night sweats recently?", 1.0},
                                                      {"How long have you had the cough?", 1.0}};

    // Independent scorer: token sets, cosine = |A∩B| / sqrt(|A||B|).
    auto token_set = [](const std::string& s) {
        auto toks = tokenize(normalize_term(s));
        return std::set<std::string>(toks.begin(), toks.end());
    };
    std::vector<std::vector<double>> table(truth.size(), std::vector<double>(generated.size()));
    for (std::size_t t = 0; t < truth.size(); ++t) {
        auto ts = token_set(truth[t].first);
        for (std::size_t g = 0; g < generated.size(); ++g) {
            auto gs = token_set(generated[g]);
            std::size_t inter = 0;
            for (const auto& tok : ts) inter += gs.count(tok);
            table[t][g] = inter == 0 ? 0.0
                                     : static_cast<double>(inter) /
                                           std::sqrt(static_cast<double>(ts.size() * gs.size()));
        }
    }

    EmbeddingJudge judge(stub_embedder());
    auto verdicts = judge.match(generated, truth);
    REQUIRE(verdicts.size() == 3);
    for (std::size_t t = 0; t < truth.size(); ++t) {
        double best = 0.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < generated.size(); ++g) {
            if (table[t][g] > best) {
                best = table[t][g];
                best_g = g;
            }
        }
        CHECK(verdicts[t].matched == (best >= 0.85));
        if (verdicts[t].matched) CHECK(*verdicts[t].matched_by == best_g);
    }
    // Spot values from the table: the paraphrase pair sits at 0.866, above
    // the threshold; the unmatched truth tops out at 0.5.
    CHECK(table[0][0] == doctest::Approx(3.0 / std::sqrt(12.0)));
    CHECK(verdicts[0].matched);
    CHECK(*verdicts[0].matched_by == 3);  // the exact copy beats the paraphrase
    CHECK_FALSE(verdicts[1].matched);
    CHECK(verdicts[2].matched);
}

TEST_CASE("llm judge: listwise pairs and conservative fallback") {
    auto provider = std::make_shared<ScriptedProvider>();
    provider->add_rule(
        {"judge", {"Ground-truth"}, "{\"matches\": [{\"truth\": 1, \"generated\": 2}]}"});
    Gateway gw(provider, {});
    LlmJudge judge(&gw, PromptSet::defaults());
    std::vector<std::pair<std::string, double>> truth{{"A?", 1.0}, {"B?", 1.0}};
    auto verdicts = judge.match({"x?", "y?"}, truth);
    CHECK(verdicts[0].matched);
    CHECK(*verdicts[0].matched_by == 1);
    CHECK_FALSE(verdicts[1].matched);

    auto garbage = std::make_shared<ScriptedProvider>();
    garbage->add_rule({"judge", {}, "I think they are all fine."});
    Gateway gw2(garbage, {});
    LlmJudge judge2(&gw2, PromptSet::defaults());
    auto fallback = judge2.match({"x?"}, truth);
    CHECK_FALSE(fallback[0].matched);
    CHECK_FALSE(fallback[1].matched);
    CHECK(fallback[0].rationale == "judge-unparseable");
}

TEST_CASE("weighted recall: ten hand-computed cases") {
    using Truth = std::vector<std::pair<std::string, double>>;
    struct Case {
        Truth truth;
        std::vector<bool> matched;
        double expected;
    };
    std::vector<Case> cases = {
        {{{"a", 3}, {"b", 1}}, {true, false}, 0.75},
        {{{"a", 3}, {"b", 1}}, {false, true}, 0.25},
        {{{"a", 1}, {"b", 1}}, {true, true}, 1.0},
        {{{"a", 1}, {"b", 1}, {"c", 1}}, {false, false, false}, 0.0},
        {{{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}, {"e", 1}, {"f", 1}, {"g", 1}, {"h", 1}, {"i", 1}},
         {true, true, true, true, true, true, true, false, false},
         7.0 / 9.0},
        {{{"a", 2}, {"b", 2}}, {true, false}, 0.5},
        {{{"a", 5}, {"b", 3}, {"c", 2}}, {true, false, true}, 0.7},
        {{{"a", 0.5}, {"b", 0.5}, {"c", 1.0}}, {true, true, false}, 0.5},
        {{{"a", 10}}, {true}, 1.0},
        {{{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}}, {false, true, false, true}, 0.6},
    };
    for (const auto& c : cases) {
        std::vector<MatchVerdict> verdicts;
        for (std::size_t i = 0; i < c.matched.size(); ++i) verdicts.push_back(verdict(i, c.matched[i]));
        CHECK(weighted_recall(verdicts, c.truth) == doctest::Approx(c.expected).epsilon(1e-12));
    }
}

TEST_CASE("uniform weights reduce weighted recall to the plain fraction") {
    for (std::size_t n : {1u, 4u, 9u, 17u}) {
        std::vector<std::pair<std::string, double>> truth;
        std::vector<MatchVerdict> verdicts;
        std::size_t matched = 0;
        for (std::size_t i = 0; i < n; ++i) {
            truth.emplace_back("q" + std::to_string(i), 1.0);
            bool m = (i % 3) != 0;
            matched += m;
            verdicts.push_back(verdict(i, m));
        }
        double plain = static_cast<double>(matched) / static_cast<double>(n);
        CHECK(weighted_recall(verdicts, truth) == plain);  // exact, machine precision
    }
}

TEST_CASE("weighted recall is monotone in added matches") {
    std::vector<std::pair<std::string, double>> truth{{"a", 2}, {"b", 3}, {"c", 5}};
    std::vector<MatchVerdict> verdicts{verdict(0, false), verdict(1, false), verdict(2, false)};
    double prev = weighted_recall(verdicts, truth);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        verdicts[i].matched = true;
        double now = weighted_recall(verdicts, truth);
        CHECK(now >= prev);
        prev = now;
    }
    CHECK(prev == doctest::Approx(1.0));
}

TEST_CASE("run_benchmark aggregates hand-set per-instance recalls to 0.75") {
    // Three instances engineered to score 1.0, 0.5 and 0.75 with the
    // embedding judge over verbatim matches.
    std::stringstream data;
    data << R"({"instance_id": "a", "conversation": {"turns": [{"speaker": "patient", "text": "alpha case"}]}, "truth": [{"text": "A one?", "weight": 1}, {"text": "A two?", "weight": 1}]})"
         << "\n"
         << R"({"instance_id": "b", "conversation": {"turns": [{"speaker": "patient", "text": "beta case"}]}, "truth": [{"text": "B one?", "weight": 1}, {"text": "B two?", "weight": 1}]})"
         << "\n"
         << R"({"instance_id": "c", "conversation": {"turns": [{"speaker": "patient", "text": "gamma case"}]}, "truth": [{"text": "C one?", "weight": 3}, {"text": "C two?", "weight": 1}]})"
         << "\n";
    auto instances = load_benchmark(data, BenchmarkDialect::Weighted);

    auto provider = std::make_shared<ScriptedProvider>();
    provider->add_rule({"generate", {"alpha case"}, "1. A one?\n2. A two?"});
    provider->add_rule({"generate", {"beta case"}, "1. B one?\n2. Unrelated distractor question?"});
    provider->add_rule({"generate", {"gamma case"}, "1. C one?\n2. Another unrelated question?"});
    Gateway gw(provider, {});
    auto prompts = PromptSet::defaults();
    EmbeddingJudge judge(stub_embedder());

    EvalConfig config;
    config.config_hash = "test";
    auto report = run_benchmark(EvalMethod::ZeroShotU, instances, nullptr, gw, prompts, judge, config);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].recall == doctest::Approx(1.0));
    CHECK(report.rows[1].recall == doctest::Approx(0.5));
    CHECK(report.rows[2].recall == doctest::Approx(0.75));
    CHECK(report.mean_recall == doctest::Approx(0.75));
    CHECK(report.failures == 0);
    CHECK(report.method == "zero-shot-u");
}

TEST_CASE("zero-shot-k with a provider emitting exactly 20 yields mean count 20") {
    std::stringstream data;
    data << R"({"instance_id": "k1", "conversation": {"turns": [{"speaker": "patient", "text": "the k case"}]}, "truth": [{"text": "T?", "weight": 1}]})"
         << "\n";
    auto instances = load_benchmark(data, BenchmarkDialect::Weighted);
    std::string twenty;
    for (int i = 1; i <= 20; ++i) twenty += std::to_string(i) + ". Question " + std::to_string(i) + "?\n";
    auto provider = std::make_shared<ScriptedProvider>();
    provider->add_rule({"generate", {}, twenty});
    Gateway gw(provider, {});
    auto prompts = PromptSet::defaults();
    EmbeddingJudge judge(stub_embedder());
    EvalConfig config;
    config.zero_shot_k = 20;
    auto report = run_benchmark(EvalMethod::ZeroShotK, instances, nullptr, gw, prompts, judge, config);
    CHECK(report.mean_count == doctest::Approx(20.0));
}

TEST_CASE("followupq mode issues no graph-search roles (transcript check)") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    auto prompts = PromptSet::defaults();
    EmbeddingJudge judge(stub_embedder());
    auto instances = fixture_benchmark();
    EvalConfig config;
    auto report =
        run_benchmark(EvalMethod::FollowupQ, instances, &graph, gw, prompts, judge, config);
    CHECK(report.failures == 0);
    for (const auto& r : gw.transcript()) {
        CHECK(r.role != PromptRole::RankEntity);
        CHECK(r.role != PromptRole::RankPath);
        CHECK(r.role != PromptRole::Extract);
    }
}

TEST_CASE("per-instance failures are recorded and excluded from the means") {
    std::stringstream data;
    data << R"({"instance_id": "ok", "conversation": {"turns": [{"speaker": "patient", "text": "fine case"}]}, "truth": [{"text": "F?", "weight": 1}]})"
         << "\n"
         << R"({"instance_id": "boom", "conversation": {"turns": [{"speaker": "patient", "text": "broken case"}]}, "truth": [{"text": "G?", "weight": 1}]})"
         << "\n";
    auto instances = load_benchmark(data, BenchmarkDialect::Weighted);
    auto provider = std::make_shared<ScriptedProvider>();
    provider->add_rule({"generate", {"fine case"}, "1. F?"});
    // No rule for "broken case": the gateway exhausts retries and errors out.
    GatewayConfig gcfg;
    gcfg.retries = 0;
    Gateway gw(provider, gcfg);
    auto prompts = PromptSet::defaults();
    EmbeddingJudge judge(stub_embedder());
    EvalConfig config;
    auto report = run_benchmark(EvalMethod::ZeroShotU, instances, nullptr, gw, prompts, judge, config);
    CHECK(report.failures == 1);
    CHECK(report.rows[1].failed);
    CHECK_FALSE(report.rows[1].error.empty());
    CHECK(report.mean_recall == doctest::Approx(1.0));  // only the ok row counts
}

TEST_CASE("icl methods demand a pool and stamp theme breakdowns") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    auto prompts = PromptSet::defaults();
    EmbeddingJudge judge(stub_embedder());
    auto instances = fixture_benchmark();
    EvalConfig config;
    CHECK_THROWS_AS((void)run_benchmark(EvalMethod::ActiveIcl, instances, &graph, gw, prompts, judge,
                                        config, nullptr),
                    std::invalid_argument);

    std::ifstream dev_in(std::filesystem::path(kgf_test::fixtures_dir()) / "dev_10.jsonl");
    auto dev = load_benchmark(dev_in, BenchmarkDialect::Unweighted);
    ICLPool pool;
    pool.strategy = PoolStrategy::Random;
    for (const auto& inst : dev) {
        ICLExample e;
        e.conversation = inst.conversation;
        e.ground_truth = inst.truth;
        pool.examples.push_back(e);
    }
    auto report = run_benchmark(EvalMethod::RandomIcl, instances, &graph, gw, prompts, judge, config,
                                &pool);
    CHECK(report.failures == 0);
    CHECK(report.theme_recall.count("context seeking") == 1);
    CHECK(report.method == "kg-followup+random-icl");
    // Every generation call carried min(t=4, |pool|=10) = 4 examples.
    for (const auto& r : gw.transcript()) {
        if (r.role == PromptRole::Generate || r.role == PromptRole::Eliminate) {
            CHECK(r.icl_count == 4);
        }
    }
}

TEST_CASE("evaluation instances never serve as their own ICL examples") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    auto prompts = PromptSet::defaults();
    EmbeddingJudge judge(stub_embedder());
    auto instances = fixture_benchmark();

    ICLPool self_pool;
    self_pool.strategy = PoolStrategy::Random;
    for (const auto& inst : instances) {
        ICLExample e;
        e.conversation = inst.conversation;
        e.ground_truth = inst.truth;
        self_pool.examples.push_back(e);
    }
    EvalConfig config;
    // A pool made only of the evaluation split must be rejected.
    CHECK_THROWS_WITH_AS((void)run_benchmark(EvalMethod::RandomIcl, instances, &graph, gw, prompts,
                                             judge, config, &self_pool),
                         doctest::Contains("disjoint"), std::invalid_argument);

    // Mixing in dev examples works; only the disjoint ones are eligible.
    std::ifstream dev_in(std::filesystem::path(kgf_test::fixtures_dir()) / "dev_10.jsonl");
    auto dev = load_benchmark(dev_in, BenchmarkDialect::Unweighted);
    ICLExample extra;
    extra.conversation = dev[0].conversation;
    extra.ground_truth = dev[0].truth;
    self_pool.examples.push_back(extra);
    auto report = run_benchmark(EvalMethod::RandomIcl, instances, &graph, gw, prompts, judge, config,
                                &self_pool);
    CHECK(report.failures == 0);
    // The only eligible example is the dev one, so every generation call
    // carries exactly one shot containing its conversation.
    for (const auto& r : gw.transcript()) {
        if (r.role == PromptRole::Generate || r.role == PromptRole::Eliminate) {
            CHECK(r.icl_count == 1);
            CHECK(r.user_text.find("camping trip") != std::string::npos);
        }
    }
}

TEST_CASE("report serialization carries the provenance fields") {
    EvalReport report;
    report.method = "kg-followup";
    report.judge_identity = "embedding-cosine@0.85";
    report.config_hash = "cafe";
    report.prompt_hash = "beef";
    report.mean_recall = 0.5;
    report.instances = 1;
    InstanceRow row;
    row.instance_id = "x";
    row.recall = 0.5;
    report.rows.push_back(row);
    auto text = report_to_json(report);
    CHECK(text.find("\"config_hash\": \"cafe\"") != std::string::npos);
    CHECK(text.find("\"prompt_hash\": \"beef\"") != std::string::npos);
    CHECK(text.find("\"judge\": \"embedding-cosine@0.85\"") != std::string::npos);
}
