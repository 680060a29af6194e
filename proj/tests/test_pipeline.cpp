#include <doctest.h>

#include <algorithm>
#include <set>

#include "kgf/pipeline.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace kgf;
using kgf_test::fixture_provider;
using kgf_test::load_toy_graph;

namespace {

Conversation conversation_for(const std::string& id, const std::string& text) {
    return Conversation{id, {{Speaker::Patient, text}}};
}

Conversation seafood_conversation() {
    return conversation_for(
        "inst-01",
        "Ever since the seafood dinner last night my stomach has been churning and I have been vomiting.");
}

std::size_t role_count(const std::vector<CallRecord>& transcript, PromptRole role) {
    return static_cast<std::size_t>(std::count_if(
        transcript.begin(), transcript.end(), [&](const CallRecord& r) { return r.role == role; }));
}

}  // namespace

TEST_CASE("conversation rendering is deterministic and speaker-tagged") {
    Conversation conv{"x", {{Speaker::Doctor, "Hello"}, {Speaker::Patient, "Hi"}}};
    CHECK(conv.render() == "Doctor: Hello\nPatient: Hi\n");
    CHECK(conv.has_patient_turn());
    Conversation no_patient{"y", {{Speaker::Doctor, "Hello"}}};
    CHECK_FALSE(no_patient.has_patient_turn());
}

TEST_CASE("preliminary questions: scripted counts and the n_pre=0 shortcut") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), cfg);
    PipelineRunInfo info;

    auto qs = pipeline.preliminary_questions(seafood_conversation(), {}, 20, info);
    CHECK(qs.size() == 3);  // the canned fixture answers three
    for (const auto& q : qs) CHECK(q.channel == Channel::Pre);
    auto transcript = gw.transcript();
    REQUIRE(transcript.size() == 1);
    CHECK(transcript[0].user_text.find("exactly 20 questions") != std::string::npos);

    gw.clear_transcript();
    auto none = pipeline.preliminary_questions(seafood_conversation(), {}, 0, info);
    CHECK(none.empty());
    CHECK(gw.transcript().empty());  // no provider call for n_pre = 0

    gw.clear_transcript();
    (void)pipeline.preliminary_questions(seafood_conversation(), {}, 40, info);
    CHECK(gw.transcript()[0].user_text.find("40") != std::string::npos);
}

TEST_CASE("ehr-kg: toy intersection carries diarrheal disease into provenance") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), cfg);
    PipelineRunInfo info;

    auto qs = pipeline.ehr_kg_questions(seafood_conversation(), {}, info);
    REQUIRE_FALSE(qs.empty());
    CHECK_FALSE(info.hard_case);

    // Both subgraphs (nausea, vomiting; depth 2) contain diarrheal disease
    // (n03); brute-force check of the intersected ids.
    auto s1 = bfs_subgraph(graph, "n01", cfg.bfs_depth);
    auto s2 = bfs_subgraph(graph, "n02", cfg.bfs_depth);
    std::set<std::string> expected;
    for (const auto& [id, d] : s1.members) {
        if (s2.members.count(id)) expected.insert(id);
    }
    expected.erase("n01");
    expected.erase("n02");
    CHECK(std::set<std::string>(info.intersected_node_ids.begin(), info.intersected_node_ids.end()) ==
          expected);
    CHECK(expected.count("n03") == 1);

    for (const auto& q : qs) {
        CHECK(q.channel == Channel::EhrKg);
        CHECK(std::find(q.provenance.begin(), q.provenance.end(), "n03") != q.provenance.end());
    }
    // The rank call and the generate call both happened.
    auto transcript = gw.transcript();
    CHECK(role_count(transcript, PromptRole::RankEntity) == 1);
    CHECK(role_count(transcript, PromptRole::Generate) == 1);
}

TEST_CASE("ehr-kg: extraction returning NONE yields an empty channel and a hard case") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), {});
    PipelineRunInfo info;
    auto conv = conversation_for("d08", "Can you help me with the paperwork for my insurance claim?");
    auto qs = pipeline.ehr_kg_questions(conv, {}, info);
    CHECK(qs.empty());
    CHECK(info.hard_case);
}

TEST_CASE("ehr-kg: empty intersection falls back to ranked 1-hop neighbors, flagged") {
    // Two entities whose depth-1 subgraphs share nothing.
    auto graph = kgf_test::kg_from_edges({{"a", "b", "r"}, {"c", "d", "r"}});
    auto provider = std::make_shared<ScriptedProvider>();
    provider->add_rule({"extract", {}, "- a\n- c"});
    provider->add_rule({"rank-entity", {}, "as listed"});
    provider->add_rule({"generate", {}, "1. Fallback question?"});
    Gateway gw(provider, {});
    PipelineConfig cfg;
    cfg.bfs_depth = 1;
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), cfg);
    PipelineRunInfo info;
    auto qs = pipeline.ehr_kg_questions(conversation_for("t", "text"), {}, info);
    CHECK(info.ehr_fallback_neighbors);
    CHECK_FALSE(qs.empty());
    // Union of 1-hop neighborhoods minus seeds = {b, d}.
    CHECK(std::set<std::string>(info.intersected_node_ids.begin(), info.intersected_node_ids.end()) ==
          std::set<std::string>{"b", "d"});
}

TEST_CASE("ddx: defaults produce at most 2+2 diagnoses and 2 questions each") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), {});
    PipelineRunInfo info;
    auto qs = pipeline.ddx_questions(seafood_conversation(), {}, info);
    CHECK(qs.size() <= 8);
    CHECK(qs.size() == 8);  // 4 distinct diagnoses x 2 questions
    CHECK(info.diagnoses.best == std::vector<std::string>{"Gastroenteritis", "Food poisoning"});
    CHECK(info.diagnoses.worst == std::vector<std::string>{"Appendicitis", "Diarrheal disease"});
    for (const auto& q : qs) {
        CHECK(q.channel == Channel::Ddx);
        REQUIRE(q.provenance.size() == 1);
    }
    auto transcript = gw.transcript();
    CHECK(role_count(transcript, PromptRole::DdxBest) == 1);
    CHECK(role_count(transcript, PromptRole::DdxWorst) == 1);
    CHECK(role_count(transcript, PromptRole::Eliminate) == 4);
}

TEST_CASE("ddx: duplicate diagnosis across best and worst gets one eliminate call") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), {});
    PipelineRunInfo info;
    auto conv = conversation_for(
        "inst-04", "I have been exhausted for weeks and I get dizzy when I stand up quickly.");
    auto qs = pipeline.ddx_questions(conv, {}, info);
    // best {Anemia, Hypotension}, worst {Anemia, Hypothyroidism} -> 3 unique.
    CHECK(info.diagnoses.all() ==
          std::vector<std::string>{"Anemia", "Hypotension", "Hypothyroidism"});
    CHECK(role_count(gw.transcript(), PromptRole::Eliminate) == 3);
    CHECK(qs.size() == 6);
}

TEST_CASE("ddx-kg: a single shortest path flows into the generate prompt with its interior node") {
    auto graph = kgf_test::kg_from_edges(
        {{"nausea", "dehydration", "r"}, {"dehydration", "gastroenteritis", "r"}});
    auto provider = std::make_shared<ScriptedProvider>();
    provider->add_rule({"extract", {}, "- nausea"});
    provider->add_rule({"rank-path", {}, "1"});
    provider->add_rule({"generate", {}, "1. Have you been able to keep fluids down?"});
    Gateway gw(provider, {});
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), {});
    PipelineRunInfo info;
    info.diagnoses.best = {"gastroenteritis"};

    auto qs = pipeline.ddx_kg_questions(conversation_for("t", "nausea all day"), {}, info);
    REQUIRE(qs.size() == 1);
    CHECK(qs[0].channel == Channel::DdxKg);
    CHECK(qs[0].provenance == std::vector<std::string>{"nausea->dehydration->gastroenteritis"});

    auto transcript = gw.transcript();
    // Exactly one rank-path call was made and it contained exactly 1 candidate.
    std::vector<CallRecord> rank_calls;
    for (const auto& r : transcript) {
        if (r.role == PromptRole::RankPath) rank_calls.push_back(r);
    }
    REQUIRE(rank_calls.size() == 1);
    CHECK(rank_calls[0].user_text.find("1. nausea") != std::string::npos);
    CHECK(rank_calls[0].user_text.find("2.") == std::string::npos);

    // The selected path's interior node appears in the generate prompt.
    bool found = false;
    for (const auto& r : transcript) {
        if (r.role == PromptRole::Generate) {
            CHECK(r.user_text.find("dehydration") != std::string::npos);
            CHECK(r.user_text.find("critical intermediate") != std::string::npos);
            found = true;
        }
    }
    CHECK(found);
    CHECK(info.enumerated_paths_total == 1);
}

TEST_CASE("ddx-kg: unlinked diagnoses skip their pairs") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), {});
    PipelineRunInfo info;
    info.diagnoses.best = {"Flibberitis"};  // unlinkable
    auto qs = pipeline.ddx_kg_questions(seafood_conversation(), {}, info);
    CHECK(qs.empty());
    CHECK(info.pair_count == 2);    // two linked entities x one diagnosis
    CHECK(info.skipped_pairs == 2);
    CHECK(std::find(info.flags.begin(), info.flags.end(), "ddx-kg-no-paths") != info.flags.end());
}

TEST_CASE("run_pipeline: fixed channel order, partition, and determinism") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), {});
    auto result = pipeline.run(seafood_conversation());

    // Channel order is pre, ehr-kg, ddx, ddx-kg.
    std::vector<int> order;
    for (const auto& q : result.set.questions) order.push_back(static_cast<int>(q.channel));
    CHECK(std::is_sorted(order.begin(), order.end()));

    std::size_t total = 0;
    for (const auto& [name, count] : result.info.channel_counts) total += count;
    CHECK(total == result.set.questions.size());

    QuestionPipeline pipeline2(&graph, &gw, PromptSet::defaults(), {});
    auto again = pipeline2.run(seafood_conversation());
    REQUIRE(again.set.questions.size() == result.set.questions.size());
    for (std::size_t i = 0; i < again.set.questions.size(); ++i) {
        CHECK(again.set.questions[i].text == result.set.questions[i].text);
        CHECK(again.set.questions[i].channel == result.set.questions[i].channel);
    }
}

TEST_CASE("disabling a channel removes exactly its questions and calls") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    cfg.channel_ehr_kg = false;
    cfg.channel_ddx_kg = false;
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), cfg);
    auto result = pipeline.run(seafood_conversation());
    for (const auto& q : result.set.questions) {
        CHECK(q.channel != Channel::EhrKg);
        CHECK(q.channel != Channel::DdxKg);
    }
    auto transcript = gw.transcript();
    CHECK(role_count(transcript, PromptRole::RankEntity) == 0);
    CHECK(role_count(transcript, PromptRole::RankPath) == 0);
    CHECK(role_count(transcript, PromptRole::Extract) == 0);
    CHECK(result.info.graph_search_calls == 0);
}

TEST_CASE("zero-shot modes issue exactly one generate call and nothing else") {
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    cfg.mode = PipelineMode::ZeroShotU;
    QuestionPipeline pipeline(nullptr, &gw, PromptSet::defaults(), cfg);
    auto result = pipeline.run(seafood_conversation());
    CHECK_FALSE(result.set.questions.empty());
    auto transcript = gw.transcript();
    REQUIRE(transcript.size() == 1);
    CHECK(transcript[0].role == PromptRole::Generate);
    CHECK(transcript[0].user_text.find("as many questions as needed") != std::string::npos);

    gw.clear_transcript();
    cfg.mode = PipelineMode::ZeroShotK;
    cfg.budget = 20;
    QuestionPipeline pipeline_k(nullptr, &gw, PromptSet::defaults(), cfg);
    (void)pipeline_k.run(seafood_conversation());
    auto t2 = gw.transcript();
    REQUIRE(t2.size() == 1);
    CHECK(t2[0].user_text.find("exactly 20 questions") != std::string::npos);
}

TEST_CASE("followupq mode runs pre and ddx only, no graph work") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    cfg.mode = PipelineMode::FollowupQ;
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), cfg);
    auto result = pipeline.run(seafood_conversation());
    CHECK(result.info.graph_search_calls == 0);
    for (const auto& q : result.set.questions) {
        CHECK((q.channel == Channel::Pre || q.channel == Channel::Ddx));
    }
    auto transcript = gw.transcript();
    CHECK(role_count(transcript, PromptRole::Extract) == 0);
    CHECK(role_count(transcript, PromptRole::RankEntity) == 0);
    CHECK(role_count(transcript, PromptRole::RankPath) == 0);
}

TEST_CASE("every generation request carries the full ICL selection") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), {});
    std::vector<IclShot> shots = {{"Patient: example one\n", {"One?"}},
                                  {"Patient: example two\n", {"Two?"}},
                                  {"Patient: example three\n", {"Three?"}}};
    (void)pipeline.run(seafood_conversation(), shots);
    for (const auto& r : gw.transcript()) {
        if (r.role == PromptRole::Generate || r.role == PromptRole::Eliminate) {
            CHECK(r.icl_count == shots.size());
        } else {
            CHECK(r.icl_count == 0);
        }
    }
}

TEST_CASE("triplet-rationale ablation feeds triplets instead of ranked concepts") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    cfg.guidance = GuidanceSource::TripletRationale;
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), cfg);
    PipelineRunInfo info;
    auto qs = pipeline.ehr_kg_questions(seafood_conversation(), {}, info);
    CHECK_FALSE(qs.empty());
    auto transcript = gw.transcript();
    CHECK(role_count(transcript, PromptRole::RankEntity) == 0);  // no ranking in this variant
    bool saw_triplets = false;
    for (const auto& r : transcript) {
        if (r.role == PromptRole::Generate &&
            r.user_text.find("knowledge-graph triplets") != std::string::npos) {
            saw_triplets = true;
        }
    }
    CHECK(saw_triplets);
}

TEST_CASE("similar-concepts ablation retrieves by embedding without traversal") {
    auto graph = load_toy_graph();
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    cfg.guidance = GuidanceSource::SimilarConcepts;
    QuestionPipeline pipeline(&graph, &gw, PromptSet::defaults(), cfg);
    PipelineRunInfo info;
    auto qs = pipeline.ehr_kg_questions(seafood_conversation(), {}, info);
    CHECK_FALSE(qs.empty());
    CHECK(info.graph_search_calls == 0);  // retrieval, not traversal
    CHECK_FALSE(info.intersected_node_ids.empty());
    // Seeds themselves are not retrieved as concepts.
    for (const auto& id : info.intersected_node_ids) {
        CHECK(id != "n01");
        CHECK(id != "n02");
    }
    CHECK(role_count(gw.transcript(), PromptRole::RankEntity) == 1);
}

TEST_CASE("a conversation without a patient turn is rejected") {
    Gateway gw(fixture_provider(), {});
    PipelineConfig cfg;
    cfg.mode = PipelineMode::ZeroShotU;
    QuestionPipeline pipeline(nullptr, &gw, PromptSet::defaults(), cfg);
    Conversation doctor_only{"x", {{Speaker::Doctor, "Hello?"}}};
    CHECK_THROWS_AS((void)pipeline.run(doctor_only), std::invalid_argument);
}

TEST_CASE("pipeline config validation") {
    PipelineConfig bad;
    bad.budget = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    PipelineConfig negative;
    negative.n_pre = -1;
    CHECK_THROWS_AS(negative.validate(), std::invalid_argument);
}
