// kgf: command-line front end for the KG-Followup pipeline.
//
// Subcommands:
//   kg-ingest  compile a delimited edge list into the binary graph index
//   run        generate consolidated follow-up questions for conversations
//   eval       run a benchmark method (or a sweep grid) and write reports
//   pool       build and persist an in-context-learning example pool
//   prompts    export the active prompt templates

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgf/active_icl.hpp"
#include "kgf/benchmark.hpp"
#include "kgf/consolidation.hpp"
#include "kgf/evaluation.hpp"
#include "kgf/gateway.hpp"
#include "kgf/hashing.hpp"
#include "kgf/kg_store.hpp"
#include "kgf/pipeline.hpp"
#include "kgf/run_config.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string provider_kind;
    std::string scripted_dir;
    bool record = false;
    int jobs = -1;
    long long seed = -1;
    int budget = -1;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Declarative run-config JSON file");
    cmd->add_option("--provider", flags.provider_kind, "Provider kind: scripted | http");
    cmd->add_option("--scripted-dir", flags.scripted_dir, "Scripted provider / recording directory");
    cmd->add_flag("--record", flags.record, "Record live provider responses into --scripted-dir");
    cmd->add_option("--jobs", flags.jobs, "Concurrent instances (default from config)");
    cmd->add_option("--seed", flags.seed, "Run seed");
    cmd->add_option("--budget", flags.budget, "Question budget override");
}

kgf::RunConfig resolve_config(const CommonFlags& flags) {
    kgf::RunConfig config =
        flags.config_path.empty() ? kgf::RunConfig::defaults() : kgf::RunConfig::from_json_file(flags.config_path);
    if (!flags.provider_kind.empty()) config.provider.kind = flags.provider_kind;
    if (!flags.scripted_dir.empty()) config.provider.scripted_dir = flags.scripted_dir;
    if (flags.record) config.provider.record = true;
    if (flags.jobs > 0) config.jobs = flags.jobs;
    if (flags.seed >= 0) config.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.budget > 0) config.pipeline.budget = flags.budget;
    if (const char* cache_root = std::getenv("KGF_CACHE_DIR")) {
        if (config.gateway.cache_dir.empty()) {
            config.gateway.cache_dir = cache_root;
            config.gateway.cache_enabled = true;
        }
    }
    return config;
}

std::unique_ptr<kgf::Judge> make_judge(const kgf::RunConfig& config, kgf::Gateway& gateway,
                                       const kgf::PromptSet& prompts) {
    if (config.judge.kind == "deterministic") {
        std::size_t dim = config.gateway.embed_dim;
        kgf::Embedder embedder = [&gateway](const std::vector<std::string>& texts) {
            return gateway.embed(texts);
        };
        (void)dim;
        return std::make_unique<kgf::EmbeddingJudge>(embedder, config.judge.threshold);
    }
    if (config.judge.kind == "llm") {
        return std::make_unique<kgf::LlmJudge>(&gateway, prompts);
    }
    throw std::runtime_error("unknown judge kind: " + config.judge.kind);
}

int cmd_kg_ingest(const std::string& input, const std::string& format_name, const std::string& output) {
    kgf::GraphFormat format;
    if (format_name == "primekg") {
        format = kgf::GraphFormat::PrimeKG;
    } else if (format_name == "compact") {
        format = kgf::GraphFormat::Compact;
    } else {
        std::cerr << "error: unknown format '" << format_name << "' (expected primekg or compact)\n";
        return 1;
    }
    try {
        std::ifstream in(input);
        if (!in) {
            std::cerr << "error: cannot open " << input << "\n";
            return 1;
        }
        kgf::LoadStats stats;
        kgf::KnowledgeGraph graph = kgf::KnowledgeGraph::load(in, format, &stats);
        std::ofstream out(output, std::ios::binary);
        if (!out) {
            std::cerr << "error: cannot write " << output << "\n";
            return 1;
        }
        graph.write_index(out);
        std::cout << "nodes=" << graph.node_count() << " edges=" << graph.edge_count() << "\n";
        if (stats.self_loops_dropped > 0) {
            std::cerr << "warning: dropped " << stats.self_loops_dropped << " self-loop row(s)\n";
        }
        if (stats.duplicates_collapsed > 0) {
            std::cerr << "note: collapsed " << stats.duplicates_collapsed << " duplicate row(s)\n";
        }
        return 0;
    } catch (const kgf::IngestError& e) {
        std::cerr << "ingest error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

json question_to_json(const kgf::FollowupQuestion& q) {
    json j;
    j["text"] = q.text;
    j["channel"] = kgf::channel_name(q.channel);
    j["provenance"] = q.provenance;
    return j;
}

int cmd_run(const CommonFlags& flags, const std::string& conversations_path, const std::string& kg_path,
            const std::string& out_path, const std::vector<std::string>& channel_switches,
            bool no_consolidate, const std::string& mode_name) {
    kgf::RunConfig config = resolve_config(flags);
    config.kg_path = kg_path;
    config.data_path = conversations_path;
    if (no_consolidate) config.consolidation = kgf::ConsolidationMode::Off;
    if (!mode_name.empty()) {
        if (mode_name == "full") config.pipeline.mode = kgf::PipelineMode::Full;
        else if (mode_name == "zero-shot-u") config.pipeline.mode = kgf::PipelineMode::ZeroShotU;
        else if (mode_name == "zero-shot-k") config.pipeline.mode = kgf::PipelineMode::ZeroShotK;
        else if (mode_name == "followupq") config.pipeline.mode = kgf::PipelineMode::FollowupQ;
        else {
            std::cerr << "error: unknown mode '" << mode_name << "'\n";
            return 1;
        }
    }
    for (const auto& sw : channel_switches) {
        auto eq = sw.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --channel expects name=on|off\n";
            return 1;
        }
        auto channel = kgf::parse_channel(sw.substr(0, eq));
        if (!channel) {
            std::cerr << "error: unknown channel '" << sw.substr(0, eq) << "'\n";
            return 1;
        }
        bool on = sw.substr(eq + 1) == "on";
        switch (*channel) {
            case kgf::Channel::Pre: config.pipeline.channel_pre = on; break;
            case kgf::Channel::EhrKg: config.pipeline.channel_ehr_kg = on; break;
            case kgf::Channel::Ddx: config.pipeline.channel_ddx = on; break;
            case kgf::Channel::DdxKg: config.pipeline.channel_ddx_kg = on; break;
        }
    }

    try {
        auto conversations = kgf::load_conversations_file(conversations_path);

        kgf::KnowledgeGraph graph;
        const kgf::KnowledgeGraph* graph_ptr = nullptr;
        bool needs_graph = config.pipeline.mode == kgf::PipelineMode::Full &&
                           (config.pipeline.channel_ehr_kg || config.pipeline.channel_ddx_kg);
        if (needs_graph) {
            if (kg_path.empty()) {
                std::cerr << "error: this configuration requires --kg\n";
                return 1;
            }
            graph = kgf::KnowledgeGraph::load_file(kg_path);
            graph_ptr = &graph;
        }

        auto provider = config.make_provider();  // fails fast on misconfiguration
        kgf::Gateway gateway(provider, config.gateway);
        kgf::PromptSet prompts = config.prompt_set();
        const std::string config_hash = config.hash();

        bool consolidate_run = config.consolidation != kgf::ConsolidationMode::Off &&
                               (config.pipeline.mode == kgf::PipelineMode::Full ||
                                config.pipeline.mode == kgf::PipelineMode::FollowupQ);

        std::vector<std::string> lines(conversations.size());
        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> failures{0};
        auto worker = [&]() {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= conversations.size()) break;
                const kgf::Conversation& conv = conversations[i];
                json record;
                record["instance_id"] = conv.instance_id;
                try {
                    kgf::PipelineConfig pipe_config = config.pipeline;
                    pipe_config.seed = config.seed;
                    kgf::QuestionPipeline pipeline(graph_ptr, &gateway, prompts, pipe_config);
                    kgf::PipelineResult result = pipeline.run(conv);
                    std::size_t pre_count = result.set.questions.size();

                    kgf::QuestionSet final_set = std::move(result.set);
                    std::size_t merge_calls = 0;
                    if (consolidate_run) {
                        auto outcome = kgf::consolidate(final_set, gateway, prompts,
                                                        config.pipeline.budget,
                                                        kgf::mix_seed(config.seed, conv.instance_id),
                                                        config.consolidation);
                        final_set = std::move(outcome.set);
                        merge_calls = outcome.merge_calls;
                        for (const auto& f : outcome.flags) result.info.flags.push_back(f);
                    }

                    json questions = json::array();
                    for (const auto& q : final_set.questions) questions.push_back(question_to_json(q));
                    record["questions"] = std::move(questions);

                    json meta;
                    meta["config_hash"] = config_hash;
                    meta["prompt_hash"] = prompts.set_hash();
                    meta["provider"] = gateway.provider_name();
                    meta["mode"] = kgf::pipeline_mode_name(config.pipeline.mode);
                    meta["pre_consolidation_count"] = pre_count;
                    meta["consolidated"] = consolidate_run;
                    meta["merge_calls"] = merge_calls;
                    meta["hard_case"] = result.info.hard_case;
                    meta["skipped_pairs"] = result.info.skipped_pairs;
                    meta["graph_search_calls"] = result.info.graph_search_calls;
                    meta["channel_counts"] = result.info.channel_counts;
                    meta["flags"] = result.info.flags;
                    record["metadata"] = std::move(meta);
                } catch (const std::exception& e) {
                    record["failed"] = true;
                    record["error"] = e.what();
                    failures.fetch_add(1);
                }
                lines[i] = record.dump();
            }
        };
        int jobs = std::max(config.jobs, 1);
        if (jobs == 1) {
            worker();
        } else {
            std::vector<std::thread> threads;
            for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
            for (auto& t : threads) t.join();
        }

        std::ofstream out(out_path);
        if (!out) {
            std::cerr << "error: cannot write " << out_path << "\n";
            return 1;
        }
        for (const auto& line : lines) out << line << "\n";
        std::cout << "instances=" << conversations.size() << " failures=" << failures.load()
                  << " config=" << config_hash << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_pool(const CommonFlags& flags, const std::string& dev_path, const std::string& kg_path,
             const std::string& strategy_name, const std::string& out_path,
             const std::string& recall_report_path) {
    try {
        kgf::RunConfig config = resolve_config(flags);
        config.kg_path = kg_path;
        config.data_path = dev_path;
        auto dev = kgf::load_benchmark_file(dev_path, kgf::BenchmarkDialect::Unweighted);
        kgf::PoolStrategy strategy = kgf::parse_pool_strategy(strategy_name);

        kgf::KnowledgeGraph graph;
        const kgf::KnowledgeGraph* graph_ptr = nullptr;
        if (strategy == kgf::PoolStrategy::KgHard) {
            if (kg_path.empty()) {
                std::cerr << "error: kg-hard strategy requires --kg\n";
                return 1;
            }
            graph = kgf::KnowledgeGraph::load_file(kg_path);
            graph_ptr = &graph;
        }

        std::map<std::string, double> recalls;
        const std::map<std::string, double>* recalls_ptr = nullptr;
        if (strategy == kgf::PoolStrategy::SupervisedHard) {
            if (recall_report_path.empty()) {
                std::cerr << "error: supervised-hard requires --recall-report <eval report JSON> with "
                             "per-instance recalls\n";
                return 1;
            }
            std::ifstream in(recall_report_path);
            if (!in) {
                std::cerr << "error: cannot open recall report " << recall_report_path << "\n";
                return 1;
            }
            json report = json::parse(in);
            for (const auto& row : report.at("rows")) {
                if (row.contains("recall")) {
                    recalls[row.at("instance_id").get<std::string>()] = row["recall"].get<double>();
                }
            }
            recalls_ptr = &recalls;
        }

        auto provider = config.make_provider();
        kgf::Gateway gateway(provider, config.gateway);
        kgf::PromptSet prompts = config.prompt_set();

        kgf::ICLPool pool = kgf::build_pool(dev, graph_ptr, gateway, prompts, config.pipeline.linker,
                                            strategy, config.seed, recalls_ptr);
        std::ofstream out(out_path);
        if (!out) {
            std::cerr << "error: cannot write " << out_path << "\n";
            return 1;
        }
        kgf::save_pool(pool, out, config.hash());
        std::cout << "pool strategy=" << kgf::pool_strategy_name(pool.strategy)
                  << " size=" << pool.examples.size() << "\n";
        return 0;
    } catch (const kgf::PoolError& e) {
        std::cerr << "pool error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

struct SweepPoint {
    std::string method;
    int k = 0;
    int t = -1;
    long long seed = -1;
};

int cmd_eval(const CommonFlags& flags, const std::string& benchmark_path, const std::string& kg_path,
             const std::string& method_name, const std::string& judge_kind, const std::string& dialect_name,
             const std::string& out_path, const std::string& pool_path, const std::string& dev_path,
             const std::string& sweep_path) {
    try {
        kgf::RunConfig base = resolve_config(flags);
        base.kg_path = kg_path;
        base.data_path = benchmark_path;
        if (!judge_kind.empty()) base.judge.kind = judge_kind == "deterministic" ? "deterministic" : judge_kind;

        kgf::BenchmarkDialect dialect;
        if (dialect_name == "weighted") {
            dialect = kgf::BenchmarkDialect::Weighted;
        } else if (dialect_name == "unweighted") {
            dialect = kgf::BenchmarkDialect::Unweighted;
        } else {
            std::cerr << "error: unknown dialect '" << dialect_name << "'\n";
            return 1;
        }
        auto instances = kgf::load_benchmark_file(benchmark_path, dialect);

        kgf::KnowledgeGraph graph;
        const kgf::KnowledgeGraph* graph_ptr = nullptr;
        if (!kg_path.empty()) {
            graph = kgf::KnowledgeGraph::load_file(kg_path);
            graph_ptr = &graph;
        }

        auto provider = base.make_provider();
        kgf::Gateway gateway(provider, base.gateway);
        kgf::PromptSet prompts = base.prompt_set();
        auto judge = make_judge(base, gateway, prompts);

        kgf::ICLPool pool;
        const kgf::ICLPool* pool_ptr = nullptr;
        if (!pool_path.empty()) {
            if (dev_path.empty()) {
                std::cerr << "error: --pool requires --dev (the dev-set file the pool was built from)\n";
                return 1;
            }
            auto dev = kgf::load_benchmark_file(dev_path, kgf::BenchmarkDialect::Unweighted);
            std::ifstream in(pool_path);
            if (!in) {
                std::cerr << "error: cannot open pool " << pool_path << "\n";
                return 1;
            }
            pool = kgf::load_pool(in, dev);
            pool_ptr = &pool;
        }

        // Build the grid: a single point unless a sweep spec is given.
        std::vector<SweepPoint> grid;
        if (!sweep_path.empty()) {
            std::ifstream in(sweep_path);
            if (!in) {
                std::cerr << "error: cannot open sweep spec " << sweep_path << "\n";
                return 1;
            }
            json spec = json::parse(in);
            std::vector<std::string> methods;
            if (spec.contains("methods")) {
                for (const auto& m : spec["methods"]) methods.push_back(m.get<std::string>());
            } else {
                methods.push_back(method_name);
            }
            std::vector<int> ks = spec.value("k", std::vector<int>{0});
            std::vector<int> ts = spec.value("t", std::vector<int>{-1});
            std::vector<long long> seeds = spec.value("seeds", std::vector<long long>{-1});
            for (const auto& m : methods) {
                for (int k : ks) {
                    for (int t : ts) {
                        for (long long s : seeds) grid.push_back(SweepPoint{m, k, t, s});
                    }
                }
            }
        } else {
            grid.push_back(SweepPoint{method_name, 0, -1, -1});
        }

        for (const auto& point : grid) {
            kgf::EvalMethod method = kgf::parse_eval_method(point.method);
            kgf::RunConfig config = base;
            if (point.k > 0) {
                config.pipeline.budget = point.k;
            }
            if (point.t >= 0) config.pipeline.icl_shots = point.t;
            if (point.seed >= 0) config.seed = static_cast<std::uint64_t>(point.seed);

            kgf::EvalConfig eval_config;
            eval_config.pipeline = config.pipeline;
            eval_config.consolidation = config.consolidation;
            eval_config.zero_shot_k = point.k;
            eval_config.seed = config.seed;
            eval_config.jobs = config.jobs;
            eval_config.config_hash = config.hash();

            kgf::EvalReport report = kgf::run_benchmark(method, instances, graph_ptr, gateway, prompts,
                                                        *judge, eval_config, pool_ptr);

            std::string path = out_path;
            if (grid.size() > 1) {
                fs::path p(out_path);
                std::string stem = p.stem().string();
                std::string suffix = "." + point.method;
                if (point.k > 0) suffix += "_k" + std::to_string(point.k);
                if (point.t >= 0) suffix += "_t" + std::to_string(point.t);
                if (point.seed >= 0) suffix += "_s" + std::to_string(point.seed);
                path = (p.parent_path() / (stem + suffix + p.extension().string())).string();
            }
            std::ofstream out(path);
            if (!out) {
                std::cerr << "error: cannot write " << path << "\n";
                return 1;
            }
            out << kgf::report_to_json(report) << "\n";
            std::cout << report.method << ": recall=" << report.mean_recall
                      << " count=" << report.mean_count << " failures=" << report.failures << " -> "
                      << path << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KG-Followup: knowledge-graph-guided clinical follow-up question generation"};
    app.require_subcommand(1);

    // kg-ingest
    std::string ingest_input, ingest_format = "primekg", ingest_output;
    auto* ingest = app.add_subcommand("kg-ingest", "Compile an edge list into the binary graph index");
    ingest->add_option("--input", ingest_input, "Edge-list file")->required();
    ingest->add_option("--format", ingest_format, "Dialect: primekg | compact");
    ingest->add_option("--output", ingest_output, "Index output path")->required();

    // run
    CommonFlags run_flags;
    std::string run_conversations, run_kg, run_out, run_mode;
    std::vector<std::string> run_channels;
    bool run_no_consolidate = false;
    auto* run = app.add_subcommand("run", "Generate follow-up questions for conversations");
    run->add_option("--conversations", run_conversations, "Conversations JSONL")->required();
    run->add_option("--kg", run_kg, "Graph index or edge list");
    run->add_option("--out", run_out, "Output JSONL")->required();
    run->add_option("--mode", run_mode, "full | zero-shot-u | zero-shot-k | followupq");
    run->add_option("--channel", run_channels, "Channel switch, e.g. ehr-kg=off (repeatable)");
    run->add_flag("--no-consolidate", run_no_consolidate, "Skip question consolidation");
    add_common_flags(run, run_flags);

    // eval
    CommonFlags eval_flags;
    std::string eval_benchmark, eval_kg, eval_method = "kg-followup", eval_judge, eval_dialect = "weighted";
    std::string eval_out, eval_pool, eval_dev, eval_sweep;
    auto* eval = app.add_subcommand("eval", "Evaluate a method on a benchmark");
    eval->add_option("--benchmark", eval_benchmark, "Benchmark JSONL")->required();
    eval->add_option("--kg", eval_kg, "Graph index or edge list");
    eval->add_option("--method", eval_method,
                     "zero-shot-u | zero-shot-k | followupq | kg-followup | random-icl | active-icl");
    eval->add_option("--judge", eval_judge, "deterministic | llm");
    eval->add_option("--dialect", eval_dialect, "weighted | unweighted");
    eval->add_option("--out", eval_out, "Report output path")->required();
    eval->add_option("--pool", eval_pool, "ICL pool file (for *-icl methods)");
    eval->add_option("--dev", eval_dev, "Dev-set JSONL backing the pool");
    eval->add_option("--sweep", eval_sweep, "Sweep spec JSON: {methods, k, t, seeds}");
    add_common_flags(eval, eval_flags);

    // pool
    CommonFlags pool_flags;
    std::string pool_dev, pool_kg, pool_strategy = "random", pool_out, pool_recall_report;
    auto* pool = app.add_subcommand("pool", "Build an ICL example pool from a dev set");
    pool->add_option("--dev", pool_dev, "Dev-set JSONL")->required();
    pool->add_option("--kg", pool_kg, "Graph index or edge list");
    pool->add_option("--strategy", pool_strategy, "random | kg-hard | supervised-hard");
    pool->add_option("--out", pool_out, "Pool output path")->required();
    pool->add_option("--recall-report", pool_recall_report,
                     "Prior eval report with per-instance recalls (supervised-hard)");
    add_common_flags(pool, pool_flags);

    // prompts
    std::string prompts_out;
    auto* prompts = app.add_subcommand("prompts", "Export the active prompt templates");
    prompts->add_option("--out", prompts_out, "Directory to write <role>.txt files")->required();

    CLI11_PARSE(app, argc, argv);

    if (*ingest) return cmd_kg_ingest(ingest_input, ingest_format, ingest_output);
    if (*run) {
        return cmd_run(run_flags, run_conversations, run_kg, run_out, run_channels, run_no_consolidate,
                       run_mode);
    }
    if (*eval) {
        return cmd_eval(eval_flags, eval_benchmark, eval_kg, eval_method, eval_judge, eval_dialect,
                        eval_out, eval_pool, eval_dev, eval_sweep);
    }
    if (*pool) {
        return cmd_pool(pool_flags, pool_dev, pool_kg, pool_strategy, pool_out, pool_recall_report);
    }
    if (*prompts) {
        kgf::PromptSet::defaults().export_to_directory(prompts_out);
        std::cout << "prompts exported to " << prompts_out << "\n";
        return 0;
    }
    return 1;
}
