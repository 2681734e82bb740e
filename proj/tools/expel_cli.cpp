// SPDX-License-Identifier: Apache-2.0
#include <expel/error.hpp>
#include <expel/harness.hpp>
#include <expel/transfer.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <optional>

using namespace expel;

namespace
{

constexpr auto kExitOk = 0;
constexpr auto kExitRunFailure = 1;
constexpr auto kExitConfigError = 2;

/// Options shared by the stage subcommands. Anything set here overrides the config file.
struct CommonOptions
{
    std::string config;
    std::string env;
    std::string data;
    std::string models;
    std::optional<int> max_retries;
    std::optional<int> max_steps;
    std::optional<int> k;
    std::optional<int> chunk;
    std::optional<std::uint64_t> seed;
    bool quiet = false;

    void attach(CLI::App& app)
    {
        app.add_option("-c,--config", config, "Run configuration (JSON)");
        app.add_option("-e,--env", env, "Environment: toyqa, toyfever, toyshop, household");
        app.add_option("--data", data, "Data directory holding environments and prompts");
        app.add_option("--models", models, "JSON file mapping roles (actor, reflector, extractor, transfer, default) to backends");
        app.add_option("--max-retries", max_retries, "Retries per task while gathering (Z)");
        app.add_option("--max-steps", max_steps, "Step cap per episode (H)");
        app.add_option("-k,--fewshots", k, "Demonstrations per prompt");
        app.add_option("--chunk-size", chunk, "Successes per extraction batch (L)");
        app.add_option("--seed", seed, "Seed for chunking, folds, embedding and random retrieval");
        app.add_flag("-q,--quiet", quiet, "Suppress progress output");
    }

    [[nodiscard]] RunConfig resolve() const
    {
        auto record = nlohmann::json::object();
        auto base = std::filesystem::current_path();
        if (!config.empty())
        {
            std::ifstream in(config);
            if (!in)
                throw ConfigError(fmt::format("cannot open configuration '{}'", config));
            try
            {
                record = nlohmann::json::parse(in);
            }
            catch (nlohmann::json::exception const& e)
            {
                throw ConfigError(fmt::format("'{}': {}", config, e.what()));
            }
            base = std::filesystem::absolute(config).parent_path();
        }
        if (!env.empty())
            record["env"] = env;
        if (!record.contains("env"))
            throw ConfigError("no environment given (use --env or a config file)");
        if (!data.empty())
            record["data_dir"] = std::filesystem::absolute(data).string();
        if (!models.empty())
        {
            std::ifstream in(models);
            if (!in)
                throw ConfigError(fmt::format("cannot open model file '{}'", models));
            auto spec = nlohmann::json::parse(in);
            auto const modelBase = std::filesystem::absolute(models).parent_path();
            for (auto& [role, entry]: spec.items())
                if (entry.contains("path") && std::filesystem::path(entry.at("path").get<std::string>()).is_relative())
                    entry["path"] = (modelBase / entry.at("path").get<std::string>()).string();
            record["models"] = spec;
        }
        if (max_retries)
            record["max_retries"] = *max_retries;
        if (max_steps)
            record["max_steps"] = *max_steps;
        if (k)
            record["fewshot_k"] = *k;
        if (chunk)
            record["success_chunk_size"] = *chunk;
        if (seed)
            record["seeds"] = { { "chunking", *seed }, { "folds", *seed }, { "embedder", *seed }, { "retrieval", *seed } };
        return run_config_from_json(record, base);
    }

    [[nodiscard]] Progress progress() const
    {
        if (quiet)
            return {};
        return [](std::string_view line) { std::cerr << line << '\n'; };
    }
};

std::vector<std::string> split_ids(std::string const& list)
{
    auto ids = std::vector<std::string> {};
    for (auto const part: split_lines(list))
        for (auto piece = std::string_view(part); !piece.empty();)
        {
            auto const comma = piece.find(',');
            auto const id = trim(piece.substr(0, comma));
            if (!id.empty())
                ids.emplace_back(id);
            piece = comma == std::string_view::npos ? std::string_view {} : piece.substr(comma + 1);
        }
    return ids;
}

} // namespace

int main(int argc, char** argv)
{
    auto app = CLI::App { "Experiential learning for prompt-driven agents: gather, extract, evaluate, transfer." };
    app.require_subcommand(1);

    // gather
    auto gatherOpts = CommonOptions {};
    auto gatherPool = std::string {};
    auto gatherTasks = std::string {};
    auto* gatherCmd = app.add_subcommand("gather", "Collect trajectories with retry-and-reflect");
    gatherOpts.attach(*gatherCmd);
    gatherCmd->add_option("-p,--pool", gatherPool, "Output experience pool (JSONL)")->required();
    gatherCmd->add_option("-t,--tasks", gatherTasks, "Comma-separated task ids (default: all)");

    // extract
    auto extractOpts = CommonOptions {};
    auto extractPool = std::string {};
    auto extractInsights = std::string {};
    auto extractReflections = false;
    auto extractNoManual = false;
    auto* extractCmd = app.add_subcommand("extract", "Distill insights from an experience pool");
    extractOpts.attach(*extractCmd);
    extractCmd->add_option("-p,--pool", extractPool, "Experience pool (JSONL)")->required();
    extractCmd->add_option("-o,--insights", extractInsights, "Output insight file (JSON)")->required();
    extractCmd->add_flag("--with-reflections", extractReflections, "Show reflections to the extractor");
    extractCmd->add_flag("--exclude-manual", extractNoManual, "Leave the manual demonstrations out of success batches");

    // eval
    auto evalOpts = CommonOptions {};
    auto evalPool = std::string {};
    auto evalInsights = std::string {};
    auto evalIndex = std::string {};
    auto evalOut = std::string {};
    auto evalMode = std::string { "full" };
    auto evalStrategy = std::string { "task" };
    auto evalTasks = std::string {};
    auto evalBuildIndex = false;
    auto* evalCmd = app.add_subcommand("eval", "Evaluate with insights and retrieved demonstrations");
    evalOpts.attach(*evalCmd);
    evalCmd->add_option("-p,--pool", evalPool, "Experience pool (JSONL)");
    evalCmd->add_option("-i,--insights", evalInsights, "Insight file (JSON)");
    evalCmd->add_option("--index", evalIndex, "Embedding index file (built next to the pool if absent)");
    evalCmd->add_flag("--build-index", evalBuildIndex, "Rebuild the index even if the file exists");
    evalCmd->add_option("-o,--out", evalOut, "Output directory")->required();
    evalCmd->add_option("-m,--mode", evalMode, "full, insights_only, retrieve_only or base");
    evalCmd->add_option("--retrieval", evalStrategy, "task, reason or random");
    evalCmd->add_option("-t,--tasks", evalTasks, "Comma-separated task ids (default: all)");

    // transfer
    auto transferOpts = CommonOptions {};
    auto transferSource = std::string {};
    auto transferSourceTask = std::string {};
    auto transferTargetTask = std::string {};
    auto transferFewshots = std::string {};
    auto transferNoDemos = false;
    auto transferOut = std::string {};
    auto* transferCmd = app.add_subcommand("transfer", "Adapt an insight set to another task family (--env is the target)");
    transferOpts.attach(*transferCmd);
    transferCmd->add_option("-s,--source-insights", transferSource, "Source insight file")->required();
    transferCmd->add_option("--source-task", transferSourceTask, "Source task family description")->required();
    transferCmd->add_option("--target-task", transferTargetTask, "Target task family description (default: the target environment's)");
    transferCmd->add_option("-d,--demos", transferFewshots, "Target demonstrations (JSONL; default: the target's manual ones)");
    transferCmd->add_flag("--no-demos", transferNoDemos, "Render the prompt without target demonstrations");
    transferCmd->add_option("-o,--out", transferOut, "Output insight file")->required();

    // report
    auto reportInputs = std::vector<std::string> {};
    auto reportOut = std::string {};
    auto* reportCmd = app.add_subcommand("report", "Mean and standard error over per-fold metrics files");
    reportCmd->add_option("metrics", reportInputs, "metrics.json files, one per fold")->required();
    reportCmd->add_option("-o,--out", reportOut, "Write report.json and report.txt here");

    // pipeline
    auto pipelineConfig = std::string {};
    auto pipelineFrom = std::string { "gather" };
    auto pipelineQuiet = false;
    auto pipelineParallel = false;
    auto* pipelineCmd = app.add_subcommand("pipeline", "gather, extract, index and eval for every fold, then report");
    pipelineCmd->add_option("-c,--config", pipelineConfig, "Run configuration (JSON)")->required();
    pipelineCmd->add_option("--from", pipelineFrom, "First stage to run: gather, extract, index, eval, report");
    pipelineCmd->add_flag("-q,--quiet", pipelineQuiet, "Suppress progress output");
    pipelineCmd->add_flag("--parallel-folds", pipelineParallel, "Run folds concurrently");

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        auto const code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try
    {
        if (*gatherCmd)
        {
            auto const config = gatherOpts.resolve();
            auto gateway = Gateway {};
            configure_gateway(gateway, config);
            auto const result = run_gather_stage(config, gateway, resolve_tasks(config, split_ids(gatherTasks)), gatherPool,
                                                 gatherOpts.progress());
            for (auto const& skipped: result.skipped)
                std::cerr << fmt::format("skipped {}: {}\n", skipped.task_id, skipped.reason);
            std::cout << fmt::format("pool {}: {} trajectories ({} manual), {} trials\n", gatherPool, result.pool.size(),
                                     result.pool.manual_count(), result.trials_executed);
        }
        else if (*extractCmd)
        {
            auto config = extractOpts.resolve();
            config.extract_with_reflections = config.extract_with_reflections || extractReflections;
            config.include_manual = config.include_manual && !extractNoManual;
            auto gateway = Gateway {};
            configure_gateway(gateway, config);
            auto const result = run_extract_stage(config, gateway, extractPool, extractInsights, extractOpts.progress());
            std::cout << fmt::format("insights {}: {} insights from {} batches ({} skipped, {} lines rejected)\n",
                                     extractInsights, result.insights.size(), result.batches,
                                     result.skipped_batches.size(), result.rejected.size());
        }
        else if (*evalCmd)
        {
            auto config = evalOpts.resolve();
            config.retrieval = retrieval_strategy_from_string(evalStrategy);
            auto const mode = eval_mode_from_string(evalMode);
            auto const index = !evalIndex.empty() ? std::filesystem::path(evalIndex)
                                                  : std::filesystem::path(evalOut) / config.paths.index;
            if (uses_retrieval(mode) && evalPool.empty())
                throw ConfigError(fmt::format("mode {} needs --pool", evalMode));
            if (uses_insights(mode) && evalInsights.empty())
                throw ConfigError(fmt::format("mode {} needs --insights", evalMode));
            std::filesystem::create_directories(evalOut);
            if (uses_retrieval(mode) && (evalBuildIndex || !std::filesystem::exists(index)))
                (void) run_index_stage(config, evalPool, index);
            auto gateway = Gateway {};
            configure_gateway(gateway, config);
            auto const result = run_eval_stage(config, gateway, resolve_tasks(config, split_ids(evalTasks)), mode, evalPool,
                                               evalInsights, index, evalOut, evalOpts.progress());
            auto const& m = result.metrics;
            std::cout << fmt::format("{} {}: solved {}/{} (rate {:.4f}, mean reward {:.4f})\n", config.env, evalMode,
                                     m.success_count, m.task_count, m.success_rate, m.mean_reward);
        }
        else if (*transferCmd)
        {
            auto const config = transferOpts.resolve();
            auto const lib = PromptLibrary::load(config.data_dir, config.env);
            auto spec = TransferSpec {
                .source_insights = load_insights(transferSource),
                .source_description = transferSourceTask,
                .target_description = transferTargetTask.empty() ? lib.description : transferTargetTask,
            };
            if (!transferNoDemos)
                spec.target_fewshots = transferFewshots.empty() ? lib.fewshots : load_trajectories(transferFewshots);
            auto gateway = Gateway {};
            configure_gateway(gateway, config);
            auto const adapted = finetune_insights(gateway, spec, TransferPrompts { lib.transfer_template, lib.transfer_fewshot_block });
            save_insights(transferOut, adapted, adapted);
            std::cout << fmt::format("insights {}: {} adapted insights\n", transferOut, adapted.size());
        }
        else if (*reportCmd)
        {
            auto folds = std::vector<FoldMetrics> {};
            for (auto const& path: reportInputs)
            {
                std::ifstream in(path);
                if (!in)
                    throw ConfigError(fmt::format("cannot open metrics file '{}'", path));
                folds.push_back(FoldMetrics { path, metrics_from_json(nlohmann::json::parse(in)) });
            }
            auto const report = make_report(std::move(folds));
            auto const text = render_report(report);
            std::cout << text;
            if (!reportOut.empty())
            {
                std::filesystem::create_directories(reportOut);
                std::ofstream(std::filesystem::path(reportOut) / "report.json") << to_json(report).dump(2) << '\n';
                std::ofstream(std::filesystem::path(reportOut) / "report.txt") << text;
            }
        }
        else if (*pipelineCmd)
        {
            auto config = load_run_config(pipelineConfig);
            config.parallel_folds = config.parallel_folds || pipelineParallel;
            auto const progress = pipelineQuiet ? Progress {} : Progress { [](std::string_view line) { std::cerr << line << '\n'; } };
            auto const result = run_pipeline(config, stage_from_string(pipelineFrom), progress);
            std::cout << fmt::format("report: {}\n", result.report_text.string());
            std::ifstream in(result.report_text);
            std::cout << in.rdbuf();
        }
    }
    catch (ConfigError const& e)
    {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfigError;
    }
    catch (ParseError const& e)
    {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfigError;
    }
    catch (nlohmann::json::exception const& e)
    {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfigError;
    }
    catch (std::exception const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRunFailure;
    }
    return kExitOk;
}
