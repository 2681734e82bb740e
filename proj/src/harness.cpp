// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"
#include "rng.hpp"

#include <expel/environment.hpp>
#include <expel/error.hpp>
#include <expel/harness.hpp>
#ifdef EXPEL_WITH_HTTP
    #include <expel/remote.hpp>
#endif

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <mutex>
#include <numeric>
#include <set>

namespace expel
{

// Folds ----------------------------------------------------------------------------------------

FoldPlan make_folds(std::span<std::string const> taskIds,
                    std::uint64_t seed,
                    std::size_t splits,
                    std::span<std::string const> taskTypes)
{
    if (taskIds.size() < 2)
        throw UsageError(fmt::format("folds need at least 2 tasks, got {}", taskIds.size()));
    if (splits < 1)
        throw UsageError("folds need at least one split");
    if (!taskTypes.empty() && taskTypes.size() != taskIds.size())
        throw UsageError("task types must be given for every task or for none");

    auto const n = taskIds.size();
    auto rng = detail::Rng(seed);
    auto plan = FoldPlan {};
    for (std::size_t s = 0; s < splits; ++s)
    {
        auto inFirst = std::vector<bool>(n, false);
        if (taskTypes.empty())
        {
            auto order = std::vector<std::size_t>(n);
            std::iota(order.begin(), order.end(), std::size_t { 0 });
            detail::shuffle(order, rng);
            for (std::size_t i = 0; i < (n + 1) / 2; ++i)
                inFirst[order[i]] = true;
        }
        else
        {
            auto groups = std::map<std::string, std::vector<std::size_t>> {};
            for (std::size_t i = 0; i < n; ++i)
                groups[taskTypes[i]].push_back(i);
            auto position = std::size_t { 0 };
            for (auto& [type, members]: groups)
            {
                detail::shuffle(members, rng);
                for (auto const i: members)
                    inFirst[i] = position++ % 2 == 0;
            }
        }

        auto first = FoldRun {};
        for (std::size_t i = 0; i < n; ++i)
            (inFirst[i] ? first.train : first.eval).push_back(taskIds[i]);
        plan.runs.push_back(first);
        plan.runs.push_back(FoldRun { first.eval, first.train });
    }
    return plan;
}

// Reporting ------------------------------------------------------------------------------------

MeanStdErr mean_and_std_error(std::span<double const> values)
{
    if (values.empty())
        throw UsageError("mean of an empty list");
    auto const n = static_cast<double>(values.size());
    auto const mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1)
        return MeanStdErr { mean, 0.0 };
    auto squares = 0.0;
    for (auto const v: values)
        squares += (v - mean) * (v - mean);
    return MeanStdErr { mean, std::sqrt(squares / (n - 1.0)) / std::sqrt(n) };
}

Report make_report(std::vector<FoldMetrics> folds)
{
    if (folds.empty())
        throw UsageError("a report needs at least one metrics record");

    auto report = Report { .folds = std::move(folds) };
    auto rates = std::vector<double> {};
    auto rewards = std::vector<double> {};
    auto trajectories = std::size_t { 0 };
    for (auto const& fold: report.folds)
    {
        auto const& m = fold.metrics;
        rates.push_back(m.success_rate);
        rewards.push_back(m.mean_reward);
        report.successes += m.success_count;
        report.failures += m.failed_count;
        report.halts += m.halted_count;
        for (auto const& t: m.per_trajectory)
        {
            report.averages.thoughts += static_cast<double>(t.thoughts);
            report.averages.actions += static_cast<double>(t.actions);
            report.averages.observations += static_cast<double>(t.observations);
            report.averages.invalid_actions += static_cast<double>(t.invalid_actions);
            ++trajectories;
        }
    }
    if (trajectories > 0)
    {
        auto const n = static_cast<double>(trajectories);
        report.averages.thoughts /= n;
        report.averages.actions /= n;
        report.averages.observations /= n;
        report.averages.invalid_actions /= n;
    }
    report.success_rate = mean_and_std_error(rates);
    report.mean_reward = mean_and_std_error(rewards);
    if (report.folds.size() == 1)
        report.warnings.emplace_back("single fold: standard error reported as 0");
    return report;
}

nlohmann::json to_json(Report const& report)
{
    auto folds = nlohmann::json::array();
    for (auto const& fold: report.folds)
        folds.push_back({ { "label", fold.label }, { "metrics", to_json(fold.metrics) } });
    return {
        { "folds", folds },
        { "success_rate", { { "mean", report.success_rate.mean }, { "std_error", report.success_rate.std_error } } },
        { "mean_reward", { { "mean", report.mean_reward.mean }, { "std_error", report.mean_reward.std_error } } },
        { "per_trajectory",
          {
              { "thoughts", report.averages.thoughts },
              { "actions", report.averages.actions },
              { "observations", report.averages.observations },
              { "invalid_actions", report.averages.invalid_actions },
          } },
        { "outcomes", { { "success", report.successes }, { "failed", report.failures }, { "halted", report.halts } } },
        { "warnings", report.warnings },
    };
}

std::string render_report(Report const& report, std::string_view title)
{
    auto out = std::string {};
    if (!title.empty())
        out += fmt::format("{}\n", title);
    out += fmt::format("{:<16} {:>9} {:>8} {:>11}\n", "fold", "solved", "rate", "mean_reward");
    for (auto const& fold: report.folds)
    {
        auto const& m = fold.metrics;
        out += fmt::format("{:<16} {:>9} {:>8.4f} {:>11.4f}\n", fold.label,
                           fmt::format("{}/{}", m.success_count, m.task_count), m.success_rate, m.mean_reward);
    }
    out += fmt::format("success rate  mean {:.4f}  std.error {:.4f}\n", report.success_rate.mean, report.success_rate.std_error);
    out += fmt::format("mean reward   mean {:.4f}  std.error {:.4f}\n", report.mean_reward.mean, report.mean_reward.std_error);
    out += fmt::format("outcomes      success {}  failed {}  halted {}\n", report.successes, report.failures, report.halts);
    out += fmt::format("per trajectory  thoughts {:.2f}  actions {:.2f}  observations {:.2f}  invalid {:.2f}\n",
                       report.averages.thoughts, report.averages.actions, report.averages.observations,
                       report.averages.invalid_actions);
    for (auto const& warning: report.warnings)
        out += fmt::format("warning: {}\n", warning);
    return out;
}

// Configuration --------------------------------------------------------------------------------

std::filesystem::path default_data_dir()
{
    if (auto const* env = std::getenv("EXPEL_DATA_DIR"); env != nullptr && *env != '\0')
        return env;
#ifdef EXPEL_DATA_DIR
    return EXPEL_DATA_DIR;
#else
    return "data";
#endif
}

namespace
{
    std::filesystem::path resolve(std::filesystem::path const& base, std::filesystem::path const& path)
    {
        return path.is_absolute() || base.empty() ? path : (base / path).lexically_normal();
    }

    // Scripted backend files are pinned to absolute paths so the resolved config can be reloaded from anywhere.
    void anchor_backend_paths(nlohmann::json& spec, std::filesystem::path const& base)
    {
        if (!spec.is_object())
            return;
        if (spec.contains("path") && spec.at("path").is_string())
            spec["path"] = std::filesystem::absolute(resolve(base, spec.at("path").get<std::string>())).lexically_normal().string();
        if (spec.contains("fallback"))
            anchor_backend_paths(spec["fallback"], base);
    }

    std::string role_key(ModelRole role)
    {
        return std::string(to_string(role));
    }

    constexpr auto kRoles = { ModelRole::Actor, ModelRole::Reflector, ModelRole::Extractor, ModelRole::Transfer };
} // namespace

RunConfig run_config_from_json(nlohmann::json const& record, std::filesystem::path const& baseDir)
{
    static auto const known = std::set<std::string> {
        "env",        "data_dir",         "output_dir",    "models", "embedder",
        "max_retries", "max_steps",       "fewshot_k",     "success_chunk_size",
        "reflection_fewshots", "seeds",   "modes",         "retrieval", "include_manual",
        "extract_with_reflections", "fold_splits", "stratify", "split", "tasks", "paths", "parallel_folds",
    };
    if (!record.is_object())
        throw ConfigError("run configuration must be a JSON object");
    for (auto const& [key, value]: record.items())
        if (!known.contains(key))
            throw ConfigError(fmt::format("unknown configuration key '{}'", key));

    auto config = RunConfig { .base_dir = baseDir };
    try
    {
        config.env = record.at("env").get<std::string>();
        auto const defaults = env_defaults(config.env);
        config.max_retries = record.value("max_retries", defaults.max_retries);
        config.max_steps = record.value("max_steps", defaults.max_steps);
        config.fewshot_k = record.value("fewshot_k", defaults.fewshot_k);
        config.success_chunk_size = record.value("success_chunk_size", defaults.success_chunk_size);
        config.reflection_fewshots = record.value("reflection_fewshots", defaults.reflection_fewshots);

        config.data_dir = record.contains("data_dir") ? resolve(baseDir, record.at("data_dir").get<std::string>())
                                                      : default_data_dir();
        config.output_dir = resolve(baseDir, record.value("output_dir", std::string("runs/") + config.env));

        if (record.contains("models"))
        {
            auto const& models = record.at("models");
            for (auto const& [key, value]: models.items())
                if (key != "default")
                    config.models[model_role_from_string(key)] = value;
            if (models.contains("default"))
                for (auto const role: kRoles)
                    if (!config.models.contains(role))
                        config.models[role] = models.at("default");
            for (auto& [role, spec]: config.models)
                anchor_backend_paths(spec, baseDir);
        }
        config.embedder = record.value("embedder", config.embedder);

        if (record.contains("seeds"))
        {
            auto const& seeds = record.at("seeds");
            for (auto const& [key, value]: seeds.items())
                if (key != "chunking" && key != "folds" && key != "embedder" && key != "retrieval")
                    throw ConfigError(fmt::format("unknown seed '{}'", key));
            config.seeds.chunking = seeds.value("chunking", config.seeds.chunking);
            config.seeds.folds = seeds.value("folds", config.seeds.folds);
            config.seeds.embedder = seeds.value("embedder", config.seeds.embedder);
            config.seeds.retrieval = seeds.value("retrieval", config.seeds.retrieval);
        }
        if (record.contains("modes"))
        {
            config.modes.clear();
            for (auto const& mode: record.at("modes"))
                config.modes.push_back(eval_mode_from_string(mode.get<std::string>()));
        }
        if (record.contains("retrieval"))
            config.retrieval = retrieval_strategy_from_string(record.at("retrieval").get<std::string>());
        config.include_manual = record.value("include_manual", config.include_manual);
        config.extract_with_reflections = record.value("extract_with_reflections", config.extract_with_reflections);
        config.fold_splits = record.value("fold_splits", config.fold_splits);
        config.stratify = record.value("stratify", config.stratify);
        config.parallel_folds = record.value("parallel_folds", config.parallel_folds);
        if (record.contains("split"))
            config.split = FoldRun {
                record.at("split").at("train").get<std::vector<std::string>>(),
                record.at("split").at("eval").get<std::vector<std::string>>(),
            };
        config.tasks = record.value("tasks", config.tasks);
        if (record.contains("paths"))
        {
            auto const& paths = record.at("paths");
            config.paths.pool = paths.value("pool", config.paths.pool);
            config.paths.insights = paths.value("insights", config.paths.insights);
            config.paths.index = paths.value("index", config.paths.index);
            config.paths.reports = paths.value("reports", config.paths.reports);
        }
    }
    catch (nlohmann::json::exception const& e)
    {
        throw ConfigError(fmt::format("run configuration: {}", e.what()));
    }

    if (config.max_retries < 0 || config.max_steps < 1 || config.fewshot_k < 0 || config.success_chunk_size < 1
        || config.reflection_fewshots < 0)
        throw ConfigError("run configuration: need max_retries >= 0, max_steps >= 1, fewshot_k >= 0, "
                          "success_chunk_size >= 1, reflection_fewshots >= 0");
    if (config.modes.empty())
        throw ConfigError("run configuration: at least one evaluation mode is required");
    if (config.fold_splits < 1)
        throw ConfigError("run configuration: fold_splits must be >= 1");
    return config;
}

RunConfig load_run_config(std::filesystem::path const& path)
{
    auto const record = detail::read_json_file(path);
    return run_config_from_json(record, path.parent_path());
}

nlohmann::json to_json(RunConfig const& config)
{
    auto models = nlohmann::json::object();
    for (auto const& [role, spec]: config.models)
        models[role_key(role)] = spec;
    auto modes = nlohmann::json::array();
    for (auto const mode: config.modes)
        modes.push_back(to_string(mode));
    auto record = nlohmann::json {
        { "env", config.env },
        { "data_dir", std::filesystem::absolute(config.data_dir).lexically_normal().string() },
        { "output_dir", std::filesystem::absolute(config.output_dir).lexically_normal().string() },
        { "models", models },
        { "embedder", config.embedder },
        { "max_retries", config.max_retries },
        { "max_steps", config.max_steps },
        { "fewshot_k", config.fewshot_k },
        { "success_chunk_size", config.success_chunk_size },
        { "reflection_fewshots", config.reflection_fewshots },
        { "seeds",
          {
              { "chunking", config.seeds.chunking },
              { "folds", config.seeds.folds },
              { "embedder", config.seeds.embedder },
              { "retrieval", config.seeds.retrieval },
          } },
        { "modes", modes },
        { "retrieval", to_string(config.retrieval) },
        { "include_manual", config.include_manual },
        { "extract_with_reflections", config.extract_with_reflections },
        { "fold_splits", config.fold_splits },
        { "stratify", config.stratify },
        { "parallel_folds", config.parallel_folds },
        { "tasks", config.tasks },
        { "paths",
          {
              { "pool", config.paths.pool },
              { "insights", config.paths.insights },
              { "index", config.paths.index },
              { "reports", config.paths.reports },
          } },
    };
    if (config.split)
        record["split"] = { { "train", config.split->train }, { "eval", config.split->eval } };
    return record;
}

std::shared_ptr<CompletionBackend const> make_backend(nlohmann::json const& spec, std::filesystem::path const& baseDir)
{
    auto const type = spec.value("type", std::string("scripted"));
    if (type == "scripted")
    {
        if (!spec.contains("path"))
            return ScriptedBackend::from_json(spec);
        auto file = detail::read_json_file(resolve(baseDir, spec.at("path").get<std::string>()));
        if (spec.contains("section"))
            file = file.at(spec.at("section").get<std::string>());
        return ScriptedBackend::from_json(file);
    }
    if (type == "remote")
    {
#ifdef EXPEL_WITH_HTTP
        return std::make_shared<RemoteChatBackend>(RemoteEndpoint::from_json(spec));
#else
        throw ConfigError("this build has no HTTP support; remote backends are unavailable");
#endif
    }
    throw ConfigError(fmt::format("unknown backend type '{}'", type));
}

std::unique_ptr<Embedder> make_embedder(RunConfig const& config)
{
    auto const type = config.embedder.value("type", std::string("hash"));
    if (type == "hash")
        return std::make_unique<HashEmbedder>(config.seeds.embedder,
                                              config.embedder.value("dimension", HashEmbedder::kDefaultDimension));
    if (type == "remote")
    {
#ifdef EXPEL_WITH_HTTP
        return std::make_unique<RemoteEmbedder>(RemoteEndpoint::from_json(config.embedder),
                                                config.embedder.at("dimension").get<std::size_t>());
#else
        throw ConfigError("this build has no HTTP support; remote embedders are unavailable");
#endif
    }
    throw ConfigError(fmt::format("unknown embedder type '{}'", type));
}

void configure_gateway(Gateway& gateway, RunConfig const& config)
{
    try
    {
        for (auto const& [role, spec]: config.models)
            gateway.set_backend(role, make_backend(spec, config.base_dir),
                                spec.contains("fallback") ? make_backend(spec.at("fallback"), config.base_dir) : nullptr);
    }
    catch (nlohmann::json::exception const& e)
    {
        throw ConfigError(fmt::format("model configuration: {}", e.what()));
    }
}

EnvFactory env_factory(RunConfig const& config)
{
    return [env = config.env, dir = config.data_dir](Task const&) { return make_environment(env, dir); };
}

std::vector<Task> resolve_tasks(RunConfig const& config, std::span<std::string const> ids)
{
    auto const env = make_environment(config.env, config.data_dir);
    auto all = env->tasks();
    if (!config.tasks.empty())
    {
        auto const allowed = std::set<std::string>(config.tasks.begin(), config.tasks.end());
        std::erase_if(all, [&](Task const& t) { return !allowed.contains(t.id); });
    }
    if (ids.empty())
        return all;
    auto selected = std::vector<Task> {};
    for (auto const& id: ids)
    {
        auto const it = std::ranges::find(all, id, &Task::id);
        if (it == all.end())
            throw ConfigError(fmt::format("task '{}' is not a task of {}", id, config.env));
        selected.push_back(*it);
    }
    return selected;
}

FoldPlan plan_folds(RunConfig const& config)
{
    if (config.split)
        return FoldPlan { { *config.split } };
    auto ids = std::vector<std::string> {};
    auto types = std::vector<std::string> {};
    for (auto const& task: resolve_tasks(config))
    {
        ids.push_back(task.id);
        types.push_back(task.task_type.value_or(""));
    }
    try
    {
        return make_folds(ids, config.seeds.folds, config.fold_splits,
                          config.stratify ? std::span<std::string const>(types) : std::span<std::string const> {});
    }
    catch (UsageError const& e)
    {
        throw ConfigError(e.what());
    }
}

// Stages ---------------------------------------------------------------------------------------

namespace
{
    void require_file(std::filesystem::path const& path, std::string_view what)
    {
        if (!std::filesystem::exists(path))
            throw std::runtime_error(fmt::format("{} not found: {}", what, path.string()));
    }
} // namespace

GatherResult run_gather_stage(RunConfig const& config,
                              Gateway& gateway,
                              std::vector<Task> tasks,
                              std::filesystem::path const& poolPath,
                              Progress const& progress)
{
    auto const lib = PromptLibrary::load(config.data_dir, config.env);
    auto const gatherConfig = GatherConfig {
        .max_retries = config.max_retries,
        .max_steps = config.max_steps,
        .tasks = std::move(tasks),
        .manual_fewshots = lib.fewshots,
        .instruction = lib.instruction,
        .reflection = ReflectionPrompt { lib.reflection_template, lib.reflection_examples, config.reflection_fewshots },
    };
    auto hooks = GatherHooks {
        .progress = progress,
        .on_task = [&](ExperiencePool const& pool) { save_pool(pool, poolPath); },
    };
    auto result = gather(gatherConfig, env_factory(config), gateway, hooks);
    save_pool(result.pool, poolPath);
    return result;
}

ExtractionResult run_extract_stage(RunConfig const& config,
                                   Gateway& gateway,
                                   std::filesystem::path const& poolPath,
                                   std::filesystem::path const& insightsPath,
                                   Progress const& progress)
{
    require_file(poolPath, "experience pool");
    auto const pool = load_pool(poolPath);
    auto const lib = PromptLibrary::load(config.data_dir, config.env);
    auto const prompts = ExtractionPrompts { lib.extraction_template, lib.extraction_compare_intro, lib.extraction_success_intro };
    auto const options = ExtractionOptions {
        .chunk_size = static_cast<std::size_t>(config.success_chunk_size),
        .seed = config.seeds.chunking,
        .include_reflections = config.extract_with_reflections,
        .include_manual = config.include_manual,
    };
    auto result = extract_insights(gateway, pool, prompts, options, {}, progress);
    save_insights(insightsPath, result.insights);

    auto rejected = nlohmann::json::array();
    for (auto const& r: result.rejected)
        rejected.push_back({ { "line", r.line }, { "reason", r.reason } });
    auto const log = nlohmann::json {
        { "batches", result.batches },
        { "skipped_batches", result.skipped_batches },
        { "rejected", rejected },
    };
    detail::write_text_file(insightsPath.parent_path() / (insightsPath.stem().string() + ".log.json"), log.dump(2) + "\n");
    return result;
}

EmbeddingIndex run_index_stage(RunConfig const& config,
                               std::filesystem::path const& poolPath,
                               std::filesystem::path const& indexPath)
{
    require_file(poolPath, "experience pool");
    auto const pool = load_pool(poolPath);
    auto const embedder = make_embedder(config);
    auto index = EmbeddingIndex::build(pool, *embedder, config.include_manual);
    index.save(indexPath);
    return index;
}

EvalResult run_eval_stage(RunConfig const& config,
                          Gateway& gateway,
                          std::vector<Task> tasks,
                          EvalMode mode,
                          std::filesystem::path const& poolPath,
                          std::filesystem::path const& insightsPath,
                          std::filesystem::path const& indexPath,
                          std::filesystem::path const& outDir,
                          Progress const& progress)
{
    auto const lib = PromptLibrary::load(config.data_dir, config.env);
    auto insights = InsightSet {};
    if (uses_insights(mode))
    {
        require_file(insightsPath, "insight file");
        insights = load_insights(insightsPath);
    }

    auto pool = ExperiencePool {};
    auto index = EmbeddingIndex {};
    auto thoughts = EmbeddingIndex {};
    auto const embedder = make_embedder(config);
    auto retrieval = RetrievalContext {};
    if (uses_retrieval(mode))
    {
        require_file(poolPath, "experience pool");
        pool = load_pool(poolPath);
        index = std::filesystem::exists(indexPath) ? EmbeddingIndex::load(indexPath) : run_index_stage(config, poolPath, indexPath);
        if (!index.empty() && index.embedder_id() != embedder->id())
            throw ConfigError(fmt::format("index {} was built with embedder '{}', configuration uses '{}'",
                                          indexPath.string(), index.embedder_id(), embedder->id()));
        if (config.retrieval == RetrievalStrategy::ReasonSimilarity)
            thoughts = EmbeddingIndex::build_thoughts(pool, *embedder, config.include_manual);
        retrieval = RetrievalContext { &pool, &index, &thoughts, embedder.get() };
    }

    auto const evalConfig = EvalConfig {
        .tasks = std::move(tasks),
        .k = config.fewshot_k,
        .max_steps = config.max_steps,
        .mode = mode,
        .strategy = config.retrieval,
        .random_seed = config.seeds.retrieval,
        .instruction = lib.instruction,
        .manual_fewshots = lib.fewshots,
    };
    auto result = evaluate(evalConfig, env_factory(config), gateway, insights, retrieval, progress);
    save_eval(result, outDir);
    return result;
}

std::string_view to_string(Stage stage) noexcept
{
    switch (stage)
    {
        case Stage::Gather: return "gather";
        case Stage::Extract: return "extract";
        case Stage::Index: return "index";
        case Stage::Eval: return "eval";
        case Stage::Report: return "report";
    }
    return "gather";
}

Stage stage_from_string(std::string_view text)
{
    for (auto stage: { Stage::Gather, Stage::Extract, Stage::Index, Stage::Eval, Stage::Report })
        if (to_string(stage) == text)
            return stage;
    throw ConfigError(fmt::format("unknown stage '{}' (gather, extract, index, eval, report)", text));
}

PipelineResult run_pipeline(RunConfig const& config, Stage from, Progress const& progress)
{
    std::filesystem::create_directories(config.output_dir);
    detail::write_text_file(config.output_dir / "config.json", to_json(config).dump(2) + "\n");

    auto const plan = plan_folds(config);
    auto folds = nlohmann::json::array();
    for (auto const& run: plan.runs)
        folds.push_back({ { "train", run.train }, { "eval", run.eval } });
    detail::write_text_file(config.output_dir / "folds.json", folds.dump(2) + "\n");

    auto const needsIndex = std::ranges::any_of(config.modes, uses_retrieval);
    auto progressMutex = std::mutex {};
    auto const report = [&](std::string_view line) {
        if (!progress)
            return;
        auto const lock = std::scoped_lock(progressMutex);
        progress(line);
    };

    auto const runFold = [&](std::size_t i) {
        auto const dir = config.output_dir / fmt::format("fold{}", i);
        auto const poolPath = dir / config.paths.pool;
        auto const insightsPath = dir / config.paths.insights;
        auto const indexPath = dir / config.paths.index;
        std::filesystem::create_directories(dir);
        auto gateway = Gateway {};
        configure_gateway(gateway, config);
        auto metrics = std::map<EvalMode, FoldMetrics> {};

        auto const stage = [&](Stage current, std::string_view label, auto&& body) {
            if (current < from)
                return;
            report(label.empty() ? fmt::format("fold{}: {}", i, to_string(current))
                                 : fmt::format("fold{}: {} {}", i, to_string(current), label));
            try
            {
                body();
            }
            catch (ConfigError const& e)
            {
                throw ConfigError(fmt::format("{} stage (fold {}): {}", to_string(current), i, e.what()));
            }
            catch (std::exception const& e)
            {
                throw StageError(current, fmt::format("{} stage failed (fold {}): {} [pool {}, insights {}, index {}]",
                                                      to_string(current), i, e.what(), poolPath.string(),
                                                      insightsPath.string(), indexPath.string()));
            }
        };

        stage(Stage::Gather, {}, [&] { run_gather_stage(config, gateway, resolve_tasks(config, plan.runs[i].train), poolPath, report); });
        stage(Stage::Extract, {}, [&] { run_extract_stage(config, gateway, poolPath, insightsPath, report); });
        if (needsIndex)
            stage(Stage::Index, {}, [&] { run_index_stage(config, poolPath, indexPath); });
        for (auto const mode: config.modes)
        {
            auto const outDir = dir / fmt::format("{}-{}", config.paths.reports, to_string(mode));
            stage(Stage::Eval, to_string(mode), [&] {
                run_eval_stage(config, gateway, resolve_tasks(config, plan.runs[i].eval), mode, poolPath, insightsPath,
                               indexPath, outDir, report);
            });
            stage(Stage::Report, to_string(mode), [&] {
                auto const path = outDir / "metrics.json";
                require_file(path, "evaluation metrics");
                metrics.emplace(mode, FoldMetrics { fmt::format("fold{}", i), metrics_from_json(detail::read_json_file(path)) });
            });
        }

        // Only a run that starts from gathering sees every call, so partial reruns keep the original log.
        if (from == Stage::Gather)
        {
            auto calls = std::string {};
            for (auto const& call: gateway.call_log())
                calls += to_json(call).dump() + "\n";
            detail::write_text_file(dir / "calls.jsonl", calls);
        }
        return metrics;
    };

    auto perFold = std::vector<std::map<EvalMode, FoldMetrics>>(plan.runs.size());
    if (config.parallel_folds)
    {
        auto pending = std::vector<std::future<std::map<EvalMode, FoldMetrics>>> {};
        for (std::size_t i = 0; i < plan.runs.size(); ++i)
            pending.push_back(std::async(std::launch::async, runFold, i));
        for (std::size_t i = 0; i < pending.size(); ++i)
            perFold[i] = pending[i].get();
    }
    else
    {
        for (std::size_t i = 0; i < plan.runs.size(); ++i)
            perFold[i] = runFold(i);
    }

    auto perMode = std::map<EvalMode, std::vector<FoldMetrics>> {};
    for (auto const& fold: perFold)
        for (auto const& [mode, metrics]: fold)
            perMode[mode].push_back(metrics);

    auto result = PipelineResult {
        .report_json = config.output_dir / "report.json",
        .report_text = config.output_dir / "report.txt",
    };
    auto json = nlohmann::json::object();
    auto text = std::string {};
    for (auto const mode: config.modes)
    {
        auto report = make_report(perMode.at(mode));
        json[std::string(to_string(mode))] = to_json(report);
        text += render_report(report, fmt::format("[{}] {}", config.env, to_string(mode))) + "\n";
        result.reports.emplace(mode, std::move(report));
    }
    detail::write_text_file(result.report_json, json.dump(2) + "\n");
    detail::write_text_file(result.report_text, text);
    return result;
}

} // namespace expel
