// SPDX-License-Identifier: Apache-2.0
// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "oracles.hpp"
#include "support.hpp"

#include <expel/environment.hpp>
#include <expel/gather.hpp>
#include <expel/harness.hpp>
#include <expel/inference.hpp>
#include <expel/insights.hpp>
#include <expel/prompt.hpp>
#include <expel/retrieval.hpp>
#include <expel/shop.hpp>
#include <expel/transfer.hpp>

#include <fmt/format.h>

#include <chrono>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace expel;
using namespace expel::testing;

namespace
{

/// Thrown by checks to report the first violated property.
struct Violation: std::runtime_error
{
    using std::runtime_error::runtime_error;
};

template <typename... Args>
void require(bool condition, fmt::format_string<Args...> message, Args&&... args)
{
    if (!condition)
        throw Violation(fmt::format(message, std::forward<Args>(args)...));
}

struct Criterion
{
    int number;
    std::string name;
    double limit_seconds;
    std::function<std::string()> body; // returns a short summary on success
};

// 1 --------------------------------------------------------------------------------------------

std::string insight_algebra()
{
    auto rng = std::mt19937_64 { 1 };
    auto removals = std::size_t { 0 };
    for (int round = 0; round < 10000; ++round)
    {
        auto const ops = oracle::random_operations(rng, 1 + rng() % 50);
        auto const expected = oracle::fold_operations(ops);
        auto set = InsightSet {};
        auto highestId = 0;
        for (std::size_t i = 0; i < ops.size(); ++i)
        {
            auto const before = set;
            auto const accepted = set.apply(ops[i]);
            require(accepted == static_cast<bool>(expected.accepted[i]), "sequence {} op {}: acceptance differs", round, i);
            if (accepted && ops[i].kind == OpKind::Add)
            {
                auto const id = set.audit_log().back().id;
                require(id > highestId, "sequence {} op {}: id {} reused", round, i, id);
                highestId = id;
            }
            for (auto const& old: before.insights())
            {
                if (set.find(old.id))
                    continue;
                require(ops[i].kind == OpKind::Downvote && ops[i].id == old.id && old.importance == 1,
                        "sequence {} op {}: insight {} removed at importance {}", round, i, old.id, old.importance - 1);
                ++removals;
            }
            for (auto const& now: set.insights())
                require(now.importance >= 1, "sequence {} op {}: insight {} kept at importance {}", round, i, now.id, now.importance);
        }
        auto present = std::vector<Insight> {};
        for (auto const& entry: expected.entries)
            if (entry.present)
                present.push_back({ entry.id, entry.text, entry.importance });
        require(set.insights() == present, "sequence {}: final set differs from the fold oracle", round);
    }
    return fmt::format("10000 sequences, {} removals", removals);
}

// 2 --------------------------------------------------------------------------------------------

std::string shop_reward_grid()
{
    constexpr auto kGoalTokens = 20;
    auto goalWords = std::vector<std::string> {};
    for (auto i = 0; i < kGoalTokens; ++i)
        goalWords.push_back(std::string("tok") + static_cast<char>('a' + i));
    auto const goalTitle = join(goalWords, " ");
    auto const attributeNames = std::vector<std::string> { "organic", "caffeine free", "loose leaf" };
    auto const optionNames = std::vector<std::string> { "100 g", "tin" };

    // Tagged examples.
    require(shop::r_type(0.0, true, true) == 0.0, "r_type(0) must be 0");
    require(shop::r_type(0.05, true, true) == 0.1, "r_type(0.05) must be 0.1");
    require(shop::r_type(0.15, true, false) == 1.0, "r_type(0.15, query match) must be 1");

    auto cases = std::size_t { 0 };
    for (auto const shared: { 0, 1, 2, 3, 4, 5, 20 })
    {
        auto titleWords = std::vector<std::string>(goalWords.begin(), goalWords.begin() + shared);
        titleWords.insert(titleWords.end(), { "fillerx", "fillery" });
        auto const title = join(titleWords, " ");
        for (std::size_t att = 0; att <= 3; ++att)
            for (std::size_t opt = 0; opt <= 2; ++opt)
                for (std::size_t matchedAtt = 0; matchedAtt <= att; ++matchedAtt)
                    for (std::size_t matchedOpt = 0; matchedOpt <= opt; ++matchedOpt)
                        for (auto const priceOk: { true, false })
                            for (auto const queryMatch: { true, false })
                                for (auto const categoryMatch: { true, false })
                                {
                                    auto goal = shop::ShopGoal { .price_cap = 50.0, .title = goalTitle, .query = "green tea", .category = "Beverages" };
                                    goal.attributes.insert(attributeNames.begin(), attributeNames.begin() + att);
                                    goal.options.insert(optionNames.begin(), optionNames.begin() + opt);
                                    auto item = shop::ShopItem {
                                        .title = title,
                                        .category = categoryMatch ? "beverages" : "kitchen",
                                        .query = queryMatch ? "Green Tea" : "black tea",
                                        .price = priceOk ? 50.0 : 50.01,
                                    };
                                    item.attributes.insert(attributeNames.begin(), attributeNames.begin() + matchedAtt);
                                    item.attributes.insert("unrelated attribute");
                                    item.selected_options.insert(optionNames.begin(), optionNames.begin() + matchedOpt);
                                    item.selected_options.insert("unrelated option");

                                    auto const expected = oracle::shop_reward_counts(
                                        static_cast<int>(matchedAtt), static_cast<int>(att), static_cast<int>(matchedOpt),
                                        static_cast<int>(opt), priceOk, oracle::r_type_rational(shared, kGoalTokens, queryMatch, categoryMatch));
                                    auto const actual = shop::shop_reward(item, goal);
                                    require(actual == expected, "shared={} att={}/{} opt={}/{} price={} q={} c={}: {} != {}", shared,
                                            matchedAtt, att, matchedOpt, opt, priceOk, queryMatch, categoryMatch, actual, expected);
                                    require(actual >= 0.0 && actual <= 1.0, "reward {} outside [0, 1]", actual);
                                    auto const full = matchedAtt == att && matchedOpt == opt && priceOk
                                                   && oracle::r_type_rational(shared, kGoalTokens, queryMatch, categoryMatch) == 1.0;
                                    require((actual == 1.0) == full, "reward 1 iff everything matches violated");
                                    ++cases;
                                }
    }

    // The three reward examples.
    auto goal = shop::ShopGoal { .attributes = { "organic", "loose leaf" }, .options = { "tin" }, .price_cap = 10.0, .title = "green tea", .query = "tea", .category = "tea" };
    auto item = shop::ShopItem { .title = "green tea", .category = "tea", .query = "tea", .price = 9.0, .attributes = goal.attributes, .selected_options = goal.options };
    require(shop::shop_reward(item, goal) == 1.0, "full match must score 1");
    item.attributes = { "organic" };
    item.selected_options = {};
    item.price = 12.0;
    require(shop::shop_reward(item, goal) == 0.25, "partial example must score 0.25");
    item.title = "desk lamp";
    require(shop::shop_reward(item, goal) == 0.0, "text match 0 must score 0");
    return fmt::format("{} grid cases plus tagged examples", cases);
}

// 3 --------------------------------------------------------------------------------------------

std::string retrieval_exactness()
{
    auto rng = std::mt19937_64 { 3 };
    auto vocabulary = std::vector<std::string> {};
    for (int i = 0; i < 400; ++i)
    {
        auto word = std::string {};
        for (auto length = 3 + rng() % 6; length > 0; --length)
            word += static_cast<char>('a' + rng() % 26);
        vocabulary.push_back(word);
    }
    auto const sentence = [&] {
        auto words = std::vector<std::string> {};
        for (auto n = 1 + rng() % 8; n > 0; --n)
            words.push_back(vocabulary[rng() % vocabulary.size()]);
        return join(words, " ");
    };

    auto const embedder = HashEmbedder { 0, 256 };
    auto queries = std::size_t { 0 };
    auto largest = std::size_t { 0 };
    for (int round = 0; round < 200; ++round)
    {
        auto const size = 1 + rng() % 1024;
        largest = std::max<std::size_t>(largest, size);
        auto texts = std::vector<std::string> {};
        auto refs = std::vector<TrajectoryRef> {};
        auto flat = std::vector<float> {};
        auto rows = std::vector<std::vector<float>> {};
        for (std::size_t i = 0; i < size; ++i)
        {
            // Repeated texts produce exact score ties that must resolve by insertion order.
            texts.push_back(!texts.empty() && rng() % 8 == 0 ? texts[rng() % texts.size()] : sentence());
            rows.push_back(embed_normalized(embedder, texts.back()));
            flat.insert(flat.end(), rows.back().begin(), rows.back().end());
            refs.push_back({ .pool_index = i, .task_id = fmt::format("r{}", i) });
        }
        auto const index = EmbeddingIndex(embedder.id(), embedder.dimension(), std::move(refs), std::move(flat));
        for (int q = 0; q < 3; ++q)
        {
            auto const text = q == 0 ? texts[rng() % texts.size()] : sentence();
            auto const k = 1 + rng() % (size + 3);
            auto const got = query_topk(index, embedder, text, k);
            auto const want = oracle::brute_force_mips(rows, embed_normalized(embedder, text), k);
            require(got.size() == want.size(), "round {}: {} results, expected {}", round, got.size(), want.size());
            for (std::size_t r = 0; r < got.size(); ++r)
                require(got[r].pool_index == want[r], "round {} query {} rank {}: entry {} but brute force has {}", round, q, r,
                        got[r].pool_index, want[r]);
            ++queries;
        }
    }
    return fmt::format("200 indices up to {} entries, {} queries", largest, queries);
}

// 4 --------------------------------------------------------------------------------------------

constexpr std::string_view kReflectionMark = "MARK-reflection";

/// Actor policy for the gathering check: task-specific number of reflections needed before answering
/// correctly; some tasks never succeed, some never finish.
class GatherPolicy final: public CompletionBackend
{
  public:
    GatherPolicy(std::map<std::string, std::string> questionToTask, std::map<std::string, std::string> answers, std::map<std::string, int> needs):
        _questionToTask(std::move(questionToTask)), _answers(std::move(answers)), _needs(std::move(needs))
    {
    }
    [[nodiscard]] std::string const& id() const noexcept override { return _id; }
    [[nodiscard]] CompletionRecord complete(Prompt const& prompt, DecodingParams const&) const override
    {
        auto const text = prompt.text();
        auto const at = text.rfind("Question: ");
        auto const end = text.find('\n', at);
        auto const question = text.substr(at + 10, end - at - 10);
        auto const& task = _questionToTask.at(question);
        auto reflections = 0;
        for (auto pos = text.find(kReflectionMark); pos != std::string::npos; pos = text.find(kReflectionMark, pos + 1))
            ++reflections;
        auto const need = _needs.at(task);
        auto completion = std::string {};
        if (need < 0)
            completion = "Thought: keep looking\nAction: Search[Nowhere Particular]";
        else if (reflections >= need)
            completion = "Thought: I know this\nAction: Finish[" + _answers.at(task) + "]";
        else
            completion = "Thought: a guess\nAction: Finish[something else]";
        return CompletionRecord { .prompt_text = text, .completion_text = completion, .input_tokens = 1, .output_tokens = 1, .backend_id = _id };
    }

  private:
    std::string _id = "gather-policy";
    std::map<std::string, std::string> _questionToTask;
    std::map<std::string, std::string> _answers;
    std::map<std::string, int> _needs;
};

std::string gathering_invariants()
{
    auto const lib = PromptLibrary::load(data_dir(), "toyqa");
    auto const env = make_environment("toyqa", data_dir());
    auto const tasksJson = nlohmann::json::parse(read_file(data_dir() / "toyqa" / "tasks.json"));
    auto questions = std::map<std::string, std::string> {};
    auto answers = std::map<std::string, std::string> {};
    for (auto const& t: tasksJson.at("tasks"))
    {
        questions[t.at("question").get<std::string>()] = t.at("id").get<std::string>();
        answers[t.at("id").get<std::string>()] = t.at("answer").get<std::string>();
    }

    auto runs = 0;
    auto trials = std::size_t { 0 };
    for (auto const z: { 0, 1, 3 })
        for (std::uint64_t seed = 0; seed < 4; ++seed)
        {
            auto rng = std::mt19937_64 { seed * 31 + static_cast<std::uint64_t>(z) };
            auto needs = std::map<std::string, int> {};
            for (auto const& task: env->tasks())
            {
                auto const roll = static_cast<int>(rng() % 6);
                needs[task.id] = roll == 5 ? -1 : roll; // 4 never reaches the answer within Z = 3; -1 never finishes
            }
            auto gateway = Gateway {};
            gateway.set_backend(ModelRole::Actor, std::make_shared<GatherPolicy>(questions, answers, needs));
            gateway.set_backend(ModelRole::Reflector, scripted({}, std::string(kReflectionMark)));
            auto const config = GatherConfig {
                .max_retries = z,
                .max_steps = 2,
                .tasks = env->tasks(),
                .manual_fewshots = lib.fewshots,
                .instruction = lib.instruction,
                .reflection = ReflectionPrompt { .tmpl = lib.reflection_template, .examples = lib.reflection_examples, .max_examples = 2 },
            };
            auto const result = gather(config, [](Task const&) { return make_environment("toyqa", data_dir()); }, gateway);
            auto const& pool = result.pool;
            require(pool.size() - pool.manual_count() == result.trials_executed, "Z={} seed={}: |pool| - |F_manual| = {} but {} trials ran", z,
                    seed, pool.size() - pool.manual_count(), result.trials_executed);

            auto byTask = std::map<std::string, std::vector<Trajectory const*>> {};
            for (auto const& t: pool.trajectories().subspan(pool.manual_count()))
                byTask[t.task_id()].push_back(&t);
            auto expectedReflections = std::size_t { 0 };
            for (auto const& task: env->tasks())
            {
                auto const& attempts = byTask[task.id];
                auto const need = needs[task.id];
                auto const solvable = need >= 0 && need <= z;
                auto const expectedTrials = static_cast<std::size_t>(solvable ? need + 1 : z + 1);
                require(attempts.size() == expectedTrials, "Z={} {}: {} trials, expected {}", z, task.id, attempts.size(), expectedTrials);
                require(attempts.size() <= static_cast<std::size_t>(z + 1), "Z={} {}: more than Z+1 attempts", z, task.id);
                auto successes = 0;
                for (std::size_t j = 0; j < attempts.size(); ++j)
                {
                    auto const& t = *attempts[j];
                    require(t.trial_index() == static_cast<int>(j), "Z={} {}: trial index {} at position {}", z, task.id, t.trial_index(), j);
                    successes += t.succeeded() ? 1 : 0;
                    require(!t.succeeded() || j + 1 == attempts.size(), "Z={} {}: attempts continued after a success", z, task.id);
                    auto lines = std::vector<std::string>(j, std::string(kReflectionMark));
                    require(t.reflections_used() == join(lines, "\n"), "Z={} {} trial {}: unexpected reflections '{}'", z, task.id, j,
                            t.reflections_used());
                    if (j > 0)
                        require(t.reflections_used().starts_with(attempts[j - 1]->reflections_used()), "Z={} {}: reflections not a prefix chain", z,
                                task.id);
                }
                require(successes <= 1, "Z={} {}: {} successes", z, task.id, successes);
                require((successes == 1) == solvable, "Z={} {}: success {} but solvable {}", z, task.id, successes, solvable);
                expectedReflections += attempts.size() - 1;
            }
            auto reflectorCalls = std::size_t { 0 };
            for (auto const& call: gateway.call_log())
                reflectorCalls += call.role == ModelRole::Reflector ? 1 : 0;
            require(reflectorCalls == expectedReflections, "Z={} seed={}: {} reflector calls, expected {}", z, seed, reflectorCalls,
                    expectedReflections);
            trials += result.trials_executed;
            ++runs;
        }
    return fmt::format("{} runs over Z in {{0, 1, 3}}, {} trials", runs, trials);
}

// 5 --------------------------------------------------------------------------------------------

ExperiencePool random_pool(std::mt19937_64& rng)
{
    auto manual = std::vector<Trajectory> {};
    for (auto m = rng() % 3; m > 0; --m)
        manual.push_back(make_trajectory(make_task(fmt::format("manual{}", m)), 0, Outcome::Success));
    auto pool = ExperiencePool(std::move(manual));

    // Per task: some failures, then possibly a success; tasks are interleaved at random.
    auto queues = std::vector<std::vector<Trajectory>> {};
    for (auto t = rng() % 26; t > 0; --t)
    {
        auto const task = make_task(fmt::format("task{}", t));
        auto attempts = std::vector<Trajectory> {};
        auto const failures = static_cast<int>(rng() % 5);
        for (auto f = 0; f < failures; ++f)
            attempts.push_back(make_trajectory(task, f, Outcome::Failure));
        if (rng() % 10 < 6)
            attempts.push_back(make_trajectory(task, failures, Outcome::Success));
        if (!attempts.empty())
            queues.push_back(std::move(attempts));
    }
    auto cursors = std::vector<std::size_t>(queues.size(), 0);
    for (auto remaining = std::size_t { 0 }; (remaining = std::ranges::count_if(queues, [&, i = std::size_t { 0 }](auto const& q) mutable {
                                                 return cursors[i++] < q.size();
                                             })) > 0;)
    {
        auto pick = rng() % remaining;
        for (std::size_t q = 0; q < queues.size(); ++q)
        {
            if (cursors[q] == queues[q].size())
                continue;
            if (pick-- == 0)
            {
                pool.insert(queues[q][cursors[q]++]);
                break;
            }
        }
    }
    return pool;
}

std::string batching()
{
    auto rng = std::mt19937_64 { 5 };
    auto pools = 0;
    for (auto const chunkSize: { std::size_t { 1 }, std::size_t { 4 }, std::size_t { 8 } })
        for (int round = 0; round < 400; ++round)
        {
            auto const pool = random_pool(rng);
            auto const pairs = build_compare_set(pool);
            require(pairs.size() == oracle::expected_compare_pairs(pool), "L={} pool {}: {} compare pairs, oracle {}", chunkSize, round,
                    pairs.size(), oracle::expected_compare_pairs(pool));
            auto distinctPairs = std::set<std::pair<std::size_t, std::size_t>> {};
            for (auto const& pair: pairs)
            {
                require(pool[pair.success].task_id() == pool[pair.failure].task_id(), "compare pair across tasks");
                require(pool[pair.success].succeeded() && !pool[pair.failure].succeeded(), "compare pair outcomes wrong");
                distinctPairs.insert({ pair.success, pair.failure });
            }
            require(distinctPairs.size() == pairs.size(), "duplicate compare pairs");

            for (auto const includeManual: { true, false })
            {
                auto expected = std::multiset<std::size_t> {};
                for (std::size_t i = 0; i < pool.size(); ++i)
                    if (pool[i].succeeded() && (includeManual || i >= pool.manual_count()))
                        expected.insert(i);
                auto const chunks = build_success_chunks(pool, chunkSize, rng(), includeManual);
                auto seen = std::multiset<std::size_t> {};
                for (std::size_t c = 0; c < chunks.size(); ++c)
                {
                    auto const& members = chunks[c].members;
                    require(!members.empty() && members.size() <= chunkSize, "L={}: chunk of size {}", chunkSize, members.size());
                    require(c + 1 == chunks.size() || members.size() == chunkSize, "L={}: short chunk before the last", chunkSize);
                    auto tasks = std::set<std::string> {};
                    for (auto const m: members)
                    {
                        seen.insert(m);
                        tasks.insert(pool[m].task_id());
                    }
                    require(tasks.size() == members.size(), "L={}: chunk repeats a task", chunkSize);
                }
                require(seen == expected, "L={} pool {}: chunks are not an exact partition of the successes", chunkSize, round);
            }
            ++pools;
        }
    return fmt::format("{} random pools for L in {{1, 4, 8}}", pools);
}

// 6 --------------------------------------------------------------------------------------------

std::filesystem::path g_scenarioRun; // reused by criterion 9

std::string scenario_ordering(TempDir const& scratch)
{
    auto const dir = data_dir() / "scenarios";
    auto const record = nlohmann::json::parse(read_file(dir / "toyqa_modes.json"));
    auto results = std::vector<PipelineResult> {};
    for (auto const name: { "first", "second" })
    {
        auto copy = record;
        copy["output_dir"] = (scratch / name).string();
        results.push_back(run_pipeline(run_config_from_json(copy, dir)));
    }
    g_scenarioRun = scratch / "first";

    auto const rate = [&](EvalMode mode) { return results[0].reports.at(mode).success_rate.mean; };
    auto const base = rate(EvalMode::Base);
    auto const insights = rate(EvalMode::InsightsOnly);
    auto const retrieve = rate(EvalMode::RetrieveOnly);
    auto const full = rate(EvalMode::Full);
    auto const summary = fmt::format("base {:.3f}, insights_only {:.3f}, retrieve_only {:.3f}, full {:.3f}", base, insights, retrieve, full);
    require(base <= insights, "base > insights_only ({})", summary);
    require(base <= retrieve && retrieve <= full, "retrieve ordering violated ({})", summary);
    require(read_file(results[0].report_json) == read_file(results[1].report_json), "report.json differs between runs");
    require(read_file(results[0].report_text) == read_file(results[1].report_text), "report.txt differs between runs");
    return summary + ", reports byte-identical";
}

// 7 --------------------------------------------------------------------------------------------

std::string transfer_contract()
{
    auto const pairs = std::vector<std::pair<std::string, std::string>> {
        { "toyqa", "toyfever" }, { "toyfever", "toyqa" }, { "household", "toyshop" }, { "toyshop", "household" } };
    auto rng = std::mt19937_64 { 7 };
    for (auto const& [from, to]: pairs)
    {
        auto const source = PromptLibrary::load(data_dir(), from);
        auto const target = PromptLibrary::load(data_dir(), to);
        auto const prompts = TransferPrompts { .tmpl = source.transfer_template, .fewshot_block = source.transfer_fewshot_block };

        auto insights = InsightSet {};
        for (int i = 0; i < 6; ++i)
            insights.apply({ .kind = OpKind::Add, .text = fmt::format("Insight {} for {}: check step {} carefully.", i + 1, from, rng() % 100) });
        for (int i = 0; i < 8; ++i)
            insights.apply({ .kind = OpKind::Upvote, .id = 1 + static_cast<int>(rng() % 6) });
        insights.apply({ .kind = OpKind::Downvote, .id = 3 });

        auto spec = TransferSpec { .source_insights = insights, .source_description = source.description, .target_description = target.description,
                                   .target_fewshots = target.fewshots };
        auto const with = render_transfer_prompt(spec, prompts);
        auto bare = spec;
        bare.target_fewshots.clear();
        auto const without = render_transfer_prompt(bare, prompts);

        auto shots = std::vector<std::string> {};
        for (auto const& shot: target.fewshots)
            shots.push_back(render_trajectory(shot));
        auto const block = render_template(prompts.fewshot_block, { { "fewshots", join(shots, "\n\n") } });
        auto const at = with.find(block);
        require(!target.fewshots.empty() && at != std::string::npos, "{} -> {}: fewshot block missing", from, to);
        require(with.substr(0, at) + with.substr(at + block.size()) == without, "{} -> {}: renderings differ outside the fewshot block", from, to);

        auto gateway = Gateway {};
        gateway.set_backend(ModelRole::Transfer, scripted({}, render_insights(insights)));
        auto const adapted = finetune_insights(gateway, spec, prompts);
        require(adapted.size() == insights.size(), "{} -> {}: identity adaptation changed the count", from, to);
        for (std::size_t i = 0; i < adapted.size(); ++i)
        {
            require(adapted.insights()[i].text == insights.insights()[i].text, "{} -> {}: text {} changed", from, to, i);
            require(adapted.insights()[i].importance == InsightSet::kInitialImportance, "{} -> {}: importance not reset", from, to);
        }
    }
    return fmt::format("{} environment pairs", pairs.size());
}

// 8 --------------------------------------------------------------------------------------------

std::string folds_and_reporting()
{
    auto rng = std::mt19937_64 { 8 };
    for (int plan = 0; plan < 1000; ++plan)
    {
        auto const n = 2 + rng() % 60;
        auto ids = std::vector<std::string> {};
        auto types = std::vector<std::string> {};
        for (std::size_t i = 0; i < n; ++i)
        {
            ids.push_back(fmt::format("task{}", i));
            types.push_back(fmt::format("type{}", rng() % 4));
        }
        auto const seed = rng();
        auto const stratified = plan % 2 == 1;
        auto const folds = stratified ? make_folds(ids, seed, 2, types) : make_folds(ids, seed);
        require(folds.runs.size() == 4, "plan {}: {} runs", plan, folds.runs.size());
        require(folds == (stratified ? make_folds(ids, seed, 2, types) : make_folds(ids, seed)), "plan {}: not deterministic", plan);
        auto const all = std::set<std::string>(ids.begin(), ids.end());
        for (std::size_t r = 0; r < folds.runs.size(); ++r)
        {
            auto const& run = folds.runs[r];
            auto train = std::set<std::string>(run.train.begin(), run.train.end());
            auto const eval = std::set<std::string>(run.eval.begin(), run.eval.end());
            require(train.size() == run.train.size() && eval.size() == run.eval.size(), "plan {}: duplicate ids", plan);
            for (auto const& id: eval)
                require(!train.contains(id), "plan {}: {} in both halves", plan, id);
            train.insert(eval.begin(), eval.end());
            require(train == all, "plan {}: halves do not cover the task set", plan);
            if (!stratified)
            {
                auto const first = r % 2 == 0 ? run.train.size() : run.eval.size();
                require(first == (n + 1) / 2, "plan {}: first half has {} of {}", plan, first, n);
            }
            if (r % 2 == 1)
                require(run.train == folds.runs[r - 1].eval && run.eval == folds.runs[r - 1].train, "plan {}: run {} is not the reverse", plan, r);
        }
    }

    // Hand-computed: sample standard deviation over sqrt(n).
    struct Case
    {
        std::vector<double> values;
        double mean;
        double std_error;
    };
    auto const cases = std::vector<Case> {
        { { 0.5, 0.5, 0.5, 0.5 }, 0.5, 0.0 },
        { { 0.0, 1.0 }, 0.5, 0.5 },                                  // sqrt(0.5 / 1) / sqrt(2)
        { { 1.0, 0.0, 0.0, 0.0 }, 0.25, 0.25 },                      // sqrt(0.75 / 3) / 2
        { { 0.2, 0.4, 0.6, 0.8 }, 0.5, 0.12909944487358056 },        // sqrt(0.2 / 3) / 2
        { { 0.3, 0.6, 0.9 }, 0.6, 0.17320508075688773 },             // sqrt(0.18 / 2) / sqrt(3)
        { { 0.42 }, 0.42, 0.0 },
    };
    for (auto const& c: cases)
    {
        auto const got = mean_and_std_error(c.values);
        require(std::abs(got.mean - c.mean) <= 1e-9 && std::abs(got.std_error - c.std_error) <= 1e-9, "std error of {} values: {} / {}, expected {} / {}",
                c.values.size(), got.mean, got.std_error, c.mean, c.std_error);
    }
    return "1000 plans, 6 hand-computed standard errors";
}

// 9 --------------------------------------------------------------------------------------------

std::size_t whitespace_tokens(std::string const& text)
{
    auto in = std::istringstream(text);
    auto count = std::size_t { 0 };
    for (auto word = std::string {}; in >> word;)
        ++count;
    return count;
}

/// Recounts every per-trajectory figure of one saved evaluation from its persisted files.
std::size_t recount(std::filesystem::path const& evalDir, std::vector<CallLogEntry> const* liveCalls)
{
    auto const metrics = nlohmann::json::parse(read_file(evalDir / "metrics.json"));
    auto callTokens = std::map<std::string, std::pair<std::size_t, std::size_t>> {};
    auto in = std::istringstream(read_file(evalDir / "calls.jsonl"));
    for (auto line = std::string {}; std::getline(in, line);)
    {
        if (line.empty())
            continue;
        auto const call = nlohmann::json::parse(line);
        auto& [input, output] = callTokens[call.at("tag").get<std::string>()];
        input += call.at("input_tokens").get<std::size_t>();
        output += call.at("output_tokens").get<std::size_t>();
    }
    if (liveCalls)
    {
        auto live = std::map<std::string, std::pair<std::size_t, std::size_t>> {};
        for (auto const& call: *liveCalls)
        {
            live[call.tag].first += call.record.input_tokens;
            live[call.tag].second += call.record.output_tokens;
        }
        require(live == callTokens, "{}: persisted call log differs from the gateway log", evalDir.string());
    }

    auto byTask = std::map<std::string, nlohmann::json> {};
    for (auto const& entry: metrics.at("per_trajectory"))
        byTask[entry.at("task_id").get<std::string>()] = entry;

    auto totals = std::map<std::string, std::size_t> {};
    auto counted = std::size_t { 0 };
    auto trajectories = std::istringstream(read_file(evalDir / "trajectories.jsonl"));
    for (auto line = std::string {}; std::getline(trajectories, line);)
    {
        if (line.empty())
            continue;
        auto const t = nlohmann::json::parse(line);
        auto const id = t.at("task_id").get<std::string>();
        auto counts = std::map<std::string, std::size_t> {};
        for (auto const& step: t.at("steps"))
        {
            counts["thoughts"] += step.at("thoughts").size();
            for (auto const& thought: step.at("thoughts"))
                counts["thought_tokens"] += whitespace_tokens(thought.get<std::string>());
            counts["actions"] += 1;
            counts["action_tokens"] += whitespace_tokens(step.at("action").get<std::string>());
            counts["observations"] += 1;
            counts["observation_tokens"] += whitespace_tokens(step.at("observation").get<std::string>());
            counts["invalid_actions"] += step.value("valid", true) ? 0 : 1;
        }
        auto const tokens = callTokens[eval_tag(id)];
        counts["llm_input_tokens"] = tokens.first;
        counts["llm_output_tokens"] = tokens.second;

        require(byTask.contains(id), "{}: no metrics for {}", evalDir.string(), id);
        for (auto const& [key, value]: counts)
        {
            require(byTask[id].at(key).get<std::size_t>() == value, "{} {}: {} is {}, recount {}", evalDir.string(), id, key,
                    byTask[id].at(key).get<std::size_t>(), value);
            totals[key] += value;
        }
        ++counted;
    }
    require(counted == byTask.size(), "{}: {} trajectories for {} metrics entries", evalDir.string(), counted, byTask.size());

    auto const& tokens = metrics.at("tokens");
    require(tokens.at("thought").get<std::size_t>() == totals["thought_tokens"], "{}: thought token total", evalDir.string());
    require(tokens.at("action").get<std::size_t>() == totals["action_tokens"], "{}: action token total", evalDir.string());
    require(tokens.at("observation").get<std::size_t>() == totals["observation_tokens"], "{}: observation token total", evalDir.string());
    require(tokens.at("llm_input").get<std::size_t>() == totals["llm_input_tokens"], "{}: input token total", evalDir.string());
    require(tokens.at("llm_output").get<std::size_t>() == totals["llm_output_tokens"], "{}: output token total", evalDir.string());

    auto const& averages = metrics.at("averages");
    auto const n = static_cast<double>(counted);
    require(averages.at("thoughts").get<double>() == static_cast<double>(totals["thoughts"]) / n, "{}: thought average", evalDir.string());
    require(averages.at("actions").get<double>() == static_cast<double>(totals["actions"]) / n, "{}: action average", evalDir.string());
    require(averages.at("observations").get<double>() == static_cast<double>(totals["observations"]) / n, "{}: observation average",
            evalDir.string());
    require(averages.at("invalid_actions").get<double>() == static_cast<double>(totals["invalid_actions"]) / n, "{}: invalid average",
            evalDir.string());
    return totals["invalid_actions"];
}

std::string metrics_accounting(TempDir const& scratch)
{
    // A deliberately messy policy: multi-thought steps, invalid actions and unparseable completions.
    auto const lib = PromptLibrary::load(data_dir(), "toyqa");
    auto const env = make_environment("toyqa", data_dir());
    auto gateway = Gateway {};
    gateway.set_backend(ModelRole::Actor,
                        scripted({ ScriptedRule { .when = PromptMatcher { .regex = "Question: [^\\n]*\\n$" },
                                                  .response = "Thought: first idea\nThought: second idea here\nAction: Jump[the fence]" },
                                   ScriptedRule { .when = PromptMatcher { .regex = "Observation: Invalid action\\.\\n$" },
                                                  .response = "I will just think out loud without acting" } },
                                 "Thought: search it\nAction: Search[Marlowe]"));
    auto tasks = std::vector<Task> {};
    for (auto const& task: env->tasks())
        if (task.id.starts_with("e"))
            tasks.push_back(task);
    auto const config = EvalConfig { .tasks = tasks, .k = 2, .max_steps = 5, .mode = EvalMode::Base, .instruction = lib.instruction,
                                     .manual_fewshots = lib.fewshots };
    auto const result = evaluate(config, [](Task const&) { return make_environment("toyqa", data_dir()); }, gateway, InsightSet {}, RetrievalContext {});
    auto const messyDir = scratch / "messy";
    save_eval(result, messyDir);
    auto const live = gateway.call_log();
    auto const invalid = recount(messyDir, &live);
    require(invalid > 0, "the messy policy produced no invalid actions");

    auto dirs = std::size_t { 1 };
    if (!g_scenarioRun.empty())
        for (auto const& fold: std::filesystem::directory_iterator(g_scenarioRun))
            if (fold.is_directory())
                for (auto const& evalDir: std::filesystem::directory_iterator(fold.path()))
                    if (evalDir.is_directory() && std::filesystem::exists(evalDir.path() / "metrics.json"))
                    {
                        (void) recount(evalDir.path(), nullptr);
                        ++dirs;
                    }
    require(dirs > 1, "no scenario evaluations to recount");
    return fmt::format("{} evaluation directories recounted, {} invalid actions in the messy run", dirs, invalid);
}

} // namespace

int main()
{
    auto const scratch = TempDir {};
    auto const criteria = std::vector<Criterion> {
        { 1, "insight operator algebra", 5.0, insight_algebra },
        { 2, "shop reward oracle", 1.0, shop_reward_grid },
        { 3, "retrieval exactness", 10.0, retrieval_exactness },
        { 4, "gathering invariants", 5.0, gathering_invariants },
        { 5, "extraction batching", 2.0, batching },
        { 6, "end-to-end determinism and mode ordering", 30.0, [&] { return scenario_ordering(scratch); } },
        { 7, "transfer template contract", 1.0, transfer_contract },
        { 8, "fold protocol and reporting", 2.0, folds_and_reporting },
        { 9, "metrics accounting", 5.0, [&] { return metrics_accounting(scratch); } },
    };

    auto failures = 0;
    for (auto const& c: criteria)
    {
        auto const start = std::chrono::steady_clock::now();
        auto ok = true;
        auto detail = std::string {};
        try
        {
            detail = c.body();
        }
        catch (std::exception const& e)
        {
            ok = false;
            detail = e.what();
        }
        auto const seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && seconds >= c.limit_seconds)
        {
            ok = false;
            detail = fmt::format("too slow ({})", detail);
        }
        failures += ok ? 0 : 1;
        std::cout << fmt::format("{} {}. {} [{:.2f}s < {:.0f}s] {}\n", ok ? "PASS" : "FAIL", c.number, c.name, seconds, c.limit_seconds, detail);
    }
    return failures == 0 ? 0 : 1;
}
