// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <expel/docstore.hpp>
#include <expel/environment.hpp>
#include <expel/error.hpp>
#include <expel/household.hpp>
#include <expel/shop.hpp>

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace expel;
using namespace expel::testing;

namespace
{

std::unique_ptr<Environment> env(std::string const& name)
{
    return make_environment(name, data_dir());
}

/// Scripted plan that solves a household task from the scene contents, interacting only after `go to`.
std::vector<std::string> household_plan(household::HouseholdEnvironment const& house, household::Goal const& goal)
{
    auto const& scene = house.state();
    auto plan = std::vector<std::string> {};
    auto const receptacle = [&](std::string const& type) {
        for (auto const& r: scene.receptacles)
            if (household::type_of(r.name) == type)
                return r;
        throw std::runtime_error("no receptacle of type " + type);
    };
    auto opened = std::set<std::string> {};
    auto const visit = [&](household::Receptacle const& r) {
        plan.push_back("go to " + r.name);
        if (r.openable && !r.open && opened.insert(r.name).second)
            plan.push_back("open " + r.name);
    };
    auto objects = std::vector<household::Object> {};
    for (auto const& o: scene.objects)
        if (household::type_of(o.name) == goal.object_type)
            objects.push_back(o);
    auto const count = goal.type == "puttwo" ? 2u : 1u;
    for (std::size_t i = 0; i < count; ++i)
    {
        auto const& object = objects.at(i);
        auto const source = std::ranges::find_if(scene.receptacles, [&](auto const& r) { return r.name == object.location; });
        visit(*source);
        plan.push_back(fmt::format("take {} from {}", object.name, object.location));
        if (goal.type == "look")
        {
            for (auto const& o: scene.objects)
                if (household::type_of(o.name) == "desklamp")
                {
                    plan.push_back("go to " + o.location);
                    plan.push_back("use " + o.name);
                }
            return plan;
        }
        auto const process = std::map<std::string, std::pair<std::string, std::string>> {
            { "clean", { "clean", "sinkbasin" } }, { "heat", { "heat", "microwave" } }, { "cool", { "cool", "fridge" } } };
        if (auto const it = process.find(goal.type); it != process.end())
        {
            auto const station = receptacle(it->second.second);
            plan.push_back("go to " + station.name);
            plan.push_back(fmt::format("{} {} with {}", it->second.first, object.name, station.name));
        }
        auto const target = receptacle(goal.target_type);
        visit(target);
        plan.push_back(fmt::format("put {} in/on {}", object.name, target.name));
    }
    return plan;
}

} // namespace

TEST(Environments, KnownNamesAndDefaults)
{
    EXPECT_EQ(environment_names(), (std::vector<std::string> { "toyqa", "toyfever", "toyshop", "household" }));
    EXPECT_EQ(env_defaults("toyqa").max_steps, 7);
    EXPECT_EQ(env_defaults("toyqa").fewshot_k, 6);
    EXPECT_EQ(env_defaults("toyqa").success_chunk_size, 8);
    EXPECT_EQ(env_defaults("toyshop").max_steps, 15);
    EXPECT_EQ(env_defaults("toyshop").fewshot_k, 2);
    EXPECT_EQ(env_defaults("toyshop").success_chunk_size, 4);
    EXPECT_EQ(env_defaults("household").max_steps, 20);
    EXPECT_EQ(env_defaults("household").fewshot_k, 2);
    EXPECT_EQ(env_defaults("household").success_chunk_size, 8);
    EXPECT_EQ(env_defaults("toyfever").max_steps, 7);
    EXPECT_EQ(env_defaults("toyfever").fewshot_k, 3);
    for (auto const& name: environment_names())
    {
        EXPECT_EQ(env_defaults(name).max_retries, 3);
        EXPECT_EQ(env_defaults(name).reflection_fewshots, 2);
    }
}

TEST(ToyQA, ResetIsDeterministic)
{
    auto const qa = env("toyqa");
    auto const first = qa->reset("t1").text;
    (void) qa->step("Search[Marlowe]");
    EXPECT_EQ(qa->reset("t1").text, first);
    EXPECT_EQ(first, "Question: Which river flows through the city of Marlowe?");
}

TEST(ToyQA, SearchLookupFinish)
{
    auto const qa = env("toyqa");
    (void) qa->reset("t1");
    auto const search = qa->step("Search[Marlowe]");
    EXPECT_NE(search.text.find("Marlowe"), std::string::npos);
    EXPECT_EQ(search.reward, 0.0);
    EXPECT_FALSE(search.done);
    auto const lookup = qa->step("Lookup[river]");
    EXPECT_NE(lookup.text.find("Tessel River"), std::string::npos);
    auto const finish = qa->step("Finish[the Tessel River]");
    EXPECT_EQ(finish.reward, 1.0);
    EXPECT_TRUE(finish.done);
    EXPECT_THROW((void) qa->step("Search[Marlowe]"), UsageError);
}

TEST(ToyQA, WrongAnswerEndsWithoutReward)
{
    auto const qa = env("toyqa");
    (void) qa->reset("t1");
    auto const finish = qa->step("Finish[Lune Canal]");
    EXPECT_TRUE(finish.done);
    EXPECT_EQ(finish.reward, 0.0);
}

TEST(ToyQA, UnknownEntityAndInvalidActions)
{
    auto const qa = env("toyqa");
    (void) qa->reset("t3");
    EXPECT_NE(qa->step("Search[Orin]").text.find("Similar"), std::string::npos);
    auto const invalid = qa->step("Jump[high]");
    EXPECT_EQ(invalid.text, kInvalidAction);
    EXPECT_FALSE(invalid.valid);
    EXPECT_FALSE(invalid.done);
    EXPECT_EQ(qa->step("Lookup[anything]").text, kInvalidAction); // nothing searched yet
    EXPECT_THROW((void) qa->reset("nope"), std::out_of_range);
}

TEST(ToyQA, AnswerNormalization)
{
    EXPECT_EQ(docstore::normalize_answer("The  Tessel River!"), "tessel river");
    EXPECT_EQ(docstore::normalize_answer("2,480 metres"), docstore::normalize_answer("2480 metres"));
}

TEST(ToyFever, LabelsAreExactMatch)
{
    auto const fever = env("toyfever");
    (void) fever->reset("c1");
    EXPECT_EQ(fever->step("Finish[SUPPORTS]").reward, 1.0);
    (void) fever->reset("c2");
    EXPECT_EQ(fever->step("Finish[SUPPORTS]").reward, 0.0);
    (void) fever->reset("c2");
    EXPECT_EQ(fever->step("Finish[maybe]").text, kInvalidAction);
}

TEST(ShopReward, TextMatchExamples)
{
    EXPECT_EQ(shop::text_match("Peach Green Tea", "Peach Green Tea"), 1.0);
    EXPECT_EQ(shop::text_match("desk lamp", "running shoes"), 0.0);
    EXPECT_DOUBLE_EQ(shop::text_match("blue ceramic mug set", "red ceramic mug"), 2.0 / 3.0);
}

TEST(ShopReward, TypeMultiplierCasesInOrder)
{
    EXPECT_EQ(shop::r_type(0.0, true, true), 0.0);
    for (auto const q: { false, true })
        for (auto const c: { false, true })
            EXPECT_EQ(shop::r_type(0.05, q, c), 0.1);
    EXPECT_EQ(shop::r_type(0.15, true, false), 1.0);
    EXPECT_EQ(shop::r_type(0.15, false, false), 0.5);
    EXPECT_EQ(shop::r_type(0.1, false, false), 0.5); // boundary falls past the strict < 0.1 case
    EXPECT_EQ(shop::r_type(0.2, false, false), 0.5);
    EXPECT_EQ(shop::r_type(0.25, false, false), 1.0);
}

TEST(ShopReward, WorkedExamples)
{
    auto const goal = shop::ShopGoal {
        .attributes = { "organic", "loose leaf" }, .options = { "100 g" }, .price_cap = 15.0,
        .title = "Hillside Organic Green Tea", .query = "green tea", .category = "grocery" };
    auto item = shop::ShopItem { .title = "Hillside Organic Green Tea", .category = "grocery", .query = "green tea", .price = 12.0,
                                 .attributes = { "organic", "loose leaf" }, .selected_options = { "100 g" } };
    EXPECT_EQ(shop::shop_reward(item, goal), 1.0);

    item.attributes = { "organic" };
    item.selected_options = { "20 bags" };
    item.price = 20.0;
    EXPECT_EQ(shop::shop_reward(item, goal), (1.0 + 0.0 + 0.0) / (2.0 + 1.0 + 1.0));

    item.title = "Desk Lamp";
    EXPECT_EQ(shop::shop_reward(item, goal), 0.0);
}

TEST(ToyShop, ResetShowsInstructionWithPriceCap)
{
    auto const shop = env("toyshop");
    auto const obs = shop->reset("s1");
    EXPECT_NE(obs.text.find("Instruction:"), std::string::npos);
    EXPECT_NE(obs.text.find("price lower than"), std::string::npos);
}

TEST(ToyShop, PaginatesTenPerPage)
{
    auto const shop = env("toyshop");
    (void) shop->reset("s1");
    auto const page1 = shop->step("search[green tea]");
    EXPECT_NE(page1.text.find("Total results: 12"), std::string::npos);
    EXPECT_NE(page1.text.find("[Next >]"), std::string::npos);
    auto const asins = [](std::string const& text) {
        auto n = 0;
        for (auto pos = text.find("[B0"); pos != std::string::npos; pos = text.find("[B0", pos + 1))
            ++n;
        return n;
    };
    EXPECT_EQ(asins(page1.text), 10);
    auto const page2 = shop->step("click[Next >]");
    EXPECT_NE(page2.text.find("Page 2"), std::string::npos);
    EXPECT_EQ(asins(page2.text), 2);
}

TEST(ToyShop, BuyingScoresWithTheRewardFunction)
{
    auto shop = shop::ShopEnvironment(data_dir() / "toyshop");
    (void) shop.reset("s1");
    (void) shop.step("search[green tea]");
    (void) shop.step("click[B0T01]");
    (void) shop.step("click[100 g]");
    auto const bought = shop.step("click[Buy Now]");
    EXPECT_TRUE(bought.done);
    EXPECT_EQ(bought.reward, 1.0);

    (void) shop.reset("s1");
    (void) shop.step("search[green tea]");
    (void) shop.step("click[B0T01]");
    auto const partial = shop.step("click[Buy Now]");
    EXPECT_DOUBLE_EQ(partial.reward, 3.0 / 4.0); // size option not chosen
}

TEST(Household, ResetListsReceptacles)
{
    auto const house = env("household");
    auto const obs = house->reset("h1");
    EXPECT_NE(obs.text.find("you see a countertop 1"), std::string::npos);
    EXPECT_NE(obs.text.find("Your task is to:"), std::string::npos);
}

TEST(Household, TakingAnAbsentObjectIsInvalid)
{
    auto const house = env("household");
    (void) house->reset("h1");
    auto const obs = house->step("take pan from stoveburner 1");
    EXPECT_EQ(obs.text, kInvalidAction);
    EXPECT_FALSE(obs.valid);
    (void) house->step("go to countertop 1");
    EXPECT_EQ(house->step("take mug 1 from countertop 1").text, kInvalidAction);
}

TEST(Household, EveryTaskIsSolvableAndTypesPartition)
{
    auto house = household::HouseholdEnvironment(data_dir() / "household");
    auto types = std::set<std::string> {};
    for (auto const& task: house.tasks())
    {
        ASSERT_TRUE(task.task_type.has_value());
        types.insert(*task.task_type);
    }
    EXPECT_EQ(types, (std::set<std::string>(std::begin(household::kTaskTypes), std::end(household::kTaskTypes))));

    auto const tasks = nlohmann::json::parse(read_file(data_dir() / "household" / "tasks.json"));
    for (auto const& record: tasks.at("tasks"))
    {
        auto const id = record.at("id").get<std::string>();
        auto const goal = household::Goal { .type = record.at("type"), .object_type = record.at("object"), .target_type = record.at("target") };
        (void) house.reset(id);
        auto const plan = household_plan(house, goal);
        auto last = EnvObservation {};
        for (auto const& action: plan)
        {
            ASSERT_FALSE(house.done()) << id << " finished early before " << action;
            last = house.step(action);
            ASSERT_TRUE(last.valid) << id << ": " << action << " -> " << last.text;
        }
        EXPECT_TRUE(last.done) << id;
        EXPECT_EQ(last.reward, 1.0) << id;
        EXPECT_TRUE(house.goal_satisfied()) << id;
    }
}

TEST(Household, SkippingTheProcessingStepDoesNotSucceed)
{
    auto house = household::HouseholdEnvironment(data_dir() / "household");
    (void) house.reset("h2"); // clean a mug, put it on a countertop
    for (auto const* action: { "go to cabinet 1", "open cabinet 1", "take mug 1 from cabinet 1", "go to countertop 1",
                               "put mug 1 in/on countertop 1" })
        EXPECT_TRUE(house.step(action).valid) << action;
    EXPECT_FALSE(house.done());
    EXPECT_FALSE(house.goal_satisfied());
}

TEST(Environments, IdenticalActionSequencesGiveIdenticalObservations)
{
    auto const vocab = std::map<std::string, std::vector<std::string>> {
        { "toyqa", { "Search[Marlowe]", "Search[Kellow]", "Lookup[river]", "Lookup[founded]", "Search[zzz]", "Finish[1642]", "bad" } },
        { "toyfever", { "Search[Marlowe]", "Lookup[1642]", "Finish[SUPPORTS]", "Finish[REFUTES]", "nonsense" } },
        { "toyshop", { "search[green tea]", "search[running shoes]", "click[B0T01]", "click[Next >]", "click[< Prev]",
                       "click[100 g]", "click[Back to Search]", "click[Buy Now]", "click[nothing]" } },
        { "household", { "go to countertop 1", "go to fridge 1", "open fridge 1", "take apple 1 from countertop 1",
                         "put apple 1 in/on diningtable 1", "go to diningtable 1", "look", "close fridge 1", "inventory" } },
    };
    auto rng = std::mt19937_64 { 42 };
    for (auto const& [name, actions]: vocab)
    {
        auto const a = env(name);
        auto const b = env(name);
        for (int episode = 0; episode < 40; ++episode)
        {
            auto const& tasks = a->tasks();
            auto const& task = tasks[rng() % tasks.size()];
            ASSERT_EQ(a->reset(task.id).text, b->reset(task.id).text);
            for (int i = 0; i < 12 && !a->done(); ++i)
            {
                auto const& action = actions[rng() % actions.size()];
                auto const x = a->step(action);
                auto const y = b->step(action);
                ASSERT_EQ(x.text, y.text) << name << " " << action;
                ASSERT_EQ(x.reward, y.reward);
                ASSERT_EQ(x.done, y.done);
                ASSERT_GE(x.reward, 0.0);
                ASSERT_LE(x.reward, 1.0);
            }
        }
    }
}
