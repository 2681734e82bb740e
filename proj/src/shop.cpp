// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"

#include <expel/error.hpp>
#include <expel/shop.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace expel::shop
{

namespace
{
    std::set<std::string> const& stopwords()
    {
        static auto const words = std::set<std::string> {
            "a", "an", "and", "the", "of", "for", "with", "in", "on", "to", "by", "or", "set", "pack", "piece",
        };
        return words;
    }
} // namespace

std::set<std::string> SimpleTitleTagger::content_tokens(std::string_view title) const
{
    auto out = std::set<std::string> {};
    for (auto& token: detail::alpha_tokens(title))
        if (!stopwords().contains(token))
            out.insert(std::move(token));
    return out;
}

TitleTagger const& default_tagger()
{
    static auto const tagger = SimpleTitleTagger {};
    return tagger;
}

double text_match(std::string_view purchasedTitle, std::string_view goalTitle, TitleTagger const& tagger)
{
    auto const goal = tagger.content_tokens(goalTitle);
    if (goal.empty())
        return 0.0;
    auto const purchased = tagger.content_tokens(purchasedTitle);
    auto const shared = std::ranges::count_if(goal, [&](auto const& t) { return purchased.contains(t); });
    return static_cast<double>(shared) / static_cast<double>(goal.size());
}

double r_type(double textMatch, bool queryMatch, bool categoryMatch) noexcept
{
    if (textMatch == 0.0)
        return 0.0;
    if (textMatch < 0.1)
        return 0.1;
    if (textMatch <= 0.2 && !queryMatch && !categoryMatch)
        return 0.5;
    return 1.0;
}

double shop_reward(ShopItem const& purchased, ShopGoal const& goal, TitleTagger const& tagger)
{
    auto const matchedAttributes =
        std::ranges::count_if(goal.attributes, [&](auto const& a) { return purchased.attributes.contains(a); });
    auto const matchedOptions =
        std::ranges::count_if(goal.options, [&](auto const& o) { return purchased.selected_options.contains(o); });
    auto const priceOk = purchased.price <= goal.price_cap ? 1 : 0;

    auto const numerator = static_cast<double>(matchedAttributes + matchedOptions + priceOk);
    auto const denominator = static_cast<double>(goal.attributes.size() + goal.options.size() + 1);

    auto const tm = text_match(purchased.title, goal.title, tagger);
    auto const queryMatch = to_lower(trim(purchased.query)) == to_lower(trim(goal.query));
    auto const categoryMatch = to_lower(trim(purchased.category)) == to_lower(trim(goal.category));
    return numerator / denominator * r_type(tm, queryMatch, categoryMatch);
}

ShopEnvironment::ShopEnvironment(std::filesystem::path const& dir)
{
    auto const catalog = detail::read_json_file(dir / "catalog.json");
    for (auto const& i: catalog.at("items"))
    {
        auto item = ShopItem {
            .asin = i.at("asin").get<std::string>(),
            .title = i.at("title").get<std::string>(),
            .category = i.value("category", std::string {}),
            .query = i.value("query", std::string {}),
            .price = i.at("price").get<double>(),
            .attributes = i.value("attributes", std::set<std::string> {}),
            .option_choices = i.value("options", std::map<std::string, std::vector<std::string>> {}),
        };
        if (item.price < 0.0)
            throw ConfigError(fmt::format("toyshop: item '{}' has a negative price", item.asin));
        _catalog.push_back(std::move(item));
    }

    auto const tasks = detail::read_json_file(dir / "tasks.json");
    for (auto const& t: tasks.at("tasks"))
    {
        auto const& g = t.at("goal");
        auto goal = ShopGoal {
            .attributes = g.value("attributes", std::set<std::string> {}),
            .options = g.value("options", std::set<std::string> {}),
            .price_cap = g.at("price_cap").get<double>(),
            .title = g.at("title").get<std::string>(),
            .query = g.value("query", std::string {}),
            .category = g.value("category", std::string {}),
        };
        if (goal.price_cap < 0.0)
            throw ConfigError("toyshop: negative price cap");
        auto task = Task {
            .id = t.at("id").get<std::string>(),
            .env_name = _name,
            .description = fmt::format("{}, and price lower than {:.2f} dollars", t.at("request").get<std::string>(),
                                       goal.price_cap),
            .task_type = t.contains("type") ? std::optional(t["type"].get<std::string>()) : std::nullopt,
        };
        if (!_goals.emplace(task.id, std::move(goal)).second)
            throw ConfigError(fmt::format("toyshop: duplicate task id '{}'", task.id));
        _tasks.push_back(std::move(task));
    }
}

std::vector<std::size_t> ShopEnvironment::search(std::string_view query) const
{
    auto const terms = detail::alpha_tokens(query);
    auto scored = std::vector<std::pair<std::size_t, std::size_t>> {}; // (score, catalog index)
    for (std::size_t i = 0; i < _catalog.size(); ++i)
    {
        auto const& item = _catalog[i];
        auto words = std::set<std::string> {};
        for (auto& t: detail::alpha_tokens(item.title))
            words.insert(std::move(t));
        for (auto const& a: item.attributes)
            for (auto& t: detail::alpha_tokens(a))
                words.insert(std::move(t));
        for (auto& t: detail::alpha_tokens(item.category))
            words.insert(std::move(t));
        auto const score = static_cast<std::size_t>(std::ranges::count_if(terms, [&](auto const& t) { return words.contains(t); }));
        if (score > 0)
            scored.emplace_back(score, i);
    }
    std::ranges::stable_sort(scored, [](auto const& a, auto const& b) { return a.first > b.first; });
    auto out = std::vector<std::size_t> {};
    out.reserve(scored.size());
    for (auto const& [score, index]: scored)
        out.push_back(index);
    return out;
}

EnvObservation ShopEnvironment::reset(std::string const& taskId)
{
    auto const& t = task(taskId);
    _taskId = t.id;
    _instruction = t.description;
    _started = true;
    _page = Page::Search;
    _results.clear();
    _resultPage = 0;
    _item.reset();
    _selected.clear();
    return EnvObservation { .text = render_search() };
}

std::string ShopEnvironment::render_search() const
{
    return fmt::format("WebShop [SEP] Instruction: [SEP] {} [SEP] [Search]", _instruction);
}

std::string ShopEnvironment::render_results() const
{
    auto const pages = (_results.size() + kItemsPerPage - 1) / kItemsPerPage;
    auto out = fmt::format("[Back to Search] [SEP] Page {} (Total results: {})", _resultPage + 1, _results.size());
    if (_resultPage > 0)
        out += " [SEP] [< Prev]";
    if (_resultPage + 1 < pages)
        out += " [SEP] [Next >]";
    auto const begin = _resultPage * kItemsPerPage;
    auto const end = std::min(_results.size(), begin + kItemsPerPage);
    for (auto i = begin; i < end; ++i)
    {
        auto const& item = _catalog[_results[i]];
        out += fmt::format(" [SEP] [{}] [SEP] {} [SEP] ${:.2f}", item.asin, item.title, item.price);
    }
    return out;
}

std::string ShopEnvironment::render_item() const
{
    auto const& item = _catalog[*_item];
    auto out = std::string("[Back to Search] [SEP] [< Prev]");
    for (auto const& [option, choices]: item.option_choices)
    {
        out += fmt::format(" [SEP] {}:", option);
        for (auto const& choice: choices)
            out += fmt::format(" [{}]", choice);
    }
    out += fmt::format(" [SEP] {} [SEP] Price: ${:.2f}", item.title, item.price);
    if (!item.attributes.empty())
        out += fmt::format(" [SEP] Features: {}", join(std::vector(item.attributes.begin(), item.attributes.end()), ", "));
    if (!_selected.empty())
    {
        auto chosen = std::vector<std::string> {};
        for (auto const& [option, value]: _selected)
            chosen.push_back(fmt::format("{}={}", option, value));
        out += fmt::format(" [SEP] Selected: {}", join(chosen, ", "));
    }
    out += " [SEP] [Buy Now]";
    return out;
}

EnvObservation ShopEnvironment::step(std::string_view action)
{
    if (!_started)
        throw UsageError("toyshop: step before reset");
    if (_page == Page::Done)
        throw UsageError("toyshop: episode already finished");

    auto const invalid = EnvObservation { .text = std::string(kInvalidAction), .valid = false };
    auto const parsed = detail::parse_bracket_action(action);
    if (!parsed)
        return invalid;

    if (parsed->verb == "search")
    {
        if (_page != Page::Search || trim(parsed->argument).empty())
            return invalid;
        _results = search(parsed->argument);
        _resultPage = 0;
        _page = Page::Results;
        return EnvObservation { .text = render_results() };
    }
    if (parsed->verb == "click")
        return click(trim(parsed->argument));
    return invalid;
}

EnvObservation ShopEnvironment::click(std::string_view target)
{
    auto const invalid = EnvObservation { .text = std::string(kInvalidAction), .valid = false };
    auto const lowered = to_lower(target);

    if (lowered == "back to search" && (_page == Page::Results || _page == Page::Item))
    {
        _page = Page::Search;
        _results.clear();
        _item.reset();
        _selected.clear();
        return EnvObservation { .text = render_search() };
    }

    if (_page == Page::Results)
    {
        auto const pages = (_results.size() + kItemsPerPage - 1) / kItemsPerPage;
        if (lowered == "next >" && _resultPage + 1 < pages)
        {
            ++_resultPage;
            return EnvObservation { .text = render_results() };
        }
        if (lowered == "< prev" && _resultPage > 0)
        {
            --_resultPage;
            return EnvObservation { .text = render_results() };
        }
        auto const begin = _resultPage * kItemsPerPage;
        auto const end = std::min(_results.size(), begin + kItemsPerPage);
        for (auto i = begin; i < end; ++i)
        {
            if (to_lower(_catalog[_results[i]].asin) == lowered)
            {
                _item = _results[i];
                _selected.clear();
                _page = Page::Item;
                return EnvObservation { .text = render_item() };
            }
        }
        return invalid;
    }

    if (_page == Page::Item)
    {
        auto const& item = _catalog[*_item];
        if (lowered == "< prev")
        {
            _page = Page::Results;
            _item.reset();
            _selected.clear();
            return EnvObservation { .text = render_results() };
        }
        if (lowered == "buy now")
        {
            auto purchased = item;
            for (auto const& [option, value]: _selected)
                purchased.selected_options.insert(value);
            auto const reward = shop_reward(purchased, _goals.at(_taskId));
            _page = Page::Done;
            return EnvObservation {
                .text = fmt::format("Thank you for shopping with us! Your score: {:.2f}", reward),
                .reward = reward,
                .done = true,
            };
        }
        for (auto const& [option, choices]: item.option_choices)
        {
            for (auto const& choice: choices)
            {
                if (to_lower(choice) == lowered)
                {
                    _selected[option] = choice;
                    return EnvObservation { .text = render_item() };
                }
            }
        }
        return invalid;
    }

    return invalid;
}

} // namespace expel::shop
