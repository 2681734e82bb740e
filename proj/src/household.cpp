// SPDX-License-Identifier: Apache-2.0
#include "detail.hpp"

#include <expel/error.hpp>
#include <expel/household.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <regex>

namespace expel::household
{

std::string type_of(std::string_view name)
{
    name = trim(name);
    auto const space = name.rfind(' ');
    if (space != std::string_view::npos)
    {
        auto const suffix = name.substr(space + 1);
        if (!suffix.empty() && std::ranges::all_of(suffix, [](unsigned char c) { return std::isdigit(c) != 0; }))
            return std::string(name.substr(0, space));
    }
    return std::string(name);
}

std::string describe_goal(Goal const& goal)
{
    if (goal.type == "put")
        return fmt::format("put some {} on {}.", goal.object_type, goal.target_type);
    if (goal.type == "clean")
        return fmt::format("put a clean {} in {}.", goal.object_type, goal.target_type);
    if (goal.type == "heat")
        return fmt::format("put a hot {} in {}.", goal.object_type, goal.target_type);
    if (goal.type == "cool")
        return fmt::format("put a cool {} in {}.", goal.object_type, goal.target_type);
    if (goal.type == "look")
        return fmt::format("look at {} under the {}.", goal.object_type, goal.target_type);
    if (goal.type == "puttwo")
        return fmt::format("put two {} in {}.", goal.object_type, goal.target_type);
    throw ConfigError(fmt::format("household: unknown task type '{}'", goal.type));
}

HouseholdEnvironment::HouseholdEnvironment(std::filesystem::path const& dir)
{
    auto const scenes = detail::read_json_file(dir / "scenes.json");
    for (auto const& s: scenes.at("scenes"))
    {
        auto scene = Scene { .id = s.at("id").get<std::string>() };
        for (auto const& r: s.at("receptacles"))
        {
            auto const openable = r.value("openable", false);
            scene.receptacles.push_back(Receptacle {
                .name = r.at("name").get<std::string>(),
                .openable = openable,
                .open = openable ? r.value("open", false) : true,
            });
        }
        for (auto const& o: s.at("objects"))
            scene.objects.push_back(Object { .name = o.at("name").get<std::string>(), .location = o.at("at").get<std::string>() });
        for (auto const& o: scene.objects)
            if (std::ranges::none_of(scene.receptacles, [&](auto const& r) { return r.name == o.location; }))
                throw ConfigError(fmt::format("household scene '{}': object '{}' placed in unknown receptacle '{}'",
                                              scene.id, o.name, o.location));
        auto const id = scene.id;
        _scenes.emplace(id, std::move(scene));
    }

    auto const tasks = detail::read_json_file(dir / "tasks.json");
    for (auto const& t: tasks.at("tasks"))
    {
        auto goal = Goal {
            .type = t.at("type").get<std::string>(),
            .object_type = t.at("object").get<std::string>(),
            .target_type = t.at("target").get<std::string>(),
        };
        if (std::ranges::find(kTaskTypes, goal.type) == std::end(kTaskTypes))
            throw ConfigError(fmt::format("household: unknown task type '{}'", goal.type));
        auto const sceneId = t.at("scene").get<std::string>();
        if (!_scenes.contains(sceneId))
            throw ConfigError(fmt::format("household: task references unknown scene '{}'", sceneId));
        auto task = Task {
            .id = t.at("id").get<std::string>(),
            .env_name = _name,
            .description = describe_goal(goal),
            .task_type = goal.type,
        };
        if (!_taskGoals.emplace(task.id, std::pair(sceneId, goal)).second)
            throw ConfigError(fmt::format("household: duplicate task id '{}'", task.id));
        _tasks.push_back(std::move(task));
    }
}

EnvObservation HouseholdEnvironment::reset(std::string const& taskId)
{
    auto const& t = task(taskId);
    auto const& [sceneId, goal] = _taskGoals.at(t.id);
    _state = _scenes.at(sceneId);
    _goal = goal;
    _location.reset();
    _holding.reset();
    _started = true;
    _done = false;

    auto names = std::vector<std::string> {};
    for (auto const& r: _state.receptacles)
        names.push_back(fmt::format("a {}", r.name));
    return EnvObservation {
        .text = fmt::format("You are in the middle of a room. Looking quickly around you, you see {}.\nYour task is to: {}",
                            join(names, ", "), t.description),
    };
}

EnvObservation HouseholdEnvironment::step(std::string_view action)
{
    if (!_started)
        throw UsageError("household: step before reset");
    if (_done)
        throw UsageError("household: episode already finished");

    auto const result = apply(to_lower(trim(action)));
    if (!result)
        return EnvObservation { .text = std::string(kInvalidAction), .valid = false };
    if (goal_satisfied())
    {
        _done = true;
        return EnvObservation { .text = *result, .reward = 1.0, .done = true };
    }
    return EnvObservation { .text = *result };
}

Receptacle* HouseholdEnvironment::find_receptacle(std::string_view name)
{
    auto const it = std::ranges::find_if(_state.receptacles, [&](auto const& r) { return r.name == name; });
    return it == _state.receptacles.end() ? nullptr : &*it;
}

Object* HouseholdEnvironment::find_object(std::string_view name)
{
    auto const it = std::ranges::find_if(_state.objects, [&](auto const& o) { return o.name == name; });
    return it == _state.objects.end() ? nullptr : &*it;
}

std::string HouseholdEnvironment::describe_contents(Receptacle const& receptacle) const
{
    auto names = std::vector<std::string> {};
    for (auto const& o: _state.objects)
        if (o.location == receptacle.name)
            names.push_back(fmt::format("a {}", o.name));
    return names.empty() ? std::string("nothing") : join(names, ", ");
}

std::optional<std::string> HouseholdEnvironment::apply(std::string_view action)
{
    static auto const goTo = std::regex(R"(^go to (.+)$)");
    static auto const open = std::regex(R"(^open (.+)$)");
    static auto const close = std::regex(R"(^close (.+)$)");
    static auto const take = std::regex(R"(^take (.+) from (.+)$)");
    static auto const put = std::regex(R"(^put (.+) (in/on|in|on) (.+)$)");
    static auto const transform = std::regex(R"(^(clean|heat|cool) (.+) with (.+)$)");
    static auto const use = std::regex(R"(^use (.+)$)");

    auto const text = std::string(action);
    auto m = std::smatch {};
    auto const here = [&]() -> Receptacle* { return _location ? find_receptacle(*_location) : nullptr; };

    if (text == "look")
    {
        if (!_location)
            return std::string("You are in the middle of a room.");
        return fmt::format("You are facing the {}. Next to it, you see nothing.", *_location);
    }
    if (std::regex_match(text, m, goTo))
    {
        auto* r = find_receptacle(m[1].str());
        if (!r)
            return std::nullopt;
        _location = r->name;
        if (!accessible(*r))
            return fmt::format("You arrive at {}. The {} is closed.", r->name, r->name);
        auto const prep = r->openable ? "In" : "On";
        return fmt::format("You arrive at {}. {} the {}, you see {}.", r->name, prep, r->name, describe_contents(*r));
    }
    if (std::regex_match(text, m, open))
    {
        auto* r = here();
        if (!r || r->name != m[1].str() || !r->openable || r->open)
            return std::nullopt;
        r->open = true;
        return fmt::format("You open the {}. The {} is open. In it, you see {}.", r->name, r->name, describe_contents(*r));
    }
    if (std::regex_match(text, m, close))
    {
        auto* r = here();
        if (!r || r->name != m[1].str() || !r->openable || !r->open)
            return std::nullopt;
        r->open = false;
        return fmt::format("You close the {}.", r->name);
    }
    if (std::regex_match(text, m, take))
    {
        auto* r = here();
        auto* o = find_object(m[1].str());
        if (!r || !o || _holding || r->name != m[2].str() || o->location != r->name || !accessible(*r))
            return std::nullopt;
        if (type_of(o->name) == "desklamp")
            return std::nullopt;
        o->location.clear();
        _holding = o->name;
        return fmt::format("You pick up the {} from the {}.", o->name, r->name);
    }
    if (std::regex_match(text, m, put))
    {
        auto* r = here();
        if (!r || !_holding || *_holding != m[1].str() || r->name != m[3].str() || !accessible(*r))
            return std::nullopt;
        find_object(*_holding)->location = r->name;
        _holding.reset();
        return fmt::format("You put the {} {} the {}.", m[1].str(), m[2].str(), r->name);
    }
    if (std::regex_match(text, m, transform))
    {
        auto* r = here();
        auto const verb = m[1].str();
        if (!r || !_holding || *_holding != m[2].str() || r->name != m[3].str())
            return std::nullopt;
        auto const tool = type_of(r->name);
        auto* o = find_object(*_holding);
        if (verb == "clean" && tool == "sinkbasin")
        {
            o->clean = true;
            return fmt::format("You clean the {} using the {}.", o->name, r->name);
        }
        if (verb == "heat" && tool == "microwave")
        {
            o->hot = true;
            o->cool = false;
            return fmt::format("You heat the {} using the {}.", o->name, r->name);
        }
        if (verb == "cool" && tool == "fridge")
        {
            o->cool = true;
            o->hot = false;
            return fmt::format("You cool the {} using the {}.", o->name, r->name);
        }
        return std::nullopt;
    }
    if (std::regex_match(text, m, use))
    {
        auto* o = find_object(m[1].str());
        if (!o || !_location || o->location != *_location || type_of(o->name) != "desklamp")
            return std::nullopt;
        o->on = true;
        return fmt::format("You turn on the {}.", o->name);
    }
    return std::nullopt;
}

bool HouseholdEnvironment::goal_satisfied() const
{
    auto const inTarget = [&](Object const& o) {
        return !o.location.empty() && type_of(o.location) == _goal.target_type && type_of(o.name) == _goal.object_type;
    };

    if (_goal.type == "put")
        return std::ranges::any_of(_state.objects, inTarget);
    if (_goal.type == "clean")
        return std::ranges::any_of(_state.objects, [&](auto const& o) { return inTarget(o) && o.clean; });
    if (_goal.type == "heat")
        return std::ranges::any_of(_state.objects, [&](auto const& o) { return inTarget(o) && o.hot; });
    if (_goal.type == "cool")
        return std::ranges::any_of(_state.objects, [&](auto const& o) { return inTarget(o) && o.cool; });
    if (_goal.type == "look")
    {
        if (!_holding || type_of(*_holding) != _goal.object_type || !_location)
            return false;
        return std::ranges::any_of(_state.objects, [&](auto const& o) {
            return type_of(o.name) == _goal.target_type && o.on && o.location == *_location;
        });
    }
    if (_goal.type == "puttwo")
    {
        for (auto const& r: _state.receptacles)
        {
            if (type_of(r.name) != _goal.target_type)
                continue;
            auto const count = std::ranges::count_if(_state.objects, [&](auto const& o) {
                return o.location == r.name && type_of(o.name) == _goal.object_type;
            });
            if (count >= 2)
                return true;
        }
        return false;
    }
    return false;
}

} // namespace expel::household
