// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/environment.hpp>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace expel::household
{

/// Task families of the household domain.
inline constexpr std::string_view kTaskTypes[] = { "put", "clean", "heat", "cool", "look", "puttwo" };

struct Receptacle
{
    std::string name; // "fridge 1"
    bool openable = false;
    bool open = false;
};

struct Object
{
    std::string name;     // "apple 1"
    std::string location; // receptacle name; empty while held
    bool clean = false;
    bool hot = false;
    bool cool = false;
    bool on = false; // desklamps only
};

struct Scene
{
    std::string id;
    std::vector<Receptacle> receptacles;
    std::vector<Object> objects;
};

struct Goal
{
    std::string type;        // one of kTaskTypes
    std::string object_type; // "apple"
    std::string target_type; // receptacle type, e.g. "fridge"; "desklamp" for look tasks
};

/// "apple 1" -> "apple"
[[nodiscard]] std::string type_of(std::string_view name);

[[nodiscard]] std::string describe_goal(Goal const& goal);

/// Household analog with verb-phrase commands: go to, open, close, take .. from, put .. in/on,
/// clean/heat/cool .. with, use, look.
class HouseholdEnvironment final: public Environment
{
  public:
    explicit HouseholdEnvironment(std::filesystem::path const& dir);

    [[nodiscard]] std::string const& name() const noexcept override { return _name; }
    [[nodiscard]] std::vector<Task> const& tasks() const noexcept override { return _tasks; }
    EnvObservation reset(std::string const& taskId) override;
    EnvObservation step(std::string_view action) override;
    [[nodiscard]] bool done() const noexcept override { return _done; }

    /// Binary success condition evaluated on the current world state.
    [[nodiscard]] bool goal_satisfied() const;
    [[nodiscard]] Scene const& state() const noexcept { return _state; }
    [[nodiscard]] std::optional<std::string> const& holding() const noexcept { return _holding; }

  private:
    std::optional<std::string> apply(std::string_view action);
    Receptacle* find_receptacle(std::string_view name);
    Object* find_object(std::string_view name);
    std::string describe_contents(Receptacle const& receptacle) const;
    bool accessible(Receptacle const& receptacle) const { return !receptacle.openable || receptacle.open; }

    std::string _name = "household";
    std::map<std::string, Scene> _scenes;
    std::vector<Task> _tasks;
    std::map<std::string, std::pair<std::string, Goal>> _taskGoals; // task id -> (scene id, goal)

    Scene _state;
    Goal _goal;
    std::optional<std::string> _location;
    std::optional<std::string> _holding;
    bool _started = false;
    bool _done = true;
};

} // namespace expel::household
