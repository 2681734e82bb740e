// SPDX-License-Identifier: Apache-2.0
// Regenerates <data>/<env>/fewshots.jsonl by replaying the scripted demonstrations in
// <data>/demo_scripts.json through the real environments, so recorded observations always
// match what the environments produce.
#include <expel/core.hpp>
#include <expel/environment.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

int main(int argc, char** argv)
{
    auto app = CLI::App { "Record manual demonstrations from demo scripts" };
    auto data = std::string {};
    auto check = false;
    app.add_option("data", data, "Data directory")->required();
    app.add_flag("--check", check, "Verify the recorded files instead of rewriting them");
    CLI11_PARSE(app, argc, argv);

    auto const scripts = nlohmann::json::parse(std::ifstream(fs::path(data) / "demo_scripts.json"));
    auto status = 0;
    for (auto const& [env, demos]: scripts.items())
    {
        // The demo tasks are not part of the task set, so they get an environment of their own.
        auto const scratch = fs::temp_directory_path() / fmt::format("expel-demos-{}", env);
        fs::remove_all(scratch);
        fs::create_directories(scratch / env);
        for (auto const& file: fs::directory_iterator(fs::path(data) / env))
            fs::copy(file.path(), scratch / env / file.path().filename());
        auto tasks = nlohmann::json { { "tasks", nlohmann::json::array() } };
        for (auto const& demo: demos)
            tasks["tasks"].push_back(demo.at("task"));
        std::ofstream(scratch / env / "tasks.json") << tasks.dump(2);

        auto environment = expel::make_environment(env, scratch);
        auto recorded = std::vector<expel::Trajectory> {};
        for (auto const& demo: demos)
        {
            auto const id = demo.at("task").at("id").get<std::string>();
            auto const start = environment->reset(id);
            auto trajectory = expel::Trajectory(environment->task(id), 0, start.text);
            for (auto const& step: demo.at("steps"))
            {
                auto const action = step.at("action").get<std::string>();
                auto const obs = environment->step(action);
                trajectory.append_step(expel::Step {
                    step.at("thoughts").get<std::vector<std::string>>(), action, obs.text, obs.reward, obs.valid });
            }
            if (!environment->done() || trajectory.final_reward() != 1.0)
            {
                std::cerr << fmt::format("{}: demo {} does not succeed\n", env, id);
                return 1;
            }
            trajectory.finalize(expel::Outcome::Success);
            recorded.push_back(std::move(trajectory));
        }
        fs::remove_all(scratch);

        auto const target = fs::path(data) / env / "fewshots.jsonl";
        if (check)
        {
            if (expel::load_trajectories(target) != recorded)
            {
                std::cerr << fmt::format("{}: {} is out of date\n", env, target.string());
                status = 1;
            }
            continue;
        }
        expel::save_trajectories(recorded, target);
        std::cout << fmt::format("{}: {} demonstrations\n", env, recorded.size());
    }
    return status;
}
