/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include <streamshuffle/errors.hpp>
#include <streamshuffle/processor.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace streamshuffle;

namespace {

struct Options {
    std::string specPath;
    std::string faultsPath;
    bool generateFaults = false;
    uint64_t seed = 1;
    std::string journalPath;
    std::string reportPath;
    int seeds = 10;
};

ProcessorSpec loadSpec(const Options& options) {
    return options.specPath.empty() ? demoSpec() : ProcessorSpec::fromJson(loadJsonFile(options.specPath));
}

FaultPlan loadPlan(const Options& options, const ProcessorSpec& spec, uint64_t seed) {
    if (!options.faultsPath.empty()) {
        return FaultPlan::fromJson(loadJsonFile(options.faultsPath));
    }
    return options.generateFaults ? generateFaultPlan(spec, seed) : FaultPlan{};
}

void emit(const Options& options, const std::string& text) {
    if (options.reportPath.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(options.reportPath, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write report to " + options.reportPath);
    }
    out << text;
}

ScenarioReport runOnce(const Options& options, const ProcessorSpec& spec) {
    auto plan = loadPlan(options, spec, options.seed);
    std::optional<std::string> journal;
    if (!options.journalPath.empty()) {
        journal = options.journalPath;
    }
    return runProcessor(spec, plan, options.seed, journal);
}

int soak(const Options& options) {
    auto spec = loadSpec(options);
    int passed = 0;
    for (int i = 0; i < options.seeds; ++i) {
        uint64_t seed = options.seed + static_cast<uint64_t>(i);
        Options perSeed = options;
        perSeed.seed = seed;
        perSeed.generateFaults = true;
        auto report = runProcessor(spec, loadPlan(perSeed, spec, seed), seed);
        passed += report.pass ? 1 : 0;
        std::cout << "seed " << seed << ' ' << (report.pass ? "PASS" : "FAIL") << " duplicates=" << report.exactlyOnce.duplicates
                  << " losses=" << report.exactlyOnce.losses << " converged_ms=" << static_cast<double>(report.convergenceTime) / 1000.0
                  << '\n';
    }
    std::cout << "pass rate " << passed << '/' << options.seeds << '\n';
    return passed == options.seeds ? 0 : 1;
}

}// namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming shuffle processor on a simulated cluster"};
    app.require_subcommand(1);
    Options options;

    auto addCommon = [&](CLI::App* cmd, bool specRequired) {
        auto* spec = cmd->add_option("--spec", options.specPath, "processor spec (JSON)")->check(CLI::ExistingFile);
        if (specRequired) {
            spec->required();
        }
        cmd->add_option("--faults", options.faultsPath, "fault plan (JSON)")->check(CLI::ExistingFile);
        cmd->add_flag("--generate-faults", options.generateFaults, "draw a random fault plan from the seed");
        cmd->add_option("--seed", options.seed, "simulation seed");
        cmd->add_option("--journal", options.journalPath, "write the state-store journal to this file");
        cmd->add_option("--report", options.reportPath, "write the report here instead of stdout");
    };

    auto* run = app.add_subcommand("run", "run a processor and print its report");
    addCommon(run, true);
    auto* demo = app.add_subcommand("demo", "run the built-in access-tally demo");
    addCommon(demo, false);
    auto* verify = app.add_subcommand("verify", "run and exit nonzero unless the oracle check passes");
    addCommon(verify, false);
    auto* soakCmd = app.add_subcommand("soak", "run many seeds with generated fault plans");
    soakCmd->add_option("--spec", options.specPath, "processor spec (JSON)")->check(CLI::ExistingFile);
    soakCmd->add_option("--seed", options.seed, "first seed");
    soakCmd->add_option("--seeds", options.seeds, "number of seeds")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (soakCmd->parsed()) {
            return soak(options);
        }
        auto spec = loadSpec(options);
        auto report = runOnce(options, spec);
        emit(options, report.toJson().dump(2) + "\n");
        if (verify->parsed()) {
            std::cerr << (report.pass ? "PASS" : "FAIL") << '\n';
            return report.pass ? 0 : 1;
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return 2;
    } catch (const Deadlock& e) {
        std::cerr << "deadlock: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
