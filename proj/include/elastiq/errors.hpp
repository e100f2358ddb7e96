#pragma once

#include <stdexcept>
#include <string>

namespace elastiq {

struct DegenerateSamplesError : std::runtime_error {
    explicit DegenerateSamplesError(const std::string& what) : std::runtime_error(what) {}
};

struct MalformedTimelineError : std::runtime_error {
    explicit MalformedTimelineError(const std::string& what) : std::runtime_error(what) {}
};

struct NotEnoughTuplesError : std::runtime_error {
    explicit NotEnoughTuplesError(const std::string& what) : std::runtime_error(what) {}
};

struct InfeasibleBatchError : std::runtime_error {
    explicit InfeasibleBatchError(const std::string& what) : std::runtime_error(what) {}
};

struct ScenarioError : std::runtime_error {
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

struct ScenarioInfeasibleError : std::runtime_error {
    explicit ScenarioInfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace elastiq
