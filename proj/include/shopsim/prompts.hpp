#pragma once

#include <string>

#include "shopsim/tasks.hpp"

namespace shopsim {

/// System prompt for an LLM agent. Personalized scenarios embed the profile
/// as JSON.
std::string agent_system_prompt(Scenario scenario, const UserProfile* profile);

/// Role-play prompt for the LLM shopper with the goal filled in.
std::string shopper_system_prompt(const std::string& goal);

/// Canonical rendering of a task's structured target into the shopper goal.
std::string render_goal(const Task& task);

}  // namespace shopsim
