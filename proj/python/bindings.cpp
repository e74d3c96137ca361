// Thin JSON-in/JSON-out bindings; python/shopsim/__init__.py wraps them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "shopsim/error.hpp"
#include "shopsim/eval.hpp"

namespace py = pybind11;
using namespace shopsim;
using json = nlohmann::ordered_json;

namespace {

std::string step_json(const StepResult& r, const Episode& ep) {
  json j;
  j["observation"] = to_json(r.observation);
  j["terminal"] = r.terminal;
  j["steps"] = ep.steps();
  if (r.terminal) j["reward"] = to_json(ep.reward());
  return j.dump();
}

std::vector<Scenario> scenarios_from(const std::vector<std::string>& names) {
  std::vector<Scenario> out;
  for (const auto& n : names) out.push_back(parse_scenario(n));
  return out;
}

}  // namespace

PYBIND11_MODULE(_shopsim, m) {
  m.doc() = "Deterministic text shopping simulator";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<NotFoundError>(m, "NotFoundError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());

  m.def("score", [](const std::string& target, const std::optional<std::string>& outcome) {
    std::optional<PurchaseOutcome> o;
    if (outcome) o = outcome_from_json(json::parse(*outcome));
    return to_json(score(target_from_json(json::parse(target)), o)).dump();
  }, py::arg("target_json"), py::arg("outcome_json") = std::nullopt);

  m.def("generate_catalog", [](std::uint64_t seed, const std::string& preset, const std::string& out) {
    const auto spec = GenerationSpec::preset(preset);
    const auto c = generate_catalog(seed, spec);
    save_catalog(c, out);
    return c.size();
  }, py::arg("seed"), py::arg("preset"), py::arg("out"));

  m.def("generate_tasks", [](const std::string& catalog, std::uint64_t seed, std::size_t count, double personalized,
                             const std::string& out) {
    const auto c = load_catalog(catalog);
    const auto set = generate_tasks(c, seed, count, {personalized});
    save_task_set(set, out, profiles_path_for(out));
    return set.tasks.size();
  }, py::arg("catalog"), py::arg("seed"), py::arg("count"), py::arg("personalized_fraction") = 0.0, py::arg("out"));

  py::class_<World, std::shared_ptr<World>>(m, "World")
      .def(py::init([](const std::string& catalog, const std::string& tasks) {
             return std::make_shared<World>(load_catalog(catalog), load_task_set(tasks, profiles_path_for(tasks)));
           }),
           py::arg("catalog"), py::arg("tasks"))
      .def("task_ids", [](const World& w) {
        std::vector<std::string> out;
        for (const auto& t : w.tasks().tasks) out.push_back(t.task_id);
        return out;
      })
      .def("task", [](const World& w, const std::string& id) { return to_json(w.tasks().get(id)).dump(); })
      .def("product_count", [](const World& w) { return w.catalog().size(); })
      .def("evaluate", [](const World& w, const std::string& policy, const std::vector<std::string>& scenarios,
                          std::uint64_t seed, std::size_t limit) {
        std::vector<const Task*> tasks;
        for (const auto& t : w.tasks().tasks) {
          if (limit && tasks.size() == limit) break;
          tasks.push_back(&t);
        }
        EvalOptions o;
        o.scenarios = scenarios_from(scenarios);
        o.seed = seed;
        o.parallelism = 1;
        EvalResult res;
        {
          py::gil_scoped_release release;
          res = run_evaluation(w, make_policy_factory(policy), tasks, o);
        }
        return res.metrics.to_json().dump();
      }, py::arg("policy"), py::arg("scenarios") = std::vector<std::string>{}, py::arg("seed") = 0, py::arg("limit") = 0)
      .def("replay", [](const World& w, const std::string& jsonl) {
        std::istringstream in(jsonl);
        const auto rep = replay_trace(w, EpisodeTrace::from_jsonl(in));
        json j;
        j["ok"] = rep.ok();
        j["observations_match"] = rep.observations_match;
        j["reward_match"] = rep.reward_match;
        j["replayed"] = to_json(rep.replayed);
        return j.dump();
      });

  // keeps its World alive for as long as the episode exists
  py::class_<Episode>(m, "Episode")
      .def(py::init([](std::shared_ptr<World> world, const std::string& task_id, const std::string& scenario,
                       std::uint64_t seed, bool fixed_time) {
             EpisodeOptions o;
             o.scenario = parse_scenario(scenario);
             o.seed = seed;
             o.session_id = task_id + "." + scenario;
             if (fixed_time) o.clock = fixed_clock();
             return std::make_unique<Episode>(*world, world->tasks().get(task_id), o);
           }),
           py::arg("world"), py::arg("task_id"), py::arg("scenario") = "single_turn", py::arg("seed") = 0,
           py::arg("fixed_time") = false, py::keep_alive<1, 2>())
      .def("reset", [](Episode& e) { return to_json(e.reset()).dump(); })
      .def("step", [](Episode& e, const std::string& action) { return step_json(e.step_text(action), e); })
      .def("abandon", &Episode::abandon)
      .def_property_readonly("terminal", &Episode::terminal)
      .def_property_readonly("steps", &Episode::steps)
      .def("reward", [](const Episode& e) { return to_json(e.reward()).dump(); })
      .def("trace", [](const Episode& e) { return e.trace().to_jsonl(); });
}
