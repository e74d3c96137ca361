// Command-line front end: data generation, scoring, the gateway and the
// evaluation harness.

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "shopsim/episode.hpp"
#include "shopsim/error.hpp"
#include "shopsim/eval.hpp"
#include "shopsim/gateway.hpp"

using namespace shopsim;
using json = nlohmann::ordered_json;

namespace {

GatewayServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

GenerationSpec spec_from_arg(const std::string& arg) {
  if (std::filesystem::exists(arg)) {
    std::ifstream in(arg);
    try {
      return GenerationSpec::from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ValidationError(std::string("bad spec file: ") + e.what());
    }
  }
  return GenerationSpec::preset(arg);
}

std::shared_ptr<World> load_world(const std::string& catalog, const std::string& tasks) {
  auto c = load_catalog(catalog);
  if (std::filesystem::exists(manifest_path_for(catalog))) {
    std::ifstream in(manifest_path_for(catalog));
    check_manifest(CatalogManifest::from_json(json::parse(in)), c);
  }
  auto t = load_task_set(tasks, profiles_path_for(tasks));
  return std::make_shared<World>(std::move(c), std::move(t));
}

std::vector<Scenario> scenarios_from(const std::vector<std::string>& names) {
  std::vector<Scenario> out;
  for (const auto& n : names) {
    if (n == "all") return {std::begin(kAllScenarios), std::end(kAllScenarios)};
    out.push_back(parse_scenario(n));
  }
  return out;
}

std::vector<const Task*> select_tasks(const World& w, const std::string& split, std::size_t limit) {
  std::vector<const Task*> out;
  for (const auto& t : w.tasks().tasks) {
    if (!split.empty() && split != "all" && t.split != parse_split(split)) continue;
    out.push_back(&t);
  }
  if (limit > 0 && out.size() > limit) out.resize(limit);
  return out;
}

std::shared_ptr<ChatBackend> chat_from(const std::string& config_path) {
  return std::make_shared<HttpChatBackend>(ChatConfig::load(config_path));
}

void print_breakdown(const RewardBreakdown& r) { std::cout << to_json(r).dump(2) << "\n"; }

struct WorldArgs {
  std::string catalog;
  std::string tasks;
  void add(CLI::App* app) {
    app->add_option("--catalog", catalog, "Catalog file (one product per line)")->required()->check(CLI::ExistingFile);
    app->add_option("--tasks", tasks, "Task file; profiles are read from <stem>.profiles.jsonl")
        ->required()
        ->check(CLI::ExistingFile);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic text shopping simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // ---- catalog ----
  auto* catalog = app.add_subcommand("catalog", "Generate or validate catalogs")->require_subcommand(1);
  std::uint64_t cat_seed = 0;
  std::string cat_spec = "fine120", cat_out;
  auto* cat_gen = catalog->add_subcommand("generate", "Write a synthetic catalog and its manifest");
  cat_gen->add_option("--seed", cat_seed, "Generator seed")->required();
  cat_gen->add_option("--spec", cat_spec, "Preset (tiny, fine120, desk, bench) or JSON spec file")->capture_default_str();
  cat_gen->add_option("--out", cat_out, "Output catalog path")->required();
  cat_gen->callback([&] {
    const auto spec = spec_from_arg(cat_spec);
    const auto c = generate_catalog(cat_seed, spec);
    save_catalog(c, cat_out);
    const auto m = make_manifest(c, cat_seed, spec.to_json());
    open_out(manifest_path_for(cat_out).string()) << m.to_json().dump(2) << "\n";
    std::cout << "wrote " << c.size() << " products to " << cat_out << "\n";
  });
  std::string cat_path;
  auto* cat_val = catalog->add_subcommand("validate", "Check every record and the manifest");
  cat_val->add_option("path", cat_path, "Catalog file")->required()->check(CLI::ExistingFile);
  cat_val->callback([&] {
    const auto c = load_catalog(cat_path);
    const auto mp = manifest_path_for(cat_path);
    if (std::filesystem::exists(mp)) {
      std::ifstream in(mp);
      check_manifest(CatalogManifest::from_json(json::parse(in)), c);
    } else {
      std::cerr << "warning: no manifest at " << mp.string() << "\n";
    }
    std::cout << "ok: " << c.size() << " products\n";
  });

  // ---- tasks ----
  auto* tasks = app.add_subcommand("tasks", "Generate, split or validate task sets")->require_subcommand(1);
  std::string t_catalog, t_out, t_in, t_train, t_test;
  std::uint64_t t_seed = 0;
  std::size_t t_count = 500;
  double t_pers = 0.3, t_ratio = 0.8;
  auto* t_gen = tasks->add_subcommand("generate", "Generate uniquely satisfiable tasks");
  t_gen->add_option("--catalog", t_catalog)->required()->check(CLI::ExistingFile);
  t_gen->add_option("--seed", t_seed)->required();
  t_gen->add_option("--count", t_count)->capture_default_str();
  t_gen->add_option("--personalized-fraction", t_pers)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  t_gen->add_option("--out", t_out, "Task file; profiles go to <stem>.profiles.jsonl")->required();
  t_gen->callback([&] {
    const auto c = load_catalog(t_catalog);
    const auto set = generate_tasks(c, t_seed, t_count, TaskMix{t_pers});
    save_task_set(set, t_out, profiles_path_for(t_out));
    std::cout << "wrote " << set.tasks.size() << " tasks and " << set.profiles.size() << " profiles\n";
  });
  auto* t_split = tasks->add_subcommand("split", "Stratified train/test split by domain");
  t_split->add_option("--in", t_in)->required()->check(CLI::ExistingFile);
  t_split->add_option("--ratio", t_ratio, "Train share")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  t_split->add_option("--seed", t_seed)->required();
  t_split->add_option("--train", t_train)->required();
  t_split->add_option("--test", t_test)->required();
  t_split->callback([&] {
    const auto set = load_task_set(t_in, profiles_path_for(t_in));
    auto [train, test] = split_tasks(set.tasks, t_ratio, t_seed);
    auto save = [&](std::vector<Task> part, const std::string& path) {
      TaskSet s;
      for (const auto& t : part) {
        if (t.profile_ref) s.profiles.emplace(*t.profile_ref, set.profiles.at(*t.profile_ref));
      }
      s.tasks = std::move(part);
      save_task_set(s, path, profiles_path_for(path));
      return s.tasks.size();
    };
    const auto ntrain = save(std::move(train), t_train);
    const auto ntest = save(std::move(test), t_test);
    std::cout << "train " << ntrain << ", test " << ntest << "\n";
  });
  auto* t_val = tasks->add_subcommand("validate", "Re-check uniqueness and references");
  t_val->add_option("path", t_in)->required()->check(CLI::ExistingFile);
  t_val->add_option("--catalog", t_catalog)->required()->check(CLI::ExistingFile);
  int t_status = 0;
  t_val->callback([&] {
    const auto c = load_catalog(t_catalog);
    const auto set = load_task_set(t_in, profiles_path_for(t_in));
    const auto problems = validate_tasks(set, c);
    for (const auto& p : problems) std::cout << p << "\n";
    if (problems.empty()) {
      std::cout << "ok: " << set.tasks.size() << " tasks\n";
    } else {
      t_status = 1;
    }
  });

  // ---- score ----
  auto* score_cmd = app.add_subcommand("score", "Re-score a persisted trace");
  std::string s_trace;
  WorldArgs s_world;
  score_cmd->add_option("--trace", s_trace)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--catalog", s_world.catalog, "Also replay against this catalog")->check(CLI::ExistingFile);
  score_cmd->add_option("--tasks", s_world.tasks)->check(CLI::ExistingFile);
  int score_status = 0;
  score_cmd->callback([&] {
    const auto trace = EpisodeTrace::load(s_trace);
    const auto r = rescore(trace);
    print_breakdown(r);
    if (!(r == trace.recorded_reward())) {
      std::cerr << "mismatch: recorded breakdown differs\n";
      score_status = 1;
    }
    if (!s_world.catalog.empty() && !s_world.tasks.empty()) {
      const auto world = load_world(s_world.catalog, s_world.tasks);
      const auto rep = replay_trace(*world, trace);
      std::cout << "replay: observations " << (rep.observations_match ? "match" : "differ") << ", reward "
                << (rep.reward_match ? "match" : "differ") << "\n";
      if (!rep.ok()) score_status = 1;
    }
  });

  // ---- serve ----
  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  WorldArgs v_world;
  std::string v_host = "127.0.0.1", v_config;
  int v_port = 8080;
  v_world.add(serve);
  serve->add_option("--host", v_host)->capture_default_str();
  serve->add_option("--port", v_port)->capture_default_str();
  serve->add_option("--config", v_config, "Gateway JSON config")->check(CLI::ExistingFile);
  int serve_status = 0;
  serve->callback([&] {
    auto cfg = GatewayConfig::load(v_config);
    GatewayServer server(cfg.token);
    if (!server.bind(v_host, v_port)) throw Error("cannot bind " + v_host + ":" + std::to_string(v_port));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    // answer /health with not_ready while the catalog loads
    std::thread loop([&] { server.listen_after_bind(); });
    try {
      auto world = load_world(v_world.catalog, v_world.tasks);
      server.attach(std::make_shared<SessionManager>(std::move(world), cfg));
      std::cerr << "listening on " << v_host << ":" << v_port << "\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      serve_status = 1;
      server.stop();
    }
    loop.join();
    g_server = nullptr;
  });

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluation harness")->require_subcommand(1);
  WorldArgs e_world;
  std::string e_policy = "oracle", e_split = "all", e_trace_dir, e_csv, e_json, e_llm, e_shopper = "scripted";
  std::vector<std::string> e_scen = {"all"};
  std::uint64_t e_seed = 0;
  std::size_t e_parallel = 8, e_limit = 0;
  auto add_run_opts = [&](CLI::App* c) {
    e_world.add(c);
    c->add_option("--policy", e_policy, "oracle, random, noisy[:eps] or llm")->capture_default_str();
    c->add_option("--seed", e_seed)->capture_default_str();
    c->add_option("--split", e_split, "train, test or all")->capture_default_str();
    c->add_option("--limit", e_limit, "Use at most this many tasks (0 = all)")->capture_default_str();
    c->add_option("--parallel", e_parallel)->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--trace-dir", e_trace_dir, "Write one trace per episode here");
    c->add_option("--llm-config", e_llm, "Chat backend JSON config for llm policy/shopper");
  };

  auto* e_run = eval->add_subcommand("run", "Run a policy over tasks and print the metrics table");
  add_run_opts(e_run);
  e_run->add_option("--scenario", e_scen, "Scenario names or 'all'")->capture_default_str();
  e_run->add_option("--shopper", e_shopper, "scripted, scripted-leaky or llm")->capture_default_str();
  e_run->add_option("--csv", e_csv, "Also write the table as CSV");
  e_run->add_option("--json", e_json, "Also write the table as JSON");
  e_run->callback([&] {
    const auto world = load_world(e_world.catalog, e_world.tasks);
    std::shared_ptr<ChatBackend> chat;
    if (!e_llm.empty() || e_policy == "llm" || e_shopper == "llm") chat = chat_from(e_llm);
    EvalOptions o;
    o.scenarios = scenarios_from(e_scen);
    o.seed = e_seed;
    o.parallelism = e_parallel;
    o.trace_dir = e_trace_dir;
    if (e_shopper == "scripted-leaky") {
      o.shopper.leaky = true;
    } else {
      o.shopper_backend = e_shopper;
    }
    o.shopper_chat = chat;
    const auto res = run_evaluation(*world, make_policy_factory(e_policy, chat), select_tasks(*world, e_split, e_limit), o);
    std::cout << res.metrics.to_text();
    if (!e_csv.empty()) open_out(e_csv) << res.metrics.to_csv();
    if (!e_json.empty()) open_out(e_json) << res.metrics.to_json().dump(2) << "\n";
  });

  auto* e_roll = eval->add_subcommand("rollouts", "Collect G rollouts per task with group statistics");
  add_run_opts(e_roll);
  std::size_t e_group = 8;
  std::string e_reward = "loose", e_out, e_one_scen = "single_turn";
  e_roll->add_option("--group-size,-G", e_group)->capture_default_str();
  e_roll->add_option("--reward", e_reward, "loose or strict")->capture_default_str();
  e_roll->add_option("--scenario", e_one_scen)->capture_default_str();
  e_roll->add_option("--out", e_out, "Rollout rows (one JSON object per line)")->required();
  e_roll->callback([&] {
    const auto world = load_world(e_world.catalog, e_world.tasks);
    std::shared_ptr<ChatBackend> chat;
    if (e_policy == "llm") chat = chat_from(e_llm);
    RolloutOptions o;
    o.group_size = e_group;
    o.selector = parse_reward_selector(e_reward);
    o.scenario = parse_scenario(e_one_scen);
    o.seed = e_seed;
    o.parallelism = e_parallel;
    const auto groups = collect_rollouts(*world, make_policy_factory(e_policy, chat), select_tasks(*world, e_split, e_limit), o);
    auto out = open_out(e_out);
    write_rollouts(groups, out);
    std::size_t traces = 0, degenerate = 0;
    for (const auto& g : groups) {
      traces += g.traces.size();
      degenerate += g.degenerate ? 1 : 0;
      if (!e_trace_dir.empty()) {
        std::filesystem::create_directories(e_trace_dir);
        for (std::size_t r = 0; r < g.traces.size(); ++r) {
          open_out((std::filesystem::path(e_trace_dir) / (g.task_id + ".r" + std::to_string(r) + ".jsonl")).string())
              << g.traces[r].to_jsonl();
        }
      }
    }
    std::cout << groups.size() << " groups, " << traces << " traces\n";
    if (degenerate > 0) std::cerr << "warning: " << degenerate << " groups have identical rollouts\n";
  });

  auto* e_sft = eval->add_subcommand("export-sft", "Write per-step training examples from successful traces");
  std::string e_traces;
  double e_min_strict = 0;
  e_world.add(e_sft);
  e_sft->add_option("--traces", e_traces, "Trace file or directory")->required();
  auto* min_strict_opt =
      e_sft->add_option("--min-strict", e_min_strict, "Keep traces with r_strict >= this instead of r_succ = 1");
  e_sft->add_option("--out", e_out)->required();
  e_sft->callback([&] {
    const auto world = load_world(e_world.catalog, e_world.tasks);
    std::vector<EpisodeTrace> traces;
    for (auto& [ref, t] : load_traces(e_traces)) traces.push_back(std::move(t));
    auto out = open_out(e_out);
    const auto st = export_sft(*world, traces, SftFilter{min_strict_opt->count() ? std::optional(e_min_strict) : std::nullopt}, out);
    std::cout << "traces " << st.traces_in << ", kept " << st.traces_kept << ", examples " << st.examples << "\n";
    if (st.traces_kept == 0) std::cerr << "warning: no trace passed the filter; " << e_out << " is empty\n";
  });

  auto* e_ann = eval->add_subcommand("annotate", "Tag traces with error types");
  e_ann->add_option("--traces", e_traces, "Trace file or directory")->required();
  e_ann->add_option("--llm-config", e_llm, "Chat backend config for the judgment classifier");
  e_ann->add_option("--out", e_out)->required();
  e_ann->callback([&] {
    std::unique_ptr<ErrorClassifier> classifier;
    if (!e_llm.empty()) classifier = std::make_unique<LlmErrorClassifier>(chat_from(e_llm));
    const auto rep = annotate_errors(load_traces(e_traces), classifier.get());
    auto out = open_out(e_out);
    for (const auto& a : rep.annotations) out << to_json(a).dump() << "\n";
    std::cout << rep.annotations.size() << " annotations, coverage " << rep.coverage << "\n";
    for (const auto& f : rep.classifier_failures) std::cerr << "classifier failed: " << f << "\n";
  });

  auto* e_rep = eval->add_subcommand("report", "Recompute the metrics table from traces");
  std::string e_format = "text", e_hist;
  e_rep->add_option("--traces", e_traces, "Trace file or directory")->required();
  e_rep->add_option("--format", e_format, "text, csv or json")
      ->capture_default_str()
      ->check(CLI::IsMember({"text", "csv", "json"}));
  e_rep->add_option("--histogram-csv", e_hist, "Also write per-scenario step histograms");
  e_rep->callback([&] {
    std::vector<EpisodeRecord> recs;
    for (const auto& [ref, t] : load_traces(e_traces)) recs.push_back(record_from_trace(t));
    const auto table = MetricsTable::from_records(recs);
    if (e_format == "csv") {
      std::cout << table.to_csv();
    } else if (e_format == "json") {
      std::cout << table.to_json().dump(2) << "\n";
    } else {
      std::cout << table.to_text();
    }
    if (!e_hist.empty()) open_out(e_hist) << table.histogram_csv();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return t_status | score_status | serve_status;
}
