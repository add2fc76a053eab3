#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mili/common/error.hpp"
#include "mili/evalbench/bench.hpp"
#include "mili/io/binary.hpp"
#include "mili/io/checkpoint.hpp"
#include "mili/io/config.hpp"
#include "mili/io/manifest.hpp"
#include "mili/io/results.hpp"
#include "mili/io/trajectories.hpp"

namespace fs = std::filesystem;
using namespace mili;

namespace {

using Clock = std::chrono::steady_clock;

struct Context {
  io::ExperimentConfig config;
  std::uint64_t hash = 0;
  std::uint64_t seed = 0;
  fs::path root;
  fs::path run_dir;
};

Context make_context(const std::string& config_path, std::uint64_t seed, const std::string& out) {
  Context c;
  c.config = io::load_config(config_path);
  if (!out.empty()) c.config.output_dir = out;
  c.hash = io::config_hash(c.config);
  c.seed = seed;
  c.root = c.config.output_dir;
  c.run_dir = c.root / ("seed-" + std::to_string(seed));
  return c;
}

// Collects input hashes while a stage reads its inputs, then writes the
// outputs' hashes and the manifest.
class Stage {
 public:
  Stage(const Context& ctx, std::string name) : ctx_(ctx), start_(Clock::now()) {
    manifest_.stage = std::move(name);
    manifest_.config_hash = ctx.hash;
    manifest_.seed = ctx.seed;
  }

  fs::path input(const std::string& producer, const std::string& artifact) {
    manifest_.inputs[artifact] = io::check_input(ctx_.run_dir, producer, artifact, ctx_.hash, ctx_.seed);
    return ctx_.run_dir / artifact;
  }

  void output(const std::string& artifact) {
    manifest_.outputs[artifact] = io::file_hash(ctx_.run_dir / artifact);
  }

  void write_json(const std::string& artifact, const nlohmann::ordered_json& j) {
    io::write_file(ctx_.run_dir / artifact, j.dump(2) + "\n");
    output(artifact);
  }

  void finish() {
    manifest_.wall_time_s = std::chrono::duration<double>(Clock::now() - start_).count();
    io::write_manifest(ctx_.run_dir, manifest_);
    std::printf("%s: wrote %zu artifact(s) to %s (%.1f s)\n", manifest_.stage.c_str(), manifest_.outputs.size(),
                ctx_.run_dir.string().c_str(), manifest_.wall_time_s);
  }

 private:
  const Context& ctx_;
  io::Manifest manifest_;
  Clock::time_point start_;
};

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::io, path.string() + ": " + e.what());
  }
}

std::string checkpoint_name(eval::Method m) { return std::string(eval::to_string(m)) + ".ckpt"; }

// Stage that wrote each method's checkpoint.
std::string checkpoint_stage(eval::Method m) {
  switch (m) {
    case eval::Method::bc:
    case eval::Method::meta_imitation:
      return "pretrain-" + std::string(eval::to_string(m));
    case eval::Method::mili:
    case eval::Method::mili_oracle_pairing:
      return "improve";
    default:
      throw Error(ErrorKind::config, std::string(eval::to_string(m)) + " has no checkpoint");
  }
}

world::TaskSets load_tasks(Stage& stage) { return io::tasks_from_json(read_json(stage.input("gen-tasks", "tasks.json"))); }

std::vector<TaskDataset> load_demos(Stage& stage, const Context& ctx) {
  const fs::path path = stage.input("collect-demos", "demos.bin");
  stage.input("collect-demos", "demos.bin.index.json");
  auto file = io::load_trajectories(path, eval::network_for(ctx.config.bench).obs_dim);
  if (file.config_hash != ctx.hash) throw Error(ErrorKind::stale, path.string() + " was written under another config");
  return std::move(file.datasets);
}

policy::ModelParams load_params(Stage& stage, const Context& ctx, eval::Method m) {
  const fs::path path = stage.input(checkpoint_stage(m), checkpoint_name(m));
  auto ckpt = io::load_checkpoint(path);
  if (ckpt.config_hash != ctx.hash) throw Error(ErrorKind::stale, path.string() + " was written under another config");
  return std::move(ckpt.params);
}

void save_params(Stage& stage, const Context& ctx, eval::Method m, const policy::ModelParams& params) {
  io::save_checkpoint(ctx.run_dir / checkpoint_name(m), {params, ctx.hash});
  stage.output(checkpoint_name(m));
}

void gen_tasks(const Context& ctx) {
  Stage stage(ctx, "gen-tasks");
  const auto tasks = world::World(ctx.config.bench.world).generate_task_sets(ctx.seed);
  stage.write_json("tasks.json", io::tasks_to_json(tasks));
  stage.finish();
}

void collect_demos(const Context& ctx) {
  Stage stage(ctx, "collect-demos");
  const auto tasks = load_tasks(stage);
  io::TrajectoryFile file{.obs_dim = eval::network_for(ctx.config.bench).obs_dim,
                          .config_hash = ctx.hash,
                          .datasets = eval::bench_demos(ctx.config.bench, tasks.train, ctx.seed)};
  io::save_trajectories(ctx.run_dir / "demos.bin", file);
  stage.output("demos.bin");
  stage.output("demos.bin.index.json");
  stage.finish();
}

void pretrain(const Context& ctx, eval::Method method) {
  if (method != eval::Method::bc && method != eval::Method::meta_imitation)
    throw Error(ErrorKind::config, "pretrain --method must be bc or meta-imitation");
  const std::string name(eval::to_string(method));
  Stage stage(ctx, "pretrain-" + name);
  const auto demos = load_demos(stage, ctx);
  const auto& b = ctx.config.bench;
  const auto network = eval::network_for(b);
  const auto result = method == eval::Method::bc ? eval::run_baseline_bc(network, demos, b.bc, ctx.seed)
                                                 : eval::run_baseline_meta(network, demos, b.pretrain, ctx.seed);
  save_params(stage, ctx, method, result.params);
  stage.write_json(name + ".curve.json", io::curve_to_json(result.curve));
  stage.finish();
}

void improve(const Context& ctx) {
  Stage stage(ctx, "improve");
  const auto demos = load_demos(stage, ctx);
  const auto meta = load_params(stage, ctx, eval::Method::meta_imitation);
  const auto& b = ctx.config.bench;
  const auto trials = eval::bench_trials(b, meta, demos, b.mili.trials, ctx.seed);
  const auto learned = eval::bench_improve(b, meta, demos, trials, ctx.seed, false);
  const auto oracle = eval::bench_improve(b, meta, demos, trials, ctx.seed, true);
  save_params(stage, ctx, eval::Method::mili, learned.params);
  save_params(stage, ctx, eval::Method::mili_oracle_pairing, oracle.params);
  nlohmann::ordered_json j;
  for (const auto& [key, run] : {std::pair{"mili", &learned}, {"mili-oracle-pairing", &oracle}}) {
    nlohmann::ordered_json reports = nlohmann::ordered_json::array();
    for (const auto& r : run->iterations) reports.push_back(io::report_to_json(r));
    j[key] = std::move(reports);
  }
  stage.write_json("improve.json", j);
  stage.finish();
}

void evaluate(const Context& ctx, eval::Method method) {
  const std::string name(eval::to_string(method));
  Stage stage(ctx, "eval-" + name);
  const auto tasks = load_tasks(stage);
  const auto& b = ctx.config.bench;
  const world::World world(b.world);
  policy::ModelParams params;
  eval::ConditionedPolicy policy;
  switch (method) {
    case eval::Method::expert:
      policy = eval::expert_policy(world);
      break;
    case eval::Method::random:
      policy = eval::random_policy(world);
      break;
    case eval::Method::bc:
      params = load_params(stage, ctx, method);
      policy = eval::bc_policy(params);
      break;
    default:
      params = load_params(stage, ctx, method);
      policy = eval::meta_policy(params);
  }
  const auto result = eval::evaluate_method(b, policy, tasks.test, ctx.seed, method);
  stage.write_json("eval-" + name + ".json", io::eval_to_json(result));
  std::printf("%s: test success %.3f\n", name.c_str(), result.overall);
  stage.finish();
}

void sweep(const Context& ctx) {
  Stage stage(ctx, "sweep");
  const auto tasks = load_tasks(stage);
  const auto demos = load_demos(stage, ctx);
  const auto meta = load_params(stage, ctx, eval::Method::meta_imitation);
  const auto points = eval::trial_sweep(ctx.config.bench, meta, demos, tasks.test, ctx.seed);
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& p : points)
    j.push_back({{"budget", p.budget}, {"result", io::eval_to_json(p.result)}, {"report", io::report_to_json(p.report)}});
  stage.write_json("sweep.json", j);
  stage.finish();
}

void report(const Context& base) {
  const auto& b = base.config.bench;
  std::vector<eval::EvalResult> evals;
  std::map<std::size_t, std::vector<double>> sweep_success;
  std::vector<io::PairingRow> pairing;
  std::vector<io::CurveRow> curves;
  io::Manifest manifest{.stage = "report", .config_hash = base.hash};
  const auto start = Clock::now();
  for (std::uint64_t seed : b.seeds) {
    Context ctx = base;
    ctx.seed = seed;
    ctx.run_dir = ctx.root / ("seed-" + std::to_string(seed));
    const std::string prefix = ctx.run_dir.filename().string() + "/";
    auto use = [&](const std::string& stage, const std::string& artifact) -> std::optional<nlohmann::json> {
      if (!fs::exists(ctx.run_dir / artifact)) return std::nullopt;
      manifest.inputs[prefix + artifact] = io::check_input(ctx.run_dir, stage, artifact, ctx.hash, seed);
      return read_json(ctx.run_dir / artifact);
    };
    for (eval::Method m : {eval::Method::bc, eval::Method::meta_imitation, eval::Method::mili,
                           eval::Method::mili_oracle_pairing, eval::Method::expert, eval::Method::random}) {
      const std::string name(eval::to_string(m));
      if (auto j = use("eval-" + name, "eval-" + name + ".json")) evals.push_back(io::eval_from_json(*j));
    }
    for (eval::Method m : {eval::Method::bc, eval::Method::meta_imitation}) {
      const std::string name(eval::to_string(m));
      if (auto j = use("pretrain-" + name, name + ".curve.json"))
        for (const auto& p : io::curve_from_json(*j)) curves.push_back({seed, name, p});
    }
    if (auto j = use("improve", "improve.json")) {
      for (const char* key : {"mili", "mili-oracle-pairing"}) {
        std::size_t round = 0;
        for (const auto& r : j->at(key)) {
          const auto rep = io::report_from_json(r);
          const std::string run = std::string(key) + "-round" + std::to_string(round++);
          for (const auto& p : rep.curve) curves.push_back({seed, run, p});
          if (std::string(key) == "mili") pairing.push_back({seed, rep.trials, rep});
        }
      }
    }
    if (auto j = use("sweep", "sweep.json"))
      for (const auto& p : *j) {
        const std::size_t budget = p.at("budget").get<std::size_t>();
        sweep_success[budget].push_back(io::eval_from_json(p.at("result")).overall);
        if (budget > 0 && budget != b.mili.trials) pairing.push_back({seed, budget, io::report_from_json(p.at("report"))});
      }
  }
  std::sort(pairing.begin(), pairing.end(),
            [](const io::PairingRow& x, const io::PairingRow& y) { return std::pair(x.seed, x.budget) < std::pair(y.seed, y.budget); });
  const fs::path dir = base.root / "metrics";
  const std::map<std::string, std::string> tables{
      {"method_comparison.csv", io::method_comparison_csv(evals)},
      {"trial_sweep.csv", io::trial_sweep_csv(sweep_success)},
      {"pairing_quality.csv", io::pairing_quality_csv(pairing)},
      {"training_curves.csv", io::training_curves_csv(curves)}};
  for (const auto& [file, text] : tables) {
    io::write_file(dir / file, text);
    manifest.outputs[file] = io::hex64(io::fnv1a64(text));
  }
  manifest.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  io::write_manifest(dir, manifest);
  std::cout << tables.at("method_comparison.csv") << "\n" << tables.at("trial_sweep.csv");
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::stale: return 4;
    case ErrorKind::data: return 5;
    default: return 6;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-imitation learning from autonomously collected trials"};
  app.require_subcommand(1);
  std::string config_path = "configs/default.json";
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("-c,--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("-s,--seed", seed, "experiment seed");
  app.add_option("-o,--out", out, "output directory (overrides the config)");

  std::string method_name;
  auto* gen = app.add_subcommand("gen-tasks", "sample the train/val/test task lists");
  auto* demos = app.add_subcommand("collect-demos", "expert demonstrations for the training tasks");
  auto* pre = app.add_subcommand("pretrain", "train a baseline on the demonstrations");
  pre->add_option("-m,--method", method_name, "bc or meta-imitation")->required();
  auto* imp = app.add_subcommand("improve", "collect, filter and pair trials, then retrain");
  auto* ev = app.add_subcommand("eval", "one-shot evaluation on the test tasks");
  ev->add_option("-m,--method", method_name, "bc, meta-imitation, mili, mili-oracle-pairing, expert or random")
      ->required();
  auto* sw = app.add_subcommand("sweep", "MILI at every configured trial budget");
  auto* rep = app.add_subcommand("report", "aggregate every seed's results into metrics tables");
  auto* all = app.add_subcommand("run", "every stage for every configured seed, then report");
  auto* defaults = app.add_subcommand("print-config", "print the built-in default config as JSON");

  CLI11_PARSE(app, argc, argv);
  if (defaults->parsed()) {
    std::printf("%s\n", io::config_to_json(io::ExperimentConfig{}).dump(2).c_str());
    return 0;
  }

  try {
    const Context ctx = make_context(config_path, seed, out);
    if (gen->parsed()) gen_tasks(ctx);
    if (demos->parsed()) collect_demos(ctx);
    if (pre->parsed()) pretrain(ctx, eval::method_from_string(method_name));
    if (imp->parsed()) improve(ctx);
    if (ev->parsed()) evaluate(ctx, eval::method_from_string(method_name));
    if (sw->parsed()) sweep(ctx);
    if (rep->parsed()) report(ctx);
    if (all->parsed()) {
      for (std::uint64_t s : ctx.config.bench.seeds) {
        const Context c = make_context(config_path, s, out);
        gen_tasks(c);
        collect_demos(c);
        pretrain(c, eval::Method::bc);
        pretrain(c, eval::Method::meta_imitation);
        improve(c);
        for (eval::Method m : {eval::Method::bc, eval::Method::meta_imitation, eval::Method::mili,
                               eval::Method::mili_oracle_pairing})
          evaluate(c, m);
        sweep(c);
      }
      report(ctx);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
