#include "mili/io/results.hpp"

#include <cstdio>

#include "mili/common/error.hpp"

namespace mili::io {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json task_json(const world::Task& t) {
  return {{"family", world::to_string(t.family)},
          {"subject", t.subject},
          {"target", t.target},
          {"split", world::to_string(t.split)}};
}

world::Task task_from(const json& j) {
  world::Task t;
  t.family = world::family_from_string(j.at("family").get<std::string>());
  t.subject = j.at("subject").get<world::TypeId>();
  t.target = j.at("target").get<world::TypeId>();
  t.split = world::split_from_string(j.at("split").get<std::string>());
  return t;
}

template <class Fn>
auto parsing(const char* what, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("malformed ") + what + ": " + e.what());
  }
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ordered_json tasks_to_json(const world::TaskSets& tasks) {
  ordered_json j;
  for (const auto& [name, list] : {std::pair{"train", &tasks.train}, {"val", &tasks.val}, {"test", &tasks.test}}) {
    ordered_json arr = ordered_json::array();
    for (const auto& t : *list) arr.push_back(task_json(t));
    j[name] = std::move(arr);
  }
  return j;
}

world::TaskSets tasks_from_json(const json& j) {
  return parsing("task list", [&] {
    world::TaskSets s;
    for (const auto& e : j.at("train")) s.train.push_back(task_from(e));
    for (const auto& e : j.at("val")) s.val.push_back(task_from(e));
    for (const auto& e : j.at("test")) s.test.push_back(task_from(e));
    return s;
  });
}

ordered_json eval_to_json(const eval::EvalResult& r) {
  ordered_json j;
  j["method"] = eval::to_string(r.method);
  j["seed"] = r.seed;
  j["overall"] = r.overall;
  ordered_json fam;
  for (world::Family f : world::kFamilies) {
    const auto i = static_cast<std::size_t>(f);
    fam[std::string(world::to_string(f))] = {{"success", r.family_success[i]}, {"episodes", r.family_episodes[i]}};
  }
  j["families"] = std::move(fam);
  ordered_json tasks = ordered_json::array();
  for (const auto& t : r.tasks)
    tasks.push_back({{"task", task_json(t.task)}, {"episodes", t.episodes}, {"successes", t.successes}});
  j["tasks"] = std::move(tasks);
  return j;
}

eval::EvalResult eval_from_json(const json& j) {
  return parsing("evaluation result", [&] {
    eval::EvalResult r;
    r.method = eval::method_from_string(j.at("method").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.overall = j.at("overall").get<double>();
    for (world::Family f : world::kFamilies) {
      const auto i = static_cast<std::size_t>(f);
      const auto& e = j.at("families").at(std::string(world::to_string(f)));
      r.family_success[i] = e.at("success").get<double>();
      r.family_episodes[i] = e.at("episodes").get<std::size_t>();
    }
    for (const auto& e : j.at("tasks"))
      r.tasks.push_back({task_from(e.at("task")), e.at("episodes").get<std::size_t>(),
                         e.at("successes").get<std::size_t>()});
    return r;
  });
}

ordered_json curve_to_json(std::span<const policy::CurvePoint> curve) {
  ordered_json arr = ordered_json::array();
  for (const auto& p : curve)
    arr.push_back({{"step", p.step}, {"total", p.total}, {"imitation", p.imitation}, {"contrastive", p.contrastive}});
  return arr;
}

std::vector<policy::CurvePoint> curve_from_json(const json& j) {
  return parsing("training curve", [&] {
    std::vector<policy::CurvePoint> out;
    for (const auto& e : j)
      out.push_back({e.at("step").get<std::size_t>(), e.at("total").get<double>(), e.at("imitation").get<double>(),
                     e.at("contrastive").get<double>()});
    return out;
  });
}

ordered_json report_to_json(const core::IterationReport& r) {
  ordered_json j;
  j["trials"] = r.trials;
  j["passed"] = r.passed;
  j["pass_rate"] = r.pass_rate;
  j["store_size"] = r.store_size;
  j["pairs"] = r.pairs;
  j["pairing_precision"] = r.pairing_precision;
  j["random_precision"] = r.random_precision;
  j["retrained"] = r.retrained;
  j["draws"] = r.sampler.draws;
  j["paired_trial_draws"] = r.sampler.paired_trial_draws;
  j["curve"] = curve_to_json(r.curve);
  return j;
}

core::IterationReport report_from_json(const json& j) {
  return parsing("improvement report", [&] {
    core::IterationReport r;
    r.trials = j.at("trials").get<std::size_t>();
    r.passed = j.at("passed").get<std::size_t>();
    r.pass_rate = j.at("pass_rate").get<double>();
    r.store_size = j.at("store_size").get<std::size_t>();
    r.pairs = j.at("pairs").get<std::size_t>();
    r.pairing_precision = j.at("pairing_precision").get<double>();
    r.random_precision = j.at("random_precision").get<double>();
    r.retrained = j.at("retrained").get<bool>();
    r.sampler.draws = j.at("draws").get<std::size_t>();
    r.sampler.paired_trial_draws = j.at("paired_trial_draws").get<std::size_t>();
    r.curve = curve_from_json(j.at("curve"));
    return r;
  });
}

std::string method_comparison_csv(std::span<const eval::EvalResult> results) {
  std::string out = "method,family,mean_success,std_err,seeds\n";
  for (eval::Method m : {eval::Method::bc, eval::Method::meta_imitation, eval::Method::mili,
                         eval::Method::mili_oracle_pairing, eval::Method::expert, eval::Method::random}) {
    std::vector<const eval::EvalResult*> rows;
    for (const auto& r : results)
      if (r.method == m) rows.push_back(&r);
    if (rows.empty()) continue;
    auto emit = [&](std::string_view family, auto value) {
      std::vector<double> v;
      for (const auto* r : rows) v.push_back(value(*r));
      const eval::Summary s = eval::summarize(v);
      out += std::string(eval::to_string(m)) + "," + std::string(family) + "," + fixed(s.mean) + "," +
             fixed(s.std_err) + "," + std::to_string(s.count) + "\n";
    };
    for (world::Family f : world::kFamilies)
      emit(world::to_string(f), [&](const eval::EvalResult& r) { return r.family_success[static_cast<std::size_t>(f)]; });
    emit("overall", [](const eval::EvalResult& r) { return r.overall; });
  }
  return out;
}

std::string trial_sweep_csv(const std::map<std::size_t, std::vector<double>>& success_by_budget) {
  std::string out = "budget,mean_success,std_err\n";
  for (const auto& [budget, values] : success_by_budget) {
    const eval::Summary s = eval::summarize(values);
    out += std::to_string(budget) + "," + fixed(s.mean) + "," + fixed(s.std_err) + "\n";
  }
  return out;
}

std::string pairing_quality_csv(std::span<const PairingRow> rows) {
  std::string out = "seed,budget,trials,passed,pass_rate,pairs,pairing_precision,random_precision,precision_ratio\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    const double ratio = r.random_precision > 0.0 ? r.pairing_precision / r.random_precision : 0.0;
    out += std::to_string(row.seed) + "," + std::to_string(row.budget) + "," + std::to_string(r.trials) + "," +
           std::to_string(r.passed) + "," + fixed(r.pass_rate) + "," + std::to_string(r.pairs) + "," +
           fixed(r.pairing_precision) + "," + fixed(r.random_precision) + "," + fixed(ratio) + "\n";
  }
  return out;
}

std::string training_curves_csv(std::span<const CurveRow> rows) {
  std::string out = "seed,run,step,total,imitation,contrastive\n";
  for (const auto& row : rows)
    out += std::to_string(row.seed) + "," + row.run + "," + std::to_string(row.point.step) + "," +
           fixed(row.point.total) + "," + fixed(row.point.imitation) + "," + fixed(row.point.contrastive) + "\n";
  return out;
}

}  // namespace mili::io
