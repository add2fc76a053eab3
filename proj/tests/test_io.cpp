#include <gtest/gtest.h>

#include <filesystem>
#include <json.hpp>

#include "mili/common/error.hpp"
#include "mili/io/binary.hpp"
#include "mili/io/checkpoint.hpp"
#include "mili/io/config.hpp"
#include "mili/io/manifest.hpp"
#include "mili/io/results.hpp"
#include "mili/io/trajectories.hpp"
#include "support/fixtures.hpp"

using namespace mili;
using namespace mili::io;
namespace fs = std::filesystem;

namespace {

const world::World& small_world() {
  static const world::World w{oracle::small_world_config()};
  return w;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mili-io-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TrajectoryFile sample_file() {
  TrajectoryFile f{.obs_dim = small_world().observation_dim(), .config_hash = 0x1234abcdULL};
  f.datasets = expert::collect_demos(small_world(), small_world().generate_task_sets(1).train, 2, 1);
  f.datasets.resize(3);
  f.datasets[2].provenance = Provenance::paired_trial;
  return f;
}

std::string error_message(const std::function<void()>& fn, ErrorKind kind) {
  try {
    fn();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "no error thrown";
  return {};
}

}  // namespace

TEST(Binary, RoundTripAndTruncation) {
  ByteWriter w;
  w.u8(7);
  w.u32(0xdeadbeef);
  w.u64(1ULL << 40);
  w.i32(-5);
  w.f64(-0.125);
  w.str("slot");
  ByteReader r(w.data(), "buf");
  EXPECT_EQ(r.u8(), 7);
  EXPECT_EQ(r.u32(), 0xdeadbeefu);
  EXPECT_EQ(r.u64(), 1ULL << 40);
  EXPECT_EQ(r.i32(), -5);
  EXPECT_EQ(r.f64(), -0.125);
  EXPECT_EQ(r.str(), "slot");
  EXPECT_NO_THROW(r.expect_end());
  ByteReader short_read(std::string_view(w.data()).substr(0, 3), "buf");
  short_read.u8();
  const auto msg = error_message([&] { short_read.u32(); }, ErrorKind::io);
  EXPECT_NE(msg.find("buf"), std::string::npos);
  EXPECT_NE(msg.find("byte 1"), std::string::npos);
}

TEST(Binary, HashesAreStable) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
  EXPECT_EQ(parse_hex64(hex64(0x0123456789abcdefULL)), 0x0123456789abcdefULL);
  EXPECT_THROW(parse_hex64("xyz"), Error);
}

TEST(Checkpoint, RoundTripIsIdentity) {
  const Checkpoint c{oracle::jittered(small_world(), 3), 42};
  const std::string bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.params, c.params);
  EXPECT_EQ(back.params.config.obs_dim, c.params.config.obs_dim);
  EXPECT_EQ(back.config_hash, 42u);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(dir / "a" / "m.ckpt", c);
  EXPECT_EQ(load_checkpoint(dir / "a" / "m.ckpt").params, c.params);
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruption) {
  const std::string bytes = encode_checkpoint({oracle::jittered(small_world(), 4), 1});
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), Error);
  const auto msg = error_message([&] { decode_checkpoint(bytes.substr(0, bytes.size() - 3), "m.ckpt"); },
                                 ErrorKind::io);
  EXPECT_NE(msg.find("m.ckpt"), std::string::npos);
  EXPECT_NE(msg.find("byte"), std::string::npos);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/m.ckpt"), Error);
}

TEST(Trajectories, RoundTripIsIdentity) {
  const TrajectoryFile f = sample_file();
  const std::string bytes = encode_trajectories(f);
  const TrajectoryFile back = decode_trajectories(bytes, encode_index(f), f.obs_dim);
  EXPECT_EQ(back.obs_dim, f.obs_dim);
  EXPECT_EQ(back.config_hash, f.config_hash);
  EXPECT_EQ(back.datasets, f.datasets);
  EXPECT_EQ(encode_trajectories(back), bytes);
  const fs::path dir = scratch_dir("traj");
  save_trajectories(dir / "demos.bin", f);
  EXPECT_TRUE(fs::exists(index_path(dir / "demos.bin")));
  EXPECT_EQ(load_trajectories(dir / "demos.bin").datasets, f.datasets);
  fs::remove_all(dir);
}

TEST(Trajectories, EmptyListRoundTrips) {
  const TrajectoryFile f{.obs_dim = 9, .config_hash = 7};
  const TrajectoryFile back = decode_trajectories(encode_trajectories(f), encode_index(f));
  EXPECT_TRUE(back.datasets.empty());
  EXPECT_EQ(back.obs_dim, 9u);
}

TEST(Trajectories, TruncationNamesOffset) {
  const TrajectoryFile f = sample_file();
  const std::string bytes = encode_trajectories(f);
  for (std::size_t cut : {std::size_t{4}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    const auto msg = error_message(
        [&] { decode_trajectories(std::string_view(bytes).substr(0, cut), encode_index(f), {}, "demos.bin"); },
        ErrorKind::io);
    EXPECT_NE(msg.find("demos.bin"), std::string::npos) << msg;
    EXPECT_NE(msg.find("byte"), std::string::npos) << msg;
  }
}

TEST(Trajectories, DimensionMismatch) {
  const TrajectoryFile f = sample_file();
  const auto msg =
      error_message([&] { decode_trajectories(encode_trajectories(f), encode_index(f), f.obs_dim + 1); },
                    ErrorKind::io);
  EXPECT_NE(msg.find("observation dim"), std::string::npos) << msg;
}

TEST(Trajectories, IndexMustAgree) {
  const TrajectoryFile f = sample_file();
  TrajectoryFile other = f;
  other.datasets.pop_back();
  EXPECT_THROW(decode_trajectories(encode_trajectories(f), encode_index(other)), Error);
}

TEST(Config, RoundTripAndHash) {
  ExperimentConfig c;
  const auto j = config_to_json(c);
  const ExperimentConfig back = config_from_json(j);
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
  EXPECT_EQ(config_hash(back), config_hash(c));
  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  ExperimentConfig changed = c;
  changed.bench.mili.alpha = 0.8;
  EXPECT_NE(config_hash(changed), config_hash(c));
}

TEST(Config, ErrorsNameTheField) {
  const nlohmann::json base = config_to_json(ExperimentConfig{});
  nlohmann::json missing = base;
  missing["mili"].erase("alpha");
  EXPECT_NE(error_message([&] { config_from_json(missing); }, ErrorKind::config).find("mili.alpha"),
            std::string::npos);
  nlohmann::json unknown = base;
  unknown["world"]["gravity"] = 9.8;
  EXPECT_NE(error_message([&] { config_from_json(unknown); }, ErrorKind::config).find("world.gravity"),
            std::string::npos);
  nlohmann::json mistyped = base;
  mistyped["pretrain"]["steps"] = "many";
  EXPECT_NE(error_message([&] { config_from_json(mistyped); }, ErrorKind::config).find("pretrain.steps"),
            std::string::npos);
  nlohmann::json invalid = base;
  invalid["world"]["horizon"] = 0;
  EXPECT_NE(error_message([&] { config_from_json(invalid); }, ErrorKind::config).find("horizon"),
            std::string::npos);
}

TEST(Config, FileRoundTrip) {
  const fs::path dir = scratch_dir("config");
  ExperimentConfig c;
  c.bench.seeds = {3, 9};
  save_config(dir / "c.json", c);
  EXPECT_EQ(config_hash(load_config(dir / "c.json")), config_hash(c));
  EXPECT_EQ(load_config(dir / "c.json").bench.seeds, c.bench.seeds);
  write_file(dir / "bad.json", "{not json");
  EXPECT_THROW(load_config(dir / "bad.json"), Error);
  fs::remove_all(dir);
}

TEST(Manifest, DetectsStaleInputs) {
  const fs::path dir = scratch_dir("manifest");
  write_file(dir / "demos.bin", "abc");
  write_manifest(dir, {.stage = "collect-demos", .config_hash = 5, .seed = 2,
                       .outputs = {{"demos.bin", file_hash(dir / "demos.bin")}}});
  EXPECT_EQ(check_input(dir, "collect-demos", "demos.bin", 5, 2), file_hash(dir / "demos.bin"));
  EXPECT_EQ(error_message([&] { check_input(dir, "collect-demos", "demos.bin", 6, 2); }, ErrorKind::stale).empty(),
            false);
  EXPECT_THROW(check_input(dir, "collect-demos", "demos.bin", 5, 3), Error);
  write_file(dir / "demos.bin", "abd");
  error_message([&] { check_input(dir, "collect-demos", "demos.bin", 5, 2); }, ErrorKind::stale);
  error_message([&] { check_input(dir, "pretrain", "x.ckpt", 5, 2); }, ErrorKind::io);
  const Manifest m = read_manifest(dir, "collect-demos");
  EXPECT_EQ(m.seed, 2u);
  EXPECT_EQ(m.config_hash, 5u);
  fs::remove_all(dir);
}

TEST(Results, CsvSchemas) {
  eval::EvalResult a{.method = eval::Method::mili, .seed = 0, .family_success = {1, 0.5, 0, 0.25}, .overall = 0.4375};
  eval::EvalResult b = a;
  b.seed = 1;
  b.overall = 0.5625;
  const std::vector<eval::EvalResult> results{a, b};
  const std::string comparison = method_comparison_csv(results);
  EXPECT_EQ(comparison.substr(0, comparison.find('\n')), "method,family,mean_success,std_err,seeds");
  EXPECT_NE(comparison.find("mili,overall,0.500000,0.062500,2"), std::string::npos) << comparison;
  const std::string sweep = trial_sweep_csv({{0, {0.25, 0.25}}, {500, {0.5, 0.3}}});
  EXPECT_EQ(sweep, "budget,mean_success,std_err\n0,0.250000,0.000000\n500,0.400000,0.100000\n");
  const std::vector<PairingRow> rows{{.seed = 1, .budget = 500, .report = {.trials = 500, .passed = 250}}};
  const std::string pairing = pairing_quality_csv(rows);
  EXPECT_EQ(pairing.substr(0, pairing.find('\n')),
            "seed,budget,trials,passed,pass_rate,pairs,pairing_precision,random_precision,precision_ratio");
  const std::vector<CurveRow> curve{{.seed = 0, .run = "pretrain", .point = {.step = 10, .total = 1.5}}};
  EXPECT_EQ(training_curves_csv(curve),
            "seed,run,step,total,imitation,contrastive\n0,pretrain,10,1.500000,0.000000,0.000000\n");
}

TEST(Results, JsonRoundTrips) {
  const auto tasks = small_world().generate_task_sets(5);
  const auto back = tasks_from_json(tasks_to_json(tasks));
  ASSERT_EQ(back.train.size(), tasks.train.size());
  for (std::size_t i = 0; i < tasks.train.size(); ++i) EXPECT_EQ(back.train[i].identity(), tasks.train[i].identity());
  eval::EvalResult r{.method = eval::Method::bc, .seed = 3, .family_success = {0.1, 0.2, 0.3, 0.4},
                     .family_episodes = {1, 2, 3, 4}, .overall = 0.25};
  r.tasks.push_back({tasks.test[0], 10, 4});
  EXPECT_EQ(eval_to_json(eval_from_json(eval_to_json(r))).dump(), eval_to_json(r).dump());
  core::IterationReport rep{.trials = 9, .passed = 4, .pairs = 2, .pairing_precision = 0.5};
  rep.curve.push_back({.step = 3, .total = 1.0});
  EXPECT_EQ(report_to_json(report_from_json(report_to_json(rep))).dump(), report_to_json(rep).dump());
}

TEST(Config, CheckedInDefaultsMatchBuiltIn) {
  const auto loaded = load_config(MILI_DEFAULT_CONFIG);
  EXPECT_EQ(config_hash(loaded), config_hash(ExperimentConfig{}));
}
