// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "catch_amalgamated.hpp"
#include "tokreg/cli/commands.hpp"
#include "tokreg/cli/config.hpp"
#include "tokreg/cli/manifest.hpp"
#include "tokreg/data/records.hpp"
#include "tokreg/errors.hpp"
#include "tokreg/model/checkpoint.hpp"

using namespace tokreg;
using namespace tokreg::cli;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "tokreg_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small data set, initial checkpoint and config file shared by the run tests.
struct Workspace {
  fs::path dir;
  fs::path data;
  fs::path init;
  fs::path config;

  explicit Workspace(const std::string& name) : dir(temp_dir(name)) {
    data = dir / "train.jsonl";
    REQUIRE(run({"synth", "--n", "24", "--seed", "3", "--word-length", "3", "--out", data.string()})
                .code == 0);
    model::ModelConfig mc;
    mc.context_len = 128;
    mc.d_model = 16;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.seed = 2;
    init = dir / "init.ckpt";
    model::save_model(init, model::TransformerLM(mc));
    nlohmann::json cfg = to_json(RunConfig{});
    cfg["data"]["train"] = data.string();
    cfg["data"]["eval"] = data.string();
    cfg["init_checkpoint"] = init.string();
    cfg["train"]["max_steps"] = 5;
    cfg["train"]["batch_size"] = 4;
    cfg["train"]["learning_rate"] = 1e-3;
    cfg["train"]["seed"] = 4;
    config = dir / "config.json";
    std::ofstream(config) << cfg.dump(2);
  }

  Result train(const std::string& out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args = {"train", "--config", config.string(), "--output_dir",
                                     (dir / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  std::string final_hash(const std::string& out) const {
    return model::load_model(dir / out / "checkpoints" / "final.ckpt").content_hash();
  }
};

// Step metrics without the wall-clock field.
std::vector<nlohmann::json> step_metrics(const fs::path& path) {
  std::vector<nlohmann::json> out;
  for (const auto& line : lines(path)) {
    auto j = nlohmann::json::parse(line);
    j.erase("wall_time");
    out.push_back(j);
  }
  return out;
}

}  // namespace

TEST_CASE("usage errors exit 2 and help exits 0") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"eval", "--checkpoint", "x"}).code == kExitUsage);
  const Result r = run({"train"});
  CHECK(r.code == kExitUsage);
  CHECK_THAT(r.err, ContainsSubstring("data.train"));
}

TEST_CASE("missing dataset path names the field") {
  const auto dir = temp_dir("missing");
  const Result r = run({"train", "--data.train", (dir / "nope.jsonl").string()});
  CHECK(r.code == kExitUsage);
  CHECK_THAT(r.err, ContainsSubstring("data.train"));
  const Result bad_key = run({"train", "--loss.alhpa", "0.1"});
  CHECK(bad_key.code == kExitUsage);
  CHECK_THAT(bad_key.err, ContainsSubstring("loss.alhpa"));
  const Result bad_value = run({"train", "--loss.alpha", "-1", "--print-config"});
  CHECK(bad_value.code == kExitUsage);
  CHECK_THAT(bad_value.err, ContainsSubstring("loss.alpha"));
}

TEST_CASE("overrides resolve dotted paths") {
  const Result r = run({"train", "--print-config", "--loss.alpha", "0.5", "--train.batch_size=4",
                        "--model.d_model", "64", "--output_dir", "somewhere"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["train"]["loss"]["alpha"] == 0.5);
  CHECK(j["train"]["batch_size"] == 4);
  CHECK(j["model"]["d_model"] == 64);
  CHECK(j["output_dir"] == "somewhere");
  nlohmann::json cfg = to_json(RunConfig{});
  apply_override(cfg, "learning_rate", "1e-4");
  apply_override(cfg, "loss.base", "simpo");
  CHECK(run_config_from_json(cfg).train.learning_rate == 1e-4);
  CHECK(run_config_from_json(cfg).train.loss.base == losses::BaseObjective::kSimpo);
  CHECK_THROWS_AS(apply_override(cfg, "train.nope", "1"), ConfigError);
}

TEST_CASE("synth writes records and a manifest") {
  const auto dir = temp_dir("synth");
  const auto a = dir / "a.jsonl";
  const auto b = dir / "b.jsonl";
  REQUIRE(run({"synth", "--n", "30", "--seed", "5", "--out", a.string()}).code == 0);
  REQUIRE(run({"synth", "--n", "30", "--seed", "5", "--out", b.string()}).code == 0);
  CHECK(read_file(a) == read_file(b));
  const auto records = data::load_records(a);
  CHECK(records.size() == 30);
  for (const auto& r : records) CHECK(r.planted_span.has_value());
  const auto man = manifest_from_json(nlohmann::json::parse(read_file(a.string() + ".manifest.json")));
  CHECK(man.command == "synth");
  CHECK(man.config["n"] == 30);
  CHECK(man.outputs == std::vector<std::string>{a.string()});
}

TEST_CASE("train writes checkpoints, metrics and a manifest") {
  const Workspace ws("train");
  const Result r = ws.train("run");
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  const auto rundir = ws.dir / "run";
  CHECK(fs::exists(rundir / "checkpoints" / "final.ckpt"));
  CHECK(fs::exists(rundir / "checkpoints" / "reference.ckpt"));
  CHECK(step_metrics(rundir / "metrics.jsonl").size() == 6);
  CHECK(step_metrics(rundir / "metrics.jsonl").back()["type"] == "eval");
  const auto man = manifest_from_json(nlohmann::json::parse(read_file(rundir / "manifest.json")));
  CHECK(man.command == "train");
  CHECK(man.exit_status == 0);
  CHECK(man.input_hashes.count(ws.data.string()) == 1);
  CHECK(man.input_hashes.at(ws.init.string()) == file_hash(ws.init));
  CHECK(!man.started.empty());
  CHECK(!man.finished.empty());

  // The manifest's config reproduces the run.
  nlohmann::json cfg = man.config;
  cfg["output_dir"] = (ws.dir / "again").string();
  cfg["train"]["checkpoint_dir"] = "";
  const auto again_cfg = ws.dir / "again.json";
  std::ofstream(again_cfg) << cfg.dump();
  REQUIRE(run({"train", "--config", again_cfg.string()}).code == kExitOk);
  CHECK(ws.final_hash("again") == ws.final_hash("run"));
  CHECK(step_metrics(ws.dir / "again" / "metrics.jsonl") == step_metrics(rundir / "metrics.jsonl"));
}

TEST_CASE("alpha zero reproduces plain dpo") {
  const Workspace ws("alpha0");
  REQUIRE(ws.train("zero", {"--loss.alpha", "0"}).code == kExitOk);
  REQUIRE(ws.train("plain", {"--loss.regularize", "off"}).code == kExitOk);
  REQUIRE(ws.train("reg", {"--loss.alpha", "0.5"}).code == kExitOk);
  CHECK(ws.final_hash("zero") == ws.final_hash("plain"));
  CHECK(ws.final_hash("zero") != ws.final_hash("reg"));
  CHECK(step_metrics(ws.dir / "zero" / "metrics.jsonl") ==
        step_metrics(ws.dir / "plain" / "metrics.jsonl"));
}

TEST_CASE("alpha grid runs every value") {
  const Workspace ws("grid");
  REQUIRE(ws.train("grid", {"--grid.alpha", "--max_steps", "2"}).code == kExitOk);
  for (const char* d : {"alpha-0.1", "alpha-0.25", "alpha-0.5"}) {
    const auto man =
        manifest_from_json(nlohmann::json::parse(read_file(ws.dir / "grid" / d / "manifest.json")));
    CHECK(fs::exists(ws.dir / "grid" / d / "checkpoints" / "final.ckpt"));
    CHECK(man.config["train"]["loss"]["alpha"] == std::stod(std::string(d).substr(6)));
  }
}

TEST_CASE("annotate is idempotent and matches in-loop scoring") {
  Workspace ws("annotate");
  // One record too long for the evaluator context.
  auto records = data::load_records(ws.data);
  records.push_back({"long", std::string(300, 'q'), "yes", "no", {}});
  data::write_records(ws.data, records);
  const auto cache = ws.dir / "cache.jsonl";
  const std::vector<std::string> args = {"annotate", "--data", ws.data.string(), "--checkpoint",
                                         ws.init.string(), "--out", cache.string()};
  const Result first = run(args);
  REQUIRE(first.code == kExitOk);
  const auto summary = nlohmann::json::parse(first.out);
  CHECK(summary["skipped"] == 1);
  CHECK(summary["skipped_ids"][0] == "long");
  CHECK(summary["computed"] == 2 * (records.size() - 1));
  CHECK(lines(cache).size() == 2 * (records.size() - 1));
  const std::string bytes = read_file(cache);
  const Result second = run(args);
  REQUIRE(second.code == kExitOk);
  CHECK(nlohmann::json::parse(second.out)["computed"] == 0);
  CHECK(read_file(cache) == bytes);
  CHECK(fs::exists(cache.string() + ".manifest.json"));

  records.pop_back();
  data::write_records(ws.data, records);
  REQUIRE(ws.train("cached", {"--reward_cache", cache.string()}).code == kExitOk);
  REQUIRE(ws.train("strict", {"--strict_rewards", "true"}).code == kExitOk);
  CHECK(ws.final_hash("cached") == ws.final_hash("strict"));
}

TEST_CASE("cache directory comes from the environment") {
  const Workspace ws("envcache");
  const auto dir = ws.dir / "cache";
  fs::create_directories(dir);
  ::setenv(kCacheDirEnv, dir.c_str(), 1);
  const Result r = run({"annotate", "--data", ws.data.string(), "--checkpoint", ws.init.string()});
  ::unsetenv(kCacheDirEnv);
  REQUIRE(r.code == kExitOk);
  const fs::path out = nlohmann::json::parse(r.out)["out"].get<std::string>();
  CHECK(out.parent_path() == dir);
  CHECK(fs::exists(out));
  const Result no_out = run({"annotate", "--data", ws.data.string(), "--checkpoint", ws.init.string()});
  CHECK(no_out.code == kExitUsage);
}

TEST_CASE("gradcheck reports every loss and catches a broken backward rule") {
  const Result ok = run({"gradcheck", "--max-coords", "3"});
  CHECK(ok.code == kExitOk);
  for (const char* loss : {"dpo", "simpo", "reg", "treg", "dpo_sft"}) {
    CHECK_THAT(ok.out, ContainsSubstring(std::string("\n") + loss + " "));
  }
  const Result broken = run({"gradcheck", "--max-coords", "3", "--corrupt-backward", "sigmoid"});
  CHECK(broken.code == kExitRuntime);
  CHECK_THAT(broken.err, ContainsSubstring("gradcheck failed"));
  CHECK_THAT(broken.out, ContainsSubstring("FAIL"));
  // The fault does not outlive the command.
  CHECK(run({"gradcheck", "--max-coords", "3"}).code == kExitOk);
}

TEST_CASE("eval and heatmap") {
  const Workspace ws("evalheat");
  REQUIRE(ws.train("run").code == kExitOk);
  const auto ckpt = (ws.dir / "run" / "checkpoints" / "final.ckpt").string();
  const auto ref = (ws.dir / "run" / "checkpoints" / "reference.ckpt").string();
  const Result same = run({"eval", "--checkpoint", ref, "--reference", ref, "--data", ws.data.string()});
  REQUIRE(same.code == kExitOk);
  const auto j = nlohmann::json::parse(same.out);
  CHECK(j["reward_margin"] == 0.0);
  CHECK(j["pairs"] == 24);
  CHECK(j.contains("credit"));
  const Result trained =
      run({"eval", "--checkpoint", ckpt, "--reference", ref, "--data", ws.data.string()});
  REQUIRE(trained.code == kExitOk);
  CHECK(nlohmann::json::parse(trained.out)["reward_margin"] != 0.0);

  const auto stem = (ws.dir / "heat").string();
  const auto records = data::load_records(ws.data);
  const Result h = run({"heatmap", "--checkpoint", ckpt, "--reference", ref, "--data",
                        ws.data.string(), "--out", stem, "--id", records[2].id});
  REQUIRE(h.code == kExitOk);
  const auto json = nlohmann::json::parse(read_file(stem + ".json"));
  CHECK(json.dump().find(records[2].id) != std::string::npos);
  CHECK(fs::exists(stem + ".html"));
  CHECK(fs::exists(stem + ".manifest.json"));
  CHECK(run({"heatmap", "--checkpoint", ckpt, "--reference", ref, "--data", ws.data.string(),
             "--out", stem, "--id", "missing"})
            .code == kExitUsage);
  CHECK(run({"eval", "--checkpoint", (ws.dir / "none.ckpt").string(), "--reference", ref,
             "--data", ws.data.string()})
            .code == kExitUsage);
}

TEST_CASE("manifest round trip") {
  RunManifest m;
  m.command = "train";
  m.argv = {"--config", "x.json"};
  m.config = {{"a", 1}};
  m.input_hashes["x.json"] = "0123456789abcdef";
  m.started = utc_timestamp();
  m.finished = m.started;
  m.outputs = {"out"};
  const RunManifest back = manifest_from_json(to_json(m));
  CHECK(to_json(back) == to_json(m));
  CHECK(m.started.size() == 20);
}
