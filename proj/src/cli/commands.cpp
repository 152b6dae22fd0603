// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tokreg/cli/commands.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tokreg/cli/config.hpp"
#include "tokreg/cli/gradcheck.hpp"
#include "tokreg/cli/manifest.hpp"
#include "tokreg/data/synthetic.hpp"
#include "tokreg/diagnostics/heatmap.hpp"
#include "tokreg/errors.hpp"
#include "tokreg/model/checkpoint.hpp"
#include "tokreg/numerics/ops.hpp"
#include "tokreg/rewards/reward_cache.hpp"
#include "tokreg/trainer/trainer.hpp"
#include "tokreg/trainer/warm_start.hpp"

namespace tokreg::cli {
namespace fs = std::filesystem;
namespace {

const std::vector<double> kAlphaGrid = {0.1, 0.25, 0.5};

fs::path cache_dir_from_env() {
  const char* dir = std::getenv(kCacheDirEnv);
  return dir && *dir ? fs::path(dir) : fs::path();
}

std::vector<data::PreferenceRecord> read_records(const std::string& path, const char* field) {
  if (!fs::exists(path)) throw ConfigError(std::string(field) + ": cannot read " + path);
  return data::load_records(path);
}

model::TransformerLM read_model(const std::string& path, const char* field) {
  if (!fs::exists(path)) throw ConfigError(std::string(field) + ": cannot read " + path);
  model::TransformerLM m = model::load_model(path);
  if (m.config().vocab_size < data::kVocabSize) {
    throw ConfigError(std::string(field) + ": vocabulary of " +
                      std::to_string(m.config().vocab_size) +
                      " does not cover the tokenizer");
  }
  return m;
}

// A trainable policy holding the parameters of any checkpoint.
model::TransformerLM as_policy(const model::TransformerLM& m) {
  if (!m.frozen()) return m;
  return model::TransformerLM(m.config(), m.parameters(), model::ModelRole::kPolicy);
}

void hash_input(RunManifest& man, const std::string& path) {
  if (!path.empty() && fs::exists(path)) man.input_hashes[path] = file_hash(path);
}

std::string alpha_dir(double alpha) {
  std::ostringstream os;
  os << "alpha-" << alpha;
  return os.str();
}

int run_train(RunConfig rc, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  RunManifest man;
  man.command = "train";
  man.argv = args;
  man.started = utc_timestamp();
  rc.validate();
  const fs::path outdir = rc.output_dir;
  if (rc.train.checkpoint_dir.empty()) rc.train.checkpoint_dir = outdir / "checkpoints";

  const auto records = read_records(rc.data.train, "data.train");
  std::vector<data::PreferenceRecord> eval_records;
  if (!rc.data.eval.empty()) eval_records = read_records(rc.data.eval, "data.eval");

  std::optional<trainer::ResumePoint> resume;
  model::TransformerLM policy(rc.model);
  std::optional<model::TransformerLM> reference;
  if (!rc.resume.empty()) {
    if (!fs::exists(rc.resume)) throw ConfigError("resume: cannot read " + rc.resume);
    resume = trainer::load_train_checkpoint(rc.resume);
    policy = resume->policy;
    reference = read_model((rc.train.checkpoint_dir / "reference.ckpt").string(),
                           "train.checkpoint_dir")
                    .freeze_copy(model::ModelRole::kReference);
  } else if (!rc.init_checkpoint.empty()) {
    policy = as_policy(read_model(rc.init_checkpoint, "init_checkpoint"));
  }
  rc.model = policy.config();
  fs::create_directories(outdir);

  if (!resume && rc.warm_start.steps > 0) {
    trainer::WarmupCorpusOptions opts;
    opts.revision_fraction = rc.warm_start.revision_fraction;
    const auto corpus =
        trainer::make_synthetic_warmup_corpus(rc.warm_start.corpus_size, rc.warm_start.seed, opts);
    trainer::SftConfig sc;
    sc.steps = rc.warm_start.steps;
    sc.batch_size = rc.warm_start.batch_size;
    sc.learning_rate = rc.warm_start.learning_rate;
    sc.warmup_steps = rc.warm_start.steps / 20;
    sc.seed = rc.warm_start.seed;
    trainer::sft_train(policy, corpus, sc, [&](std::size_t step, double loss) {
      if ((step + 1) % 100 == 0) err << "warm start " << step + 1 << " loss " << loss << '\n';
    });
    model::save_model(outdir / "base.ckpt", policy);
    man.outputs.push_back((outdir / "base.ckpt").string());
  }
  if (!reference) reference = policy.freeze_copy(model::ModelRole::kReference);

  const auto ctx = static_cast<std::size_t>(rc.model.context_len);
  const auto train_pairs = data::tokenize_records(records, ctx);
  const auto eval_pairs = data::tokenize_records(eval_records, ctx);

  std::optional<model::TransformerLM> evaluator, reward_policy;
  if (!rc.evaluator_checkpoint.empty()) {
    evaluator = read_model(rc.evaluator_checkpoint, "evaluator_checkpoint")
                    .freeze_copy(model::ModelRole::kEvaluator);
  }
  if (!rc.reward_policy_checkpoint.empty()) {
    reward_policy = read_model(rc.reward_policy_checkpoint, "reward_policy_checkpoint")
                        .freeze_copy(model::ModelRole::kEvaluator);
  }
  std::optional<rewards::RewardCache> cache;
  fs::path cache_path = rc.reward_cache;
  if (cache_path.empty() && !cache_dir_from_env().empty()) {
    const auto& scorer = evaluator ? *evaluator : *reference;
    cache_path = cache_dir_from_env() / ("rewards-" + scorer.content_hash() + ".jsonl");
  }
  if (!cache_path.empty() && fs::exists(cache_path)) {
    cache = rewards::RewardCache::load(cache_path);
    man.input_hashes[cache_path.string()] = file_hash(cache_path);
  }

  for (const auto& p : {rc.data.train, rc.data.eval, rc.init_checkpoint, rc.evaluator_checkpoint,
                        rc.reward_policy_checkpoint, rc.resume}) {
    hash_input(man, p);
  }

  const fs::path metrics_path = outdir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
  trainer::TrainHooks hooks;
  hooks.metrics_log = &metrics;
  hooks.cache = cache ? &*cache : nullptr;
  hooks.on_eval = [&](const trainer::EvalMetrics& m) { out << nlohmann::json(m).dump() << '\n'; };
  const trainer::TrainModels models{&policy, &*reference, evaluator ? &*evaluator : nullptr,
                                    reward_policy ? &*reward_policy : nullptr};
  const trainer::TrainRunState state = trainer::train(
      rc.train, models, train_pairs, eval_pairs, hooks, resume ? &resume->state : nullptr);
  metrics.close();

  man.outputs.push_back(metrics_path.string());
  if (!state.last_checkpoint.empty()) man.outputs.push_back(state.last_checkpoint.string());
  if (!state.best_checkpoint.empty()) man.outputs.push_back(state.best_checkpoint.string());
  man.config = to_json(rc);
  man.finished = utc_timestamp();
  write_manifest(outdir / "manifest.json", man);
  nlohmann::json summary = {{"output_dir", outdir.string()}, {"steps", state.step}};
  if (!state.history.empty()) summary["last_step"] = state.history.back();
  out << summary.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Token-level reward regularized preference optimization", "tokreg"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a planted-error preference dataset");
  std::size_t synth_n = 2000;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  data::SyntheticTaskOptions synth_opts;
  synth->add_option("--n", synth_n, "Number of pairs")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--word-length", synth_opts.word_length, "Letters per word")
      ->capture_default_str();
  synth->add_option("--max-span", synth_opts.max_span_len, "Longest planted span")
      ->capture_default_str();
  synth->add_option("--out", synth_out, "Output JSONL path")->required();

  // train
  auto* train = app.add_subcommand(
      "train", "Train a policy; extra --dotted.path VALUE pairs override config fields");
  std::string train_config;
  bool print_config = false;
  train->add_option("--config", train_config, "JSON config file");
  train->add_flag("--print-config", print_config, "Print the resolved config and exit");
  train->allow_extras();

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Cache token rewards for every record");
  std::string ann_data, ann_ckpt, ann_out, ann_ref, ann_source = "contrastive";
  double ann_beta = 0.1;
  std::size_t ann_threads = 1;
  annotate->add_option("--data", ann_data, "Preference records (JSONL)")->required();
  annotate->add_option("--checkpoint", ann_ckpt, "Evaluator, or trained policy for dpo_implicit")
      ->required();
  annotate->add_option("--out", ann_out, "Reward cache path (default: $TOKREG_CACHE_DIR)");
  annotate->add_option("--source", ann_source, "contrastive or dpo_implicit")
      ->capture_default_str();
  annotate->add_option("--reference", ann_ref, "Reference checkpoint (dpo_implicit)");
  annotate->add_option("--beta", ann_beta, "Implicit reward scale")->capture_default_str();
  annotate->add_option("--threads", ann_threads, "Scoring threads")->capture_default_str();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  GradCheckSuiteOptions gc_opts;
  std::string corrupt;
  gradcheck->add_option("--tolerance", gc_opts.tolerance, "Max relative error")
      ->capture_default_str();
  gradcheck->add_option("--max-coords", gc_opts.max_coords_per_tensor,
                        "Coordinates sampled per tensor, 0 for all")
      ->capture_default_str();
  gradcheck->add_option("--corrupt-backward", corrupt)
      ->check(CLI::IsMember({"sigmoid", "log_softmax_gather", "matmul"}))
      ->group("");

  // eval
  auto* eval = app.add_subcommand("eval", "Held-out metrics of a policy against its reference");
  std::string ev_ckpt, ev_ref, ev_data, ev_base = "dpo";
  double ev_beta = 0.1, ev_gamma = 0.0;
  std::size_t ev_batch = 16;
  eval->add_option("--checkpoint", ev_ckpt, "Policy checkpoint")->required();
  eval->add_option("--reference", ev_ref, "Reference checkpoint")->required();
  eval->add_option("--data", ev_data, "Preference records (JSONL)")->required();
  eval->add_option("--beta", ev_beta, "Reward scale")->capture_default_str();
  eval->add_option("--base", ev_base, "dpo or simpo")->capture_default_str();
  eval->add_option("--gamma", ev_gamma, "SimPO margin")->capture_default_str();
  eval->add_option("--batch-size", ev_batch, "Pairs per batch")->capture_default_str();

  // heatmap
  auto* heatmap = app.add_subcommand("heatmap", "Export per-token log-ratios");
  std::string hm_ckpt, hm_ref, hm_data, hm_out, hm_format = "both";
  std::vector<std::string> hm_ids;
  std::size_t hm_limit = 5;
  heatmap->add_option("--checkpoint", hm_ckpt, "Policy checkpoint")->required();
  heatmap->add_option("--reference", hm_ref, "Reference checkpoint")->required();
  heatmap->add_option("--data", hm_data, "Preference records (JSONL)")->required();
  heatmap->add_option("--out", hm_out, "Output path without extension")->required();
  heatmap->add_option("--id", hm_ids, "Record ids (default: the first --limit records)");
  heatmap->add_option("--limit", hm_limit, "Records when no --id is given")->capture_default_str();
  heatmap->add_option("--format", hm_format, "json, html or both")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (e.get_exit_code() == 0) return kExitOk;
    err << "run 'tokreg --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      RunManifest man;
      man.command = "synth";
      man.argv = args;
      man.started = utc_timestamp();
      const auto records = data::make_synthetic_planted_task(synth_n, synth_seed, synth_opts);
      data::write_records(synth_out, records);
      man.config = {{"n", synth_n},
                    {"seed", synth_seed},
                    {"word_length", synth_opts.word_length},
                    {"max_span", synth_opts.max_span_len}};
      man.outputs = {synth_out};
      man.finished = utc_timestamp();
      write_manifest(synth_out + ".manifest.json", man);
      out << "wrote " << records.size() << " pairs to " << synth_out << '\n';
      return kExitOk;
    }

    if (train->parsed()) {
      nlohmann::json cfg = train_config.empty() ? to_json(RunConfig{})
                                                : load_config_file(train_config);
      if (!train_config.empty()) cfg = to_json(run_config_from_json(cfg));
      bool grid = false;
      const std::vector<std::string> extras = train->remaining();
      for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string key = extras[i];
        if (key.rfind("--", 0) != 0) throw ConfigError("unexpected argument \"" + key + "\"");
        key = key.substr(2);
        if (key == "grid.alpha") {
          grid = true;
          continue;
        }
        std::string value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
          value = key.substr(eq + 1);
          key = key.substr(0, eq);
        } else if (i + 1 < extras.size()) {
          value = extras[++i];
        } else {
          throw ConfigError("--" + key + ": missing value");
        }
        apply_override(cfg, key, value);
      }
      const RunConfig rc = run_config_from_json(cfg);
      if (print_config) {
        rc.model.validate();
        rc.train.validate();
        out << to_json(rc).dump(2) << '\n';
        return kExitOk;
      }
      if (!grid) return run_train(rc, args, out, err);
      for (double alpha : kAlphaGrid) {
        RunConfig variant = rc;
        variant.train.loss.alpha = alpha;
        variant.output_dir = (fs::path(rc.output_dir) / alpha_dir(alpha)).string();
        if (!rc.train.checkpoint_dir.empty()) {
          variant.train.checkpoint_dir = rc.train.checkpoint_dir / alpha_dir(alpha);
        }
        run_train(variant, args, out, err);
      }
      return kExitOk;
    }

    if (annotate->parsed()) {
      RunManifest man;
      man.command = "annotate";
      man.argv = args;
      man.started = utc_timestamp();
      const auto source = rewards::source_from_name(ann_source);
      const auto records = read_records(ann_data, "--data");
      const model::TransformerLM scorer = read_model(ann_ckpt, "--checkpoint");
      std::optional<model::TransformerLM> reference;
      if (source == rewards::RewardSource::kDpoImplicit) {
        if (ann_ref.empty()) throw ConfigError("--reference: required for dpo_implicit");
        reference = read_model(ann_ref, "--reference").freeze_copy(model::ModelRole::kReference);
      }
      fs::path out_path = ann_out;
      if (out_path.empty()) {
        if (cache_dir_from_env().empty()) {
          throw ConfigError("--out: required unless " + std::string(kCacheDirEnv) + " is set");
        }
        out_path = cache_dir_from_env() / ("rewards-" + scorer.content_hash() + ".jsonl");
      }
      rewards::RewardCache cache;
      if (fs::exists(out_path)) cache = rewards::RewardCache::load(out_path);
      const auto summary =
          source == rewards::RewardSource::kContrastive
              ? rewards::annotate_contrastive(scorer.freeze_copy(model::ModelRole::kEvaluator),
                                              records, cache, ann_threads)
              : rewards::annotate_dpo_implicit(scorer, *reference, records, ann_beta, cache);
      if (summary.computed > 0 || !fs::exists(out_path)) cache.save(out_path);
      hash_input(man, ann_data);
      hash_input(man, ann_ckpt);
      hash_input(man, ann_ref);
      man.config = {{"source", ann_source}, {"beta", ann_beta}, {"out", out_path.string()}};
      man.outputs = {out_path.string()};
      man.finished = utc_timestamp();
      write_manifest(out_path.string() + ".manifest.json", man);
      out << nlohmann::json({{"computed", summary.computed},
                             {"reused", summary.reused},
                             {"skipped", summary.skipped_ids.size()},
                             {"skipped_ids", summary.skipped_ids},
                             {"entries", cache.size()},
                             {"out", out_path.string()}})
                 .dump()
          << '\n';
      return kExitOk;
    }

    if (gradcheck->parsed()) {
      if (corrupt == "sigmoid") {
        numerics::inject_backward_fault(numerics::BackwardFault::kSigmoid);
      } else if (corrupt == "log_softmax_gather") {
        numerics::inject_backward_fault(numerics::BackwardFault::kLogSoftmaxGather);
      } else if (corrupt == "matmul") {
        numerics::inject_backward_fault(numerics::BackwardFault::kMatmul);
      }
      const auto rows = run_gradcheck_suite(gc_opts);
      numerics::inject_backward_fault(numerics::BackwardFault::kNone);
      std::vector<std::string> failed;
      out << std::left << std::setw(12) << "loss" << std::setw(16) << "max_rel_error"
          << std::setw(14) << "analytic" << std::setw(14) << "numeric" << std::setw(8) << "coords"
          << "result\n";
      for (const auto& r : rows) {
        out << std::left << std::setw(12) << r.loss << std::setw(16) << std::scientific
            << std::setprecision(3) << r.max_rel_error << std::setw(14) << r.analytic << std::setw(14)
            << r.numeric << std::defaultfloat << std::setw(8)
            << r.coords << (r.pass ? "pass" : "FAIL") << '\n';
        if (!r.pass) failed.push_back(r.loss);
      }
      if (!failed.empty()) {
        err << "gradcheck failed:";
        for (const auto& f : failed) err << ' ' << f;
        err << '\n';
        return kExitRuntime;
      }
      return kExitOk;
    }

    if (eval->parsed()) {
      losses::LossConfig cfg;
      cfg.beta = ev_beta;
      cfg.base = losses::base_from_name(ev_base);
      cfg.simpo_gamma = ev_gamma;
      cfg.validate();
      const model::TransformerLM policy = read_model(ev_ckpt, "--checkpoint");
      const model::TransformerLM reference = read_model(ev_ref, "--reference");
      const auto records = read_records(ev_data, "--data");
      const auto pairs =
          data::tokenize_records(records, static_cast<std::size_t>(policy.config().context_len));
      const auto m = trainer::evaluate(policy, reference, pairs, cfg, ev_batch);
      out << nlohmann::json(m).dump() << '\n';
      return kExitOk;
    }

    if (heatmap->parsed()) {
      const auto format = diagnostics::heatmap_format_from_name(hm_format);
      const model::TransformerLM policy = read_model(hm_ckpt, "--checkpoint");
      const model::TransformerLM reference = read_model(hm_ref, "--reference");
      const auto records = read_records(hm_data, "--data");
      const auto ctx = static_cast<std::size_t>(policy.config().context_len);
      std::vector<diagnostics::HeatmapRecord> rendered;
      if (hm_ids.empty()) {
        for (std::size_t i = 0; i < std::min(hm_limit, records.size()); ++i) {
          const auto r = diagnostics::heatmap_records(policy, reference,
                                                      data::tokenize_record(records[i], ctx));
          rendered.insert(rendered.end(), r.begin(), r.end());
        }
      } else {
        for (const auto& id : hm_ids) {
          const auto it = std::find_if(records.begin(), records.end(),
                                       [&](const auto& r) { return r.id == id; });
          if (it == records.end()) throw ConfigError("--id: no record \"" + id + "\"");
          const auto r =
              diagnostics::heatmap_records(policy, reference, data::tokenize_record(*it, ctx));
          rendered.insert(rendered.end(), r.begin(), r.end());
        }
      }
      RunManifest man;
      man.command = "heatmap";
      man.argv = args;
      man.started = utc_timestamp();
      for (const auto& p : diagnostics::export_heatmap(rendered, hm_out, format)) {
        out << "wrote " << p.string() << '\n';
        man.outputs.push_back(p.string());
      }
      hash_input(man, hm_ckpt);
      hash_input(man, hm_ref);
      hash_input(man, hm_data);
      man.config = {{"ids", hm_ids}, {"limit", hm_limit}, {"format", hm_format}};
      man.finished = utc_timestamp();
      write_manifest(hm_out + ".manifest.json", man);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace tokreg::cli
