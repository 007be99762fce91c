#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selftalk/checkpoint.hpp"
#include "selftalk/config.hpp"
#include "selftalk/corpus_io.hpp"
#include "selftalk/evalrun.hpp"
#include "selftalk/manifest.hpp"
#include "selftalk/report.hpp"
#include "selftalk/training.hpp"

namespace selftalk::cli {

namespace fs = std::filesystem;

struct ExitStatus {
  static constexpr int kOk = 0;
  static constexpr int kUsage = 1;
  static constexpr int kConfig = 2;
  static constexpr int kData = 3;
  static constexpr int kNumeric = 4;
};

namespace detail {

inline void diagnostic(int code, const char* kind, const std::string& msg) {
  std::string flat;
  for (char c : msg) flat += (c == '\n' || c == '"') ? ' ' : c;
  std::cerr << "error code=" << code << " kind=" << kind << " msg=\"" << flat << "\"\n";
}

inline fs::path corpus_dir(const RunConfig& cfg) { return fs::path(cfg.out_dir) / "corpus"; }

inline corpus::Corpus load_run_corpus(const RunConfig& cfg) {
  return corpus::load_corpus(corpus_dir(cfg));
}

inline train::Bots load_bots(const RunConfig& cfg, const std::string& stage) {
  const fs::path dir = fs::path(cfg.out_dir) / stage;
  train::Bots bots;
  bots.qbot = agents::load_checkpoint(dir / "qbot.json");
  bots.abot = agents::load_checkpoint(dir / "abot.json");
  return bots;
}

inline void cmd_generate(const RunConfig& cfg) {
  RunLock lock(cfg.out_dir);
  corpus::Corpus c = corpus::generate_corpus(cfg.world, cfg.seed);
  corpus::save_corpus(c, corpus_dir(cfg));
  write_text_file(fs::path(cfg.out_dir) / "config.resolved.json", canonical_config_json(cfg));
  update_manifest(cfg.out_dir, config_hash(cfg), cfg.seed,
                  {"config.resolved.json", "corpus/corpus.jsonl", "corpus/vocab.json",
                   "corpus/splits.json"});
}

inline void cmd_pretrain(const RunConfig& cfg) {
  RunLock lock(cfg.out_dir);
  corpus::Corpus c = detail::load_run_corpus(cfg);
  const auto dims = cfg.model_dims(c.vocab.size());
  train::Bots bots = train::init_bots(dims, cfg.seed);
  auto curves = train::run_sl_phase(bots, c, cfg.train);
  const fs::path dir = fs::path(cfg.out_dir) / "sl";
  agents::save_checkpoint(bots.qbot, dir / "qbot.json", config_hash(cfg), cfg.seed);
  agents::save_checkpoint(bots.abot, dir / "abot.json", config_hash(cfg), cfg.seed);
  write_text_file(dir / "curves.csv", train::curves_to_csv(curves));
  update_manifest(cfg.out_dir, config_hash(cfg), cfg.seed,
                  {"sl/qbot.json", "sl/abot.json", "sl/curves.csv"});
}

inline void cmd_finetune(const RunConfig& cfg) {
  RunLock lock(cfg.out_dir);
  corpus::Corpus c = detail::load_run_corpus(cfg);
  train::Bots bots = load_bots(cfg, "sl");
  const fs::path dir = fs::path(cfg.out_dir) / "rl";
  std::vector<std::string> artifacts;
  auto curves = train::run_rl_phase(
      bots, c, cfg.train,
      [&](const std::string&, int stage, const agents::AgentParams& qbot,
          const agents::AgentParams& abot) {
        char name[32];
        std::snprintf(name, sizeof(name), "stage_%02d", stage);
        agents::save_checkpoint(qbot, dir / name / "qbot.json", config_hash(cfg), cfg.seed);
        agents::save_checkpoint(abot, dir / name / "abot.json", config_hash(cfg), cfg.seed);
        artifacts.push_back(std::string("rl/") + name + "/qbot.json");
        artifacts.push_back(std::string("rl/") + name + "/abot.json");
      });
  agents::save_checkpoint(bots.qbot, dir / "qbot.json", config_hash(cfg), cfg.seed);
  agents::save_checkpoint(bots.abot, dir / "abot.json", config_hash(cfg), cfg.seed);
  write_text_file(dir / "curves.csv", train::curves_to_csv(curves));
  artifacts.push_back("rl/qbot.json");
  artifacts.push_back("rl/abot.json");
  artifacts.push_back("rl/curves.csv");
  update_manifest(cfg.out_dir, config_hash(cfg), cfg.seed, artifacts);
}

inline void cmd_selftalk(const RunConfig& cfg) {
  RunLock lock(cfg.out_dir);
  corpus::Corpus c = detail::load_run_corpus(cfg);
  train::Bots bots = load_bots(cfg, cfg.eval.checkpoint_stage);
  train::TokenizedCorpus tc = train::TokenizedCorpus::from(c);
  const auto& ids = evalrun::split_ids(c, cfg.eval.split);

  agents::DecodeConfig q_cfg{.mode = agents::DecodeConfig::Mode::beam,
                             .beam_size = cfg.eval.beam_size,
                             .max_len = cfg.eval.max_question_len};
  agents::DecodeConfig a_cfg{.mode = agents::DecodeConfig::Mode::beam,
                             .beam_size = cfg.eval.beam_size,
                             .max_len = cfg.eval.max_answer_len};
  std::vector<train::Episode> episodes(ids.size());
  parallel_for(ids.size(), [&](size_t i) {
    episodes[i] = train::run_selftalk_episode(bots.qbot, bots.abot, c.image(ids[i]).features,
                                              tc.dialogs[size_t(ids[i])].caption,
                                              cfg.eval.rounds, q_cfg, a_cfg, nullptr);
  });

  std::string lines;
  {
    nlohmann::json header;
    header["kind"] = "selftalk-transcripts";
    header["schema_version"] = 1;
    header["episode_count"] = ids.size();
    lines += header.dump();
    lines += '\n';
  }
  for (size_t i = 0; i < ids.size(); ++i) {
    const auto& ep = episodes[i];
    nlohmann::json j;
    j["image_id"] = ids[i];
    j["caption"] = c.vocab.decode(ep.transcript.caption);
    auto& rounds = j["rounds"] = nlohmann::json::array();
    for (size_t t = 0; t < ep.transcript.questions.size(); ++t)
      rounds.push_back({{"q", c.vocab.decode(ep.transcript.questions[t])},
                        {"a", c.vocab.decode(ep.transcript.answers[t])}});
    j["rewards"] = ep.trace.rewards;
    lines += j.dump();
    lines += '\n';
  }
  write_text_file(fs::path(cfg.out_dir) / "selftalk" / "transcripts.jsonl", lines);
  update_manifest(cfg.out_dir, config_hash(cfg), cfg.seed, {"selftalk/transcripts.jsonl"});
}

inline void cmd_evaluate(const RunConfig& cfg) {
  RunLock lock(cfg.out_dir);
  corpus::Corpus c = detail::load_run_corpus(cfg);
  train::Bots bots = load_bots(cfg, cfg.eval.checkpoint_stage);
  evalrun::MetricsReport rep =
      evalrun::run_evaluation(c, bots.qbot, bots.abot, cfg.eval, cfg.seed);
  rep.run_id = run_id(cfg);

  const fs::path dir = fs::path(cfg.out_dir) / "eval";
  write_text_file(dir / "metrics.json", report::metrics_report_json(rep));
  write_text_file(dir / "metrics.csv", report::metrics_report_csv(rep));
  {
    std::vector<double> xs;
    for (size_t t = 1; t <= rep.cosine_curve.size(); ++t) xs.push_back(double(t));
    write_text_file(dir / "cosine_curve.svg",
                    report::line_chart_svg("Successive state cosine similarity",
                                           "dialog round", xs, rep.cosine_curve));
  }
  {
    std::vector<double> xs;
    for (size_t t = 0; t < rep.percentile_curve.size(); ++t) xs.push_back(double(t));
    write_text_file(dir / "percentile_curve.svg",
                    report::line_chart_svg("Percentile rank of the true image",
                                           "dialog round", xs, rep.percentile_curve));
  }
  update_manifest(cfg.out_dir, config_hash(cfg), cfg.seed,
                  {"eval/metrics.json", "eval/metrics.csv", "eval/cosine_curve.svg",
                   "eval/percentile_curve.svg"});
}

inline void cmd_report(const RunConfig& cfg, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw UsageError("report: at least one metrics.json input required");
  RunLock lock(cfg.out_dir);
  std::vector<evalrun::MetricsReport> reports;
  for (const auto& path : inputs)
    reports.push_back(report::parse_metrics_report(read_text_file(path), path));
  const fs::path dir = fs::path(cfg.out_dir) / "report";
  write_text_file(dir / "report.json", report::diff_report_json(reports));
  write_text_file(dir / "report.csv", report::diff_report_csv(reports));
  update_manifest(cfg.out_dir, config_hash(cfg), cfg.seed,
                  {"report/report.json", "report/report.csv"});
}

}  // namespace detail

inline int run_command(const std::vector<std::string>& args) {
  CLI::App app{"selftalk: a desk-scale cooperative image-guessing dialog game"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  uint64_t seed_override = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "path to the run-config JSON document");
  app.add_option("--out", out_override, "override the configured output directory");
  auto* seed_opt = app.add_option("--seed", seed_override, "override the configured seed");

  auto* generate = app.add_subcommand("generate", "generate the synthetic corpus");
  auto* pretrain = app.add_subcommand("pretrain", "supervised pre-training of both agents");
  auto* finetune = app.add_subcommand("finetune", "self-talk REINFORCE fine-tuning");
  auto* selftalk = app.add_subcommand("selftalk", "roll out self-talk transcripts");
  auto* evaluate = app.add_subcommand("evaluate", "compute the full metrics report");
  auto* report_cmd = app.add_subcommand("report", "side-by-side report over metrics files");
  std::vector<std::string> report_inputs;
  report_cmd->add_option("inputs", report_inputs, "metrics.json files to compare");

  try {
    std::vector<const char*> argv;
    argv.push_back("selftalk");
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(int(argv.size()), argv.data());
    seed_set = seed_opt->count() > 0;

    if (config_path.empty()) throw ConfigError("--config <path> is required");
    RunConfig cfg = load_config(config_path);
    if (seed_set) {
      cfg.seed = seed_override;
      cfg.train.seed = seed_override;
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();

    if (app.got_subcommand(generate))
      detail::cmd_generate(cfg);
    else if (app.got_subcommand(pretrain))
      detail::cmd_pretrain(cfg);
    else if (app.got_subcommand(finetune))
      detail::cmd_finetune(cfg);
    else if (app.got_subcommand(selftalk))
      detail::cmd_selftalk(cfg);
    else if (app.got_subcommand(evaluate))
      detail::cmd_evaluate(cfg);
    else if (app.got_subcommand(report_cmd))
      detail::cmd_report(cfg, report_inputs);
    return ExitStatus::kOk;
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return ExitStatus::kOk;
  } catch (const CLI::ParseError& e) {
    detail::diagnostic(ExitStatus::kUsage, "usage", e.what());
    return ExitStatus::kUsage;
  } catch (const UsageError& e) {
    detail::diagnostic(ExitStatus::kUsage, "usage", e.what());
    return ExitStatus::kUsage;
  } catch (const ConfigError& e) {
    detail::diagnostic(ExitStatus::kConfig, "config", e.what());
    return ExitStatus::kConfig;
  } catch (const DataError& e) {
    detail::diagnostic(ExitStatus::kData, "data", e.what());
    return ExitStatus::kData;
  } catch (const std::exception& e) {
    detail::diagnostic(ExitStatus::kNumeric, "numeric", e.what());
    return ExitStatus::kNumeric;
  }
}

}  // namespace selftalk::cli
