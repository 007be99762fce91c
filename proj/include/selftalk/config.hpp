#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "selftalk/corpus.hpp"
#include "selftalk/evalrun.hpp"
#include "selftalk/rng.hpp"
#include "selftalk/training.hpp"

namespace selftalk::cli {

constexpr int kConfigSchemaVersion = 1;

// One JSON document drives every subcommand; only the seed and the output
// directory may be overridden on the command line so the manifest stays an
// honest record of the run.
struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "runs/default";
  corpus::WorldConfig world = corpus::WorldConfig::defaults();
  int embed_dim = 32;
  int hidden_dim = 64;
  train::TrainConfig train;
  evalrun::EvalConfig eval;

  void validate() const {
    world.validate();
    train.validate();
    eval.validate();
    if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("model: bad dimensions");
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  }

  agents::ModelDims model_dims(int vocab) const {
    return {.vocab = vocab, .embed = embed_dim, .hidden = hidden_dim,
            .feature = world.feature_dim};
  }
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  try {
    if (j.value("schema_version", -1) != kConfigSchemaVersion)
      throw ConfigError("config: missing or unsupported schema_version");
    RunConfig cfg;
    detail::read_field(j, "seed", cfg.seed);
    detail::read_field(j, "out_dir", cfg.out_dir);
    if (j.contains("world")) {
      const auto& w = j.at("world");
      detail::read_field(w, "image_count", cfg.world.image_count);
      if (w.contains("split_fractions")) {
        auto f = w.at("split_fractions").get<std::vector<double>>();
        if (f.size() != 3) throw ConfigError("config: split_fractions needs 3 entries");
        cfg.world.split_fractions = {f[0], f[1], f[2]};
      }
      if (w.contains("attribute_sizes"))
        cfg.world.attribute_sizes = w.at("attribute_sizes").get<std::vector<int>>();
      detail::read_field(w, "feature_dim", cfg.world.feature_dim);
      detail::read_field(w, "noise_scale", cfg.world.noise_scale);
      detail::read_field(w, "min_separation", cfg.world.min_separation);
      detail::read_field(w, "feature_norm_bound", cfg.world.feature_norm_bound);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::read_field(m, "embed_dim", cfg.embed_dim);
      detail::read_field(m, "hidden_dim", cfg.hidden_dim);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::read_field(t, "penalty_coefficient", cfg.train.penalty_coefficient);
      detail::read_field(t, "penalize_qbot", cfg.train.penalize_qbot);
      detail::read_field(t, "penalize_abot", cfg.train.penalize_abot);
      detail::read_field(t, "regression_weight", cfg.train.regression_weight);
      detail::read_field(t, "lr_initial", cfg.train.lr_initial);
      detail::read_field(t, "lr_decay", cfg.train.lr_decay);
      detail::read_field(t, "lr_floor", cfg.train.lr_floor);
      detail::read_field(t, "dropout_sl", cfg.train.dropout_sl);
      detail::read_field(t, "sl_epochs", cfg.train.sl_epochs);
      detail::read_field(t, "batch_size", cfg.train.batch_size);
      detail::read_field(t, "curriculum_sweeps", cfg.train.curriculum_sweeps);
      detail::read_field(t, "rl_episodes_per_stage", cfg.train.rl_episodes_per_stage);
      detail::read_field(t, "rl_batch", cfg.train.rl_batch);
      detail::read_field(t, "rl_temperature", cfg.train.rl_temperature);
      detail::read_field(t, "reward_baseline", cfg.train.reward_baseline);
      detail::read_field(t, "max_question_len", cfg.train.max_question_len);
      detail::read_field(t, "max_answer_len", cfg.train.max_answer_len);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::read_field(e, "split", cfg.eval.split);
      detail::read_field(e, "pool_size", cfg.eval.pool_size);
      detail::read_field(e, "candidate_k", cfg.eval.candidate_k);
      detail::read_field(e, "beam_size", cfg.eval.beam_size);
      detail::read_field(e, "rounds", cfg.eval.rounds);
      detail::read_field(e, "max_retrieval_items", cfg.eval.max_retrieval_items);
      detail::read_field(e, "checkpoint_stage", cfg.eval.checkpoint_stage);
    }
    cfg.eval.max_question_len = cfg.train.max_question_len;
    cfg.eval.max_answer_len = cfg.train.max_answer_len;
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: malformed: ") + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": parse error: " + e.what());
  }
  return parse_config(j);
}

// Canonical serialization of a parsed config; the hash of these bytes is the
// run's identity in manifests and checkpoints.
inline std::string canonical_config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["world"] = {{"image_count", cfg.world.image_count},
                {"split_fractions", cfg.world.split_fractions},
                {"attribute_sizes", cfg.world.attribute_sizes},
                {"feature_dim", cfg.world.feature_dim},
                {"noise_scale", cfg.world.noise_scale},
                {"min_separation", cfg.world.min_separation},
                {"feature_norm_bound", cfg.world.feature_norm_bound}};
  j["model"] = {{"embed_dim", cfg.embed_dim}, {"hidden_dim", cfg.hidden_dim}};
  j["train"] = {{"penalty_coefficient", cfg.train.penalty_coefficient},
                {"penalize_qbot", cfg.train.penalize_qbot},
                {"penalize_abot", cfg.train.penalize_abot},
                {"regression_weight", cfg.train.regression_weight},
                {"lr_initial", cfg.train.lr_initial},
                {"lr_decay", cfg.train.lr_decay},
                {"lr_floor", cfg.train.lr_floor},
                {"dropout_sl", cfg.train.dropout_sl},
                {"sl_epochs", cfg.train.sl_epochs},
                {"batch_size", cfg.train.batch_size},
                {"curriculum_sweeps", cfg.train.curriculum_sweeps},
                {"rl_episodes_per_stage", cfg.train.rl_episodes_per_stage},
                {"rl_batch", cfg.train.rl_batch},
                {"rl_temperature", cfg.train.rl_temperature},
                {"reward_baseline", cfg.train.reward_baseline},
                {"max_question_len", cfg.train.max_question_len},
                {"max_answer_len", cfg.train.max_answer_len}};
  j["eval"] = {{"split", cfg.eval.split},
               {"pool_size", cfg.eval.pool_size},
               {"candidate_k", cfg.eval.candidate_k},
               {"beam_size", cfg.eval.beam_size},
               {"rounds", cfg.eval.rounds},
               {"max_retrieval_items", cfg.eval.max_retrieval_items},
               {"checkpoint_stage", cfg.eval.checkpoint_stage}};
  return j.dump(2) + "\n";
}

inline std::string config_hash(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                (unsigned long long)hash_str(canonical_config_json(cfg)));
  return buf;
}

inline std::string run_id(const RunConfig& cfg) {
  return config_hash(cfg) + "-s" + std::to_string(cfg.seed);
}

}  // namespace selftalk::cli
