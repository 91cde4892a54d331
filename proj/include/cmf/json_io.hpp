#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cmf/data.hpp"
#include "cmf/error.hpp"
#include "cmf/model.hpp"
#include "cmf/train.hpp"

namespace cmf {

namespace detail {

// Rejects unknown keys so config typos surface as config errors instead of
// silently falling back to defaults.
inline void check_allowed_keys(const nlohmann::json& j,
                               const std::vector<std::string>& allowed,
                               const std::string& where) {
  if (!j.is_object())
    throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& a : allowed) ok = ok || (key == a);
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T config_value(const nlohmann::json& j, const char* key, T fallback,
               const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  std::vector<std::string> streams;
  for (Stream s : cfg.streams) streams.push_back(stream_name(s));
  return nlohmann::json{{"d_audio_in", cfg.d_audio_in},
                        {"d_text_in", cfg.d_text_in},
                        {"d_model", cfg.d_model},
                        {"n_sca_layers", cfg.n_sca_layers},
                        {"ff_inner", cfg.ff_inner},
                        {"n_classes", cfg.n_classes},
                        {"d_audio_lld", cfg.d_audio_lld},
                        {"share_encoder_lstms", cfg.share_encoder_lstms},
                        {"streams", streams},
                        {"seed", cfg.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j,
                                          const std::string& where) {
  detail::check_allowed_keys(
      j,
      {"d_audio_in", "d_text_in", "d_model", "n_sca_layers", "ff_inner",
       "n_classes", "d_audio_lld", "share_encoder_lstms", "streams", "seed"},
      where);
  ModelConfig cfg;
  cfg.d_audio_in = detail::config_value(j, "d_audio_in", cfg.d_audio_in, where);
  cfg.d_text_in = detail::config_value(j, "d_text_in", cfg.d_text_in, where);
  cfg.d_model = detail::config_value(j, "d_model", cfg.d_model, where);
  cfg.n_sca_layers =
      detail::config_value(j, "n_sca_layers", cfg.n_sca_layers, where);
  cfg.ff_inner = detail::config_value(j, "ff_inner", cfg.ff_inner, where);
  cfg.n_classes = detail::config_value(j, "n_classes", cfg.n_classes, where);
  cfg.d_audio_lld =
      detail::config_value(j, "d_audio_lld", cfg.d_audio_lld, where);
  cfg.share_encoder_lstms = detail::config_value(
      j, "share_encoder_lstms", cfg.share_encoder_lstms, where);
  cfg.seed = detail::config_value(j, "seed", cfg.seed, where);
  if (j.contains("streams")) {
    auto names = detail::config_value(j, "streams", std::vector<std::string>{},
                                      where);
    cfg.streams.clear();
    for (const auto& n : names) cfg.streams.push_back(stream_from_name(n));
  }
  cfg.validate();
  return cfg;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"learning_rate", cfg.learning_rate},
                        {"weight_decay", cfg.weight_decay},
                        {"batch_size", cfg.batch_size},
                        {"max_epochs", cfg.max_epochs},
                        {"patience", cfg.patience},
                        {"beta1", cfg.beta1},
                        {"beta2", cfg.beta2},
                        {"adam_eps", cfg.adam_eps},
                        {"decoupled_weight_decay", cfg.decoupled_weight_decay},
                        {"grad_clip", cfg.grad_clip},
                        {"seed", cfg.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j,
                                          const std::string& where) {
  detail::check_allowed_keys(
      j,
      {"learning_rate", "weight_decay", "batch_size", "max_epochs", "patience",
       "beta1", "beta2", "adam_eps", "decoupled_weight_decay", "grad_clip",
       "seed"},
      where);
  TrainConfig cfg;
  cfg.learning_rate =
      detail::config_value(j, "learning_rate", cfg.learning_rate, where);
  cfg.weight_decay =
      detail::config_value(j, "weight_decay", cfg.weight_decay, where);
  cfg.batch_size = detail::config_value(j, "batch_size", cfg.batch_size, where);
  cfg.max_epochs = detail::config_value(j, "max_epochs", cfg.max_epochs, where);
  cfg.patience = detail::config_value(j, "patience", cfg.patience, where);
  cfg.beta1 = detail::config_value(j, "beta1", cfg.beta1, where);
  cfg.beta2 = detail::config_value(j, "beta2", cfg.beta2, where);
  cfg.adam_eps = detail::config_value(j, "adam_eps", cfg.adam_eps, where);
  cfg.decoupled_weight_decay = detail::config_value(
      j, "decoupled_weight_decay", cfg.decoupled_weight_decay, where);
  cfg.grad_clip = detail::config_value(j, "grad_clip", cfg.grad_clip, where);
  cfg.seed = detail::config_value(j, "seed", cfg.seed, where);
  cfg.validate();
  return cfg;
}

inline nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec) {
  return nlohmann::json{{"n_dialogues", spec.n_dialogues},
                        {"min_utterances", spec.min_utterances},
                        {"max_utterances", spec.max_utterances},
                        {"d_audio", spec.d_audio},
                        {"d_text", spec.d_text},
                        {"n_classes", spec.n_classes},
                        {"mean_scale", spec.mean_scale},
                        {"noise_scale", spec.noise_scale},
                        {"mode", synth_mode_name(spec.mode)},
                        {"seed", spec.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j,
                                              const std::string& where) {
  detail::check_allowed_keys(
      j,
      {"n_dialogues", "min_utterances", "max_utterances", "d_audio", "d_text",
       "n_classes", "mean_scale", "noise_scale", "mode", "seed",
       // split sizing keys consumed by the synth command:
       "train_dialogues", "val_dialogues", "test_dialogues"},
      where);
  SyntheticSpec spec;
  spec.n_dialogues =
      detail::config_value(j, "n_dialogues", spec.n_dialogues, where);
  spec.min_utterances =
      detail::config_value(j, "min_utterances", spec.min_utterances, where);
  spec.max_utterances =
      detail::config_value(j, "max_utterances", spec.max_utterances, where);
  spec.d_audio = detail::config_value(j, "d_audio", spec.d_audio, where);
  spec.d_text = detail::config_value(j, "d_text", spec.d_text, where);
  spec.n_classes = detail::config_value(j, "n_classes", spec.n_classes, where);
  spec.mean_scale =
      detail::config_value(j, "mean_scale", spec.mean_scale, where);
  spec.noise_scale =
      detail::config_value(j, "noise_scale", spec.noise_scale, where);
  if (j.contains("mode"))
    spec.mode = synth_mode_from_name(
        detail::config_value(j, "mode", std::string{}, where));
  spec.seed = detail::config_value(j, "seed", spec.seed, where);
  spec.validate();
  return spec;
}

// Reads a whole JSON document from a file, mapping failures to config errors.
inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j;
}

}  // namespace cmf
