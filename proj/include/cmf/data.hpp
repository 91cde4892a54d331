#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmf/error.hpp"
#include "cmf/layers.hpp"
#include "cmf/rng.hpp"
#include "cmf/tensor.hpp"

namespace cmf {

// Label written on padded positions; never a valid class id.
inline constexpr int kPadLabel = -1;

struct UtteranceRecord {
  std::string dialogue_id;
  std::size_t utterance_index = 0;
  int label = 0;
  std::vector<double> audio;
  std::vector<double> text;
};

struct DatasetHeader {
  std::size_t d_audio = 0;
  std::size_t d_text = 0;
  std::size_t n_classes = 0;
  std::vector<std::string> label_names;
};

struct Dialogue {
  std::string id;
  std::vector<UtteranceRecord> utterances;
};

struct DatasetSplit {
  DatasetHeader header;
  std::vector<Dialogue> dialogues;

  std::size_t n_utterances() const {
    std::size_t n = 0;
    for (const auto& d : dialogues) n += d.utterances.size();
    return n;
  }
};

// ---------------------------------------------------------------------------
// JSON-Lines files: one header object, then one object per utterance.
// Header:  {"d_audio":A,"d_text":T,"n_classes":C,"labels":[...]}
// Record:  {"dialogue":"id","turn":k,"label":c,"audio":[...],"text":[...]}
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json parse_json_line(const std::string& line,
                                      const std::string& path,
                                      std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

template <typename T>
T json_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key))
    throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type");
  }
}

inline void check_finite_vector(const std::vector<double>& v,
                                const char* modality, const std::string& where) {
  for (double x : v)
    if (!std::isfinite(x))
      throw DataError(where + ": non-finite " + modality + " value");
}

}  // namespace detail

inline DatasetSplit load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");

  DatasetSplit split;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = detail::parse_json_line(line, path, line_no);
    if (!have_header) {
      const std::string where = path + ":" + std::to_string(line_no);
      split.header.d_audio = detail::json_field<std::size_t>(j, "d_audio", where);
      split.header.d_text = detail::json_field<std::size_t>(j, "d_text", where);
      split.header.n_classes = detail::json_field<std::size_t>(j, "n_classes", where);
      split.header.label_names =
          detail::json_field<std::vector<std::string>>(j, "labels", where);
      if (split.header.n_classes < 2)
        throw SchemaError(where + ": n_classes must be at least 2");
      if (split.header.label_names.size() != split.header.n_classes)
        throw SchemaError(where + ": labels list length " +
                          std::to_string(split.header.label_names.size()) +
                          " != n_classes " +
                          std::to_string(split.header.n_classes));
      if (split.header.d_audio == 0 || split.header.d_text == 0)
        throw SchemaError(where + ": feature dims must be positive");
      have_header = true;
      continue;
    }

    UtteranceRecord rec;
    const std::string line_where = path + ":" + std::to_string(line_no);
    rec.dialogue_id = detail::json_field<std::string>(j, "dialogue", line_where);
    rec.utterance_index = detail::json_field<std::size_t>(j, "turn", line_where);
    rec.label = detail::json_field<int>(j, "label", line_where);
    rec.audio = detail::json_field<std::vector<double>>(j, "audio", line_where);
    rec.text = detail::json_field<std::vector<double>>(j, "text", line_where);

    const std::string where =
        line_where + " (record " + rec.dialogue_id + "#" +
        std::to_string(rec.utterance_index) + ")";
    if (rec.audio.size() != split.header.d_audio)
      throw SchemaError(where + ": audio length " +
                        std::to_string(rec.audio.size()) + " != header d_audio " +
                        std::to_string(split.header.d_audio));
    if (rec.text.size() != split.header.d_text)
      throw SchemaError(where + ": text length " +
                        std::to_string(rec.text.size()) + " != header d_text " +
                        std::to_string(split.header.d_text));
    if (rec.label < 0 ||
        static_cast<std::size_t>(rec.label) >= split.header.n_classes)
      throw DataError(where + ": label " + std::to_string(rec.label) +
                      " outside [0, " + std::to_string(split.header.n_classes) +
                      ")");
    detail::check_finite_vector(rec.audio, "audio", where);
    detail::check_finite_vector(rec.text, "text", where);

    if (split.dialogues.empty() || split.dialogues.back().id != rec.dialogue_id) {
      for (const auto& d : split.dialogues)
        if (d.id == rec.dialogue_id)
          throw SchemaError(where + ": dialogue '" + rec.dialogue_id +
                            "' appears in two separate blocks");
      if (rec.utterance_index != 0)
        throw SchemaError(where + ": dialogue must start at turn 0, got " +
                          std::to_string(rec.utterance_index));
      split.dialogues.push_back(Dialogue{rec.dialogue_id, {}});
    } else if (rec.utterance_index != split.dialogues.back().utterances.size()) {
      throw SchemaError(where + ": expected turn " +
                        std::to_string(split.dialogues.back().utterances.size()) +
                        ", got " + std::to_string(rec.utterance_index));
    }
    split.dialogues.back().utterances.push_back(std::move(rec));
  }

  if (!have_header)
    throw ParseError(path + ": missing dataset header line");
  return split;
}

inline void save_dataset(const std::string& path, const DatasetSplit& split) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file '" + path + "'");
  nlohmann::json header = {{"d_audio", split.header.d_audio},
                           {"d_text", split.header.d_text},
                           {"n_classes", split.header.n_classes},
                           {"labels", split.header.label_names}};
  out << header.dump() << "\n";
  for (const auto& dia : split.dialogues) {
    for (const auto& rec : dia.utterances) {
      nlohmann::json j = {{"dialogue", rec.dialogue_id},
                          {"turn", rec.utterance_index},
                          {"label", rec.label},
                          {"audio", rec.audio},
                          {"text", rec.text}};
      out << j.dump() << "\n";
    }
  }
  if (!out) throw IoError("write failed for dataset file '" + path + "'");
}

// Dense per-dialogue views consumed by the model.
inline Tensor dialogue_audio(const Dialogue& d, const DatasetHeader& h) {
  std::vector<double> block;
  block.reserve(d.utterances.size() * h.d_audio);
  for (const auto& u : d.utterances)
    block.insert(block.end(), u.audio.begin(), u.audio.end());
  return Tensor::from_data({d.utterances.size(), h.d_audio}, std::move(block));
}

inline Tensor dialogue_text(const Dialogue& d, const DatasetHeader& h) {
  std::vector<double> block;
  block.reserve(d.utterances.size() * h.d_text);
  for (const auto& u : d.utterances)
    block.insert(block.end(), u.text.begin(), u.text.end());
  return Tensor::from_data({d.utterances.size(), h.d_text}, std::move(block));
}

inline std::vector<int> dialogue_labels(const Dialogue& d) {
  std::vector<int> out;
  out.reserve(d.utterances.size());
  for (const auto& u : d.utterances) out.push_back(u.label);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic dialogue generation
// ---------------------------------------------------------------------------

enum class SynthMode {
  // Per-class Gaussian means in both modality spaces: either modality alone
  // suffices to recover the label.
  UnimodalSeparable,
  // Latent symbols s_a, s_t drawn per utterance, one embedded per modality;
  // label = (s_a + s_t) mod n_classes. Marginally each modality is
  // uninformative; only their interaction determines the label.
  CrossModalInteraction,
};

inline const char* synth_mode_name(SynthMode m) {
  return m == SynthMode::UnimodalSeparable ? "unimodal-separable"
                                           : "cross-modal-interaction";
}

inline SynthMode synth_mode_from_name(const std::string& name) {
  if (name == "unimodal-separable") return SynthMode::UnimodalSeparable;
  if (name == "cross-modal-interaction") return SynthMode::CrossModalInteraction;
  throw ConfigError("unknown synthesis mode '" + name + "'");
}

struct SyntheticSpec {
  std::size_t n_dialogues = 100;
  std::size_t min_utterances = 2;
  std::size_t max_utterances = 6;
  std::size_t d_audio = 24;
  std::size_t d_text = 16;
  std::size_t n_classes = 7;
  double mean_scale = 1.0;
  double noise_scale = 0.3;
  SynthMode mode = SynthMode::UnimodalSeparable;
  std::uint64_t seed = 0;
  // Class anchors follow seed alone; splits that share a seed but vary the
  // sampling stream pose the same task with fresh utterance draws.
  std::uint64_t sampling_stream = 0;

  void validate() const {
    if (n_dialogues == 0) throw ConfigError("n_dialogues must be positive");
    if (min_utterances == 0 || min_utterances > max_utterances)
      throw ConfigError("utterance range invalid: [" +
                        std::to_string(min_utterances) + ", " +
                        std::to_string(max_utterances) + "]");
    if (d_audio == 0 || d_text == 0)
      throw ConfigError("synthetic feature dims must be positive");
    if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
    if (mean_scale <= 0.0 || noise_scale <= 0.0)
      throw ConfigError("mean_scale and noise_scale must be positive");
  }
};

// Emotion names for the default 7-class setting, else classK.
inline std::vector<std::string> default_label_names(std::size_t n_classes) {
  if (n_classes == 7)
    return {"anger", "joy", "sadness", "neutral", "disgust", "fear", "surprise"};
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n_classes; ++c)
    names.push_back("class" + std::to_string(c));
  return names;
}

inline DatasetSplit synthesize(const SyntheticSpec& spec) {
  spec.validate();
  Rng anchor_rng(Rng::mix(spec.seed, 0x616e63686f72ULL));
  Rng rng(Rng::mix(spec.seed, 0x73616d706c65ULL + spec.sampling_stream));

  // Anchor vectors per class (or per latent symbol in interaction mode).
  auto draw_means = [&](std::size_t count, std::size_t dim) {
    std::vector<std::vector<double>> means(count, std::vector<double>(dim));
    for (auto& m : means)
      for (double& v : m) v = spec.mean_scale * anchor_rng.gaussian();
    return means;
  };
  auto audio_means = draw_means(spec.n_classes, spec.d_audio);
  auto text_means = draw_means(spec.n_classes, spec.d_text);

  DatasetSplit split;
  split.header = {spec.d_audio, spec.d_text, spec.n_classes,
                  default_label_names(spec.n_classes)};

  for (std::size_t di = 0; di < spec.n_dialogues; ++di) {
    Dialogue dia;
    dia.id = "dia" + std::to_string(di);
    const std::size_t t_len =
        spec.min_utterances +
        rng.below(spec.max_utterances - spec.min_utterances + 1);
    for (std::size_t t = 0; t < t_len; ++t) {
      UtteranceRecord rec;
      rec.dialogue_id = dia.id;
      rec.utterance_index = t;
      std::size_t audio_anchor, text_anchor;
      if (spec.mode == SynthMode::UnimodalSeparable) {
        const std::size_t label = rng.below(spec.n_classes);
        audio_anchor = text_anchor = label;
        rec.label = static_cast<int>(label);
      } else {
        audio_anchor = rng.below(spec.n_classes);
        text_anchor = rng.below(spec.n_classes);
        rec.label = static_cast<int>((audio_anchor + text_anchor) % spec.n_classes);
      }
      rec.audio.resize(spec.d_audio);
      for (std::size_t i = 0; i < spec.d_audio; ++i)
        rec.audio[i] = audio_means[audio_anchor][i] + spec.noise_scale * rng.gaussian();
      rec.text.resize(spec.d_text);
      for (std::size_t i = 0; i < spec.d_text; ++i)
        rec.text[i] = text_means[text_anchor][i] + spec.noise_scale * rng.gaussian();
      dia.utterances.push_back(std::move(rec));
    }
    split.dialogues.push_back(std::move(dia));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

// A batch of dialogues padded to the longest member. Padded rows are zero
// features, label kPadLabel, mask 0.
struct DialogueBatch {
  std::size_t t_max = 0;
  std::vector<Tensor> audio;             // each [t_max x d_audio]
  std::vector<Tensor> text;              // each [t_max x d_text]
  std::vector<std::vector<int>> labels;  // each length t_max
  std::vector<Mask> mask;                // each length t_max

  std::size_t size() const { return audio.size(); }

  std::size_t n_valid() const {
    std::size_t n = 0;
    for (const auto& m : mask)
      for (auto v : m) n += (v != 0);
    return n;
  }
};

inline std::vector<DialogueBatch> make_batches(const DatasetSplit& split,
                                               std::size_t batch_size,
                                               std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (split.dialogues.empty())
    throw ConfigError("make_batches: empty dataset split");

  std::vector<std::size_t> order(split.dialogues.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<DialogueBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    DialogueBatch batch;
    for (std::size_t k = start; k < end; ++k)
      batch.t_max = std::max(batch.t_max,
                             split.dialogues[order[k]].utterances.size());
    for (std::size_t k = start; k < end; ++k) {
      const Dialogue& dia = split.dialogues[order[k]];
      const std::size_t t_len = dia.utterances.size();
      std::vector<double> audio(batch.t_max * split.header.d_audio, 0.0);
      std::vector<double> text(batch.t_max * split.header.d_text, 0.0);
      std::vector<int> labels(batch.t_max, kPadLabel);
      Mask mask(batch.t_max, 0);
      for (std::size_t t = 0; t < t_len; ++t) {
        const auto& u = dia.utterances[t];
        std::copy(u.audio.begin(), u.audio.end(),
                  audio.begin() + static_cast<std::ptrdiff_t>(t * split.header.d_audio));
        std::copy(u.text.begin(), u.text.end(),
                  text.begin() + static_cast<std::ptrdiff_t>(t * split.header.d_text));
        labels[t] = u.label;
        mask[t] = 1;
      }
      batch.audio.push_back(
          Tensor::from_data({batch.t_max, split.header.d_audio}, std::move(audio)));
      batch.text.push_back(
          Tensor::from_data({batch.t_max, split.header.d_text}, std::move(text)));
      batch.labels.push_back(std::move(labels));
      batch.mask.push_back(std::move(mask));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace cmf
