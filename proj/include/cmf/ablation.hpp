#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmf/data.hpp"
#include "cmf/error.hpp"
#include "cmf/model.hpp"
#include "cmf/train.hpp"

namespace cmf {

struct AblationVariant {
  std::string id;
  std::string description;
};

// Fixed registry; output tables follow this order.
inline const std::vector<AblationVariant>& ablation_registry() {
  static const std::vector<AblationVariant> registry = {
      {"full", "all seven streams"},
      {"no-sca", "cross- and self-attention streams removed"},
      {"audio-only", "audio self-attention and residual streams only"},
      {"text-only", "text self-attention and residual streams only"},
      {"no-mid", "mid-level fusion stream removed"},
      {"no-residual", "residual streams removed"},
      {"audio-no-lld", "leading handcrafted audio columns zeroed"},
      {"audio-no-openl3", "trailing embedding audio columns zeroed"},
  };
  return registry;
}

inline const AblationVariant& find_variant(const std::string& id) {
  for (const auto& v : ablation_registry())
    if (v.id == id) return v;
  throw ConfigError("unknown ablation variant '" + id + "'");
}

// Stream surgery; feature-column variants leave the model unchanged.
inline ModelConfig variant_model_config(ModelConfig base, const std::string& id) {
  find_variant(id);
  auto keep = [&](std::vector<Stream> streams) {
    base.streams.clear();
    for (Stream s : streams) base.streams.push_back(s);
  };
  auto drop = [&](std::vector<Stream> remove) {
    std::vector<Stream> kept;
    for (Stream s : base.streams)
      if (std::find(remove.begin(), remove.end(), s) == remove.end())
        kept.push_back(s);
    base.streams = std::move(kept);
  };
  if (id == "no-sca")
    drop({Stream::CrossAudio, Stream::CrossText, Stream::SelfAudio,
          Stream::SelfText});
  else if (id == "audio-only")
    keep({Stream::SelfAudio, Stream::ResidualAudio});
  else if (id == "text-only")
    keep({Stream::SelfText, Stream::ResidualText});
  else if (id == "no-mid")
    drop({Stream::Mid});
  else if (id == "no-residual")
    drop({Stream::ResidualAudio, Stream::ResidualText});
  base.validate();
  return base;
}

// Feature surgery: zeroes the documented audio column subrange. The audio
// vector is a concatenation of d_audio_lld handcrafted columns followed by
// embedding columns.
inline DatasetSplit variant_dataset(DatasetSplit split, const std::string& id,
                                    const ModelConfig& base) {
  if (id != "audio-no-lld" && id != "audio-no-openl3") return split;
  if (base.d_audio_lld == 0 || base.d_audio_lld >= split.header.d_audio)
    throw ConfigError("variant '" + id + "' needs 0 < d_audio_lld (" +
                      std::to_string(base.d_audio_lld) + ") < d_audio (" +
                      std::to_string(split.header.d_audio) + ")");
  const std::size_t lo = id == "audio-no-lld" ? 0 : base.d_audio_lld;
  const std::size_t hi =
      id == "audio-no-lld" ? base.d_audio_lld : split.header.d_audio;
  for (auto& dia : split.dialogues)
    for (auto& u : dia.utterances)
      for (std::size_t i = lo; i < hi; ++i) u.audio[i] = 0.0;
  return split;
}

struct AblationCell {
  std::string variant;
  std::vector<double> seed_f1;
  double mean = 0.0;
  double sd = 0.0;
};

struct AblationTable {
  std::vector<AblationCell> rows;
  std::vector<std::uint64_t> seeds;

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
      rows_json.push_back({{"variant", r.variant},
                           {"seed_f1", r.seed_f1},
                           {"mean_f1", r.mean},
                           {"sd_f1", r.sd}});
    return nlohmann::json{{"seeds", seeds}, {"rows", rows_json}};
  }

  std::string to_table() const {
    std::ostringstream out;
    out << std::left << std::setw(18) << "variant" << std::right
        << std::setw(12) << "mean F1" << std::setw(12) << "sd" << "  per-seed\n";
    for (const auto& r : rows) {
      out << std::left << std::setw(18) << r.variant << std::right << std::fixed
          << std::setprecision(4) << std::setw(12) << r.mean << std::setw(12)
          << r.sd << "  ";
      for (std::size_t i = 0; i < r.seed_f1.size(); ++i)
        out << (i ? " " : "") << std::setprecision(4) << r.seed_f1[i];
      out << "\n";
    }
    return out.str();
  }
};

inline std::size_t ablation_thread_cap(std::size_t n_jobs) {
  std::size_t cap = 1;
  if (const char* env = std::getenv("CMF_THREADS")) {
    const std::string s(env);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("CMF_THREADS is not a positive integer: '" + s + "'");
    try {
      cap = std::stoul(s);
    } catch (...) {
      throw ConfigError("CMF_THREADS is not a positive integer: '" + s + "'");
    }
    if (cap == 0)
      throw ConfigError("CMF_THREADS is not a positive integer: '" + s + "'");
  }
  return std::min(cap, std::max<std::size_t>(1, n_jobs));
}

// Trains every requested variant with the same seed set and reports
// mean +/- sd of test weighted F1. Jobs are independent; CMF_THREADS
// caps parallelism. Output order follows the registry.
inline AblationTable run_ablation(const ModelConfig& base_model,
                                  const TrainConfig& base_train,
                                  const DatasetSplit& train_split,
                                  const DatasetSplit& val_split,
                                  const DatasetSplit& test_split,
                                  const std::vector<std::string>& variant_ids,
                                  const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("run_ablation: no seeds given");
  for (const auto& id : variant_ids) find_variant(id);

  // Registry order, each requested variant once.
  std::vector<std::string> ordered;
  for (const auto& v : ablation_registry())
    if (std::find(variant_ids.begin(), variant_ids.end(), v.id) !=
            variant_ids.end() &&
        std::find(ordered.begin(), ordered.end(), v.id) == ordered.end())
      ordered.push_back(v.id);
  if (ordered.empty()) throw ConfigError("run_ablation: no variants requested");

  struct Job {
    std::size_t variant_index;
    std::size_t seed_index;
  };
  std::vector<Job> jobs;
  for (std::size_t vi = 0; vi < ordered.size(); ++vi)
    for (std::size_t si = 0; si < seeds.size(); ++si) jobs.push_back({vi, si});

  // Variant-specific dataset copies are shared read-only across seeds.
  std::vector<DatasetSplit> var_train, var_val, var_test;
  for (const auto& id : ordered) {
    var_train.push_back(variant_dataset(train_split, id, base_model));
    var_val.push_back(variant_dataset(val_split, id, base_model));
    var_test.push_back(variant_dataset(test_split, id, base_model));
  }

  std::vector<double> results(jobs.size(), 0.0);
  std::vector<std::string> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job& job = jobs[k];
      try {
        ModelConfig mc = variant_model_config(base_model, ordered[job.variant_index]);
        mc.seed = seeds[job.seed_index];
        TrainConfig tc = base_train;
        tc.seed = seeds[job.seed_index];
        FusionModel model(mc);
        fit(model, var_train[job.variant_index], var_val[job.variant_index], tc);
        results[k] =
            evaluate(model, var_test[job.variant_index]).report.weighted_f1;
      } catch (const std::exception& e) {
        failures[k] = e.what();
      }
    }
  };

  const std::size_t n_threads = ablation_thread_cap(jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < jobs.size(); ++k)
    if (!failures[k].empty())
      throw Error("ablation job (variant " + ordered[jobs[k].variant_index] +
                  ", seed " + std::to_string(seeds[jobs[k].seed_index]) +
                  ") failed: " + failures[k]);

  AblationTable table;
  table.seeds = seeds;
  for (std::size_t vi = 0; vi < ordered.size(); ++vi) {
    AblationCell cell;
    cell.variant = ordered[vi];
    for (std::size_t k = 0; k < jobs.size(); ++k)
      if (jobs[k].variant_index == vi) cell.seed_f1.push_back(results[k]);
    double sum = 0.0;
    for (double x : cell.seed_f1) sum += x;
    cell.mean = sum / static_cast<double>(cell.seed_f1.size());
    if (cell.seed_f1.size() > 1) {
      double sq = 0.0;
      for (double x : cell.seed_f1) sq += (x - cell.mean) * (x - cell.mean);
      cell.sd = std::sqrt(sq / static_cast<double>(cell.seed_f1.size() - 1));
    }
    table.rows.push_back(std::move(cell));
  }
  return table;
}

}  // namespace cmf
