// Acceptance gate: exercises the release criteria end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails. All
// tolerances and budgets are pinned here, not configurable.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmf/ablation.hpp"
#include "cmf/data.hpp"
#include "cmf/model.hpp"
#include "cmf/train.hpp"

namespace fs = std::filesystem;
using cmf::Mask;
using cmf::Rng;
using cmf::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_work;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  static int call_no = 0;
  const fs::path capture = g_work / ("capture_" + std::to_string(call_no++));
  const std::string cmd = std::string(CMF_CLI_PATH) + " " + args + " >" +
                          capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CmdResult res;
  if (status != -1 && WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
  res.output = slurp(capture);
  return res;
}

Tensor random_input(std::size_t rows, std::size_t cols, Rng& rng,
                    double scale = 0.5) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor::from_data({rows, cols}, std::move(v));
}

void synth_three_splits(const fs::path& dir, cmf::SyntheticSpec spec,
                        std::size_t n_train, std::size_t n_val,
                        std::size_t n_test) {
  fs::create_directories(dir);
  const std::array<std::pair<const char*, std::size_t>, 3> sizes = {
      std::pair{"train", n_train}, {"val", n_val}, {"test", n_test}};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    spec.n_dialogues = sizes[i].second;
    spec.sampling_stream = i;
    cmf::save_dataset((dir / (std::string(sizes[i].first) + ".jsonl")).string(),
                      cmf::synthesize(spec));
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct Criterion {
  std::string name;
  bool ok = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. Full-network gradient check through the CLI, tiny dims, < 1e-4, < 60 s.
// ---------------------------------------------------------------------------

Criterion check_gradient_soundness() {
  const auto t0 = Clock::now();
  CmdResult res = run_cli("gradcheck");
  const double secs = seconds_since(t0);
  const bool reported = res.output.find("max relative error") != std::string::npos;
  const bool ok = res.exit_code == 0 && reported && secs < 60.0;
  std::string first_line = res.output.substr(0, res.output.find('\n'));
  return {"gradient-soundness", ok,
          first_line + " [exit " + std::to_string(res.exit_code) + ", " +
              fmt(secs) + "s, budget 60s]"};
}

// ---------------------------------------------------------------------------
// 2. Shape contract at full feature dimensions: logits [5 x 7], aggregation
//    width 896, < 10 s for construction plus one forward pass.
// ---------------------------------------------------------------------------

Criterion check_shape_contract() {
  const auto t0 = Clock::now();
  cmf::ModelConfig cfg;  // defaults: 12696 / 4096 audio/text, d_model 128
  cfg.seed = 3;
  cmf::FusionModel model(cfg);
  Rng rng(4);
  Tensor xa = random_input(5, cfg.d_audio_in, rng);
  Tensor xt = random_input(5, cfg.d_text_in, rng);
  Tensor logits;
  {
    cmf::NoGradGuard ng;
    logits = model.forward(xa, xt, cmf::full_mask(5));
  }
  const double secs = seconds_since(t0);
  const bool shapes_ok =
      logits.shape() == cmf::Shape{5, 7} && model.aggregation_width() == 896;
  bool finite = true;
  for (double v : logits.data()) finite = finite && std::isfinite(v);
  const bool ok = shapes_ok && finite && secs < 10.0;
  return {"shape-contract", ok,
          "logits [" + std::to_string(logits.shape()[0]) + " x " +
              std::to_string(logits.shape()[1]) + "], aggregation " +
              std::to_string(model.aggregation_width()) + ", " + fmt(secs) +
              "s [budget 10s]"};
}

// ---------------------------------------------------------------------------
// 3. weighted_f1 equals a brute-force counting oracle to 1e-12 on 1000
//    random prediction/label sets (7 classes, 50-500 samples each).
// ---------------------------------------------------------------------------

double oracle_weighted_f1(const std::vector<int>& pred,
                          const std::vector<int>& truth, int n_classes) {
  double acc = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (truth[i] == c) {
        ++support;
        if (pred[i] == c) ++tp; else ++fn;
      } else if (pred[i] == c) {
        ++fp;
      }
    }
    const double precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
    const double recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
    const double f1 = precision + recall == 0.0
                          ? 0.0
                          : 2.0 * precision * recall / (precision + recall);
    acc += f1 * (double(support) / double(pred.size()));
  }
  return acc;
}

Criterion check_metric_oracle() {
  Rng rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 50 + rng.below(451);  // 50..500
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(7));
      truth[i] = static_cast<int>(rng.below(7));
    }
    const double ours = cmf::weighted_f1_report(pred, truth, 7).weighted_f1;
    const double want = oracle_weighted_f1(pred, truth, 7);
    worst = std::max(worst, std::abs(ours - want));
  }
  return {"metric-oracle", worst <= 1e-12,
          "max |diff| " + fmt(worst) + " over 1000 sets [tolerance 1e-12]"};
}

// ---------------------------------------------------------------------------
// 4. Trainability: separable splits (200/50/50 dialogues, d_a 24, d_t 16,
//    7 classes), d_model 32, validation weighted F1 >= 0.90 within 50 epochs,
//    median over 5 seeds, < 5 min total.
// ---------------------------------------------------------------------------

Criterion check_trainability() {
  const auto t0 = Clock::now();
  const fs::path dir = g_work / "trainability";
  cmf::SyntheticSpec spec;
  spec.d_audio = 24;
  spec.d_text = 16;
  spec.n_classes = 7;
  spec.min_utterances = 1;
  spec.max_utterances = 3;
  spec.noise_scale = 0.2;
  spec.mode = cmf::SynthMode::UnimodalSeparable;
  spec.seed = 11;
  synth_three_splits(dir, spec, 200, 50, 50);

  // Reference hyperparameters with the rate scaled up tenfold for a problem
  // several orders of magnitude smaller than the reference corpus.
  const nlohmann::json cfg{
      {"model", {{"d_model", 32}}},
      {"train", {{"learning_rate", 1e-3}, {"max_epochs", 50}}},
      {"data",
       {{"train", (dir / "train.jsonl").string()},
        {"val", (dir / "val.jsonl").string()}}},
      {"out_dir", (dir / "out").string()}};
  std::ofstream(dir / "run.json") << cfg.dump(2);

  std::vector<double> best_f1;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const fs::path out = dir / ("run_" + std::to_string(seed));
    CmdResult res = run_cli("train --config " + (dir / "run.json").string() +
                            " --seed " + std::to_string(seed) + " --out " +
                            out.string());
    if (res.exit_code != 0)
      return {"trainability", false,
              "train exited " + std::to_string(res.exit_code) + ": " +
                  res.output.substr(0, 200)};
    const nlohmann::json report =
        nlohmann::json::parse(slurp(out / "train_report.json"));
    double best = 0.0;
    for (double f : report["val_weighted_f1"].get<std::vector<double>>())
      best = std::max(best, f);
    best_f1.push_back(best);
  }
  std::vector<double> sorted = best_f1;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[2];
  const double secs = seconds_since(t0);
  std::string per_seed;
  for (double f : best_f1) per_seed += fmt(f) + " ";
  const bool ok = median >= 0.90 && secs < 300.0;
  return {"trainability", ok,
          "median best val F1 " + fmt(median) + " (per seed: " + per_seed +
              "), " + fmt(secs) + "s [floor 0.90, budget 300s]"};
}

// ---------------------------------------------------------------------------
// 5. Cross-attention ablation direction: on interaction-only data the full
//    model beats the no-sca variant by >= 0.05 mean test F1 over 5 seeds,
//    < 10 min.
// ---------------------------------------------------------------------------

Criterion check_sca_ablation() {
  const auto t0 = Clock::now();
  cmf::SyntheticSpec spec;
  spec.d_audio = 12;
  spec.d_text = 10;
  spec.n_classes = 4;
  spec.min_utterances = 1;
  spec.max_utterances = 2;
  spec.noise_scale = 0.15;
  spec.mode = cmf::SynthMode::CrossModalInteraction;
  spec.seed = 21;
  cmf::SyntheticSpec s = spec;
  s.n_dialogues = 60;
  s.sampling_stream = 0;
  cmf::DatasetSplit train = cmf::synthesize(s);
  s.n_dialogues = 20;
  s.sampling_stream = 1;
  cmf::DatasetSplit val = cmf::synthesize(s);
  s.n_dialogues = 40;
  s.sampling_stream = 2;
  cmf::DatasetSplit test = cmf::synthesize(s);

  cmf::ModelConfig mc;
  mc.d_audio_in = spec.d_audio;
  mc.d_text_in = spec.d_text;
  mc.d_model = 16;
  mc.n_sca_layers = 1;
  mc.n_classes = spec.n_classes;
  mc.d_audio_lld = 6;
  // Early-training regime: the no-sca variant must route cross-modal signal
  // through the deep mid-fusion path, which learns slower at this rate; the
  // cross-attention streams give the full model its head start.
  cmf::TrainConfig tc;
  tc.learning_rate = 5e-4;
  tc.batch_size = 8;
  tc.max_epochs = 15;
  tc.patience = 15;

  cmf::AblationTable table = cmf::run_ablation(mc, tc, train, val, test,
                                               {"full", "no-sca"},
                                               {1, 2, 3, 4, 5});
  const double full = table.rows[0].mean;
  const double nosca = table.rows[1].mean;
  const double secs = seconds_since(t0);
  const bool ok = full - nosca >= 0.05 && secs < 600.0;
  return {"sca-ablation-direction", ok,
          "full " + fmt(full) + " vs no-sca " + fmt(nosca) + ", gap " +
              fmt(full - nosca) + ", " + fmt(secs) +
              "s [floor 0.05, budget 600s]"};
}

// ---------------------------------------------------------------------------
// 6. Early stopping: constant validation loss stops after exactly 1 + 15
//    epochs; improving loss runs to max_epochs (checked at 20 / patience 5).
// ---------------------------------------------------------------------------

Criterion check_early_stopping() {
  cmf::SyntheticSpec spec;
  spec.d_audio = 6;
  spec.d_text = 5;
  spec.n_classes = 3;
  spec.min_utterances = 1;
  spec.max_utterances = 2;
  spec.noise_scale = 0.15;
  spec.seed = 31;
  spec.n_dialogues = 8;
  cmf::DatasetSplit train = cmf::synthesize(spec);
  spec.n_dialogues = 4;
  spec.seed = 32;
  cmf::DatasetSplit val = cmf::synthesize(spec);

  cmf::ModelConfig mc;
  mc.d_audio_in = 6;
  mc.d_text_in = 5;
  mc.d_model = 4;
  mc.n_sca_layers = 1;
  mc.n_classes = 3;
  mc.d_audio_lld = 3;
  mc.seed = 7;

  // Updates below the double rounding threshold leave every parameter, hence
  // every validation loss, bitwise unchanged.
  cmf::TrainConfig constant;
  constant.learning_rate = 1e-300;
  constant.batch_size = 8;
  constant.max_epochs = 200;
  constant.patience = 15;
  cmf::FusionModel m1(mc);
  cmf::TrainReport r1 = cmf::fit(m1, train, val, constant);
  bool flat = true;
  for (double v : r1.val_loss) flat = flat && v == r1.val_loss.front();
  const bool constant_ok = flat && r1.stop_epoch == 16 &&
                           r1.stop_reason == "patience" && r1.best_epoch == 1;

  spec.n_dialogues = 20;
  spec.seed = 33;
  spec.sampling_stream = 0;
  cmf::DatasetSplit train2 = cmf::synthesize(spec);
  spec.n_dialogues = 8;
  spec.sampling_stream = 1;
  cmf::DatasetSplit val2 = cmf::synthesize(spec);
  cmf::TrainConfig improving;
  improving.learning_rate = 5e-3;
  improving.batch_size = 8;
  improving.max_epochs = 20;
  improving.patience = 5;
  cmf::FusionModel m2(mc);
  cmf::TrainReport r2 = cmf::fit(m2, train2, val2, improving);
  bool premise = true;  // validation loss falls every epoch
  for (std::size_t e = 1; e < r2.val_loss.size(); ++e)
    premise = premise && r2.val_loss[e] < r2.val_loss[e - 1];
  const bool improving_ok = premise && r2.stop_epoch == 20 &&
                            r2.stop_reason == "max_epochs";

  return {"early-stopping", constant_ok && improving_ok,
          "constant: stopped " + std::to_string(r1.stop_epoch) + " (" +
              r1.stop_reason + "); improving: stopped " +
              std::to_string(r2.stop_epoch) + " (" + r2.stop_reason + ")"};
}

// ---------------------------------------------------------------------------
// 7. Determinism: identical seeds give per-epoch losses within 1e-12 and
//    byte-identical checkpoints.
// ---------------------------------------------------------------------------

Criterion check_determinism() {
  const fs::path dir = g_work / "determinism";
  cmf::SyntheticSpec spec;
  spec.d_audio = 8;
  spec.d_text = 6;
  spec.n_classes = 3;
  spec.min_utterances = 1;
  spec.max_utterances = 3;
  spec.noise_scale = 0.2;
  spec.seed = 41;
  synth_three_splits(dir, spec, 20, 8, 8);

  const nlohmann::json cfg{
      {"model", {{"d_model", 8}, {"seed", 5}}},
      {"train",
       {{"learning_rate", 1e-3},
        {"batch_size", 8},
        {"max_epochs", 4},
        {"patience", 4},
        {"seed", 5}}},
      {"data",
       {{"train", (dir / "train.jsonl").string()},
        {"val", (dir / "val.jsonl").string()}}},
      {"out_dir", (dir / "out").string()}};
  std::ofstream(dir / "run.json") << cfg.dump(2);

  for (const char* run : {"a", "b"}) {
    CmdResult res = run_cli("train --config " + (dir / "run.json").string() +
                            " --out " + (dir / ("run_" + std::string(run))).string());
    if (res.exit_code != 0)
      return {"determinism", false,
              "train exited " + std::to_string(res.exit_code)};
  }
  const nlohmann::json ra =
      nlohmann::json::parse(slurp(dir / "run_a" / "train_report.json"));
  const nlohmann::json rb =
      nlohmann::json::parse(slurp(dir / "run_b" / "train_report.json"));
  double worst = 0.0;
  for (const char* key : {"train_loss", "val_loss", "val_weighted_f1"}) {
    const auto a = ra[key].get<std::vector<double>>();
    const auto b = rb[key].get<std::vector<double>>();
    if (a.size() != b.size())
      return {"determinism", false, std::string(key) + " lengths differ"};
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  const bool bytes_equal = slurp(dir / "run_a" / "checkpoint.cmf") ==
                           slurp(dir / "run_b" / "checkpoint.cmf");
  const bool ok = worst <= 1e-12 && bytes_equal;
  return {"determinism", ok,
          "max loss diff " + fmt(worst) + ", checkpoints " +
              (bytes_equal ? "byte-identical" : "DIFFER")};
}

// ---------------------------------------------------------------------------
// 8. Invariant spot suite.
// ---------------------------------------------------------------------------

Criterion check_invariants() {
  std::vector<std::string> failures;
  Rng rng(55);

  {  // softmax rows normalize and ignore per-row shifts
    Tensor x = random_input(4, 6, rng, 2.0);
    Tensor p = cmf::softmax(x, 1);
    std::vector<double> shifted = x.data();
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 6; ++j) shifted[r * 6 + j] += 7.25;
    Tensor p2 = cmf::softmax(Tensor::from_data({4, 6}, std::move(shifted)), 1);
    bool ok = true;
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        sum += p.data()[r * 6 + j];
        ok = ok && std::abs(p.data()[r * 6 + j] - p2.data()[r * 6 + j]) <= 1e-12;
      }
      ok = ok && std::abs(sum - 1.0) <= 1e-12;
    }
    if (!ok) failures.push_back("softmax");
  }

  {  // layer norm standardizes each row
    cmf::LayerNormParams ln(8);
    Tensor y = cmf::layer_norm(ln, random_input(5, 8, rng, 3.0));
    bool ok = true;
    for (std::size_t r = 0; r < 5; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t j = 0; j < 8; ++j) mean += y.data()[r * 8 + j];
      mean /= 8.0;
      for (std::size_t j = 0; j < 8; ++j) {
        const double c = y.data()[r * 8 + j] - mean;
        var += c * c;
      }
      var /= 8.0;
      ok = ok && std::abs(mean) <= 1e-9 && std::abs(var - 1.0) <= 1e-3;
    }
    if (!ok) failures.push_back("layer-norm");
  }

  {  // self-attention block commutes with row permutations
    cmf::SelfAttentionLayer layer(6, 12, rng);
    Tensor h = random_input(5, 6, rng);
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    std::vector<double> permuted(5 * 6);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t j = 0; j < 6; ++j)
        permuted[r * 6 + j] = h.data()[perm[r] * 6 + j];
    Tensor y = cmf::self_attention_block(layer, h, cmf::full_mask(5));
    Tensor yp = cmf::self_attention_block(
        layer, Tensor::from_data({5, 6}, std::move(permuted)), cmf::full_mask(5));
    bool ok = true;
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t j = 0; j < 6; ++j)
        ok = ok && std::abs(yp.data()[r * 6 + j] -
                            y.data()[perm[r] * 6 + j]) <= 1e-12;
    if (!ok) failures.push_back("permutation-equivariance");
  }

  {  // padding a dialogue must not perturb the valid logits
    cmf::ModelConfig mc;
    mc.d_audio_in = 6;
    mc.d_text_in = 5;
    mc.d_model = 4;
    mc.n_sca_layers = 1;
    mc.n_classes = 3;
    mc.d_audio_lld = 3;
    mc.seed = 7;
    cmf::FusionModel model(mc);
    Tensor xa = random_input(2, 6, rng);
    Tensor xt = random_input(2, 5, rng);
    std::vector<double> pa = xa.data(), pt = xt.data();
    pa.resize(4 * 6, 77.7);
    pt.resize(4 * 5, -5.5);
    cmf::NoGradGuard ng;
    Tensor dense = model.forward(xa, xt, cmf::full_mask(2));
    Tensor padded = model.forward(Tensor::from_data({4, 6}, std::move(pa)),
                                  Tensor::from_data({4, 5}, std::move(pt)),
                                  Mask{1, 1, 0, 0});
    bool ok = true;
    for (std::size_t i = 0; i < 2 * 3; ++i)
      ok = ok && std::abs(dense.data()[i] - padded.data()[i]) <= 1e-9;
    if (!ok) failures.push_back("mask-isolation");
  }

  {  // swapping BiLSTM directions mirrors time reversal
    cmf::LSTMCellParams ca(5, 3, rng), cb(5, 3, rng);
    Tensor x = random_input(4, 5, rng);
    std::vector<double> rev(4 * 5);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 5; ++j)
        rev[r * 5 + j] = x.data()[(3 - r) * 5 + j];
    Tensor y = cmf::bilstm_forward(ca, cb, x, cmf::full_mask(4));
    Tensor yr = cmf::bilstm_forward(cb, ca, Tensor::from_data({4, 5}, std::move(rev)),
                                    cmf::full_mask(4));
    bool ok = true;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 3; ++j) {
        ok = ok && std::abs(y.data()[r * 6 + j] -
                            yr.data()[(3 - r) * 6 + 3 + j]) <= 1e-12;
        ok = ok && std::abs(y.data()[r * 6 + 3 + j] -
                            yr.data()[(3 - r) * 6 + j]) <= 1e-12;
      }
    if (!ok) failures.push_back("bilstm-time-reversal");
  }

  {  // first Adam step on f(t) = t^2/2 from t=1, lr 0.1: exactly 0.900000001
    Tensor theta = Tensor::from_data({1}, {1.0});
    theta.set_requires_grad(true);
    cmf::TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.weight_decay = 0.0;
    cmf::AdamOptimizer opt({{"theta", theta}}, tc);
    theta.grad_mut()[0] = theta.data()[0];
    opt.step();
    if (std::abs(theta.data()[0] - 0.900000001) > 1e-15)
      failures.push_back("adam-oracle");
  }

  std::string detail = failures.empty() ? "6/6 invariants hold" : "failed:";
  for (const auto& f : failures) detail += " " + f;
  return {"invariant-suite", failures.empty(), detail};
}

}  // namespace

int main() {
  g_work = fs::temp_directory_path() / "cmf_acceptance";
  std::error_code ec;
  fs::remove_all(g_work, ec);
  fs::create_directories(g_work);

  using Fn = Criterion (*)();
  const std::vector<std::pair<const char*, Fn>> criteria = {
      {"gradient-soundness", check_gradient_soundness},
      {"shape-contract", check_shape_contract},
      {"metric-oracle", check_metric_oracle},
      {"trainability", check_trainability},
      {"sca-ablation-direction", check_sca_ablation},
      {"early-stopping", check_early_stopping},
      {"determinism", check_determinism},
      {"invariant-suite", check_invariants}};

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Criterion c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    c.name = name;
    std::cout << (c.ok ? "PASS " : "FAIL ") << c.name << ": " << c.detail
              << std::endl;
    if (!c.ok) ++failed;
  }
  std::cout << (8 - failed) << "/8 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
