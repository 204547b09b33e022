#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dg/checkpoint.hpp"
#include "dg/dataset_io.hpp"
#include "dg/evaluate.hpp"
#include "dg/model.hpp"
#include "dg/report.hpp"
#include "dg/svgplot.hpp"
#include "dg/train.hpp"

namespace fs = std::filesystem;
using dg::require;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  int64_t seed = -1;  // <0 means "leave config value"
  bool ablate_cqg = false, ablate_ae = false, ablate_ai = false, ablate_af = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "config file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_flag("--ablate-cqg", o.ablate_cqg, "plain per-sentence queries, no paragraph context");
  cmd->add_flag("--ablate-ae", o.ablate_ae, "disable the explicit pair-geometry attention bias");
  cmd->add_flag("--ablate-ai", o.ablate_ai, "disable the implicit crop-code attention bias");
  cmd->add_flag("--ablate-af", o.ablate_af, "disable the focused-region attention mask");
}

// File < environment < flags; the last writer wins.
dg::RunConfig resolve_config(const CommonOpts& o) {
  dg::RunConfig cfg;
  if (!o.config_path.empty()) cfg.load_file(o.config_path);
  cfg.apply_env();
  if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
  if (o.ablate_cqg) cfg.use_cqg = false;
  if (o.ablate_ae) cfg.use_explicit_bias = false;
  if (o.ablate_ai) cfg.use_implicit_bias = false;
  if (o.ablate_af) cfg.use_focus_mask = false;
  cfg.validate();
  return cfg;
}

void apply_ablations(dg::Model& model, const dg::RunConfig& cfg) {
  model.use_cqg = cfg.use_cqg;
  model.global.use_explicit_bias = cfg.use_explicit_bias;
  model.global.use_implicit_bias = cfg.use_implicit_bias;
  model.global.use_focus_mask = cfg.use_focus_mask;
}

std::string train_path(const CommonOpts& o) { return o.out_dir + "/train.bin"; }
std::string eval_path(const CommonOpts& o) { return o.out_dir + "/eval.bin"; }

int cmd_generate(const CommonOpts& o) {
  dg::RunConfig cfg = resolve_config(o);
  fs::create_directories(o.out_dir);
  dg::Dataset train = dg::generate_dataset(cfg, cfg.seed, cfg.train_scenes, false);
  dg::Dataset eval = dg::generate_dataset(cfg, cfg.seed, cfg.eval_scenes, true);
  dg::save_dataset(train, train_path(o));
  dg::save_dataset(eval, eval_path(o));
  dg::write_text_file(o.out_dir + "/manifest.txt",
                      dg::dataset_manifest(cfg, cfg.seed, cfg.train_scenes, cfg.eval_scenes));
  std::cout << "generated " << train.scenes.size() << " train scenes, " << eval.scenes.size()
            << " eval scenes under " << o.out_dir << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o, int stage, const std::string& ckpt_in,
              const std::string& ckpt_out, bool from_scratch) {
  dg::RunConfig cfg = resolve_config(o);
  require(!ckpt_out.empty(), "train: --ckpt-out is required");
  require(fs::exists(train_path(o)),
          "train: dataset not found at " + train_path(o) + " (run generate first)");
  dg::Dataset ds = dg::load_dataset(train_path(o));

  dg::ParamStore ps(cfg.seed);
  dg::Model model(ps, cfg);
  apply_ablations(model, cfg);
  dg::AdamW opt(cfg);

  int64_t start_step = 0;
  if (!ckpt_in.empty()) {
    dg::TrainState prev = dg::load_checkpoint(ckpt_in, ps, &opt);
    if (prev.stage == stage) {
      start_step = prev.step;  // resume inside the stage
    } else {
      require(prev.stage == stage - 1,
              "train: checkpoint is for stage " + std::to_string(prev.stage) +
                  ", cannot start stage " + std::to_string(stage));
      // Fresh optimizer for the new stage; parameters carry over.
      opt = dg::AdamW(cfg);
    }
  } else {
    require(stage == 1 || from_scratch,
            "train: stage " + std::to_string(stage) +
                " needs --ckpt-in from the previous stage (or --from-scratch)");
  }

  fs::create_directories(o.out_dir);
  std::ofstream log(o.out_dir + "/train_stage" + std::to_string(stage) + ".jsonl",
                    start_step > 0 ? std::ios::app : std::ios::trunc);
  require(log.good(), "train: cannot open step log");

  dg::TrainResult res = dg::train_stage(model, opt, ds, cfg, stage, start_step, &log);

  dg::TrainState st;
  st.stage = stage;
  st.step = dg::stage_steps(cfg, stage);
  st.config_text = cfg.to_text();
  st.rng_state = dg::Rng(cfg.seed).state_string();
  dg::save_checkpoint(ckpt_out, ps, &opt, st);
  std::cout << "stage " << stage << ": ran " << res.steps_run << " steps";
  if (!res.losses.empty()) std::cout << ", final loss " << res.losses.back();
  std::cout << ", checkpoint " << ckpt_out << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt_in, const std::string& k_sweep,
             const std::string& baseline) {
  require(!ckpt_in.empty(), "eval: --ckpt-in is required");
  require(baseline == "none" || baseline == "beam-search",
          "eval: --baseline must be none or beam-search");

  // The checkpoint's embedded config defines the model; file/env/flags
  // override on top (unchanged shape keys keep the tensors loadable).
  dg::RunConfig cfg;
  cfg.load_text(dg::peek_checkpoint_config(ckpt_in), ckpt_in);
  if (!o.config_path.empty()) cfg.load_file(o.config_path);
  cfg.apply_env();
  if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
  if (o.ablate_cqg) cfg.use_cqg = false;
  if (o.ablate_ae) cfg.use_explicit_bias = false;
  if (o.ablate_ai) cfg.use_implicit_bias = false;
  if (o.ablate_af) cfg.use_focus_mask = false;
  cfg.validate();

  dg::ParamStore ps(cfg.seed);
  dg::Model model(ps, cfg);
  apply_ablations(model, cfg);
  dg::TrainState st = dg::load_checkpoint(ckpt_in, ps, nullptr);

  std::vector<int64_t> ks;
  if (k_sweep.empty()) {
    ks.push_back(cfg.eval_k);
  } else {
    std::string item;
    std::istringstream stream(k_sweep);
    while (std::getline(stream, item, ',')) {
      require(!item.empty(), "eval: empty entry in --k-sweep");
      ks.push_back(std::stoll(item));
    }
  }

  std::vector<dg::EvalNumbers> per_k;
  for (int64_t k : ks) {
    dg::Dataset ds = dg::eval_dataset_for_k(cfg, k);
    if (baseline == "beam-search") {
      per_k.push_back(dg::evaluate_beam_baseline(model, ds, cfg, 12, 12));
    } else {
      per_k.push_back(dg::evaluate_dataset(model, ds, cfg, st.stage));
    }
  }

  fs::create_directories(o.out_dir);
  const std::string label = baseline == "beam-search" ? "beam-search-baseline" : "model";
  dg::write_text_file(o.out_dir + "/report.txt", dg::report_text(cfg, per_k, label));
  dg::write_text_file(o.out_dir + "/report.json", dg::report_json(cfg, per_k, label));
  std::vector<double> a25, a50;
  for (const auto& n : per_k) {
    a25.push_back(n.overall.acc25());
    a50.push_back(n.overall.acc50());
  }
  dg::write_text_file(o.out_dir + "/accuracy.svg", dg::accuracy_curve_svg(ks, a25, a50));

  for (size_t i = 0; i < ks.size(); ++i) {
    std::cout << "k=" << ks[i] << " overall acc@0.25 " << a25[i] << " acc@0.5 " << a50[i] << "\n";
  }
  std::cout << "reports under " << o.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense grounding pipeline: synthetic data, staged training, evaluation"};
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, eval_o;
  int stage = 1;
  std::string ckpt_in, ckpt_out, k_sweep, baseline = "none";
  bool from_scratch = false;

  CLI::App* gen = app.add_subcommand("generate", "write train/eval datasets and a manifest");
  add_common(gen, gen_o);

  CLI::App* train = app.add_subcommand("train", "run one training stage");
  add_common(train, train_o);
  train->add_option("--stage", stage, "training stage")->check(CLI::Range(1, 3))->required();
  train->add_option("--ckpt-in", ckpt_in, "checkpoint to resume or finetune from");
  train->add_option("--ckpt-out", ckpt_out, "checkpoint to write")->required();
  train->add_flag("--from-scratch", from_scratch, "allow a later stage without a checkpoint");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint, write reports and a plot");
  add_common(eval, eval_o);
  eval->add_option("--ckpt-in", ckpt_in, "checkpoint to evaluate")->required();
  eval->add_option("--k-sweep", k_sweep, "comma-separated paragraph lengths, e.g. 2,4,8,12");
  eval->add_option("--baseline", baseline, "none | beam-search");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(gen_o);
    if (train->parsed()) return cmd_train(train_o, stage, ckpt_in, ckpt_out, from_scratch);
    if (eval->parsed()) return cmd_eval(eval_o, ckpt_in, k_sweep, baseline);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
