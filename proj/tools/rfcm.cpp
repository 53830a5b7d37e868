#include <iostream>

#include <CLI11.hpp>

#include "rfcm/commands.hpp"

namespace {

template <class T>
std::optional<T> if_set(const CLI::Option* opt, const T& value) {
  return opt->count() > 0 ? std::optional<T>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relational future captioning: data synthesis, training, evaluation and captioning"};
  app.require_subcommand(1);

  rfcm::GenDataOptions gen;
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  std::size_t n_train = 0, n_val = 0, n_test = 0, gen_k = 0, gen_d_in = 0;
  double gen_noise = 0;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write train/val/test JSONL splits and vocab.json");
  auto* gen_config_opt = gen_cmd->add_option("--config", gen_config, "JSON run config")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "Generator seed");
  auto* n_train_opt = gen_cmd->add_option("--n-train", n_train, "Training episodes (default 800)");
  auto* n_val_opt = gen_cmd->add_option("--n-val", n_val, "Validation episodes (default 100)");
  auto* n_test_opt = gen_cmd->add_option("--n-test", n_test, "Test episodes (default 100)");
  auto* k_opt = gen_cmd->add_option("--k", gen_k, "Past clips per episode minus one (default 2)");
  auto* d_in_opt = gen_cmd->add_option("--d-in", gen_d_in, "Clip feature width (default 32)");
  auto* noise_opt = gen_cmd->add_option("--noise", gen_noise, "Feature noise standard deviation");

  rfcm::TrainOptions tr;
  std::string tr_config, tr_data, tr_out, tr_ablation;
  std::uint64_t tr_seed = 0;
  std::size_t tr_epochs = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints and log.jsonl");
  auto* tr_config_opt = train_cmd->add_option("--config", tr_config, "JSON run config")->check(CLI::ExistingFile);
  auto* tr_data_opt = train_cmd->add_option("--data", tr_data, "Directory written by gen-data");
  train_cmd->add_option("--out", tr_out, "Run directory")->required();
  auto* tr_ablation_opt = train_cmd->add_option("--ablation", tr_ablation, "Model variant")
                              ->check(CLI::IsMember({"full", "no_rsa", "no_decoder"}));
  auto* tr_seed_opt = train_cmd->add_option("--seed", tr_seed, "Run seed");
  auto* tr_epochs_opt = train_cmd->add_option("--max-epochs", tr_epochs, "Override train.max_epochs");
  train_cmd->add_flag("--resume", tr.resume, "Continue from last.ckpt in the run directory");

  rfcm::EvalOptions ev;
  std::string ev_checkpoint, ev_data, ev_out;
  auto* eval_cmd = app.add_subcommand("eval", "Score greedy captions on a JSONL split");
  auto* ev_checkpoint_opt = eval_cmd->add_option("--checkpoint", ev_checkpoint, "Checkpoint file");
  eval_cmd->add_option("--data", ev_data, "Evaluation JSONL (e.g. test.jsonl)")->required();
  auto* ev_out_opt = eval_cmd->add_option("--out", ev_out, "Report JSON path");
  eval_cmd->add_option("--seeds", ev.seeds, "Retrain with N consecutive seeds and aggregate")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--oracle", ev.oracle, "Score the rule-derived reference captions instead of a model");

  rfcm::CaptionOptions cap;
  std::string cap_checkpoint, cap_clips, cap_episode, cap_data;
  auto* caption_cmd = app.add_subcommand("caption", "Generate the future caption for one set of clips");
  caption_cmd->add_option("--checkpoint", cap_checkpoint, "Checkpoint file")->required();
  auto* cap_clips_opt = caption_cmd->add_option("--clips", cap_clips, "JSON file with k+1 clip vectors");
  auto* cap_episode_opt = caption_cmd->add_option("--episode-id", cap_episode, "Episode id to caption");
  auto* cap_data_opt = caption_cmd->add_option("--data", cap_data, "JSONL containing --episode-id");
  cap_clips_opt->excludes(cap_episode_opt);
  caption_cmd->add_flag("--json", cap.json, "Print caption, ids and tokens as JSON");

  rfcm::GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare reverse-mode gradients with finite differences");
  gc_cmd->add_option("--scope", gc.scope, "ops or model")->check(CLI::IsMember({"ops", "model"}));
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  gc_cmd->add_option("--seed", gc.seed, "Seed for inputs and parameters");
  gc_cmd->add_flag("--inject-fault", gc.inject_fault, "Corrupt the gelu backward pass (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return rfcm::kExitUsage;
  }

  try {
    if (*gen_cmd) {
      gen.config = if_set<std::filesystem::path>(gen_config_opt, gen_config);
      gen.out = gen_out;
      gen.seed = if_set(gen_seed_opt, gen_seed);
      gen.n_train = if_set(n_train_opt, n_train);
      gen.n_val = if_set(n_val_opt, n_val);
      gen.n_test = if_set(n_test_opt, n_test);
      gen.k = if_set(k_opt, gen_k);
      gen.d_in = if_set(d_in_opt, gen_d_in);
      gen.noise = if_set(noise_opt, gen_noise);
      rfcm::command_gen_data(gen, std::cout);
    } else if (*train_cmd) {
      tr.config = if_set<std::filesystem::path>(tr_config_opt, tr_config);
      tr.data = if_set<std::filesystem::path>(tr_data_opt, tr_data);
      tr.out = tr_out;
      tr.ablation = if_set(tr_ablation_opt, tr_ablation);
      tr.seed = if_set(tr_seed_opt, tr_seed);
      tr.max_epochs = if_set(tr_epochs_opt, tr_epochs);
      rfcm::command_train(tr, std::cout);
    } else if (*eval_cmd) {
      ev.checkpoint = if_set<std::filesystem::path>(ev_checkpoint_opt, ev_checkpoint);
      ev.data = ev_data;
      ev.out = if_set<std::filesystem::path>(ev_out_opt, ev_out);
      rfcm::command_eval(ev, std::cout);
    } else if (*caption_cmd) {
      cap.checkpoint = cap_checkpoint;
      cap.clips = if_set<std::filesystem::path>(cap_clips_opt, cap_clips);
      cap.episode_id = if_set(cap_episode_opt, cap_episode);
      cap.data = if_set<std::filesystem::path>(cap_data_opt, cap_data);
      rfcm::command_caption(cap, std::cout);
    } else if (*gc_cmd) {
      return rfcm::command_gradcheck(gc, std::cout) ? rfcm::kExitOk : rfcm::kExitFailure;
    }
  } catch (...) {
    return rfcm::report_exception(std::cerr);
  }
  return rfcm::kExitOk;
}
