#include <filesystem>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "skillnet/checkpoint.hpp"
#include "skillnet/config.hpp"
#include "skillnet/errors.hpp"
#include "skillnet/manifest.hpp"
#include "skillnet/metrics.hpp"
#include "skillnet/model.hpp"
#include "skillnet/synth.hpp"
#include "skillnet/tasks.hpp"
#include "skillnet/trainer.hpp"

namespace {

using namespace skillnet;

struct CommonOpts {
  std::string config;
  std::string manifest;
  std::string checkpoint;
  std::string out;
  std::string task = "T3";
  long seed = -1;
  int k = 10;
};

RunConfig load_config(const CommonOpts& opts) {
  if (opts.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = parse_run_config(opts.config);
  if (opts.seed >= 0) cfg.train.seed = uint64_t(opts.seed);
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  return cfg;
}

std::string manifest_path(const RunConfig& cfg, const CommonOpts& opts) {
  if (!opts.manifest.empty()) return opts.manifest;
  require_data_dir(cfg);
  return cfg.data_dir + "/manifest.tsv";
}

std::unique_ptr<Model> build_model(RunConfig& cfg) {
  std::shared_ptr<Vocab> vocab, code_vocab;
  if (!cfg.vocab_file.empty()) {
    vocab = std::make_shared<Vocab>(Vocab::load(cfg.vocab_file));
    code_vocab = cfg.code_vocab_file == cfg.vocab_file
                     ? vocab
                     : std::make_shared<Vocab>(Vocab::load(cfg.code_vocab_file));
  }
  return std::make_unique<Model>(cfg.model, cfg.train.seed, vocab, code_vocab);
}

void ensure_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("missing config key 'out_dir' (or pass --out)");
  std::filesystem::create_directories(cfg.out_dir);
}

std::vector<MetricRow> eval_rows(const std::vector<MetricRow>& rows) {
  std::vector<MetricRow> out;
  for (const auto& r : rows) {
    if (r.metric != "train_loss" && r.metric != "loss") out.push_back(r);
  }
  return out;
}

int cmd_gen_data(const CommonOpts& opts, int train_size, int eval_size) {
  if (opts.out.empty()) throw ConfigError("--out is required for gen-data");
  SynthSizes sizes;
  if (train_size > 0) {
    sizes.train_text = train_size;
    sizes.train_sound = std::max(1, train_size * 3 / 8);
    sizes.train_image = std::max(1, train_size / 2);
    sizes.train_video = std::max(1, train_size * 3 / 8);
    sizes.train_code = std::max(1, train_size / 2);
  }
  if (eval_size > 0) {
    sizes.eval_text = eval_size * 4;
    sizes.eval_sound = eval_size;
    sizes.eval_image = eval_size;
    sizes.eval_video = eval_size;
    sizes.eval_code = eval_size;
  }
  generate_dataset(opts.out, opts.seed >= 0 ? uint64_t(opts.seed) : 1, sizes);
  std::cout << "wrote dataset to " << opts.out << "\n";
  return 0;
}

int cmd_pretrain(const CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  ensure_out_dir(cfg);
  auto data = Dataset::load(manifest_path(cfg, opts));
  auto model = build_model(cfg);
  if (!opts.checkpoint.empty()) load_model(*model, opts.checkpoint);
  Trainer trainer(*model, data, cfg.train);
  auto result = trainer.run_pretrain();
  write_csv(cfg.out_dir + "/metrics.csv", result.rows);
  write_csv(cfg.out_dir + "/curve.csv", eval_rows(result.rows));
  save_model(*model, cfg.out_dir + "/model.sknt");
  std::cout << "pretrained " << cfg.train.total_steps << " steps; checkpoint at " << cfg.out_dir
            << "/model.sknt\n";
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  ensure_out_dir(cfg);
  auto data = Dataset::load(manifest_path(cfg, opts));
  auto model = build_model(cfg);
  if (!opts.checkpoint.empty()) load_model(*model, opts.checkpoint);
  const TaskId task = task_from_name(opts.task);
  Trainer trainer(*model, data, cfg.train);
  auto result = trainer.run_finetune(task);
  write_csv(cfg.out_dir + "/metrics.csv", result.rows);
  write_csv(cfg.out_dir + "/curve.csv", eval_rows(result.rows));
  save_model(*model, cfg.out_dir + "/model.sknt");
  std::cout << "task " << task_name(task) << " (" << task_description(task) << "): final "
            << task_metric(task) << " = " << result.final_metric << "\n";
  if (result.reached_step >= 0) {
    std::cout << "stop target reached at step " << result.reached_step << "\n";
  }
  return 0;
}

int cmd_eval(const CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  auto data = Dataset::load(manifest_path(cfg, opts));
  auto model = build_model(cfg);
  if (!opts.checkpoint.empty()) load_model(*model, opts.checkpoint);
  const TaskId task = task_from_name(opts.task);
  Trainer trainer(*model, data, cfg.train);
  auto metrics = trainer.evaluate(task);
  std::vector<MetricRow> rows;
  for (auto& [k, v] : metrics) {
    std::cout << task_name(task) << " " << k << " = " << v << "\n";
    rows.push_back({0, task_name(task), k, v});
  }
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_csv(cfg.out_dir + "/eval.csv", rows);
  }
  return 0;
}

int cmd_embed(const CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  auto data = Dataset::load(manifest_path(cfg, opts));
  auto model = build_model(cfg);
  if (!opts.checkpoint.empty()) load_model(*model, opts.checkpoint);
  Trainer trainer(*model, data, cfg.train);
  NoGradGuard ng;
  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!opts.out.empty()) {
    file.open(opts.out, std::ios::trunc);
    if (!file) throw InputError("cannot write '" + opts.out + "'");
    os = &file;
  }
  os->precision(8);
  for (const auto& rec : data.records()) {
    Tensor v = trainer.embed_pooled(rec);
    (*os) << rec.id << "," << skill_name(rec.modality);
    for (double x : v.values()) (*os) << "," << x;
    (*os) << "\n";
  }
  return 0;
}

int cmd_retrieve(const CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  auto data = Dataset::load(manifest_path(cfg, opts));
  auto model = build_model(cfg);
  if (!opts.checkpoint.empty()) load_model(*model, opts.checkpoint);
  const TaskId task = task_from_name(opts.task);
  const Skill cand = task_batch_modality(task);
  if (task == TaskId::T1 || task == TaskId::T2) {
    throw ConfigError("retrieve expects a retrieval task (T3, T4, T5)");
  }
  Trainer trainer(*model, data, cfg.train);
  NoGradGuard ng;
  auto recs = data.select(cand, "eval");
  if (recs.empty()) throw ContractError("retrieve: empty eval split");

  std::vector<Tensor> q_rows, c_rows;
  for (const Record* r : recs) {
    Record query;
    query.modality = Skill::text;
    query.text = r->caption;
    q_rows.push_back(trainer.embed_pooled(query));
    c_rows.push_back(trainer.embed_pooled(*r));
  }
  auto ranked = rank_by_similarity(concat(q_rows, 0), concat(c_rows, 0), cfg.model.similarity);
  const int n = int(recs.size());
  const int k = std::min(opts.k, n);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    std::cout << recs[size_t(i)]->caption << " ->";
    for (int j = 0; j < k; ++j) {
      std::cout << " " << recs[size_t(ranked[size_t(i)][size_t(j)])]->id;
    }
    std::cout << "\n";
    if (ranked[size_t(i)][0] == i) ++hits;
  }
  std::cout << "R@1 = " << double(hits) / n << "\n";
  return 0;
}

int cmd_count_params(const CommonOpts& opts, const std::string& skills_csv,
                     const std::string& embedders_csv) {
  RunConfig cfg = load_config(opts);
  std::set<Skill> skills, embedders;
  if (!skills_csv.empty()) {
    std::stringstream ss(skills_csv);
    std::string item;
    while (std::getline(ss, item, ',')) skills.insert(skill_from_name(item));
    std::stringstream se(embedders_csv);
    while (std::getline(se, item, ',')) {
      if (!item.empty()) embedders.insert(skill_from_name(item));
    }
  } else {
    const TaskId task = task_from_name(opts.task);
    skills = task_skills(task);
    for (Skill m : task_embedders(task)) {
      if (cfg.model.has_modality(m)) embedders.insert(m);
    }
    std::cout << "task " << task_name(task) << " (" << task_description(task) << ")\n";
  }
  auto report = count_activated_params(cfg.model, skills, embedders);
  std::cout << report.to_text();
  return 0;
}

int cmd_decode(const CommonOpts& opts) {
  RunConfig cfg = load_config(opts);
  auto data = Dataset::load(manifest_path(cfg, opts));
  auto model = build_model(cfg);
  if (!opts.checkpoint.empty()) load_model(*model, opts.checkpoint);
  Trainer trainer(*model, data, cfg.train);
  auto recs = data.select(Skill::sound, "eval");
  if (recs.empty()) throw ContractError("decode: no sound records in eval split");
  size_t errors = 0, ref_len = 0;
  for (const Record* r : recs) {
    const std::string hyp = trainer.decode_record(*r);
    std::cout << r->id << "\tref=" << r->ref << "\thyp=" << hyp << "\n";
    errors += edit_distance_codepoints(r->ref, hyp);
    ref_len += codepoint_count(r->ref);
  }
  std::cout << "corpus CER = " << (ref_len ? double(errors) / double(ref_len) : 0.0) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparsely activated multimodal encoder"};
  app.require_subcommand(1);
  CommonOpts opts;
  int train_size = 0, eval_size = 0;
  std::string skills_csv, embedders_csv;

  auto add_common = [&](CLI::App* sub, bool with_task = true) {
    sub->add_option("--config", opts.config, "run configuration file");
    sub->add_option("--manifest", opts.manifest, "dataset manifest path");
    sub->add_option("--checkpoint", opts.checkpoint, "checkpoint to load");
    sub->add_option("--out", opts.out, "output directory/file");
    sub->add_option("--seed", opts.seed, "seed override");
    sub->add_option("--k", opts.k, "retrieval cutoff");
    if (with_task) sub->add_option("--task", opts.task, "task id T1..T5");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, false);
  gen->add_option("--train-size", train_size, "per-modality train size scale");
  gen->add_option("--eval-size", eval_size, "per-modality eval size");

  auto* pre = app.add_subcommand("pretrain", "multitask pretraining run");
  add_common(pre, false);
  auto* train = app.add_subcommand("train", "finetune one task");
  add_common(train);
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a task");
  add_common(ev);
  auto* emb = app.add_subcommand("embed", "export pooled embeddings as CSV");
  add_common(emb, false);
  auto* ret = app.add_subcommand("retrieve", "rank eval candidates for each query");
  add_common(ret);
  auto* cnt = app.add_subcommand("count-params", "activated-parameter accounting");
  add_common(cnt);
  cnt->add_option("--skills", skills_csv, "comma list of activated skills");
  cnt->add_option("--embedders", embedders_csv, "comma list of selected embedders");
  auto* dec = app.add_subcommand("decode", "greedy CTC decode of the eval split");
  add_common(dec, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(opts, train_size, eval_size);
    if (pre->parsed()) return cmd_pretrain(opts);
    if (train->parsed()) return cmd_train(opts);
    if (ev->parsed()) return cmd_eval(opts);
    if (emb->parsed()) return cmd_embed(opts);
    if (ret->parsed()) return cmd_retrieve(opts);
    if (cnt->parsed()) return cmd_count_params(opts, skills_csv, embedders_csv);
    if (dec->parsed()) return cmd_decode(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
