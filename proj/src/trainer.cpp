#include "skillnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "skillnet/acoustic.hpp"
#include "skillnet/errors.hpp"
#include "skillnet/metrics.hpp"
#include "skillnet/objectives.hpp"

namespace skillnet {

std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "step,task,metric,value\n";
  for (const auto& r : rows) {
    os << r.step << "," << r.task << "," << r.metric << "," << r.value << "\n";
  }
  return os.str();
}

void write_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write csv '" + path + "'");
  os << metrics_to_csv(rows);
}

std::vector<std::vector<int>> rank_by_similarity(const Tensor& queries, const Tensor& candidates,
                                                 Similarity similarity) {
  NoGradGuard ng;
  Tensor q = queries, c = candidates;
  if (similarity == Similarity::cosine) {
    q = l2_normalize_rows(q);
    c = l2_normalize_rows(c);
  }
  Tensor sims = matmul(q, transpose2d(c));
  const int nq = sims.dim(0), nc = sims.dim(1);
  std::vector<std::vector<int>> ranked((size_t)(nq));
  for (int i = 0; i < nq; ++i) {
    std::vector<int> order((size_t)(nc));
    for (int j = 0; j < nc; ++j) order[(size_t)(j)] = j;
    const double* row = sims.values().data() + (size_t)(i) * nc;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row[a] > row[b]; });
    ranked[(size_t)(i)] = std::move(order);
  }
  return ranked;
}

ModalitySampler::ModalitySampler(std::array<double, 5> weights, Rng rng)
    : weights_(weights), rng_(rng) {
  for (double w : weights_) {
    if (w < 0.0) throw ConfigError("sampler weights must be nonnegative");
    total_ += w;
  }
  if (total_ <= 0.0) throw ConfigError("sampler needs at least one positive weight");
}

Skill ModalitySampler::sample() {
  double r = rng_.uniform() * total_;
  for (size_t i = 0; i < weights_.size(); ++i) {
    r -= weights_[i];
    if (r < 0.0) return Skill(int(i));
  }
  return Skill(int(weights_.size()) - 1);
}

Trainer::Trainer(Model& model, const Dataset& data, TrainConfig cfg)
    : model_(model),
      data_(data),
      cfg_(std::move(cfg)),
      optimizer_(model.trainable_params(),
                 AdamW::Options{0.9, 0.999, 1e-8, cfg_.weight_decay}),
      rng_(cfg_.seed),
      mask_rng_(Rng(cfg_.seed).fork(77)) {}

void Trainer::check_batch(Skill expect, const std::vector<const Record*>& batch) const {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  for (const Record* r : batch) {
    if (r->modality != expect) {
      throw ContractError(std::string("train_step: record '") + r->id + "' is " +
                          skill_name(r->modality) + ", batch expects " + skill_name(expect));
    }
  }
}

EmbeddedSequence Trainer::embed_record(const Record& rec) {
  switch (rec.modality) {
    case Skill::text: {
      auto in = build_text_ids(model_.vocab(), rec.text, nullptr,
                               model_.config().max_text_positions);
      return model_.text_embedder().embed(in, model_.vocab().pad());
    }
    case Skill::code: {
      auto in = build_code_ids(model_.code_vocab(), rec.text, nullptr,
                               model_.config().max_code_positions, model_.config().code_text_limit);
      return model_.code_embedder().embed(in, model_.code_vocab().pad());
    }
    case Skill::sound:
      return model_.sound_embedder().embed(load_waveform(data_, rec));
    case Skill::image: {
      auto it = payload_cache_.find(rec.id);
      if (it == payload_cache_.end()) {
        it = payload_cache_.emplace(rec.id, load_tensor_payload(data_, rec)).first;
      }
      return model_.image_embedder().embed(it->second);
    }
    case Skill::video: {
      auto it = payload_cache_.find(rec.id);
      if (it == payload_cache_.end()) {
        it = payload_cache_.emplace(rec.id, load_tensor_payload(data_, rec)).first;
      }
      return model_.video_embedder().embed(it->second);
    }
  }
  throw ContractError("embed_record: unknown modality");
}

namespace {

EmbeddedSequence embed_caption(Model& model, const std::string& caption) {
  auto in = build_text_ids(model.vocab(), caption, nullptr, model.config().max_text_positions);
  return model.text_embedder().embed(in, model.vocab().pad());
}

}  // namespace

std::vector<const Record*> Trainer::next_batch(Skill modality, const std::string& split, int n) {
  auto key = std::make_pair(modality, split);
  auto it = streams_.find(key);
  if (it == streams_.end()) {
    auto recs = data_.select(modality, split);
    if (recs.empty()) {
      throw ContractError(std::string("no ") + skill_name(modality) + " records in split '" +
                          split + "'");
    }
    it = streams_.emplace(key, std::move(recs)).first;
    stream_pos_[key] = it->second.size();  // force initial shuffle
  }
  auto& recs = it->second;
  auto& pos = stream_pos_[key];
  std::vector<const Record*> batch;
  for (int i = 0; i < n; ++i) {
    if (pos >= recs.size()) {
      rng_.shuffle(recs);
      pos = 0;
    }
    batch.push_back(recs[pos++]);
  }
  return batch;
}

std::vector<int> Trainer::sound_targets(const Record& rec, int frames) {
  auto it = sound_label_cache_.find(rec.id);
  if (it == sound_label_cache_.end()) {
    if (!model_.acoustic_centroids.defined()) {
      throw ContractError("sound pretraining needs fitted acoustic centroids");
    }
    ClusterModel cm;
    cm.centroids = Mat(model_.acoustic_centroids.dim(0), model_.acoustic_centroids.dim(1));
    cm.centroids.v = model_.acoustic_centroids.values();
    auto feats = logmel_features(load_waveform(data_, rec));
    auto labels = downsample_labels(assign_clusters(feats.features, cm));
    it = sound_label_cache_.emplace(rec.id, std::move(labels)).first;
  }
  std::vector<int> out = it->second;
  // Feature hop and conv stack arithmetic can disagree by one frame.
  if (int(out.size()) > frames) out.resize((size_t)(frames));
  while (int(out.size()) < frames) out.push_back(out.empty() ? 0 : out.back());
  return out;
}

void Trainer::fit_acoustic_targets(int max_waveforms) {
  auto recs = data_.select(Skill::sound, "train");
  if (recs.empty()) throw ContractError("fit_acoustic_targets: no sound records");
  std::vector<Mat> feats;
  int rows = 0, cols = 0;
  for (int i = 0; i < std::min<int>(max_waveforms, int(recs.size())); ++i) {
    auto f = logmel_features(load_waveform(data_, *recs[size_t(i)]));
    rows += f.features.rows;
    cols = f.features.cols;
    feats.push_back(std::move(f.features));
  }
  Mat all(rows, cols);
  int at = 0;
  for (const auto& f : feats) {
    std::copy(f.v.begin(), f.v.end(), all.v.begin() + size_t(at) * cols);
    at += f.rows;
  }
  Rng krng = rng_.fork(101);
  auto result = kmeans_fit(all, model_.config().clusters, 50, krng);
  Tensor centroids = Tensor::from_values(
      {result.model.centroids.rows, result.model.centroids.cols}, result.model.centroids.v);
  model_.set_acoustic_centroids(centroids);
  sound_label_cache_.clear();
}

Tensor Trainer::batch_mean(const std::vector<Tensor>& losses) {
  Tensor acc = losses[0];
  for (size_t i = 1; i < losses.size(); ++i) acc = add(acc, losses[i]);
  return scale(acc, 1.0 / double(losses.size()));
}

std::optional<Tensor> Trainer::build_task_loss(TaskId task,
                                               const std::vector<const Record*>& batch) {
  check_batch(task_batch_modality(task), batch);
  ContrastiveOptions copts{model_.config().similarity, model_.config().temperature};

  switch (task) {
    case TaskId::T1: {
      std::vector<Tensor> losses;
      for (const Record* r : batch) {
        if (r->label < 0) throw ContractError("record '" + r->id + "' has no label");
        auto enc = model_.encode(embed_record(*r), Skill::text);
        losses.push_back(classification_loss(*enc.pooled, r->label, model_.classifier));
      }
      return batch_mean(losses);
    }
    case TaskId::T2: {
      std::vector<Tensor> losses;
      for (const Record* r : batch) {
        auto enc = model_.encode(embed_record(*r), Skill::sound);
        Tensor logits = model_.ctc_head.apply(enc.states);
        std::vector<int> target;
        for (char c : r->ref) {
          auto pos = model_.config().asr_symbols.find(c);
          if (pos == std::string::npos) {
            throw ContractError(std::string("transcript symbol '") + c +
                                "' missing from asr_symbols");
          }
          target.push_back(int(pos));
        }
        auto ctc = ctc_loss(logits, target);
        if (ctc.feasible) losses.push_back(ctc.loss);
      }
      if (losses.empty()) return std::nullopt;
      return batch_mean(losses);
    }
    case TaskId::T3:
    case TaskId::T4:
    case TaskId::T5: {
      const Skill cand = task_batch_modality(task);
      std::vector<Tensor> q_rows, c_rows;
      for (const Record* r : batch) {
        if (r->caption.empty()) throw ContractError("record '" + r->id + "' has no paired text");
        auto qe = model_.encode(embed_caption(model_, r->caption), Skill::text);
        auto ce = model_.encode(embed_record(*r), cand);
        q_rows.push_back(*qe.pooled);
        c_rows.push_back(*ce.pooled);
      }
      Tensor q = concat(q_rows, 0);
      Tensor c = concat(c_rows, 0);
      return contrastive_loss(q, c, copts);
    }
  }
  throw ContractError("build_task_loss: unknown task");
}

std::optional<Tensor> Trainer::build_pretrain_loss(Skill modality,
                                                   const std::vector<const Record*>& batch) {
  check_batch(modality, batch);
  switch (modality) {
    case Skill::text: {
      std::vector<Tensor> losses;
      for (const Record* r : batch) {
        auto in = build_text_ids(model_.vocab(), r->text, nullptr,
                                 model_.config().max_text_positions);
        auto plan = mlm_mask(in.ids, model_.vocab(), mask_rng_);
        auto masked = in;
        masked.ids = apply_mlm_plan(in.ids, plan, model_.vocab());
        auto enc = model_.encode(model_.text_embedder().embed(masked, model_.vocab().pad()),
                                 Skill::text);
        auto loss = mlm_loss(enc.states, plan, model_.mlm_text_head);
        if (loss) losses.push_back(*loss);
      }
      if (losses.empty()) return std::nullopt;
      return batch_mean(losses);
    }
    case Skill::code: {
      std::vector<Tensor> losses;
      for (const Record* r : batch) {
        const std::string* cap = r->caption.empty() ? nullptr : &r->caption;
        auto in = build_code_ids(model_.code_vocab(), r->text, cap,
                                 model_.config().max_code_positions,
                                 model_.config().code_text_limit);
        auto plan = mlm_mask(in.ids, model_.code_vocab(), mask_rng_);
        auto masked = in;
        masked.ids = apply_mlm_plan(in.ids, plan, model_.code_vocab());
        auto enc = model_.encode(model_.code_embedder().embed(masked, model_.code_vocab().pad()),
                                 Skill::code);
        auto loss = mlm_loss(enc.states, plan, model_.mlm_code_head);
        if (loss) losses.push_back(*loss);
      }
      if (losses.empty()) return std::nullopt;
      return batch_mean(losses);
    }
    case Skill::sound: {
      std::vector<Tensor> losses;
      for (const Record* r : batch) {
        auto wave = load_waveform(data_, *r);
        const int frames = std::min(SoundEmbedder::frame_count(int64_t(wave.size())),
                                    model_.config().max_sound_positions);
        if (frames < 1) continue;
        auto plan = sound_mask(frames, mask_rng_);
        if (plan.empty()) continue;
        std::vector<uint8_t> mask_flags((size_t)(frames), 0);
        for (int p : plan.positions) mask_flags[size_t(p)] = 1;
        auto seq = model_.sound_embedder().embed(wave, &mask_flags);
        auto enc = model_.encode(seq, Skill::sound);
        auto targets = sound_targets(*r, frames);
        auto loss = masked_cluster_loss(enc.states, plan, targets, model_.cluster_head);
        if (loss) losses.push_back(*loss);
      }
      if (losses.empty()) return std::nullopt;
      return batch_mean(losses);
    }
    case Skill::image:
      return build_task_loss(TaskId::T3, batch);
    case Skill::video:
      return build_task_loss(TaskId::T4, batch);
  }
  throw ContractError("build_pretrain_loss: unknown modality");
}

StepResult Trainer::apply_loss(const std::optional<Tensor>& loss, double lr) {
  StepResult res;
  res.lr = lr;
  if (!loss.has_value()) {
    res.skipped = true;
    return res;
  }
  res.loss = loss->value();
  model_.zero_grads();
  backward(*loss);
  res.touched = model_.gradient_touch();
  optimizer_.step(lr);
  return res;
}

StepResult Trainer::train_step(TaskId task, const std::vector<const Record*>& batch, double lr) {
  return apply_loss(build_task_loss(task, batch), lr);
}

StepResult Trainer::pretrain_step(Skill modality, const std::vector<const Record*>& batch,
                                  double lr) {
  return apply_loss(build_pretrain_loss(modality, batch), lr);
}

Tensor Trainer::embed_pooled(const Record& rec) {
  auto enc = model_.encode(embed_record(rec), rec.modality);
  if (enc.pooled.has_value()) return *enc.pooled;
  // No classification token (sound): mean over frame states.
  return scale(matmul(Tensor::full({1, enc.states.dim(0)}, 1.0), enc.states),
               1.0 / double(enc.states.dim(0)));
}

std::string Trainer::decode_record(const Record& rec) {
  NoGradGuard ng;
  auto enc = model_.encode(embed_record(rec), Skill::sound);
  Tensor logits = model_.ctc_head.apply(enc.states);
  return greedy_ctc_decode(logits, model_.config().asr_symbols);
}

std::map<std::string, double> Trainer::evaluate(TaskId task, const std::string& split) {
  NoGradGuard ng;
  auto recs = data_.select(task_batch_modality(task), split);
  if (recs.empty()) {
    throw ContractError(std::string("evaluate: empty split '") + split + "' for task " +
                        task_name(task));
  }
  std::map<std::string, double> out;
  switch (task) {
    case TaskId::T1: {
      std::vector<int> pred, gold;
      for (const Record* r : recs) {
        auto enc = model_.encode(embed_record(*r), Skill::text);
        Tensor logits = model_.classifier.apply(*enc.pooled);
        int arg = 0;
        for (int j = 1; j < logits.dim(1); ++j) {
          if (logits.values()[size_t(j)] > logits.values()[size_t(arg)]) arg = j;
        }
        pred.push_back(arg);
        gold.push_back(r->label);
      }
      out["accuracy"] = accuracy(pred, gold);
      return out;
    }
    case TaskId::T2: {
      size_t errors = 0, ref_len = 0;
      for (const Record* r : recs) {
        std::string hyp = decode_record(*r);
        errors += edit_distance_codepoints(r->ref, hyp);
        ref_len += codepoint_count(r->ref);
      }
      out["cer"] = ref_len == 0 ? 0.0 : double(errors) / double(ref_len);
      return out;
    }
    case TaskId::T3:
    case TaskId::T4:
    case TaskId::T5: {
      const int n = int(recs.size());
      std::vector<Tensor> q_rows, c_rows;
      for (const Record* r : recs) {
        auto qe = model_.encode(embed_caption(model_, r->caption), Skill::text);
        q_rows.push_back(*qe.pooled);
        c_rows.push_back(embed_pooled(*r));
      }
      auto ranked = rank_by_similarity(concat(q_rows, 0), concat(c_rows, 0),
                                       model_.config().similarity);
      std::vector<int> gold((size_t)(n));
      for (int i = 0; i < n; ++i) gold[size_t(i)] = i;
      out["R@1"] = recall_at_k(ranked, gold, 1);
      if (n >= 5) out["R@5"] = recall_at_k(ranked, gold, 5);
      if (n >= 10) out["R@10"] = recall_at_k(ranked, gold, 10);
      return out;
    }
  }
  throw ContractError("evaluate: unknown task");
}

double Trainer::eval_objective(Skill modality, const std::string& split, int max_records) {
  NoGradGuard ng;
  auto recs = data_.select(modality, split);
  if (recs.empty()) return 0.0;
  recs.resize(std::min(recs.size(), size_t(max_records)));
  Rng keep = mask_rng_;  // evaluation must not advance training randomness
  auto loss = build_pretrain_loss(modality, recs);
  mask_rng_ = keep;
  return loss ? loss->value() : 0.0;
}

RunResult Trainer::run_finetune(TaskId task) {
  RunResult result;
  const std::string lead = task_metric(task);
  const bool higher = metric_higher_is_better(lead);
  const Skill modality = task_batch_modality(task);
  const int batch_size = cfg_.batch.at(modality);

  auto run_eval = [&](long step) -> double {
    auto metrics = evaluate(task);
    for (auto& [k, v] : metrics) {
      result.rows.push_back({step, task_name(task), k, v});
    }
    return metrics.at(lead);
  };

  double m0 = run_eval(0);
  result.final_metric = m0;
  if (cfg_.stop_target && (higher ? m0 >= *cfg_.stop_target : m0 <= *cfg_.stop_target)) {
    result.reached_step = 0;
    return result;
  }
  if (cfg_.total_steps <= 0) return result;

  LrSchedule schedule(cfg_.peak_lr, cfg_.warmup, cfg_.total_steps);
  for (long step = 1; step <= cfg_.total_steps; ++step) {
    auto batch = next_batch(modality, "train", batch_size);
    auto res = train_step(task, batch, schedule.at(step));
    if (!res.skipped) {
      result.rows.push_back({step, task_name(task), "train_loss", res.loss});
    }
    if (step % cfg_.eval_every == 0 || step == cfg_.total_steps) {
      const double m = run_eval(step);
      result.final_metric = m;
      if (cfg_.stop_target && (higher ? m >= *cfg_.stop_target : m <= *cfg_.stop_target)) {
        result.reached_step = step;
        break;
      }
    }
  }
  return result;
}

RunResult Trainer::run_pretrain() {
  RunResult result;
  if (cfg_.total_steps <= 0) return result;
  LrSchedule schedule(cfg_.peak_lr, cfg_.warmup, cfg_.total_steps);

  // Restrict the sampler to modalities present in the model and data.
  std::array<double, 5> weights = cfg_.sampler_weights;
  for (int i = 0; i < 5; ++i) {
    if (!model_.config().has_modality(Skill(i))) weights[size_t(i)] = 0.0;
  }
  ModalitySampler sampler(weights, rng_.fork(55));

  if (model_.config().has_modality(Skill::sound) && weights[int(Skill::sound)] > 0.0 &&
      !model_.acoustic_centroids.defined()) {
    fit_acoustic_targets();
  }

  for (long step = 1; step <= cfg_.total_steps; ++step) {
    const Skill modality = sampler.sample();
    auto batch = next_batch(modality, "train", cfg_.batch.at(modality));
    auto res = pretrain_step(modality, batch, schedule.at(step));
    if (!res.skipped) {
      result.rows.push_back(
          {step, std::string("pretrain_") + skill_name(modality), "loss", res.loss});
    }
    if (step % cfg_.eval_every == 0 || step == cfg_.total_steps) {
      for (Skill m : model_.config().modalities) {
        result.rows.push_back({step, std::string("pretrain_") + skill_name(m), "eval_loss",
                               eval_objective(m)});
      }
    }
  }
  return result;
}

}  // namespace skillnet
