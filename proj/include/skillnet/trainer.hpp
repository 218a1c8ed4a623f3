#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/manifest.hpp"
#include "skillnet/model.hpp"
#include "skillnet/optim.hpp"
#include "skillnet/rng.hpp"
#include "skillnet/tasks.hpp"

namespace skillnet {

struct MetricRow {
  long step = 0;
  std::string task;
  std::string metric;
  double value = 0.0;
};

std::string metrics_to_csv(const std::vector<MetricRow>& rows);
void write_csv(const std::string& path, const std::vector<MetricRow>& rows);

// Ranks every candidate for every query row, best first. Cosine mode
// normalizes both sides; ties keep the lower candidate index.
std::vector<std::vector<int>> rank_by_similarity(const Tensor& queries, const Tensor& candidates,
                                                 Similarity similarity);

// Categorical draw over the five modalities, one per training step.
class ModalitySampler {
 public:
  ModalitySampler(std::array<double, 5> weights, Rng rng);
  Skill sample();

 private:
  std::array<double, 5> weights_;
  double total_ = 0.0;
  Rng rng_;
};

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  std::map<Skill, bool> touched;
  bool skipped = false;  // batch produced no usable loss
};

struct RunResult {
  std::vector<MetricRow> rows;
  long reached_step = -1;  // first eval step at/past the stop target
  double final_metric = 0.0;
};

// Single-threaded training/evaluation driver over one model and one dataset.
class Trainer {
 public:
  Trainer(Model& model, const Dataset& data, TrainConfig cfg);

  // Offline acoustic pseudo-labels: log-mel features over the training sound
  // split, k-means, centroids stored on the model as "acoustic.centroids".
  void fit_acoustic_targets(int max_waveforms = 64);

  StepResult train_step(TaskId task, const std::vector<const Record*>& batch, double lr);
  StepResult pretrain_step(Skill modality, const std::vector<const Record*>& batch, double lr);

  std::map<std::string, double> evaluate(TaskId task, const std::string& split = "eval");
  double eval_objective(Skill modality, const std::string& split = "eval", int max_records = 8);

  RunResult run_finetune(TaskId task);
  RunResult run_pretrain();

  // Pooled embedding for one record under its modality pathway.
  Tensor embed_pooled(const Record& rec);
  std::string decode_record(const Record& rec);

  AdamW& optimizer() { return optimizer_; }
  Model& model() { return model_; }

 private:
  EmbeddedSequence embed_record(const Record& rec);
  std::vector<const Record*> next_batch(Skill modality, const std::string& split, int n);
  std::vector<int> sound_targets(const Record& rec, int frames);
  Tensor batch_mean(const std::vector<Tensor>& losses);
  void check_batch(Skill expect, const std::vector<const Record*>& batch) const;
  std::optional<Tensor> build_task_loss(TaskId task, const std::vector<const Record*>& batch);
  std::optional<Tensor> build_pretrain_loss(Skill modality,
                                            const std::vector<const Record*>& batch);
  StepResult apply_loss(const std::optional<Tensor>& loss, double lr);

  Model& model_;
  const Dataset& data_;
  TrainConfig cfg_;
  AdamW optimizer_;
  Rng rng_;
  Rng mask_rng_;
  std::map<std::pair<Skill, std::string>, std::vector<const Record*>> streams_;
  std::map<std::pair<Skill, std::string>, size_t> stream_pos_;
  std::map<std::string, std::vector<int>> sound_label_cache_;
  std::map<std::string, Tensor> payload_cache_;
};

}  // namespace skillnet
