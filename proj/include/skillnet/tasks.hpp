#pragma once

#include <map>
#include <set>
#include <string>

#include "skillnet/config.hpp"

namespace skillnet {

// Downstream tasks. Retrieval tasks run two pathways over one weight set.
enum class TaskId { T1, T2, T3, T4, T5 };

TaskId task_from_name(const std::string& name);
const char* task_name(TaskId id);
std::string task_description(TaskId id);

// Skills a task activates across its pathways.
std::set<Skill> task_skills(TaskId id);

// Modality of the records a task trains on (retrieval records carry their
// paired text inline).
Skill task_batch_modality(TaskId id);

// Embedders a task needs.
std::set<Skill> task_embedders(TaskId id);

// Lead evaluation metric key ("accuracy", "cer", "R@1").
std::string task_metric(TaskId id);
bool metric_higher_is_better(const std::string& metric);

// Activated-parameter accounting by shape enumeration over the config.
struct ParamReport {
  std::map<Skill, long long> per_skill;     // Q/K/V projections, all layers
  long long shared = 0;                     // output proj, FFN, norms (and moe experts/gate)
  std::map<Skill, long long> per_embedder;  // embedding tables per modality
  long long total = 0;                      // shared + all skills + all embedders
  long long activated = 0;                  // shared + selected skills + selected embedders

  std::string to_text() const;
};

ParamReport count_activated_params(const ModelConfig& cfg, const std::set<Skill>& skills,
                                   const std::set<Skill>& embedders);
ParamReport count_activated_params(const ModelConfig& cfg, TaskId task);

}  // namespace skillnet
