#include "skillnet/tasks.hpp"

#include <sstream>

#include "skillnet/errors.hpp"

namespace skillnet {

TaskId task_from_name(const std::string& name) {
  if (name == "T1") return TaskId::T1;
  if (name == "T2") return TaskId::T2;
  if (name == "T3") return TaskId::T3;
  if (name == "T4") return TaskId::T4;
  if (name == "T5") return TaskId::T5;
  throw ConfigError("unknown task id '" + name + "'");
}

const char* task_name(TaskId id) {
  switch (id) {
    case TaskId::T1: return "T1";
    case TaskId::T2: return "T2";
    case TaskId::T3: return "T3";
    case TaskId::T4: return "T4";
    case TaskId::T5: return "T5";
  }
  return "?";
}

std::string task_description(TaskId id) {
  switch (id) {
    case TaskId::T1: return "text classification";
    case TaskId::T2: return "automatic speech recognition";
    case TaskId::T3: return "text-to-image retrieval";
    case TaskId::T4: return "text-to-video retrieval";
    case TaskId::T5: return "text-to-code retrieval";
  }
  return "?";
}

std::set<Skill> task_skills(TaskId id) {
  switch (id) {
    case TaskId::T1: return {Skill::text};
    case TaskId::T2: return {Skill::sound};
    case TaskId::T3: return {Skill::text, Skill::image};
    case TaskId::T4: return {Skill::text, Skill::video};
    case TaskId::T5: return {Skill::text, Skill::code};
  }
  throw ConfigError("unknown task");
}

Skill task_batch_modality(TaskId id) {
  switch (id) {
    case TaskId::T1: return Skill::text;
    case TaskId::T2: return Skill::sound;
    case TaskId::T3: return Skill::image;
    case TaskId::T4: return Skill::video;
    case TaskId::T5: return Skill::code;
  }
  throw ConfigError("unknown task");
}

std::set<Skill> task_embedders(TaskId id) { return task_skills(id); }

std::string task_metric(TaskId id) {
  switch (id) {
    case TaskId::T1: return "accuracy";
    case TaskId::T2: return "cer";
    default: return "R@1";
  }
}

bool metric_higher_is_better(const std::string& metric) { return metric != "cer"; }

namespace {

long long ffn_params(int d, int ffn) {
  return (long long)(d) * ffn + ffn + (long long)(ffn) * d + d;
}

long long embedder_params(const ModelConfig& cfg, Skill m) {
  const long long d = cfg.hidden;
  switch (m) {
    case Skill::text:
      return (long long)(cfg.vocab_text) * d + (long long)(cfg.max_text_positions) * d + 2 * d;
    case Skill::code:
      return (long long)(cfg.vocab_code) * d + (long long)(cfg.max_code_positions) * d + 2 * d;
    case Skill::image:
      return (long long)(cfg.patch) * cfg.patch * 3 * d + d +
             (long long)(cfg.max_image_positions) * d + d;  // conv + positions + cls
    case Skill::video:
      return (long long)(cfg.tube_t) * cfg.tube_h * cfg.tube_w * 3 * d + d +
             (long long)(cfg.video_pos_t + cfg.video_pos_h + cfg.video_pos_w) * d + d;
    case Skill::sound: {
      const long long c = cfg.sound_channels;
      long long total = 0;
      const int kernels[7] = {10, 3, 3, 3, 3, 2, 2};
      for (int i = 0; i < 7; ++i) {
        const long long in_ch = i == 0 ? 1 : c;
        total += c * in_ch * kernels[i] + c;
      }
      total += d * c * 1 + d;                          // width-1 projection
      total += (long long)(cfg.max_sound_positions) * d;
      total += d;                                      // frame mask embedding
      return total;
    }
  }
  return 0;
}

}  // namespace

ParamReport count_activated_params(const ModelConfig& cfg, const std::set<Skill>& skills,
                                   const std::set<Skill>& embedders) {
  if (skills.empty()) throw ContractError("count_activated_params: empty skill set");
  for (Skill s : skills) {
    if (!cfg.has_skill(s)) {
      throw ContractError(std::string("count_activated_params: skill '") + skill_name(s) +
                          "' not in config");
    }
  }
  for (Skill m : embedders) {
    if (!cfg.has_modality(m)) {
      throw ContractError(std::string("count_activated_params: embedder '") + skill_name(m) +
                          "' not in config");
    }
  }

  const long long d = cfg.hidden;
  const long long qkv_per_layer = 3 * (d * d + d);
  const long long out_proj = d * d + d;
  const long long norms = 2 * (d + d);
  long long shared_per_layer = out_proj + norms;
  if (cfg.variant == Variant::moe) {
    shared_per_layer += (long long)(cfg.moe_experts) * ffn_params(cfg.hidden, cfg.ffn);
    shared_per_layer += d * cfg.moe_experts;  // gate
  } else {
    shared_per_layer += ffn_params(cfg.hidden, cfg.ffn);
  }

  ParamReport report;
  report.shared = shared_per_layer * cfg.layers;
  const bool per_skill_proj = cfg.variant == Variant::skillnet;
  if (per_skill_proj) {
    for (Skill s : cfg.skills) report.per_skill[s] = qkv_per_layer * cfg.layers;
  } else {
    report.shared += qkv_per_layer * cfg.layers;  // single projection set
  }
  for (Skill m : cfg.modalities) report.per_embedder[m] = embedder_params(cfg, m);

  report.total = report.shared;
  for (auto& [s, v] : report.per_skill) report.total += v;
  for (auto& [m, v] : report.per_embedder) report.total += v;

  report.activated = report.shared;
  if (per_skill_proj) {
    for (Skill s : skills) report.activated += report.per_skill.at(s);
  }
  for (Skill m : embedders) report.activated += report.per_embedder.at(m);
  return report;
}

ParamReport count_activated_params(const ModelConfig& cfg, TaskId task) {
  std::set<Skill> emb;
  for (Skill m : task_embedders(task)) {
    if (cfg.has_modality(m)) emb.insert(m);
  }
  return count_activated_params(cfg, task_skills(task), emb);
}

std::string ParamReport::to_text() const {
  std::ostringstream os;
  os << "parameter report\n";
  os << "  shared (per-layer output proj, ffn, norms): " << shared << "\n";
  for (auto& [s, v] : per_skill) {
    os << "  skill " << skill_name(s) << " q/k/v projections: " << v << "\n";
  }
  for (auto& [m, v] : per_embedder) {
    os << "  embedder " << skill_name(m) << ": " << v << "\n";
  }
  os << "  total: " << total << "\n";
  os << "  activated: " << activated << "\n";
  return os.str();
}

}  // namespace skillnet
