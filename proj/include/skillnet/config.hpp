#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace skillnet {

// The five modality skills. Closed enumeration; order is the canonical
// parameter / sampler order everywhere.
enum class Skill { text = 0, image = 1, sound = 2, video = 3, code = 4 };

constexpr std::array<Skill, 5> kAllSkills = {Skill::text, Skill::image, Skill::sound,
                                             Skill::video, Skill::code};

const char* skill_name(Skill s);
Skill skill_from_name(const std::string& name);

enum class Variant { skillnet, dense, moe };
enum class Similarity { cosine, dot };

struct ModelConfig {
  int layers = 2;
  int hidden = 64;
  int heads = 4;
  int ffn = 256;
  Variant variant = Variant::skillnet;
  std::vector<Skill> skills = {Skill::text, Skill::image, Skill::sound, Skill::video, Skill::code};
  // Modalities with an embedder attached (usually equal to the skill list).
  std::vector<Skill> modalities = {Skill::text, Skill::image, Skill::sound, Skill::video,
                                   Skill::code};
  int moe_experts = 5;
  int moe_top_k = 2;

  // Token modalities.
  int vocab_text = 0;  // filled from the vocabulary file
  int vocab_code = 0;
  int max_text_positions = 512;
  int max_code_positions = 512;
  int code_text_limit = 64;  // text half of a (text, code) pair

  // Sound frontend.
  int sound_channels = 32;
  int max_sound_positions = 1000;

  // Image / video frontends.
  int patch = 16;
  int max_image_positions = 4;  // (32/16)^2 at the desk image size
  int tube_t = 3, tube_h = 16, tube_w = 16;
  int video_pos_t = 2, video_pos_h = 2, video_pos_w = 2;

  // Task heads.
  int n_classes = 4;
  std::string asr_symbols = "abcdefgh";  // CTC classes; blank appended last
  int clusters = 100;

  Similarity similarity = Similarity::cosine;
  double temperature = 0.07;

  int head_dim() const { return hidden / heads; }
  bool has_skill(Skill s) const;
  bool has_modality(Skill s) const;
  int skill_slot(Skill s) const;  // index into the per-skill weight arrays
  void validate() const;
};

struct TrainConfig {
  long total_steps = 2000;
  long warmup = 100;
  double peak_lr = 2e-3;
  double weight_decay = 0.01;
  long eval_every = 100;
  uint64_t seed = 1;
  std::map<Skill, int> batch = {{Skill::text, 8},
                                {Skill::image, 8},
                                {Skill::sound, 4},
                                {Skill::video, 4},
                                {Skill::code, 8}};
  // Indexed by Skill: text 2, image 2, sound 4, video 1, code 4.
  std::array<double, 5> sampler_weights = {2, 2, 4, 1, 4};
  std::optional<double> stop_target;  // finetune: stop once the lead metric reaches this
};

// A full run description parsed from a flat key=value file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_dir;
  std::string out_dir;
  std::string vocab_file;       // default: <data_dir>/vocab.txt
  std::string code_vocab_file;  // default: same as vocab_file
};

// Parses `key=value` lines; '#' starts a comment. Unknown keys and malformed
// values raise ConfigError naming the key.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);

// Keys that must be present for commands that touch data on disk.
void require_data_dir(const RunConfig& cfg);

}  // namespace skillnet
