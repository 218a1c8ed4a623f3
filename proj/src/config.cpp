#include "skillnet/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "skillnet/errors.hpp"

namespace skillnet {

const char* skill_name(Skill s) {
  switch (s) {
    case Skill::text: return "text";
    case Skill::image: return "image";
    case Skill::sound: return "sound";
    case Skill::video: return "video";
    case Skill::code: return "code";
  }
  return "?";
}

Skill skill_from_name(const std::string& name) {
  for (Skill s : kAllSkills) {
    if (name == skill_name(s)) return s;
  }
  throw ConfigError("unknown skill/modality name '" + name + "'");
}

bool ModelConfig::has_skill(Skill s) const {
  return std::find(skills.begin(), skills.end(), s) != skills.end();
}

bool ModelConfig::has_modality(Skill s) const {
  return std::find(modalities.begin(), modalities.end(), s) != modalities.end();
}

int ModelConfig::skill_slot(Skill s) const {
  if (variant != Variant::skillnet) return 0;  // single projection set
  auto it = std::find(skills.begin(), skills.end(), s);
  if (it == skills.end()) {
    throw ConfigError(std::string("skill '") + skill_name(s) + "' is not in the model config");
  }
  return int(it - skills.begin());
}

void ModelConfig::validate() const {
  if (layers <= 0 || hidden <= 0 || heads <= 0 || ffn <= 0) {
    throw ConfigError("model dims must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError("hidden " + std::to_string(hidden) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (skills.empty()) throw ConfigError("at least one skill required");
  if (variant == Variant::dense && skills.size() != 1) {
    throw ConfigError("dense variant requires exactly one skill, got " +
                      std::to_string(skills.size()));
  }
  if (variant == Variant::moe && moe_top_k > moe_experts) {
    throw ConfigError("moe top-k " + std::to_string(moe_top_k) + " exceeds expert count " +
                      std::to_string(moe_experts));
  }
  std::set<Skill> seen(skills.begin(), skills.end());
  if (seen.size() != skills.size()) throw ConfigError("duplicate skill in config");
}

namespace {

std::vector<Skill> parse_skill_list(const std::string& value) {
  std::vector<Skill> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(skill_from_name(item));
  }
  return out;
}

long to_long(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected number, got '" + value + "'");
  }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    auto strip = [](std::string s) {
      auto b2 = s.find_first_not_of(" \t");
      if (b2 == std::string::npos) return std::string();
      auto e2 = s.find_last_not_of(" \t");
      return s.substr(b2, e2 - b2 + 1);
    };
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));

    auto& m = cfg.model;
    auto& t = cfg.train;
    if (key == "layers") m.layers = int(to_long(key, value));
    else if (key == "hidden") m.hidden = int(to_long(key, value));
    else if (key == "heads") m.heads = int(to_long(key, value));
    else if (key == "ffn") m.ffn = int(to_long(key, value));
    else if (key == "variant") {
      if (value == "skillnet") m.variant = Variant::skillnet;
      else if (value == "dense") m.variant = Variant::dense;
      else if (value == "moe") m.variant = Variant::moe;
      else throw ConfigError("config key 'variant': unknown value '" + value + "'");
    } else if (key == "skills") m.skills = parse_skill_list(value);
    else if (key == "modalities") m.modalities = parse_skill_list(value);
    else if (key == "moe_experts") m.moe_experts = int(to_long(key, value));
    else if (key == "moe_top_k") m.moe_top_k = int(to_long(key, value));
    else if (key == "vocab_text_size") m.vocab_text = int(to_long(key, value));
    else if (key == "vocab_code_size") m.vocab_code = int(to_long(key, value));
    else if (key == "max_text_positions") m.max_text_positions = int(to_long(key, value));
    else if (key == "max_code_positions") m.max_code_positions = int(to_long(key, value));
    else if (key == "code_text_limit") m.code_text_limit = int(to_long(key, value));
    else if (key == "sound_channels") m.sound_channels = int(to_long(key, value));
    else if (key == "max_sound_positions") m.max_sound_positions = int(to_long(key, value));
    else if (key == "patch") m.patch = int(to_long(key, value));
    else if (key == "max_image_positions") m.max_image_positions = int(to_long(key, value));
    else if (key == "tube_t") m.tube_t = int(to_long(key, value));
    else if (key == "tube_h") m.tube_h = int(to_long(key, value));
    else if (key == "tube_w") m.tube_w = int(to_long(key, value));
    else if (key == "video_pos_t") m.video_pos_t = int(to_long(key, value));
    else if (key == "video_pos_h") m.video_pos_h = int(to_long(key, value));
    else if (key == "video_pos_w") m.video_pos_w = int(to_long(key, value));
    else if (key == "n_classes") m.n_classes = int(to_long(key, value));
    else if (key == "asr_symbols") m.asr_symbols = value;
    else if (key == "clusters") m.clusters = int(to_long(key, value));
    else if (key == "similarity") {
      if (value == "cosine") m.similarity = Similarity::cosine;
      else if (value == "dot") m.similarity = Similarity::dot;
      else throw ConfigError("config key 'similarity': unknown value '" + value + "'");
    } else if (key == "temperature") m.temperature = to_double(key, value);
    else if (key == "total_steps") t.total_steps = to_long(key, value);
    else if (key == "warmup") t.warmup = to_long(key, value);
    else if (key == "peak_lr") t.peak_lr = to_double(key, value);
    else if (key == "weight_decay") t.weight_decay = to_double(key, value);
    else if (key == "eval_every") t.eval_every = to_long(key, value);
    else if (key == "seed") t.seed = uint64_t(to_long(key, value));
    else if (key == "stop_target") t.stop_target = to_double(key, value);
    else if (key == "batch_text") t.batch[Skill::text] = int(to_long(key, value));
    else if (key == "batch_image") t.batch[Skill::image] = int(to_long(key, value));
    else if (key == "batch_sound") t.batch[Skill::sound] = int(to_long(key, value));
    else if (key == "batch_video") t.batch[Skill::video] = int(to_long(key, value));
    else if (key == "batch_code") t.batch[Skill::code] = int(to_long(key, value));
    else if (key == "weight_text") t.sampler_weights[0] = to_double(key, value);
    else if (key == "weight_image") t.sampler_weights[1] = to_double(key, value);
    else if (key == "weight_sound") t.sampler_weights[2] = to_double(key, value);
    else if (key == "weight_video") t.sampler_weights[3] = to_double(key, value);
    else if (key == "weight_code") t.sampler_weights[4] = to_double(key, value);
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "vocab") cfg.vocab_file = value;
    else if (key == "code_vocab") cfg.code_vocab_file = value;
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (cfg.vocab_file.empty() && !cfg.data_dir.empty()) {
    cfg.vocab_file = cfg.data_dir + "/vocab.txt";
  }
  if (cfg.code_vocab_file.empty()) cfg.code_vocab_file = cfg.vocab_file;
  cfg.model.validate();
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config_text(ss.str());
}

void require_data_dir(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("missing config key 'data_dir'");
}

}  // namespace skillnet
