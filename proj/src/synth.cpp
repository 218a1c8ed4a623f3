#include "skillnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <filesystem>
#include <fstream>

#include "skillnet/errors.hpp"
#include "skillnet/tensor.hpp"

namespace skillnet {

namespace {

const std::vector<std::vector<std::string>>& class_pools() {
  static const std::vector<std::vector<std::string>> pools = {
      {"rain", "snow", "wind", "storm", "cloud", "sunshine", "fog", "hail"},
      {"dog", "cat", "horse", "bird", "fish", "lion", "wolf", "bear"},
      {"bread", "milk", "rice", "soup", "cake", "salt", "meat", "corn"},
      {"car", "bus", "plane", "boat", "bike", "truck", "tram", "ferry"},
  };
  return pools;
}

const std::vector<std::string>& neutral_words() {
  static const std::vector<std::string> words = {"the",   "a",     "has",   "very",
                                                 "quite", "today", "small", "big"};
  return words;
}

const std::vector<std::string>& patterns() {
  static const std::vector<std::string> v = {"hstripes", "vstripes", "checker",
                                             "solid",    "border",   "diagonal"};
  return v;
}

struct Color {
  std::string name;
  double r, g, b;
};

const std::vector<Color>& colors() {
  static const std::vector<Color> v = {
      {"red", 1, 0, 0},    {"green", 0, 1, 0},   {"blue", 0, 0, 1}, {"yellow", 1, 1, 0},
      {"cyan", 0, 1, 1},   {"magenta", 1, 0, 1}, {"white", 1, 1, 1},
  };
  return v;
}

const std::vector<std::string>& scales() {
  static const std::vector<std::string> v = {"coarse", "fine"};
  return v;
}

const std::vector<std::string>& directions() {
  static const std::vector<std::string> v = {"left", "right", "up", "down"};
  return v;
}

const std::vector<std::string>& speeds() {
  static const std::vector<std::string> v = {"slow", "fast"};
  return v;
}

const std::vector<std::string>& code_ops() {
  static const std::vector<std::string> v = {"add",    "sub",  "mul",  "divide",
                                             "modulo", "maxi", "mini", "power"};
  return v;
}

const std::vector<std::string>& code_nouns() {
  static const std::vector<std::string> v = {"numbers", "values", "items", "scores"};
  return v;
}

constexpr int kImageSize = 32;
constexpr int kVideoFrames = 6;

double clamp01(double v) { return std::max(0.0, std::min(1.0, v)); }

// [3, H, W] pattern render in [0, 1].
Tensor render_image(int pattern, const Color& color, int scale, Rng& rng) {
  const int s = kImageSize;
  Tensor img = Tensor::zeros({3, s, s});
  auto& v = img.mutable_values();
  auto set_px = [&](int y, int x) {
    v[size_t(0) * s * s + size_t(y) * s + x] = color.r;
    v[size_t(1) * s * s + size_t(y) * s + x] = color.g;
    v[size_t(2) * s * s + size_t(y) * s + x] = color.b;
  };
  const bool coarse = scale == 0;
  const int band = coarse ? 8 : 4;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      bool on = false;
      switch (pattern) {
        case 0: on = (y / band) % 2 == 0; break;
        case 1: on = (x / band) % 2 == 0; break;
        case 2: on = ((x / band) + (y / band)) % 2 == 0; break;
        case 3: on = true; break;
        case 4: {
          const int w = coarse ? 6 : 3;
          on = y < w || y >= s - w || x < w || x >= s - w;
          break;
        }
        case 5: on = ((x + y) / band) % 2 == 0; break;
      }
      if (on) set_px(y, x);
    }
  }
  if (pattern == 3 && !coarse) {
    for (auto& x : v) x *= 0.55;  // solid+fine dims the fill so scale stays visible
  }
  for (auto& x : v) x = clamp01(x + 0.03 * rng.normal());
  return img;
}

// [3, T, H, W]: a 12x12 block moving with wraparound.
Tensor render_video(int direction, const Color& color, int speed, Rng& rng) {
  const int s = kImageSize, t_len = kVideoFrames, block = 12;
  const int step = speed == 0 ? 3 : 6;
  Tensor vid = Tensor::zeros({3, t_len, s, s});
  auto& v = vid.mutable_values();
  const double ch[3] = {color.r, color.g, color.b};
  for (int t = 0; t < t_len; ++t) {
    int ox = 10, oy = 10;
    switch (direction) {
      case 0: ox -= step * t; break;
      case 1: ox += step * t; break;
      case 2: oy -= step * t; break;
      case 3: oy += step * t; break;
    }
    for (int dy = 0; dy < block; ++dy) {
      for (int dx = 0; dx < block; ++dx) {
        const int y = ((oy + dy) % s + s) % s;
        const int x = ((ox + dx) % s + s) % s;
        for (int c = 0; c < 3; ++c) {
          v[((size_t)(c) * t_len + t) * s * s + size_t(y) * s + x] = ch[c];
        }
      }
    }
  }
  for (auto& x : v) x = clamp01(x + 0.03 * rng.normal());
  return vid;
}

std::string make_code(const std::string& op, const std::string& noun) {
  return "def " + op + "_" + noun + "(a, b):\n    return " + op + "(a, b)\n";
}

std::string make_code_caption(const std::string& op, const std::string& noun) {
  return op + " two " + noun;
}

}  // namespace

int synth_text_classes() { return int(class_pools().size()); }

std::vector<std::string> synth_vocab_tokens() {
  std::vector<std::string> toks = {"[PAD]", "[UNK]",       "[MASK]",      "[SEP]",
                                   "[CLS_text]", "[CLS_image]", "[CLS_video]", "[CLS_code]"};
  for (const auto& pool : class_pools()) toks.insert(toks.end(), pool.begin(), pool.end());
  toks.insert(toks.end(), neutral_words().begin(), neutral_words().end());
  toks.insert(toks.end(), patterns().begin(), patterns().end());
  for (const auto& c : colors()) toks.push_back(c.name);
  toks.insert(toks.end(), scales().begin(), scales().end());
  toks.insert(toks.end(), directions().begin(), directions().end());
  toks.insert(toks.end(), speeds().begin(), speeds().end());
  toks.insert(toks.end(), code_ops().begin(), code_ops().end());
  toks.insert(toks.end(), code_nouns().begin(), code_nouns().end());
  for (const char* t : {"def", "return", "(", ")", ":", ",", "_", "a", "b", "two", "compute"}) {
    toks.push_back(t);
  }
  // some words serve several roles; keep the first occurrence
  std::vector<std::string> unique;
  std::set<std::string> seen;
  for (auto& t : toks) {
    if (seen.insert(t).second) unique.push_back(t);
  }
  return unique;
}

double asr_char_frequency(char c) {
  const int idx = c - 'a';
  if (idx < 0 || idx >= kAsrNumSymbols) {
    throw ContractError(std::string("asr_char_frequency: symbol '") + c + "' outside a..h");
  }
  return 500.0 + 300.0 * idx;
}

std::vector<double> render_asr_waveform(const std::string& transcript, Rng& rng) {
  std::vector<double> wave;
  wave.reserve(transcript.size() * size_t(kAsrSamplesPerChar));
  const double two_pi = 6.283185307179586476925286766559;
  for (char c : transcript) {
    const double f = asr_char_frequency(c);
    for (int i = 0; i < kAsrSamplesPerChar; ++i) {
      const double t = double(i) / 16000.0;
      wave.push_back(0.45 * std::sin(two_pi * f * t) + 0.01 * rng.normal());
    }
  }
  return wave;
}

void generate_dataset(const std::string& out_dir, uint64_t seed, const SynthSizes& sizes) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/sound");
  fs::create_directories(out_dir + "/image");
  fs::create_directories(out_dir + "/video");

  // vocabulary
  {
    std::ofstream os(out_dir + "/vocab.txt", std::ios::trunc);
    if (!os) throw InputError("cannot write '" + out_dir + "/vocab.txt'");
    for (const auto& t : synth_vocab_tokens()) os << t << "\n";
  }

  Rng rng(seed);
  std::vector<Record> records;
  char idbuf[64];

  // text classification sentences
  {
    Rng r = rng.fork(1);
    auto gen = [&](const std::string& split, int count, int offset) {
      for (int i = 0; i < count; ++i) {
        const int cls = r.uniform_int(synth_text_classes());
        const int len = 4 + r.uniform_int(5);
        std::string sent;
        for (int w = 0; w < len; ++w) {
          if (!sent.empty()) sent += " ";
          if (r.uniform() < 0.7) {
            const auto& pool = class_pools()[size_t(cls)];
            sent += pool[size_t(r.uniform_int(int(pool.size())))];
          } else {
            sent += neutral_words()[size_t(r.uniform_int(int(neutral_words().size())))];
          }
        }
        std::snprintf(idbuf, sizeof idbuf, "txt%05d", offset + i);
        Record rec;
        rec.id = idbuf;
        rec.modality = Skill::text;
        rec.split = split;
        rec.text = sent;
        rec.label = cls;
        records.push_back(std::move(rec));
      }
    };
    gen("train", sizes.train_text, 0);
    gen("eval", sizes.eval_text, sizes.train_text);
  }

  // sound: tone sequences with transcripts
  {
    Rng r = rng.fork(2);
    auto gen = [&](const std::string& split, int count, int offset) {
      for (int i = 0; i < count; ++i) {
        const int len = 2 + r.uniform_int(4);
        std::string transcript;
        for (int k = 0; k < len; ++k) transcript.push_back(char('a' + r.uniform_int(kAsrNumSymbols)));
        auto wave = render_asr_waveform(transcript, r);
        std::snprintf(idbuf, sizeof idbuf, "snd%05d", offset + i);
        const std::string rel = std::string("sound/") + idbuf + ".pcm";
        write_waveform(out_dir + "/" + rel, wave);
        Record rec;
        rec.id = idbuf;
        rec.modality = Skill::sound;
        rec.split = split;
        rec.file = rel;
        rec.ref = transcript;
        records.push_back(std::move(rec));
      }
    };
    gen("train", sizes.train_sound, 0);
    gen("eval", sizes.eval_sound, sizes.train_sound);
  }

  // image: pattern renders with captions; eval pool has distinct attributes
  {
    Rng r = rng.fork(3);
    struct Combo {
      int pattern, color, scale;
    };
    std::vector<Combo> all;
    for (int p = 0; p < int(patterns().size()); ++p) {
      for (int c = 0; c < int(colors().size()); ++c) {
        for (int s = 0; s < int(scales().size()); ++s) all.push_back({p, c, s});
      }
    }
    auto emit = [&](const std::string& split, const Combo& combo, int n) {
      std::snprintf(idbuf, sizeof idbuf, "img%05d", n);
      Tensor img = render_image(combo.pattern, colors()[size_t(combo.color)], combo.scale, r);
      const std::string rel = std::string("image/") + idbuf + ".f32";
      write_tensor_payload(out_dir + "/" + rel, img);
      Record rec;
      rec.id = idbuf;
      rec.modality = Skill::image;
      rec.split = split;
      rec.file = rel;
      rec.dims = {3, kImageSize, kImageSize};
      rec.caption = patterns()[size_t(combo.pattern)] + " " + colors()[size_t(combo.color)].name +
                    " " + scales()[size_t(combo.scale)];
      records.push_back(std::move(rec));
    };
    for (int i = 0; i < sizes.train_image; ++i) {
      emit("train", all[size_t(r.uniform_int(int(all.size())))], i);
    }
    std::vector<Combo> pool = all;
    r.shuffle(pool);
    const int n_eval = std::min(sizes.eval_image, int(pool.size()));
    for (int i = 0; i < n_eval; ++i) emit("eval", pool[size_t(i)], sizes.train_image + i);
  }

  // video: moving blocks with captions
  {
    Rng r = rng.fork(4);
    struct Combo {
      int dir, color, speed;
    };
    std::vector<Combo> all;
    for (int d = 0; d < int(directions().size()); ++d) {
      for (int c = 0; c < int(colors().size()); ++c) {
        for (int s = 0; s < int(speeds().size()); ++s) all.push_back({d, c, s});
      }
    }
    auto emit = [&](const std::string& split, const Combo& combo, int n) {
      std::snprintf(idbuf, sizeof idbuf, "vid%05d", n);
      Tensor vid = render_video(combo.dir, colors()[size_t(combo.color)], combo.speed, r);
      const std::string rel = std::string("video/") + idbuf + ".f32";
      write_tensor_payload(out_dir + "/" + rel, vid);
      Record rec;
      rec.id = idbuf;
      rec.modality = Skill::video;
      rec.split = split;
      rec.file = rel;
      rec.dims = {3, kVideoFrames, kImageSize, kImageSize};
      rec.caption = directions()[size_t(combo.dir)] + " " + colors()[size_t(combo.color)].name +
                    " " + speeds()[size_t(combo.speed)];
      records.push_back(std::move(rec));
    };
    for (int i = 0; i < sizes.train_video; ++i) {
      emit("train", all[size_t(r.uniform_int(int(all.size())))], i);
    }
    std::vector<Combo> pool = all;
    r.shuffle(pool);
    const int n_eval = std::min(sizes.eval_video, int(pool.size()));
    for (int i = 0; i < n_eval; ++i) emit("eval", pool[size_t(i)], sizes.train_video + i);
  }

  // code: snippet/description pairs
  {
    Rng r = rng.fork(5);
    auto emit = [&](const std::string& split, int op, int noun, int n) {
      std::snprintf(idbuf, sizeof idbuf, "cod%05d", n);
      Record rec;
      rec.id = idbuf;
      rec.modality = Skill::code;
      rec.split = split;
      rec.text = make_code(code_ops()[size_t(op)], code_nouns()[size_t(noun)]);
      rec.caption = make_code_caption(code_ops()[size_t(op)], code_nouns()[size_t(noun)]);
      records.push_back(std::move(rec));
    };
    for (int i = 0; i < sizes.train_code; ++i) {
      emit("train", r.uniform_int(int(code_ops().size())), r.uniform_int(int(code_nouns().size())),
           i);
    }
    std::vector<std::pair<int, int>> pool;
    for (int op = 0; op < int(code_ops().size()); ++op) {
      for (int noun = 0; noun < int(code_nouns().size()); ++noun) pool.push_back({op, noun});
    }
    r.shuffle(pool);
    const int n_eval = std::min(sizes.eval_code, int(pool.size()));
    for (int i = 0; i < n_eval; ++i) {
      emit("eval", pool[size_t(i)].first, pool[size_t(i)].second, sizes.train_code + i);
    }
  }

  write_manifest(out_dir + "/manifest.tsv", records);
}

}  // namespace skillnet
