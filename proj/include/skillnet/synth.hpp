#pragma once

#include <string>
#include <vector>

#include "skillnet/manifest.hpp"
#include "skillnet/rng.hpp"

namespace skillnet {

// Deterministic separable synthetic data for desk-scale runs: labelled
// templated sentences, tone-sequence waveforms with transcripts, rendered
// pattern images/videos with describing captions, and snippet/description
// code pairs. Everything is paired so contrastive and supervised objectives
// have signal at small scale.
struct SynthSizes {
  int train_text = 512, eval_text = 128;
  int train_sound = 192, eval_sound = 32;
  int train_image = 256, eval_image = 32;
  int train_video = 192, eval_video = 32;
  int train_code = 256, eval_code = 32;
};

// Writes <out_dir>/vocab.txt, <out_dir>/manifest.tsv and payload files under
// sound/, image/, video/.
void generate_dataset(const std::string& out_dir, uint64_t seed, const SynthSizes& sizes = {});

std::vector<std::string> synth_vocab_tokens();

// Tone encoding used by the waveform generator: one 800-sample segment per
// transcript character.
constexpr int kAsrSamplesPerChar = 800;
constexpr int kAsrNumSymbols = 8;  // 'a' .. 'h'
double asr_char_frequency(char c);
std::vector<double> render_asr_waveform(const std::string& transcript, Rng& rng);

int synth_text_classes();

}  // namespace skillnet
