#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/rng.hpp"
#include "skillnet/tensor.hpp"
#include "skillnet/vocab.hpp"

namespace skillnet {

// Output of a modality embedder: token vectors ready for the encoder.
struct EmbeddedSequence {
  Tensor tokens;                 // [seq, d]
  std::vector<uint8_t> pad;      // 1 marks a padded position
  Skill modality = Skill::text;
  std::optional<int> cls_index;  // always unmasked when present
  int raw_len = 0;               // pre-padding token / frame / sample count
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Token id sequence with segment ids, ready for a token-table embedder.
struct TokenizedInput {
  std::vector<int> ids;
  std::vector<int> segments;
};

// [CLS_text] tokens [SEP] pair-tokens, segment ids 0/1, truncated to max_len.
TokenizedInput build_text_ids(const Vocab& vocab, const std::string& text,
                              const std::string* pair, int max_len);

// [CLS_code] [text [SEP]] code. Paired text is clipped to text_limit, then the
// code side is truncated to fit max_len; anything still over is an error.
TokenizedInput build_code_ids(const Vocab& vocab, const std::string& code,
                              const std::string* paired_text, int max_len, int text_limit);

class TokenEmbedder {
 public:
  TokenEmbedder(Skill modality, int vocab_size, int max_positions, int dim, Rng& rng);

  // token + position + segment embeddings; pad_to extends with [PAD] rows.
  EmbeddedSequence embed(const TokenizedInput& in, int pad_id, int pad_to = 0) const;

  int max_positions() const { return max_positions_; }
  NamedParams params(const std::string& prefix) const;

  Tensor token_table;    // [vocab, d]
  Tensor position_table; // [max_positions, d]
  Tensor segment_table;  // [2, d]

 private:
  Skill modality_;
  int max_positions_;
  int dim_;
};

// Seven strided 1-D convolutions with GELU between stages, a width-1
// projection to the model dim, and sound position embeddings. No
// classification token; pooled use is undefined for this modality.
class SoundEmbedder {
 public:
  SoundEmbedder(int channels, int dim, int max_positions, Rng& rng);

  static const std::vector<int>& kernels();
  static const std::vector<int>& strides();
  // Frame count after the conv stack, before the position cap.
  static int frame_count(int64_t samples);
  static constexpr int kMinSamples = 400;

  // masked_frames, when given, replaces those frame vectors with the learned
  // mask embedding (gradient flows into it).
  EmbeddedSequence embed(const std::vector<double>& waveform,
                         const std::vector<uint8_t>* masked_frames = nullptr) const;

  NamedParams params(const std::string& prefix) const;

  std::vector<Tensor> conv_w, conv_b;
  Tensor proj_w, proj_b;   // width-1 conv, channels -> d
  Tensor position_table;   // [max_positions, d]
  Tensor mask_embedding;   // [1, d]

 private:
  int channels_;
  int dim_;
  int max_positions_;
};

// Non-overlapping patch embedding: P x P convolution with stride P, position
// embeddings per patch, [CLS_image] prepended (no position of its own).
class ImageEmbedder {
 public:
  ImageEmbedder(int patch, int dim, int max_positions, Rng& rng);

  EmbeddedSequence embed(const Tensor& image) const;  // [3, H, W]

  NamedParams params(const std::string& prefix) const;

  Tensor conv_w, conv_b;  // [d, 3, P, P], [d]
  Tensor position_table;  // [max_positions, d]
  Tensor cls;             // [1, d]
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.5, 0.5, 0.5};

 private:
  int patch_;
  int dim_;
};

// Spatio-temporal tube embedding: 3-D convolution with kernel == stride,
// summed per-axis position embeddings, [CLS_video] prepended.
class VideoEmbedder {
 public:
  VideoEmbedder(int tube_t, int tube_h, int tube_w, int dim, int pos_t, int pos_h, int pos_w,
                Rng& rng);

  EmbeddedSequence embed(const Tensor& video) const;  // [3, T, H, W]

  NamedParams params(const std::string& prefix) const;

  Tensor conv_w, conv_b;
  Tensor pos_time, pos_height, pos_width;
  Tensor cls;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.5, 0.5, 0.5};

 private:
  int tube_t_, tube_h_, tube_w_;
  int dim_;
};

}  // namespace skillnet
