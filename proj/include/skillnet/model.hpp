#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/embedders.hpp"
#include "skillnet/mat.hpp"
#include "skillnet/nn.hpp"
#include "skillnet/tensor.hpp"
#include "skillnet/vocab.hpp"

namespace skillnet {

// One Q/K/V projection triple. Weights are [d, d] with all heads fused
// column-wise; head h owns columns [h*d_k, (h+1)*d_k).
struct AttentionProj {
  Tensor wq, bq, wk, bk, wv, bv;
};

struct FfnWeights {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayer {
  std::vector<AttentionProj> qkv;   // one per skill; single entry for dense/moe
  Tensor wo, bo;                    // shared output projection
  FfnWeights ffn;                   // dense + skillnet
  std::vector<FfnWeights> experts;  // moe
  Tensor gate;                      // moe: [d, experts]
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct EncodeTrace {
  std::vector<std::vector<Mat>> attention;  // [layer][head] -> [seq, seq]
  std::vector<Mat> gate_weights;            // moe: [layer] -> [seq, experts]
};

struct Encoded {
  Tensor states;                // [seq, d]
  std::optional<Tensor> pooled; // [1, d] first-token state when the modality has a CLS
};

// The encoder plus its embedders and task heads. One instance carries one
// weight set; retrieval runs it twice with different skill activations.
class Model {
 public:
  enum class Section { encoder_shared, encoder_skill, embedder, head, extra };

  struct ParamEntry {
    std::string name;
    Tensor tensor;
    Section section = Section::encoder_shared;
    std::optional<Skill> skill;     // encoder_skill entries
    std::optional<Skill> modality;  // embedder entries
  };

  Model(ModelConfig cfg, uint64_t seed, std::shared_ptr<Vocab> text_vocab = nullptr,
        std::shared_ptr<Vocab> code_vocab = nullptr);

  const ModelConfig& config() const { return cfg_; }
  std::vector<EncoderLayer>& layers() { return layers_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }

  // Runs the full stack: per-layer skill-routed attention, add & norm, FFN
  // (or top-k expert mixture), add & norm.
  Encoded encode(const EmbeddedSequence& seq, Skill activation,
                 EncodeTrace* trace = nullptr) const;

  // x W_head^{role_s} + b for the activated skill only. role is 'Q', 'K' or 'V'.
  Tensor skill_project(const Tensor& x, int layer, int head, char role, Skill activation) const;

  // One attention sublayer (no residual/norm) under the given activation.
  Tensor multi_head_attention(const Tensor& x, int layer, Skill activation,
                              const std::vector<uint8_t>* pad = nullptr,
                              std::vector<Mat>* head_trace = nullptr) const;

  // Expert mixture for one layer; exposed for testing the moe variant.
  Tensor moe_ffn(const Tensor& x, int layer, Mat* gate_trace = nullptr) const;

  TokenEmbedder& text_embedder();
  TokenEmbedder& code_embedder();
  SoundEmbedder& sound_embedder();
  ImageEmbedder& image_embedder();
  VideoEmbedder& video_embedder();
  const TokenEmbedder& text_embedder() const;
  const TokenEmbedder& code_embedder() const;
  const SoundEmbedder& sound_embedder() const;
  const ImageEmbedder& image_embedder() const;
  const VideoEmbedder& video_embedder() const;

  Vocab& vocab() { return *text_vocab_; }
  Vocab& code_vocab() { return *code_vocab_; }
  bool has_vocab() const { return text_vocab_ != nullptr; }

  // Task heads (present when the config gives them a size).
  Linear classifier;
  Linear ctc_head;
  Linear mlm_text_head;
  Linear mlm_code_head;
  Linear cluster_head;

  // Offline acoustic cluster centroids; persisted, not trained.
  Tensor acoustic_centroids;
  void set_acoustic_centroids(Tensor centroids);

  const std::vector<ParamEntry>& parameters() const { return params_; }
  NamedParams trainable_params() const;
  Tensor param(const std::string& name) const;
  bool has_param(const std::string& name) const;

  // Per-skill flag: did any of the skill's projection parameters receive a
  // nonzero gradient in the latest backward sweep.
  std::map<Skill, bool> gradient_touch() const;
  std::vector<const ParamEntry*> skill_params(Skill s) const;

  void zero_grads();

 private:
  void register_param(std::string name, Tensor t, Section section,
                      std::optional<Skill> skill = std::nullopt,
                      std::optional<Skill> modality = std::nullopt);
  void build(uint64_t seed);
  Tensor attention(const Tensor& x, const EncoderLayer& layer, int slot,
                   const Tensor& mask_bias, std::vector<Mat>* head_trace) const;
  Tensor dense_ffn(const Tensor& x, const FfnWeights& w) const;

  ModelConfig cfg_;
  std::vector<EncoderLayer> layers_;
  std::unique_ptr<TokenEmbedder> text_emb_;
  std::unique_ptr<TokenEmbedder> code_emb_;
  std::unique_ptr<SoundEmbedder> sound_emb_;
  std::unique_ptr<ImageEmbedder> image_emb_;
  std::unique_ptr<VideoEmbedder> video_emb_;
  std::shared_ptr<Vocab> text_vocab_;
  std::shared_ptr<Vocab> code_vocab_;
  std::vector<ParamEntry> params_;
  std::map<std::string, Tensor> by_name_;
};

}  // namespace skillnet
