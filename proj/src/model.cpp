#include "skillnet/model.hpp"

#include <algorithm>
#include <cmath>

#include "skillnet/errors.hpp"

namespace skillnet {

namespace {

constexpr double kMaskBias = -1e9;

Tensor init_matrix(int rows, int cols, Rng& rng, double std = 0.02) {
  std::vector<double> v((size_t)(rows) * cols);
  for (auto& x : v) x = rng.truncated_normal(std);
  return Tensor::from_values({rows, cols}, std::move(v), true);
}

}  // namespace

Model::Model(ModelConfig cfg, uint64_t seed, std::shared_ptr<Vocab> text_vocab,
             std::shared_ptr<Vocab> code_vocab)
    : cfg_(std::move(cfg)), text_vocab_(std::move(text_vocab)), code_vocab_(std::move(code_vocab)) {
  cfg_.validate();
  if (text_vocab_ && cfg_.vocab_text == 0) cfg_.vocab_text = text_vocab_->size();
  if (!code_vocab_) code_vocab_ = text_vocab_;
  if (code_vocab_ && cfg_.vocab_code == 0) cfg_.vocab_code = code_vocab_->size();
  build(seed);
}

void Model::build(uint64_t seed) {
  Rng rng(seed);
  Rng enc_rng = rng.fork(1);
  const int d = cfg_.hidden;

  const int slots = cfg_.variant == Variant::skillnet ? int(cfg_.skills.size()) : 1;
  for (int l = 0; l < cfg_.layers; ++l) {
    EncoderLayer layer;
    const std::string lp = "encoder.l" + std::to_string(l);
    for (int s = 0; s < slots; ++s) {
      AttentionProj p;
      p.wq = init_matrix(d, d, enc_rng);
      p.bq = Tensor::zeros({d}, true);
      p.wk = init_matrix(d, d, enc_rng);
      p.bk = Tensor::zeros({d}, true);
      p.wv = init_matrix(d, d, enc_rng);
      p.bv = Tensor::zeros({d}, true);
      const bool skillful = cfg_.variant == Variant::skillnet;
      const std::string sp =
          lp + ".attn." + (skillful ? skill_name(cfg_.skills[size_t(s)]) : "shared");
      std::optional<Skill> tag;
      if (skillful) tag = cfg_.skills[size_t(s)];
      const Section sec = skillful ? Section::encoder_skill : Section::encoder_shared;
      register_param(sp + ".q.w", p.wq, sec, tag);
      register_param(sp + ".q.b", p.bq, sec, tag);
      register_param(sp + ".k.w", p.wk, sec, tag);
      register_param(sp + ".k.b", p.bk, sec, tag);
      register_param(sp + ".v.w", p.wv, sec, tag);
      register_param(sp + ".v.b", p.bv, sec, tag);
      layer.qkv.push_back(std::move(p));
    }
    layer.wo = init_matrix(d, d, enc_rng);
    layer.bo = Tensor::zeros({d}, true);
    register_param(lp + ".attn.out.w", layer.wo, Section::encoder_shared);
    register_param(lp + ".attn.out.b", layer.bo, Section::encoder_shared);

    if (cfg_.variant == Variant::moe) {
      for (int e = 0; e < cfg_.moe_experts; ++e) {
        FfnWeights f;
        f.w1 = init_matrix(d, cfg_.ffn, enc_rng);
        f.b1 = Tensor::zeros({cfg_.ffn}, true);
        f.w2 = init_matrix(cfg_.ffn, d, enc_rng);
        f.b2 = Tensor::zeros({d}, true);
        const std::string ep = lp + ".expert" + std::to_string(e);
        register_param(ep + ".w1", f.w1, Section::encoder_shared);
        register_param(ep + ".b1", f.b1, Section::encoder_shared);
        register_param(ep + ".w2", f.w2, Section::encoder_shared);
        register_param(ep + ".b2", f.b2, Section::encoder_shared);
        layer.experts.push_back(std::move(f));
      }
      layer.gate = init_matrix(d, cfg_.moe_experts, enc_rng);
      register_param(lp + ".gate", layer.gate, Section::encoder_shared);
    } else {
      layer.ffn.w1 = init_matrix(d, cfg_.ffn, enc_rng);
      layer.ffn.b1 = Tensor::zeros({cfg_.ffn}, true);
      layer.ffn.w2 = init_matrix(cfg_.ffn, d, enc_rng);
      layer.ffn.b2 = Tensor::zeros({d}, true);
      register_param(lp + ".ffn.w1", layer.ffn.w1, Section::encoder_shared);
      register_param(lp + ".ffn.b1", layer.ffn.b1, Section::encoder_shared);
      register_param(lp + ".ffn.w2", layer.ffn.w2, Section::encoder_shared);
      register_param(lp + ".ffn.b2", layer.ffn.b2, Section::encoder_shared);
    }

    layer.ln1_g = Tensor::full({d}, 1.0, true);
    layer.ln1_b = Tensor::zeros({d}, true);
    layer.ln2_g = Tensor::full({d}, 1.0, true);
    layer.ln2_b = Tensor::zeros({d}, true);
    register_param(lp + ".ln1.g", layer.ln1_g, Section::encoder_shared);
    register_param(lp + ".ln1.b", layer.ln1_b, Section::encoder_shared);
    register_param(lp + ".ln2.g", layer.ln2_g, Section::encoder_shared);
    register_param(lp + ".ln2.b", layer.ln2_b, Section::encoder_shared);
    layers_.push_back(std::move(layer));
  }

  // Embedders for the configured modalities.
  Rng emb_rng = rng.fork(2);
  for (Skill m : cfg_.modalities) {
    switch (m) {
      case Skill::text: {
        if (cfg_.vocab_text <= 0) throw ConfigError("text modality needs a vocabulary");
        text_emb_ = std::make_unique<TokenEmbedder>(Skill::text, cfg_.vocab_text,
                                                    cfg_.max_text_positions, d, emb_rng);
        for (auto& [n, t] : text_emb_->params("emb.text")) {
          register_param(n, t, Section::embedder, std::nullopt, Skill::text);
        }
        break;
      }
      case Skill::code: {
        if (cfg_.vocab_code <= 0) throw ConfigError("code modality needs a vocabulary");
        code_emb_ = std::make_unique<TokenEmbedder>(Skill::code, cfg_.vocab_code,
                                                    cfg_.max_code_positions, d, emb_rng);
        for (auto& [n, t] : code_emb_->params("emb.code")) {
          register_param(n, t, Section::embedder, std::nullopt, Skill::code);
        }
        break;
      }
      case Skill::sound: {
        sound_emb_ = std::make_unique<SoundEmbedder>(cfg_.sound_channels, d,
                                                     cfg_.max_sound_positions, emb_rng);
        for (auto& [n, t] : sound_emb_->params("emb.sound")) {
          register_param(n, t, Section::embedder, std::nullopt, Skill::sound);
        }
        break;
      }
      case Skill::image: {
        image_emb_ =
            std::make_unique<ImageEmbedder>(cfg_.patch, d, cfg_.max_image_positions, emb_rng);
        for (auto& [n, t] : image_emb_->params("emb.image")) {
          register_param(n, t, Section::embedder, std::nullopt, Skill::image);
        }
        break;
      }
      case Skill::video: {
        video_emb_ = std::make_unique<VideoEmbedder>(cfg_.tube_t, cfg_.tube_h, cfg_.tube_w, d,
                                                     cfg_.video_pos_t, cfg_.video_pos_h,
                                                     cfg_.video_pos_w, emb_rng);
        for (auto& [n, t] : video_emb_->params("emb.video")) {
          register_param(n, t, Section::embedder, std::nullopt, Skill::video);
        }
        break;
      }
    }
  }

  // Heads.
  Rng head_rng = rng.fork(3);
  if (cfg_.n_classes > 0) {
    classifier = Linear(d, cfg_.n_classes, head_rng);
    register_param("head.classifier.w", classifier.w, Section::head);
    register_param("head.classifier.b", classifier.b, Section::head);
  }
  if (!cfg_.asr_symbols.empty()) {
    ctc_head = Linear(d, int(cfg_.asr_symbols.size()) + 1, head_rng);
    register_param("head.ctc.w", ctc_head.w, Section::head);
    register_param("head.ctc.b", ctc_head.b, Section::head);
  }
  if (cfg_.vocab_text > 0) {
    mlm_text_head = Linear(d, cfg_.vocab_text, head_rng);
    register_param("head.mlm_text.w", mlm_text_head.w, Section::head);
    register_param("head.mlm_text.b", mlm_text_head.b, Section::head);
  }
  if (cfg_.vocab_code > 0) {
    mlm_code_head = Linear(d, cfg_.vocab_code, head_rng);
    register_param("head.mlm_code.w", mlm_code_head.w, Section::head);
    register_param("head.mlm_code.b", mlm_code_head.b, Section::head);
  }
  if (cfg_.clusters > 0 && cfg_.has_modality(Skill::sound)) {
    cluster_head = Linear(d, cfg_.clusters, head_rng);
    register_param("head.cluster.w", cluster_head.w, Section::head);
    register_param("head.cluster.b", cluster_head.b, Section::head);
  }
}

void Model::register_param(std::string name, Tensor t, Section section, std::optional<Skill> skill,
                           std::optional<Skill> modality) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  by_name_.emplace(name, t);
  params_.push_back(ParamEntry{std::move(name), std::move(t), section, skill, modality});
}

Tensor Model::attention(const Tensor& x, const EncoderLayer& layer, int slot,
                        const Tensor& mask_bias, std::vector<Mat>* head_trace) const {
  const int d = cfg_.hidden;
  const int dk = cfg_.head_dim();
  const AttentionProj& proj = layer.qkv[size_t(slot)];
  Tensor q = add_rowvec(matmul(x, proj.wq), proj.bq);
  Tensor k = add_rowvec(matmul(x, proj.wk), proj.bk);
  Tensor v = add_rowvec(matmul(x, proj.wv), proj.bv);
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(dk));
  std::vector<Tensor> heads;
  for (int h = 0; h < cfg_.heads; ++h) {
    Tensor qh = slice(q, 1, h * dk, dk);
    Tensor kh = slice(k, 1, h * dk, dk);
    Tensor vh = slice(v, 1, h * dk, dk);
    Tensor scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt_dk);
    scores = add_rowvec(scores, mask_bias);
    Tensor probs = softmax(scores, -1);
    if (head_trace) {
      Mat m(probs.dim(0), probs.dim(1));
      m.v = probs.values();
      head_trace->push_back(std::move(m));
    }
    heads.push_back(matmul(probs, vh));
  }
  Tensor ctx = cfg_.heads == 1 ? heads[0] : concat(heads, 1);
  (void)d;
  return add_rowvec(matmul(ctx, layer.wo), layer.bo);
}

Tensor Model::dense_ffn(const Tensor& x, const FfnWeights& w) const {
  return add_rowvec(matmul(gelu(add_rowvec(matmul(x, w.w1), w.b1)), w.w2), w.b2);
}

Tensor Model::skill_project(const Tensor& x, int layer, int head, char role,
                            Skill activation) const {
  const int slot = cfg_.skill_slot(activation);
  const int dk = cfg_.head_dim();
  if (layer < 0 || layer >= cfg_.layers) throw ContractError("skill_project: bad layer");
  if (head < 0 || head >= cfg_.heads) throw ContractError("skill_project: bad head");
  const AttentionProj& p = layers_[size_t(layer)].qkv[size_t(slot)];
  const Tensor* w = nullptr;
  const Tensor* b = nullptr;
  switch (role) {
    case 'Q': w = &p.wq; b = &p.bq; break;
    case 'K': w = &p.wk; b = &p.bk; break;
    case 'V': w = &p.wv; b = &p.bv; break;
    default: throw ContractError("skill_project: role must be Q, K or V");
  }
  Tensor head_w = slice(*w, 1, head * dk, dk);
  Tensor head_b = reshape(slice(reshape(*b, {1, cfg_.hidden}), 1, head * dk, dk), {dk});
  return add_rowvec(matmul(x, head_w), head_b);
}

Tensor Model::multi_head_attention(const Tensor& x, int layer, Skill activation,
                                   const std::vector<uint8_t>* pad,
                                   std::vector<Mat>* head_trace) const {
  if (layer < 0 || layer >= cfg_.layers) throw ContractError("multi_head_attention: bad layer");
  if (!x.defined() || x.rank() != 2 || x.dim(0) < 1) {
    throw ContractError("multi_head_attention: empty sequence");
  }
  const int slot = cfg_.skill_slot(activation);
  const int n = x.dim(0);
  std::vector<double> bias(size_t(n), 0.0);
  if (pad) {
    for (int i = 0; i < n && i < int(pad->size()); ++i) {
      if ((*pad)[size_t(i)]) bias[size_t(i)] = -1e9;
    }
  }
  return attention(x, layers_[size_t(layer)], slot, Tensor::from_values({n}, std::move(bias)),
                   head_trace);
}

Tensor Model::moe_ffn(const Tensor& x, int layer_idx, Mat* gate_trace) const {
  if (cfg_.variant != Variant::moe) throw ConfigError("moe_ffn: model variant is not moe");
  const EncoderLayer& layer = layers_[size_t(layer_idx)];
  const int n = x.dim(0);
  const int experts = cfg_.moe_experts;
  const int k = cfg_.moe_top_k;
  if (k > experts) {
    throw ConfigError("moe top-k " + std::to_string(k) + " exceeds expert count " +
                      std::to_string(experts));
  }

  Tensor logits = matmul(x, layer.gate);  // [n, experts]
  Tensor probs = softmax(logits, -1);

  // Top-k selection per token (ties resolved toward the lower expert id).
  std::vector<double> mask_v((size_t)(n) * experts, 0.0);
  std::vector<std::vector<int>> expert_tokens((size_t)(experts));
  for (int i = 0; i < n; ++i) {
    std::vector<int> order((size_t)(experts));
    for (int e = 0; e < experts; ++e) order[size_t(e)] = e;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return logits.values()[size_t(i) * experts + a] > logits.values()[size_t(i) * experts + b];
    });
    for (int j = 0; j < k; ++j) {
      const int e = order[size_t(j)];
      mask_v[size_t(i) * experts + e] = 1.0;
      expert_tokens[size_t(e)].push_back(i);
    }
  }
  Tensor mask = Tensor::from_values({n, experts}, std::move(mask_v));
  Tensor weights = row_normalize(mul(probs, mask));  // renormalized over the selected experts
  if (gate_trace) {
    *gate_trace = Mat(n, experts);
    gate_trace->v = weights.values();
  }

  Tensor out;
  for (int e = 0; e < experts; ++e) {
    const auto& idx = expert_tokens[size_t(e)];
    if (idx.empty()) continue;  // untouched experts stay out of the graph
    Tensor sub = rows_lookup(x, idx);
    Tensor ffn_out = dense_ffn(sub, layer.experts[size_t(e)]);
    Tensor w_col = reshape(rows_lookup(slice(weights, 1, e, 1), idx), {int(idx.size())});
    Tensor scattered = scatter_rows(mul_colvec(ffn_out, w_col), idx, n);
    out = out.defined() ? add(out, scattered) : scattered;
  }
  return out;
}

Encoded Model::encode(const EmbeddedSequence& seq, Skill activation, EncodeTrace* trace) const {
  if (!seq.tokens.defined() || seq.tokens.rank() != 2 || seq.tokens.dim(0) < 1) {
    throw ContractError("encode: empty sequence");
  }
  if (seq.tokens.dim(1) != cfg_.hidden) {
    throw ShapeError("encode: sequence dim " + dims_str(seq.tokens.dims()) +
                     " does not match hidden " + std::to_string(cfg_.hidden));
  }
  if (activation != seq.modality) {
    throw ConfigError(std::string("encode: activation '") + skill_name(activation) +
                      "' does not match sequence modality '" + skill_name(seq.modality) + "'");
  }
  const int slot = cfg_.skill_slot(activation);  // validates the skill exists

  const int n = seq.tokens.dim(0);
  std::vector<double> bias((size_t)(n), 0.0);
  for (int i = 0; i < n; ++i) {
    if (i < int(seq.pad.size()) && seq.pad[size_t(i)]) bias[size_t(i)] = kMaskBias;
  }
  Tensor mask_bias = Tensor::from_values({n}, std::move(bias));

  Tensor x = seq.tokens;
  for (int l = 0; l < cfg_.layers; ++l) {
    const EncoderLayer& layer = layers_[size_t(l)];
    std::vector<Mat>* head_trace = nullptr;
    if (trace) {
      trace->attention.emplace_back();
      head_trace = &trace->attention.back();
    }
    Tensor attn = attention(x, layer, slot, mask_bias, head_trace);
    x = layer_norm(add(x, attn), layer.ln1_g, layer.ln1_b);
    Tensor ff;
    if (cfg_.variant == Variant::moe) {
      Mat* gate_trace = nullptr;
      if (trace) {
        trace->gate_weights.emplace_back();
        gate_trace = &trace->gate_weights.back();
      }
      ff = moe_ffn(x, l, gate_trace);
    } else {
      ff = dense_ffn(x, layer.ffn);
    }
    x = layer_norm(add(x, ff), layer.ln2_g, layer.ln2_b);
  }

  Encoded out;
  out.states = x;
  if (seq.cls_index.has_value()) {
    out.pooled = slice(x, 0, *seq.cls_index, 1);
  }
  return out;
}

#define EMBEDDER_ACCESSOR(fn, member, skill)                                          \
  TokenEmbedder& Model::fn() {                                                        \
    if (!member) throw ConfigError("no " skill " embedder in this configuration");    \
    return *member;                                                                   \
  }                                                                                   \
  const TokenEmbedder& Model::fn() const {                                            \
    if (!member) throw ConfigError("no " skill " embedder in this configuration");    \
    return *member;                                                                   \
  }

EMBEDDER_ACCESSOR(text_embedder, text_emb_, "text")
EMBEDDER_ACCESSOR(code_embedder, code_emb_, "code")
#undef EMBEDDER_ACCESSOR

SoundEmbedder& Model::sound_embedder() {
  if (!sound_emb_) throw ConfigError("no sound embedder in this configuration");
  return *sound_emb_;
}
const SoundEmbedder& Model::sound_embedder() const {
  if (!sound_emb_) throw ConfigError("no sound embedder in this configuration");
  return *sound_emb_;
}
ImageEmbedder& Model::image_embedder() {
  if (!image_emb_) throw ConfigError("no image embedder in this configuration");
  return *image_emb_;
}
const ImageEmbedder& Model::image_embedder() const {
  if (!image_emb_) throw ConfigError("no image embedder in this configuration");
  return *image_emb_;
}
VideoEmbedder& Model::video_embedder() {
  if (!video_emb_) throw ConfigError("no video embedder in this configuration");
  return *video_emb_;
}
const VideoEmbedder& Model::video_embedder() const {
  if (!video_emb_) throw ConfigError("no video embedder in this configuration");
  return *video_emb_;
}

void Model::set_acoustic_centroids(Tensor centroids) {
  acoustic_centroids = std::move(centroids);
  if (!has_param("acoustic.centroids")) {
    register_param("acoustic.centroids", acoustic_centroids, Section::extra);
  } else {
    by_name_["acoustic.centroids"] = acoustic_centroids;
    for (auto& p : params_) {
      if (p.name == "acoustic.centroids") p.tensor = acoustic_centroids;
    }
  }
}

NamedParams Model::trainable_params() const {
  NamedParams out;
  for (const auto& p : params_) {
    if (p.tensor.requires_grad()) out.emplace_back(p.name, p.tensor);
  }
  return out;
}

Tensor Model::param(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

bool Model::has_param(const std::string& name) const { return by_name_.count(name) > 0; }

std::map<Skill, bool> Model::gradient_touch() const {
  std::map<Skill, bool> touch;
  for (Skill s : cfg_.skills) touch[s] = false;
  for (const auto& p : params_) {
    if (p.section != Section::encoder_skill || !p.skill) continue;
    if (!p.tensor.grad_ready()) continue;
    for (double g : p.tensor.grad()) {
      if (g != 0.0) {
        touch[*p.skill] = true;
        break;
      }
    }
  }
  return touch;
}

std::vector<const Model::ParamEntry*> Model::skill_params(Skill s) const {
  std::vector<const ParamEntry*> out;
  for (const auto& p : params_) {
    if (p.section == Section::encoder_skill && p.skill == s) out.push_back(&p);
  }
  return out;
}

void Model::zero_grads() {
  for (auto& p : params_) {
    if (p.tensor.requires_grad()) p.tensor.zero_grad();
  }
}

}  // namespace skillnet
