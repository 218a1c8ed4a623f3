#pragma once

#include <optional>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/nn.hpp"
#include "skillnet/rng.hpp"
#include "skillnet/tensor.hpp"
#include "skillnet/vocab.hpp"

namespace skillnet {

enum class MaskAction { mask_token, random_token, keep };

struct MaskingPlan {
  std::vector<int> positions;
  std::vector<MaskAction> actions;
  std::vector<int> original_ids;     // token ids at the chosen positions
  std::vector<int> replacement_ids;  // sampled for random_token entries
  bool degenerate = false;           // no maskable positions existed
  bool empty() const { return positions.empty(); }
};

// Each non-special token is chosen independently with probability `rate`;
// chosen tokens become [MASK] 80% of the time, a random non-special token 10%,
// and stay unchanged 10%.
MaskingPlan mlm_mask(const std::vector<int>& ids, const Vocab& vocab, Rng& rng,
                     double rate = 0.15);

std::vector<int> apply_mlm_plan(std::vector<int> ids, const MaskingPlan& plan, const Vocab& vocab);

// Span masking over frames: every step is a span start with probability
// `start_prob`; a start masks `span` consecutive steps; spans may overlap and
// truncate at the end.
MaskingPlan sound_mask(int frames, Rng& rng, double start_prob = 0.05, int span = 10);

// Mean cross-entropy at the plan's positions against the original ids.
// Empty plan -> nullopt (skip-batch signal).
std::optional<Tensor> mlm_loss(const Tensor& states, const MaskingPlan& plan,
                               const Linear& vocab_proj);

// Mean cross-entropy at the masked frames against offline cluster ids.
std::optional<Tensor> masked_cluster_loss(const Tensor& frame_states, const MaskingPlan& plan,
                                          const std::vector<int>& targets,
                                          const Linear& cluster_proj);

struct ContrastiveOptions {
  Similarity similarity = Similarity::cosine;
  double temperature = 0.07;
};

// Symmetric in-batch contrastive loss: cross-entropy over the N x N
// similarity matrix in both directions with the diagonal as target.
Tensor contrastive_loss(const Tensor& queries, const Tensor& candidates,
                        const ContrastiveOptions& opts);

struct CtcResult {
  Tensor loss;           // scalar; +inf and detached when infeasible
  bool feasible = true;
};

// Negative log marginal over all blank-augmented alignments of `target`,
// computed with the forward recursion in log space. Blank id is V (the last
// logit column).
CtcResult ctc_loss(const Tensor& frame_logits, const std::vector<int>& target);

Tensor classification_loss(const Tensor& pooled, int label, const Linear& class_proj);

}  // namespace skillnet
