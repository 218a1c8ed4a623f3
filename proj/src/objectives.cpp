#include "skillnet/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "skillnet/errors.hpp"

namespace skillnet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

}  // namespace

MaskingPlan mlm_mask(const std::vector<int>& ids, const Vocab& vocab, Rng& rng, double rate) {
  MaskingPlan plan;
  bool any_maskable = false;
  // Non-special replacement pool is sampled by index into the vocab with
  // rejection; vocab sizes here make rejection cheap.
  for (size_t i = 0; i < ids.size(); ++i) {
    if (vocab.is_special(ids[i])) continue;
    any_maskable = true;
    if (rng.uniform() >= rate) continue;
    plan.positions.push_back(int(i));
    plan.original_ids.push_back(ids[i]);
    const double a = rng.uniform();
    if (a < 0.8) {
      plan.actions.push_back(MaskAction::mask_token);
      plan.replacement_ids.push_back(vocab.mask());
    } else if (a < 0.9) {
      plan.actions.push_back(MaskAction::random_token);
      int r = rng.uniform_int(vocab.size());
      while (vocab.is_special(r)) r = rng.uniform_int(vocab.size());
      plan.replacement_ids.push_back(r);
    } else {
      plan.actions.push_back(MaskAction::keep);
      plan.replacement_ids.push_back(ids[i]);
    }
  }
  plan.degenerate = !any_maskable;
  return plan;
}

std::vector<int> apply_mlm_plan(std::vector<int> ids, const MaskingPlan& plan, const Vocab& vocab) {
  (void)vocab;
  for (size_t i = 0; i < plan.positions.size(); ++i) {
    ids[size_t(plan.positions[i])] = plan.replacement_ids[i];
  }
  return ids;
}

MaskingPlan sound_mask(int frames, Rng& rng, double start_prob, int span) {
  if (frames < 1) throw ContractError("sound_mask: no frames");
  std::vector<uint8_t> masked((size_t)(frames), 0);
  for (int t = 0; t < frames; ++t) {
    if (rng.uniform() < start_prob) {
      for (int s = t; s < std::min(frames, t + span); ++s) masked[size_t(s)] = 1;
    }
  }
  MaskingPlan plan;
  for (int t = 0; t < frames; ++t) {
    if (masked[size_t(t)]) {
      plan.positions.push_back(t);
      plan.actions.push_back(MaskAction::mask_token);
    }
  }
  plan.degenerate = frames < span;  // only truncated spans were possible
  return plan;
}

std::optional<Tensor> mlm_loss(const Tensor& states, const MaskingPlan& plan,
                               const Linear& vocab_proj) {
  if (plan.empty()) return std::nullopt;
  Tensor picked = rows_lookup(states, plan.positions);
  Tensor logits = vocab_proj.apply(picked);
  return cross_entropy_mean(logits, plan.original_ids);
}

std::optional<Tensor> masked_cluster_loss(const Tensor& frame_states, const MaskingPlan& plan,
                                          const std::vector<int>& targets,
                                          const Linear& cluster_proj) {
  if (int(targets.size()) != frame_states.dim(0)) {
    throw ContractError("masked_cluster_loss: " + std::to_string(targets.size()) +
                        " targets for " + std::to_string(frame_states.dim(0)) + " frames");
  }
  if (plan.empty()) return std::nullopt;
  Tensor picked = rows_lookup(frame_states, plan.positions);
  Tensor logits = cluster_proj.apply(picked);
  std::vector<int> picked_targets;
  picked_targets.reserve(plan.positions.size());
  for (int p : plan.positions) picked_targets.push_back(targets[size_t(p)]);
  return cross_entropy_mean(logits, picked_targets);
}

Tensor contrastive_loss(const Tensor& queries, const Tensor& candidates,
                        const ContrastiveOptions& opts) {
  if (queries.rank() != 2 || candidates.rank() != 2 || queries.dims() != candidates.dims()) {
    throw ShapeError("contrastive_loss: queries " + dims_str(queries.dims()) +
                     " vs candidates " + dims_str(candidates.dims()));
  }
  const int n = queries.dim(0);
  if (n < 1) throw ContractError("contrastive_loss: empty batch");

  Tensor q = queries, c = candidates;
  if (opts.similarity == Similarity::cosine) {
    for (const Tensor* side : {&queries, &candidates}) {
      const int cols = side->dim(1);
      for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int j = 0; j < cols; ++j) {
          const double v = side->values()[size_t(i) * cols + j];
          norm += v * v;
        }
        if (norm == 0.0) {
          throw ContractError("contrastive_loss: zero vector in row " + std::to_string(i) +
                              " under cosine similarity");
        }
      }
    }
    q = l2_normalize_rows(q);
    c = l2_normalize_rows(c);
  }
  Tensor sims = scale(matmul(q, transpose2d(c)), 1.0 / opts.temperature);
  std::vector<int> diag((size_t)(n));
  for (int i = 0; i < n; ++i) diag[size_t(i)] = i;
  Tensor fwd = cross_entropy_mean(sims, diag);
  Tensor bwd = cross_entropy_mean(transpose2d(sims), diag);
  return scale(add(fwd, bwd), 0.5);
}

CtcResult ctc_loss(const Tensor& frame_logits, const std::vector<int>& target) {
  if (frame_logits.rank() != 2) throw ShapeError("ctc_loss: logits must be [T, V+1]");
  const int t_len = frame_logits.dim(0);
  const int classes = frame_logits.dim(1);
  const int blank = classes - 1;
  for (int c : target) {
    if (c < 0 || c >= blank) {
      throw ContractError("ctc_loss: target symbol " + std::to_string(c) + " outside [0," +
                          std::to_string(blank) + ")");
    }
  }
  // Minimum frames: every symbol plus a blank between equal neighbors.
  int min_frames = int(target.size());
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++min_frames;
  }
  if (t_len < min_frames) {
    CtcResult r;
    r.feasible = false;
    r.loss = Tensor::scalar(std::numeric_limits<double>::infinity());
    return r;
  }

  Tensor log_probs = log_softmax_rows(frame_logits);
  const int s_len = 2 * int(target.size()) + 1;
  auto label_at = [&](int s) { return s % 2 == 0 ? blank : target[size_t(s / 2)]; };
  const auto& lp = log_probs.values();
  auto lp_at = [&](int t, int k) { return lp[size_t(t) * classes + k]; };

  // Forward variables in log space.
  std::vector<double> alpha((size_t)(t_len) * s_len, kNegInf);
  alpha[0 * s_len + 0] = lp_at(0, blank);
  if (s_len > 1) alpha[0 * s_len + 1] = lp_at(0, label_at(1));
  for (int t = 1; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double a = alpha[size_t(t - 1) * s_len + s];
      if (s >= 1) a = log_add(a, alpha[size_t(t - 1) * s_len + s - 1]);
      if (s >= 2 && label_at(s) != blank && label_at(s) != label_at(s - 2)) {
        a = log_add(a, alpha[size_t(t - 1) * s_len + s - 2]);
      }
      alpha[size_t(t) * s_len + s] = a == kNegInf ? kNegInf : a + lp_at(t, label_at(s));
    }
  }
  double log_p = alpha[size_t(t_len - 1) * s_len + s_len - 1];
  if (s_len > 1) log_p = log_add(log_p, alpha[size_t(t_len - 1) * s_len + s_len - 2]);

  if (log_p == kNegInf) {
    CtcResult r;
    r.feasible = false;
    r.loss = Tensor::scalar(std::numeric_limits<double>::infinity());
    return r;
  }

  // Backward variables for the gradient.
  std::vector<double> beta((size_t)(t_len) * s_len, kNegInf);
  beta[size_t(t_len - 1) * s_len + s_len - 1] = 0.0;
  if (s_len > 1) beta[size_t(t_len - 1) * s_len + s_len - 2] = 0.0;
  for (int t = t_len - 2; t >= 0; --t) {
    for (int s = 0; s < s_len; ++s) {
      double b = beta[size_t(t + 1) * s_len + s] + lp_at(t + 1, label_at(s));
      if (s + 1 < s_len) {
        b = log_add(b, beta[size_t(t + 1) * s_len + s + 1] + lp_at(t + 1, label_at(s + 1)));
      }
      if (s + 2 < s_len && label_at(s + 2) != blank && label_at(s + 2) != label_at(s)) {
        b = log_add(b, beta[size_t(t + 1) * s_len + s + 2] + lp_at(t + 1, label_at(s + 2)));
      }
      beta[size_t(t) * s_len + s] = b;
    }
  }

  // d(-logP)/d lp[t][k] = -sum_{s: label(s)=k} exp(alpha[t][s] + beta[t][s] - logP)
  std::vector<double> grad_lp((size_t)(t_len) * classes, 0.0);
  for (int t = 0; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      const double ab = alpha[size_t(t) * s_len + s] + beta[size_t(t) * s_len + s];
      if (ab == kNegInf) continue;
      grad_lp[size_t(t) * classes + label_at(s)] -= std::exp(ab - log_p);
    }
  }

  auto plp = log_probs.handle();
  CtcResult r;
  r.loss = make_op_node({1}, {-log_p}, {log_probs}, [plp, grad_lp](const TensorImpl& self) {
    if (!plp->requires_grad) return;
    if (plp->g.size() != plp->v.size()) plp->g.assign(plp->v.size(), 0.0);
    plp->grad_ready = true;
    for (size_t i = 0; i < grad_lp.size(); ++i) plp->g[i] += self.g[0] * grad_lp[i];
  });
  return r;
}

Tensor classification_loss(const Tensor& pooled, int label, const Linear& class_proj) {
  if (pooled.rank() != 2 || pooled.dim(0) != 1) {
    throw ShapeError("classification_loss: pooled vector must be [1, d], got " +
                     dims_str(pooled.dims()));
  }
  const int classes = class_proj.w.dim(1);
  if (label < 0 || label >= classes) {
    throw ContractError("classification_loss: label " + std::to_string(label) + " outside " +
                        std::to_string(classes) + " classes");
  }
  return cross_entropy_mean(class_proj.apply(pooled), {label});
}

}  // namespace skillnet
